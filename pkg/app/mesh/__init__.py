"""
Адаптация шаблона к контуру ключевого кадра, текстура и распозирование
"""

from app.mesh.contour import (
    Contour,
    Correspondence,
    extract_mask_contour,
    extract_model_contour,
    match_contours,
)
from app.mesh.deform import deform_template, laplacian_coords
from app.mesh.keyframe import select_keyframe
from app.mesh.texture import DeformedTemplate, bake_vertex_colors, unpose_template

__all__ = [
    "Contour",
    "Correspondence",
    "DeformedTemplate",
    "bake_vertex_colors",
    "deform_template",
    "extract_mask_contour",
    "extract_model_contour",
    "laplacian_coords",
    "match_contours",
    "select_keyframe",
    "unpose_template",
]
