"""
Параметрическая модель тела: форма, кинематика, скиннинг, проекция
"""

from app.body.camera import Camera, project
from app.body.model import (
    NUM_JOINTS,
    NUM_POSE_PARAMS,
    BodyModel,
    PosedBody,
    PoseParams,
    load_body_model,
    pose_body,
    rodrigues,
    save_body_model,
    shape_body,
)

__all__ = [
    "NUM_JOINTS",
    "NUM_POSE_PARAMS",
    "BodyModel",
    "Camera",
    "PosedBody",
    "PoseParams",
    "load_body_model",
    "pose_body",
    "project",
    "rodrigues",
    "save_body_model",
    "shape_body",
]
