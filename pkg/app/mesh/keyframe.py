"""
Выбор ключевого кадра с минимальным самоперекрытием частей тела
"""

from typing import List

import numpy as np
from loguru import logger

from app.body.camera import Camera
from app.body.model import BodyModel, pose_body
from app.core.exceptions import InvalidArgumentError
from app.fitting.observations import PoseSequence
from app.render.rasterizer import rasterize_mesh


def face_labels(model: BodyModel) -> np.ndarray:
    """Метка грани - метка её первой вершины"""
    return model.part_labels[model.faces[:, 0]]


def overlap_pixels(model: BodyModel, vertices: np.ndarray, camera: Camera, depth_gap: float) -> int:
    """Пиксели, где видны две несмежные части тела на разной глубине"""
    labels = face_labels(model)
    present = np.unique(labels)
    depths = {}
    for label in present:
        subset = model.faces[labels == label]
        depths[int(label)] = rasterize_mesh(vertices, subset, camera, cull_backfaces=False).depth

    overlap = np.zeros(camera.shape, dtype=bool)
    keys = sorted(depths)
    for a_pos, a in enumerate(keys):
        for b in keys[a_pos + 1 :]:
            if model.part_parent(a) == b or model.part_parent(b) == a:
                continue
            da, db = depths[a], depths[b]
            both = np.isfinite(da) & np.isfinite(db)
            if not both.any():
                continue
            overlap |= both & (np.abs(np.where(both, da - db, 0.0)) > depth_gap)
    return int(np.count_nonzero(overlap))


def overlap_counts(
    pose_seq: PoseSequence, model: BodyModel, camera: Camera, depth_gap: float
) -> List[int]:
    return [
        overlap_pixels(model, pose_body(model, params).vertices, camera, depth_gap)
        for params in pose_seq.frames
    ]


def select_keyframe(
    pose_seq: PoseSequence, model: BodyModel, camera: Camera, depth_gap: float = 0.05
) -> int:
    """Кадр с наименьшим числом пикселей перекрытия; при равенстве меньший индекс"""
    if len(pose_seq) == 0:
        raise InvalidArgumentError("select_keyframe: пустая последовательность")
    counts = overlap_counts(pose_seq, model, camera, depth_gap)
    best = int(np.argmin(counts))
    logger.info(f"🔑 Ключевой кадр {best}: перекрытие {counts[best]} px")
    return best
