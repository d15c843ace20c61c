"""
Растеризация треугольников с z-буфером

Выборка в центрах пикселей (c + 0.5, r + 0.5), правило верхнего-левого
ребра, ось y вниз. Грань видима спереди, если её экранная площадь
отрицательна (вершины идут против часовой стрелки на экране).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.body.camera import Camera

NEAR = 1e-6
FLAT_FILL = 255.0


@dataclass
class RasterOutput:
    """Цвет, глубина (+inf на фоне), покрытие и индекс грани по пикселям"""

    color: np.ndarray  # H×W×3 uint8
    depth: np.ndarray  # H×W float64
    coverage: np.ndarray  # H×W bool
    face_ids: np.ndarray  # H×W int64, -1 на фоне


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _is_top_left(ax, ay, bx, by) -> bool:
    dx, dy = bx - ax, by - ay
    return (dy == 0 and dx > 0) or dy < 0


def _project_all(vertices: np.ndarray, camera: Camera):
    z = vertices[:, 2]
    safe_z = np.where(z > NEAR, z, 1.0)
    x = camera.focal * vertices[:, 0] / safe_z + camera.cx
    y = camera.focal * vertices[:, 1] / safe_z + camera.cy
    return x, y, z


def signed_areas(vertices: np.ndarray, faces: np.ndarray, camera: Camera) -> np.ndarray:
    """Удвоенная экранная площадь граней; < 0 у граней, смотрящих на камеру"""
    x, y, _ = _project_all(np.asarray(vertices, dtype=np.float64), camera)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    return _edge(x[f[:, 0]], y[f[:, 0]], x[f[:, 1]], y[f[:, 1]], x[f[:, 2]], y[f[:, 2]])


def rasterize_mesh(
    vertices,
    faces,
    camera: Camera,
    colors: Optional[np.ndarray] = None,
    cull_backfaces: bool = True,
) -> RasterOutput:
    """Заливка треугольников с тестом глубины; при равной глубине побеждает меньший индекс грани"""
    height, width = camera.height, camera.width
    depth = np.full((height, width), np.inf)
    face_ids = np.full((height, width), -1, dtype=np.int64)
    color = np.zeros((height, width, 3))

    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if colors is None:
        vertex_colors = np.full((vertices.shape[0], 3), FLAT_FILL)
    else:
        vertex_colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)

    x, y, z = _project_all(vertices, camera)
    for face_id, face in enumerate(faces):
        if np.any(z[face] <= NEAR):
            continue
        i0, i1, i2 = face
        area = _edge(x[i0], y[i0], x[i1], y[i1], x[i2], y[i2])
        if area == 0:
            continue
        if cull_backfaces and area > 0:
            continue
        if area < 0:
            i1, i2 = i2, i1
            area = -area

        xs, ys = x[[i0, i1, i2]], y[[i0, i1, i2]]
        c_min = max(int(np.floor(xs.min() - 0.5)), 0)
        c_max = min(int(np.ceil(xs.max() - 0.5)), width - 1)
        r_min = max(int(np.floor(ys.min() - 0.5)), 0)
        r_max = min(int(np.ceil(ys.max() - 0.5)), height - 1)
        if c_min > c_max or r_min > r_max:
            continue

        px, py = np.meshgrid(
            np.arange(c_min, c_max + 1) + 0.5, np.arange(r_min, r_max + 1) + 0.5
        )
        # Вес вершины = функция противолежащего ребра
        w0 = _edge(x[i1], y[i1], x[i2], y[i2], px, py)
        w1 = _edge(x[i2], y[i2], x[i0], y[i0], px, py)
        w2 = _edge(x[i0], y[i0], x[i1], y[i1], px, py)
        inside = np.ones(px.shape, dtype=bool)
        for w, (a, b) in ((w0, (i1, i2)), (w1, (i2, i0)), (w2, (i0, i1))):
            if _is_top_left(x[a], y[a], x[b], y[b]):
                inside &= w >= 0
            else:
                inside &= w > 0
        if not inside.any():
            continue

        b0, b1, b2 = w0 / area, w1 / area, w2 / area
        inv_z = b0 / z[i0] + b1 / z[i1] + b2 / z[i2]
        frag_depth = 1.0 / inv_z
        window = (slice(r_min, r_max + 1), slice(c_min, c_max + 1))
        closer = inside & (frag_depth < depth[window])
        if not closer.any():
            continue
        depth[window][closer] = frag_depth[closer]
        face_ids[window][closer] = face_id
        frag_color = (
            b0[..., None] * vertex_colors[i0]
            + b1[..., None] * vertex_colors[i1]
            + b2[..., None] * vertex_colors[i2]
        )
        color[window][closer] = frag_color[closer]

    coverage = np.isfinite(depth)
    return RasterOutput(
        color=np.clip(np.rint(color), 0, 255).astype(np.uint8),
        depth=depth,
        coverage=coverage,
        face_ids=face_ids,
    )


def rasterize_silhouette(
    vertices, faces, camera: Camera, cull_backfaces: bool = False
) -> np.ndarray:
    """Бинарная маска покрытия (M_3d)"""
    return rasterize_mesh(vertices, faces, camera, None, cull_backfaces).coverage
