"""
Контуры маски и силуэта модели, соответствие контуров динамическим программированием
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import ndimage

from app.body.camera import Camera
from app.body.model import PosedBody
from app.core.exceptions import ClippedSilhouetteError, DegenerateContourError, EmptyMaskError
from app.render.rasterizer import NEAR, rasterize_silhouette

# (dr, dc) против часовой стрелки на экране при оси y вниз: W, SW, S, SE, E, NE, N, NW
MOORE_DIRECTIONS = ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1))
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class Contour:
    """Замкнутый контур: центры пикселей (x, y) по порядку"""

    points: np.ndarray
    source: str = "mask"
    closed: bool = True

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class Correspondence:
    """psi[i] - индекс точки контура модели для i-й точки контура маски"""

    psi: np.ndarray
    cost: float
    vertex_ids: Optional[np.ndarray] = None


def largest_component(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("маска пуста")
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 1:
        return mask
    sizes = np.bincount(labels.ravel())[1:]
    keep = int(np.argmax(sizes)) + 1
    logger.warning(f"⚠️ В маске {count} компонент, оставлена крупнейшая ({sizes[keep - 1]} px)")
    return labels == keep


def trace_boundary(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Обход Мура от самого верхнего-левого пикселя, против часовой стрелки"""
    height, width = mask.shape
    rows, cols = np.nonzero(mask)
    start = (int(rows[0]), int(cols[0]))

    def foreground(r: int, c: int) -> bool:
        return 0 <= r < height and 0 <= c < width and bool(mask[r, c])

    def advance(p, b):
        k = MOORE_DIRECTIONS.index((b[0] - p[0], b[1] - p[1]))
        for step in range(1, 9):
            idx = (k + step) % 8
            dr, dc = MOORE_DIRECTIONS[idx]
            if foreground(p[0] + dr, p[1] + dc):
                pr, pc = MOORE_DIRECTIONS[(idx - 1) % 8]
                return (p[0] + dr, p[1] + dc), (p[0] + pr, p[1] + pc)
        return None, None

    boundary = [start]
    current, backtrack = start, (start[0], start[1] - 1)
    while True:
        nxt, nxt_back = advance(current, backtrack)
        if nxt is None:
            break
        if current == start and len(boundary) > 1 and nxt == boundary[1]:
            break
        boundary.append(nxt)
        current, backtrack = nxt, nxt_back
    if len(boundary) > 1 and boundary[-1] == start:
        boundary.pop()
    return boundary


def _to_points(pixels: List[Tuple[int, int]]) -> np.ndarray:
    return np.array([(c + 0.5, r + 0.5) for r, c in pixels], dtype=np.float64)


def extract_mask_contour(mask: np.ndarray) -> Contour:
    """Контур крупнейшей 8-связной компоненты маски"""
    component = largest_component(mask)
    return Contour(_to_points(trace_boundary(component)), source="mask")


def extract_model_contour(
    posed: PosedBody, faces: np.ndarray, camera: Camera
) -> Tuple[Contour, np.ndarray]:
    """Контур силуэта и ближайшая спроецированная вершина для каждой точки"""
    silhouette = rasterize_silhouette(posed.vertices, faces, camera)
    if not silhouette.any():
        raise ClippedSilhouetteError("силуэт модели пуст или вне кадра")
    contour = Contour(_to_points(trace_boundary(largest_component(silhouette))), source="model")

    z = posed.vertices[:, 2]
    candidates = np.nonzero(z > NEAR)[0]
    projected = np.stack(
        [
            camera.focal * posed.vertices[candidates, 0] / z[candidates] + camera.cx,
            camera.focal * posed.vertices[candidates, 1] / z[candidates] + camera.cy,
        ],
        axis=1,
    )
    gaps = ((contour.points[:, None, :] - projected[None, :, :]) ** 2).sum(-1)
    return contour, candidates[np.argmin(gaps, axis=1)]


def resample_indices(count: int, samples: int) -> np.ndarray:
    """Равномерная подвыборка индексов замкнутого контура"""
    if count <= samples:
        return np.arange(count)
    return np.floor(np.arange(samples) * count / samples).astype(np.int64)


def match_contours(p_m: Contour, p_S: Contour, lambda_smooth: float) -> Correspondence:
    """Глобальный минимум по циклически монотонным psi перебором стартового сдвига"""
    n, m = len(p_m), len(p_S)
    if n < 3 or m < 3:
        raise DegenerateContourError(f"контуры из {n} и {m} точек, нужно не меньше 3")

    # data[s, i, k] = |p_m[i] - p_S[(s + k) mod M]|^2
    shifted = (np.arange(m)[:, None] + np.arange(m)[None, :]) % m
    gaps = ((p_m.points[:, None, :] - p_S.points[None, :, :]) ** 2).sum(-1)
    data = np.transpose(gaps[:, shifted], (1, 0, 2))

    step = np.arange(m)[None, :] - np.arange(m)[:, None]
    wrapped = np.minimum(step, m - step).astype(np.float64)
    transition = np.where(step >= 0, lambda_smooth * wrapped**2, np.inf)

    cost = np.full((m, m), np.inf)
    cost[:, 0] = data[:, 0, 0]
    back = np.zeros((n, m, m), dtype=np.int64)
    for i in range(1, n):
        candidates = cost[:, :, None] + transition[None, :, :]
        back[i] = np.argmin(candidates, axis=1)
        cost = np.min(candidates, axis=1) + data[:, i, :]

    flat = int(np.argmin(cost))
    start, k = divmod(flat, m)
    offsets = np.zeros(n, dtype=np.int64)
    offsets[-1] = k
    for i in range(n - 1, 0, -1):
        offsets[i - 1] = back[i, start, offsets[i]]
    psi = (start + offsets) % m
    return Correspondence(psi=psi, cost=float(cost[start, k]))
