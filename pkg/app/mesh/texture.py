"""
Запекание цветов вершин, распозирование и деформированный шаблон (ASCII PLY)
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import cv2
import numpy as np
from loguru import logger

from app.body.camera import Camera
from app.body.model import BodyModel, PosedBody, PoseParams, pose_rest_vertices, shape_body
from app.core.exceptions import DataIOError, InvalidArgumentError
from app.mesh.deform import adjacency
from app.render.rasterizer import NEAR, rasterize_mesh

UNFILLED_GREY = 128
DEPTH_TOLERANCE = 0.01  # доля глубины
SINGULAR_DET = 1e-8


@dataclass
class DeformedTemplate:
    """Шаблон в позе покоя с нулевой формой, цвета вершин и номер ключевого кадра"""

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray  # N×3 uint8
    keyframe: int
    # False у вершин, невидимых при запекании; их цвет получен от соседей
    visible: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if self.visible is None:
            self.visible = np.ones(self.vertices.shape[0], dtype=bool)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if not (self.colors.shape[0] == self.visible.shape[0] == self.vertices.shape[0]):
            raise InvalidArgumentError("DeformedTemplate: размеры вершин, цветов и флагов различаются")

    def pose(self, model: BodyModel, params: PoseParams) -> PosedBody:
        """Поза шаблона; суставы покоя берутся из исходной модели с той же формой"""
        shaped = self.vertices + model.shape_dirs @ params.beta
        _, rest_joints = shape_body(model, params.beta)
        return pose_rest_vertices(model, shaped, rest_joints, params)


def vertex_visibility(vertices: np.ndarray, faces: np.ndarray, camera: Camera) -> np.ndarray:
    """Вершина видима, если не дальше ближайшей глубины в окрестности 3×3 своего пикселя"""
    raster = rasterize_mesh(vertices, faces, camera)
    depth = raster.depth
    padded = np.pad(depth, 1, constant_values=np.inf)
    nearest = np.min(
        [padded[dr : dr + camera.height, dc : dc + camera.width] for dr in range(3) for dc in range(3)],
        axis=0,
    )
    z = vertices[:, 2]
    visible = np.zeros(vertices.shape[0], dtype=bool)
    front = z > NEAR
    x = camera.focal * vertices[front, 0] / z[front] + camera.cx
    y = camera.focal * vertices[front, 1] / z[front] + camera.cy
    cols, rows = np.floor(x).astype(np.int64), np.floor(y).astype(np.int64)
    inside = (cols >= 0) & (cols < camera.width) & (rows >= 0) & (rows < camera.height)
    idx = np.nonzero(front)[0][inside]
    occluder = nearest[rows[inside], cols[inside]]
    visible[idx] = ~np.isfinite(occluder) | (z[idx] <= occluder * (1.0 + DEPTH_TOLERANCE))
    return visible


def bake_vertex_colors(
    vertices, faces, image: np.ndarray, camera: Camera
) -> Tuple[np.ndarray, np.ndarray]:
    """Билинейная выборка для видимых вершин, заливка остальных средним соседей"""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    image = np.asarray(image)
    if image.shape[:2] != camera.shape:
        raise InvalidArgumentError(
            f"bake_vertex_colors: изображение {image.shape[:2]}, камера {camera.shape}"
        )
    visible = vertex_visibility(v, faces, camera)

    colors = np.zeros((v.shape[0], 3))
    if visible.any():
        vis = v[visible]
        map_x = (camera.focal * vis[:, 0] / vis[:, 2] + camera.cx - 0.5).astype(np.float32)
        map_y = (camera.focal * vis[:, 1] / vis[:, 2] + camera.cy - 0.5).astype(np.float32)
        sampled = cv2.remap(
            image.astype(np.float32),
            map_x.reshape(-1, 1),
            map_y.reshape(-1, 1),
            interpolation=cv2.INTER_LINEAR,
            borderMode=cv2.BORDER_REPLICATE,
        )
        colors[visible] = sampled.reshape(-1, 3)

    filled = visible.copy()
    neighbours = adjacency(faces, v.shape[0])
    while True:
        counts = neighbours @ filled.astype(np.float64)
        frontier = ~filled & (counts > 0)
        if not frontier.any():
            break
        sums = neighbours @ (colors * filled[:, None])
        colors[frontier] = sums[frontier] / counts[frontier, None]
        filled |= frontier
    if not filled.all():
        logger.warning(f"⚠️ {int((~filled).sum())} вершин без цвета, залиты серым")
        colors[~filled] = UNFILLED_GREY

    logger.info(f"🎨 Запечено {int(visible.sum())} видимых вершин из {v.shape[0]}")
    return np.clip(np.rint(colors), 0, 255).astype(np.uint8), visible


def unpose_template(deformed_vertices, params: PoseParams, per_vertex_transform: np.ndarray) -> np.ndarray:
    """Обратное смешанное преобразование каждой вершины за вычетом gamma"""
    v = np.asarray(deformed_vertices, dtype=np.float64).reshape(-1, 3) - params.gamma
    rotations = per_vertex_transform[:, :3, :3]
    translations = per_vertex_transform[:, :3, 3]
    det = np.linalg.det(rotations)
    good = np.abs(det) > SINGULAR_DET
    if not good.any():
        raise InvalidArgumentError("unpose_template: все смешанные преобразования вырождены")

    rest = np.empty_like(v)
    inverse = np.linalg.inv(rotations[good])
    rest[good] = np.einsum("nij,nj->ni", inverse, v[good] - translations[good])

    bad = np.nonzero(~good)[0]
    if bad.size:
        logger.warning(f"⚠️ {bad.size} вершин с вырожденным скиннингом, взято обращение соседа")
        good_ids = np.nonzero(good)[0]
        for vertex in bad:
            nearest = good_ids[np.argmin(np.linalg.norm(v[good_ids] - v[vertex], axis=1))]
            inv = np.linalg.inv(rotations[nearest])
            rest[vertex] = inv @ (v[vertex] - translations[nearest])
    return rest


def to_zero_shape(model: BodyModel, rest_vertices: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return rest_vertices - model.shape_dirs @ np.asarray(beta, dtype=np.float64)


def save_deformed_template(template: DeformedTemplate, path: str) -> str:
    """ASCII PLY: x y z red green blue, комментарий с ключевым кадром"""
    lines = [
        "ply",
        "format ascii 1.0",
        f"comment keyframe {template.keyframe}",
        f"element vertex {template.vertices.shape[0]}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property uchar visible",
        f"element face {template.faces.shape[0]}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for (x, y, z), (r, g, b), seen in zip(template.vertices, template.colors, template.visible):
        lines.append(f"{float(x)!r} {float(y)!r} {float(z)!r} {int(r)} {int(g)} {int(b)} {int(seen)}")
    for a, b, c in template.faces:
        lines.append(f"3 {int(a)} {int(b)} {int(c)}")
    filepath = Path(path)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    filepath.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.success(f"✅ Шаблон записан в {filepath}")
    return str(filepath)


def load_deformed_template(path: str) -> DeformedTemplate:
    filepath = Path(path)
    try:
        lines = filepath.read_text(encoding="utf-8").splitlines()
        end = lines.index("end_header")
        header = lines[:end]
        keyframe = next(int(l.split()[2]) for l in header if l.startswith("comment keyframe"))
        n_vertices = next(int(l.split()[2]) for l in header if l.startswith("element vertex"))
        n_faces = next(int(l.split()[2]) for l in header if l.startswith("element face"))
        body = lines[end + 1 :]
        vertex_rows = [row.split() for row in body[:n_vertices]]
        face_rows = [row.split() for row in body[n_vertices : n_vertices + n_faces]]
        vertices = np.array([[float(v) for v in row[:3]] for row in vertex_rows])
        colors = np.array([[int(c) for c in row[3:6]] for row in vertex_rows], dtype=np.uint8)
        visible = np.array([int(row[6]) > 0 if len(row) > 6 else True for row in vertex_rows], dtype=bool)
        faces = np.array([[int(i) for i in row[1:4]] for row in face_rows], dtype=np.int64)
    except OSError as e:
        raise DataIOError(f"Не удалось прочитать {filepath}: {e}") from e
    except (ValueError, IndexError, StopIteration) as e:
        raise DataIOError(f"{filepath}: повреждённый PLY ({e})") from e
    return DeformedTemplate(
        vertices=vertices, faces=faces, colors=colors, keyframe=keyframe, visible=visible
    )
