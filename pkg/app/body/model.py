"""
Модель тела в стиле SMPL: шаблон, блендшейпы формы, дерево суставов, LBS

Эталонная реализация на numpy. Внутри оптимизации используется
дифференцируемая версия из app.body.kinematics.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from loguru import logger

from app.core.exceptions import DataIOError, InvalidArgumentError

# 23 сустава тела плюс корень
NUM_JOINTS = 24
NUM_POSE_PARAMS = 3 * NUM_JOINTS

# Стандартное дерево SMPL
SMPL_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

MODEL_KEYS = (
    "vertices",
    "faces",
    "shape_dirs",
    "joint_regressor",
    "skin_weights",
    "parents",
    "part_labels",
    "keypoint_map",
)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class BodyModel:
    """Неизменяемая модель тела, проверяется при создании"""

    vertices_rest: np.ndarray
    faces: np.ndarray
    shape_dirs: np.ndarray
    joint_regressor: np.ndarray
    skin_weights: np.ndarray
    parents: np.ndarray
    part_labels: np.ndarray
    keypoint_map: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        as_float = lambda a: _frozen(np.array(a, dtype=np.float64))  # noqa: E731
        as_int = lambda a: _frozen(np.array(a, dtype=np.int64))  # noqa: E731
        object.__setattr__(self, "vertices_rest", as_float(self.vertices_rest))
        object.__setattr__(self, "faces", as_int(self.faces).reshape(-1, 3))
        object.__setattr__(self, "shape_dirs", as_float(self.shape_dirs))
        object.__setattr__(self, "joint_regressor", as_float(self.joint_regressor))
        object.__setattr__(self, "skin_weights", as_float(self.skin_weights))
        object.__setattr__(self, "parents", as_int(self.parents))
        object.__setattr__(self, "part_labels", as_int(self.part_labels))
        object.__setattr__(
            self, "keypoint_map", tuple((int(d), int(j)) for d, j in self.keypoint_map)
        )
        self._validate()

    def _validate(self) -> None:
        n = self.vertices_rest.shape[0]
        if self.vertices_rest.ndim != 2 or self.vertices_rest.shape[1] != 3:
            raise InvalidArgumentError("vertices: ожидается массив N×3")
        if not np.all(np.isfinite(self.vertices_rest)):
            raise InvalidArgumentError("vertices: нечисловые координаты")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise InvalidArgumentError("faces: индекс вершины вне диапазона")
        if self.shape_dirs.ndim != 3 or self.shape_dirs.shape[:2] != (n, 3):
            raise InvalidArgumentError("shape_dirs: ожидается массив N×3×B")
        if self.parents.shape != (NUM_JOINTS,):
            raise InvalidArgumentError(
                f"parents: ожидается {NUM_JOINTS} суставов (K=23 плюс корень), "
                f"получено {self.parents.shape[0]}"
            )
        if self.parents[0] != -1:
            raise InvalidArgumentError("parents: корень должен быть суставом 0 с родителем -1")
        for child in range(1, NUM_JOINTS):
            if not 0 <= self.parents[child] < child:
                raise InvalidArgumentError(f"parents[{child}]: родитель должен иметь меньший индекс")
        if self.joint_regressor.shape != (NUM_JOINTS, n):
            raise InvalidArgumentError("joint_regressor: ожидается массив (K+1)×N")
        if np.any(self.joint_regressor < 0):
            raise InvalidArgumentError("joint_regressor: отрицательные веса")
        if not np.allclose(self.joint_regressor.sum(axis=1), 1.0, rtol=0, atol=1e-6):
            raise InvalidArgumentError("joint_regressor: суммы строк должны быть равны 1")
        if self.skin_weights.shape != (n, NUM_JOINTS):
            raise InvalidArgumentError("skin_weights: ожидается массив N×(K+1)")
        if np.any(self.skin_weights < 0):
            raise InvalidArgumentError("skin_weights: отрицательные веса")
        if not np.allclose(self.skin_weights.sum(axis=1), 1.0, rtol=0, atol=1e-6):
            raise InvalidArgumentError("skin_weights: суммы строк должны быть равны 1")
        if self.part_labels.shape != (n,):
            raise InvalidArgumentError("part_labels: по одной метке на вершину")
        for detector_idx, joint_idx in self.keypoint_map:
            if detector_idx < 0 or not 0 <= joint_idx < NUM_JOINTS:
                raise InvalidArgumentError(
                    f"keypoint_map: пара ({detector_idx}, {joint_idx}) вне диапазона"
                )

    @property
    def num_vertices(self) -> int:
        return self.vertices_rest.shape[0]

    @property
    def num_betas(self) -> int:
        return self.shape_dirs.shape[2]

    def part_parent(self, label: int) -> int:
        """Метка части тела совпадает с индексом сустава"""
        return int(self.parents[label]) if 0 <= label < NUM_JOINTS else -1


@dataclass(frozen=True)
class PoseParams:
    """Параметры позы: theta (72), beta (B), gamma (3)"""

    theta: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("theta", "beta", "gamma"):
            value = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(value)):
                raise InvalidArgumentError(f"{name}: нечисловые значения")
            object.__setattr__(self, name, _frozen(value))
        if self.theta.shape[0] != NUM_POSE_PARAMS:
            raise InvalidArgumentError(
                f"theta: ожидается {NUM_POSE_PARAMS} параметров, получено {self.theta.shape[0]}"
            )
        if self.gamma.shape[0] != 3:
            raise InvalidArgumentError("gamma: ожидается 3D смещение")

    @classmethod
    def zeros(cls, num_betas: int) -> "PoseParams":
        return cls(np.zeros(NUM_POSE_PARAMS), np.zeros(num_betas), np.zeros(3))

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
        }


@dataclass(frozen=True)
class PosedBody:
    """Результат M(beta, theta, gamma)"""

    vertices: np.ndarray
    joints3d: np.ndarray
    # Смешанные жёсткие преобразования 4×4 без gamma, нужны для распозирования
    per_vertex_transform: np.ndarray


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(axis_angle: Sequence[float]) -> np.ndarray:
    """Ось-угол в матрицу поворота; нулевой вектор даёт единичную матрицу"""
    r = np.asarray(axis_angle, dtype=np.float64).reshape(-1)
    if r.shape != (3,) or not np.all(np.isfinite(r)):
        raise InvalidArgumentError("rodrigues: ожидается конечный 3-вектор")
    theta2 = float(r @ r)
    if theta2 < 1e-8:
        # Ряд Тейлора около нуля
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = np.sqrt(theta2)
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    k = skew(r)
    return np.eye(3) + a * k + b * (k @ k)


def shape_body(model: BodyModel, beta: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Вершины с учётом формы и суставы в покое"""
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.shape[0] != model.num_betas:
        raise InvalidArgumentError(
            f"beta: ожидается {model.num_betas} коэффициентов, получено {beta.shape[0]}"
        )
    shaped = model.vertices_rest + model.shape_dirs @ beta
    rest_joints = model.joint_regressor @ shaped
    return shaped, rest_joints


def forward_kinematics(
    rotations: np.ndarray, rest_joints: np.ndarray, parents: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Мировые положения суставов и преобразования относительно покоя"""
    world: List[np.ndarray] = []
    for k, parent in enumerate(parents):
        local = np.eye(4)
        local[:3, :3] = rotations[k]
        if parent < 0:
            local[:3, 3] = rest_joints[k]
            world.append(local)
        else:
            local[:3, 3] = rest_joints[k] - rest_joints[parent]
            world.append(world[parent] @ local)
    transforms = np.stack(world)
    posed_joints = transforms[:, :3, 3].copy()
    relative = transforms.copy()
    relative[:, :3, 3] -= np.einsum("kij,kj->ki", transforms[:, :3, :3], rest_joints)
    return posed_joints, relative


def pose_rest_vertices(
    model: BodyModel, rest_vertices: np.ndarray, rest_joints: np.ndarray, params: PoseParams
) -> PosedBody:
    """LBS произвольных вершин покоя с заданными суставами покоя"""
    rotations = np.stack([rodrigues(r) for r in params.theta.reshape(NUM_JOINTS, 3)])
    posed_joints, relative = forward_kinematics(rotations, rest_joints, model.parents)
    blended = np.einsum("nk,kij->nij", model.skin_weights, relative)
    vertices = np.einsum("nij,nj->ni", blended[:, :3, :3], rest_vertices) + blended[:, :3, 3]
    return PosedBody(
        vertices=vertices + params.gamma,
        joints3d=posed_joints + params.gamma,
        per_vertex_transform=blended,
    )


def pose_body(model: BodyModel, params: PoseParams) -> PosedBody:
    """M(beta, theta, gamma): форма, кинематика, скиннинг, смещение"""
    shaped, rest_joints = shape_body(model, params.beta)
    return pose_rest_vertices(model, shaped, rest_joints, params)


def load_body_model(path: str) -> BodyModel:
    """Загрузить модель тела из JSON"""
    filepath = Path(path)
    try:
        data = json.loads(filepath.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataIOError(f"Не удалось прочитать модель {filepath}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataIOError(
            f"{filepath}: строка {e.lineno}, столбец {e.colno}: {e.msg}"
        ) from e

    missing = [key for key in MODEL_KEYS if key not in data]
    if missing:
        raise InvalidArgumentError(f"{filepath}: нет ключей {', '.join(missing)}")

    model = BodyModel(
        vertices_rest=data["vertices"],
        faces=data["faces"],
        shape_dirs=data["shape_dirs"],
        joint_regressor=data["joint_regressor"],
        skin_weights=data["skin_weights"],
        parents=data["parents"],
        part_labels=data["part_labels"],
        keypoint_map=[tuple(pair) for pair in data["keypoint_map"]],
    )
    logger.info(
        f"🧍 Модель загружена: {model.num_vertices} вершин, "
        f"{len(model.faces)} граней, B={model.num_betas}"
    )
    return model


def save_body_model(model: BodyModel, path: str) -> str:
    """Сохранить модель тела в JSON"""
    data = {
        "vertices": model.vertices_rest.tolist(),
        "faces": model.faces.tolist(),
        "shape_dirs": model.shape_dirs.tolist(),
        "joint_regressor": model.joint_regressor.tolist(),
        "skin_weights": model.skin_weights.tolist(),
        "parents": model.parents.tolist(),
        "part_labels": model.part_labels.tolist(),
        "keypoint_map": [list(pair) for pair in model.keypoint_map],
    }
    filepath = Path(path)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    with open(filepath, "w", encoding="utf-8") as f:
        json.dump(data, f)
    return str(filepath)
