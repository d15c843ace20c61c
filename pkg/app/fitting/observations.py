"""
Наблюдения кадров и последовательности поз
"""

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from loguru import logger

from app.body.model import NUM_POSE_PARAMS, PoseParams
from app.core.exceptions import DataIOError, InvalidArgumentError
from app.data.imageio import read_mask

FRAME_PATTERN = re.compile(r"frame_(\d+)\.json$")


@dataclass
class FrameObservation:
    """2D суставы, маска, априорная поза и опциональные цели потока"""

    keypoints2d: np.ndarray  # D×3: x, y, уверенность
    mask: np.ndarray  # H×W bool
    prior_theta: np.ndarray
    timestamp: float
    flow_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    flow_targets: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    image_path: Optional[str] = None

    def __post_init__(self):
        self.keypoints2d = np.asarray(self.keypoints2d, dtype=np.float64).reshape(-1, 3)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.prior_theta = np.asarray(self.prior_theta, dtype=np.float64).reshape(-1)
        self.flow_indices = np.asarray(self.flow_indices, dtype=np.int64).reshape(-1)
        self.flow_targets = np.asarray(self.flow_targets, dtype=np.float64).reshape(-1, 3)
        self.timestamp = float(self.timestamp)

        confidences = self.keypoints2d[:, 2]
        if np.any(confidences < 0) or np.any(confidences > 1):
            raise InvalidArgumentError("keypoints: уверенность вне [0, 1]")
        if self.prior_theta.shape[0] != NUM_POSE_PARAMS:
            raise InvalidArgumentError(f"prior_theta: ожидается {NUM_POSE_PARAMS} значений")
        if self.mask.ndim != 2:
            raise InvalidArgumentError("mask: ожидается двумерная маска")
        if self.flow_indices.shape[0] != self.flow_targets.shape[0]:
            raise InvalidArgumentError("flow_targets: индексы и цели разной длины")
        if np.any(self.flow_indices < 0):
            raise InvalidArgumentError("flow_targets: отрицательный индекс вершины")

    @property
    def has_flow(self) -> bool:
        return self.flow_indices.size > 0


def frame_index(path: Path) -> int:
    match = FRAME_PATTERN.search(path.name)
    if not match:
        raise InvalidArgumentError(f"{path.name}: имя кадра должно быть frame_NNNNNN.json")
    return int(match.group(1))


def load_frame(path: str) -> FrameObservation:
    """Прочитать frame_NNNNNN.json, маска и изображение относительно файла кадра"""
    filepath = Path(path)
    try:
        data = json.loads(filepath.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataIOError(f"Не удалось прочитать {filepath}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataIOError(
            f"{filepath.name}: строка {e.lineno}, столбец {e.colno}: {e.msg}"
        ) from e
    if not isinstance(data, dict):
        raise DataIOError(f"{filepath.name}: ожидается JSON объект")

    for key in ("keypoints", "prior_theta", "mask"):
        if key not in data:
            raise InvalidArgumentError(f"{filepath.name}: нет ключа {key}")

    flow = np.asarray(data.get("flow_targets") or [], dtype=np.float64).reshape(-1, 4)
    image = data.get("image")
    return FrameObservation(
        keypoints2d=data["keypoints"],
        mask=read_mask(str(filepath.parent / data["mask"])),
        prior_theta=data["prior_theta"],
        timestamp=data.get("timestamp", frame_index(filepath)),
        flow_indices=flow[:, 0].astype(np.int64),
        flow_targets=flow[:, 1:],
        image_path=str(filepath.parent / image) if image else None,
    )


def list_frames(directory: str) -> List[Path]:
    paths = sorted(Path(directory).glob("frame_*.json"), key=frame_index)
    if not paths:
        raise DataIOError(f"В {directory} нет файлов frame_*.json")
    return paths


@dataclass
class PoseSequence:
    """Параметры по кадрам и метки времени на общих часах LR"""

    frames: List[PoseParams]
    timestamps: np.ndarray
    shared_beta: bool = True
    energies: List[Dict[str, float]] = field(default_factory=list)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        if len(self.frames) != self.timestamps.shape[0]:
            raise InvalidArgumentError("PoseSequence: число кадров и меток времени различается")
        if np.any(np.diff(self.timestamps) <= 0):
            raise InvalidArgumentError("timestamps: метки времени должны строго возрастать")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def thetas(self) -> np.ndarray:
        return np.stack([p.theta for p in self.frames])

    @property
    def betas(self) -> np.ndarray:
        return np.stack([p.beta for p in self.frames])

    @property
    def gammas(self) -> np.ndarray:
        return np.stack([p.gamma for p in self.frames])

    @classmethod
    def from_arrays(
        cls,
        thetas: np.ndarray,
        betas: np.ndarray,
        gammas: np.ndarray,
        timestamps: np.ndarray,
        shared_beta: bool = True,
    ) -> "PoseSequence":
        frames = [PoseParams(t, b, g) for t, b, g in zip(thetas, betas, gammas)]
        return cls(frames=frames, timestamps=timestamps, shared_beta=shared_beta)


def save_poses(sequence: PoseSequence, path: str) -> str:
    """Записать poses.json"""
    frames = []
    for i, (params, timestamp) in enumerate(zip(sequence.frames, sequence.timestamps)):
        entry = {"timestamp": float(timestamp), **params.to_dict()}
        if i < len(sequence.energies):
            entry["energies"] = sequence.energies[i]
        frames.append(entry)
    filepath = Path(path)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    with open(filepath, "w", encoding="utf-8") as f:
        json.dump({"shared_beta": sequence.shared_beta, "frames": frames}, f, indent=2)
    logger.success(f"✅ Сохранено {len(frames)} поз в {filepath}")
    return str(filepath)


def load_poses(path: str) -> PoseSequence:
    """Прочитать poses.json"""
    filepath = Path(path)
    try:
        data = json.loads(filepath.read_text(encoding="utf-8"))
        frames = data["frames"]
        sequence = PoseSequence(
            frames=[PoseParams(f["theta"], f["beta"], f["gamma"]) for f in frames],
            timestamps=[f["timestamp"] for f in frames],
            shared_beta=bool(data.get("shared_beta", True)),
            energies=[f["energies"] for f in frames if "energies" in f],
        )
    except OSError as e:
        raise DataIOError(f"Не удалось прочитать {filepath}: {e}") from e
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DataIOError(f"{filepath}: повреждённый файл поз ({e})") from e
    logger.info(f"Загружено {len(sequence)} поз из {filepath}")
    return sequence
