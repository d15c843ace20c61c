"""
Манифест проекта: пути, камера, масштаб и конфиги этапов
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, ValidationInfo, field_validator

from app.body.camera import Camera
from app.core.config import AdaptConfig, FitConfig, RefineConfig, RenderConfig, settings
from app.core.exceptions import DataIOError, ManifestError
from app.data.imageio import read_mask
from app.fitting.observations import frame_index, list_frames


class ProjectManifest(BaseModel):
    """Описание проекта; относительные пути считаются от файла манифеста"""

    model: Path = Field(..., description="JSON модели тела")
    camera: Camera = Field(..., description="Камера в разрешении результата (HR)")
    hr_dir: Path = Field(..., description="Кадры HR последовательности")
    hr_timestamps: Optional[List[float]] = Field(
        default=None, description="Метки времени HR кадров на часах LR"
    )
    lr_dir: Path = Field(..., description="Кадры LR последовательности")
    scale: int = Field(default=settings.DEFAULT_SCALE, ge=1, description="Коэффициент масштаба LR")
    fit: FitConfig = Field(default_factory=FitConfig)
    refine: RefineConfig = Field(default_factory=RefineConfig)
    adapt: AdaptConfig = Field(default_factory=AdaptConfig)
    render: RenderConfig = Field(default_factory=RenderConfig)
    output: Path = Field(default=Path("out"), description="Каталог результатов")

    @field_validator("model", "hr_dir", "lr_dir", "output", mode="before")
    @classmethod
    def _resolve(cls, value, info: ValidationInfo):
        base = (info.context or {}).get("base_dir")
        path = Path(value)
        if base is not None and not path.is_absolute():
            path = Path(base) / path
        return path

    @field_validator("model")
    @classmethod
    def _model_exists(cls, value: Path) -> Path:
        if not value.is_file():
            raise ValueError(f"файл модели {value} не найден")
        return value

    @field_validator("hr_dir", "lr_dir")
    @classmethod
    def _dir_exists(cls, value: Path) -> Path:
        if not value.is_dir():
            raise ValueError(f"каталог {value} не найден")
        return value

    @field_validator("hr_timestamps")
    @classmethod
    def _increasing(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and np.any(np.diff(value) <= 0):
            raise ValueError("метки времени должны строго возрастать")
        return value

    @property
    def lr_camera(self) -> Camera:
        return self.camera.scaled(self.scale)


def _frame_references(directory: Path) -> Tuple[List[int], List[float], List[Tuple[str, Path]]]:
    """Номера, метки времени и файлы, на которые ссылаются кадры каталога"""
    numbers, timestamps, references = [], [], []
    for path in list_frames(str(directory)):
        number = frame_index(path)
        numbers.append(number)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            # Повреждённый кадр сообщит этап, который его читает
            logger.debug(f"{path.name} не разобран при проверке манифеста")
            timestamps.append(float(number))
            continue
        if not isinstance(data, dict):
            timestamps.append(float(number))
            continue
        timestamps.append(float(data.get("timestamp", number)))
        for key in ("mask", "image"):
            if data.get(key):
                references.append((path.name, path.parent / data[key]))
    return numbers, timestamps, references


def _check_sequence(manifest: ProjectManifest, name: str) -> Dict[str, list]:
    directory = getattr(manifest, name)
    try:
        numbers, timestamps, references = _frame_references(directory)
    except DataIOError as e:
        raise ManifestError(str(e), field=name) from e
    for frame_name, reference in references:
        if not reference.is_file():
            raise ManifestError(f"{name}: {frame_name} ссылается на отсутствующий {reference}", field=name)
    return {"numbers": numbers, "timestamps": timestamps, "references": references}


def _first_mask_shape(references) -> Optional[Tuple[int, int]]:
    for _, reference in references:
        if reference.suffix.lower() == ".pgm":
            return read_mask(str(reference)).shape
    return None


def validate_sequences(manifest: ProjectManifest) -> None:
    """Проверки, требующие чтения каталогов кадров"""
    hr = _check_sequence(manifest, "hr_dir")
    lr = _check_sequence(manifest, "lr_dir")

    hr_times = np.asarray(
        manifest.hr_timestamps if manifest.hr_timestamps is not None else hr["timestamps"]
    )
    if hr_times.shape[0] != len(hr["numbers"]):
        raise ManifestError(
            f"hr_timestamps: {hr_times.shape[0]} меток на {len(hr['numbers'])} HR кадров",
            field="hr_timestamps",
        )
    # Допуск - один период HR съёмки (медианный шаг кадров); период движения ещё неизвестен
    step = float(np.median(np.diff(hr_times))) if hr_times.shape[0] > 1 else 0.0
    lr_start, lr_end = min(lr["timestamps"]), max(lr["timestamps"])
    outside = hr_times[(hr_times < lr_start - step) | (hr_times > lr_end + step)]
    if outside.size:
        raise ManifestError(
            f"hr_timestamps: {outside.tolist()} вне интервала LR [{lr_start}, {lr_end}]",
            field="hr_timestamps",
        )

    lr_shape = _first_mask_shape(lr["references"])
    if lr_shape is not None:
        expected = (lr_shape[0] * manifest.scale, lr_shape[1] * manifest.scale)
        if expected != manifest.camera.shape:
            raise ManifestError(
                f"camera: размер {manifest.camera.shape} не равен LR {lr_shape} × {manifest.scale}",
                field="camera",
            )
    hr_shape = _first_mask_shape(hr["references"])
    if hr_shape is not None and hr_shape != manifest.camera.shape:
        raise ManifestError(
            f"hr_dir: маски {hr_shape} не совпадают с камерой {manifest.camera.shape}", field="hr_dir"
        )


def _manifest_error(source: str, error: ValidationError) -> ManifestError:
    first = error.errors()[0]
    field = ".".join(str(p) for p in first["loc"]) or None
    return ManifestError(f"{source}: поле {field}: {first['msg']}", field=field)


def override_manifest(manifest: ProjectManifest, update: Dict[str, Any]) -> ProjectManifest:
    """Манифест с заменёнными полями; смена масштаба заново сверяется с кадрами"""
    try:
        updated = ProjectManifest.model_validate({**manifest.model_dump(), **update})
    except ValidationError as e:
        raise _manifest_error("флаги командной строки", e) from e
    if "scale" in update:
        validate_sequences(updated)
    return updated


def load_manifest(path: str) -> ProjectManifest:
    """Прочитать и полностью проверить manifest.json"""
    filepath = Path(path)
    try:
        data = json.loads(filepath.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataIOError(f"Не удалось прочитать манифест {filepath}: {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"{filepath}: строка {e.lineno}, столбец {e.colno}: {e.msg}") from e

    try:
        manifest = ProjectManifest.model_validate(data, context={"base_dir": filepath.parent})
    except ValidationError as e:
        raise _manifest_error(str(filepath), e) from e

    validate_sequences(manifest)
    logger.success(f"✅ Манифест {filepath.name} загружен, масштаб ×{manifest.scale}")
    return manifest
