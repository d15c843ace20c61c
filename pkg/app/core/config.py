"""
Конфигурация приложения
"""

import json
from pathlib import Path
from typing import Optional, Type, TypeVar

from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings

from app.core.exceptions import DataIOError, ManifestError


class Settings(BaseSettings):
    """Настройки процесса (окружение и .env)"""

    # Application
    APP_NAME: str = "HumanSR"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    # Вычисления
    TORCH_THREADS: int = 1
    DEFAULT_SCALE: int = 8
    DEFAULT_BATCH_SIZE: int = 10

    # Пайплайн
    STAGE_CACHE: bool = True

    class Config:
        env_file = ".env"


class FitConfig(BaseModel):
    """Веса и параметры оптимизации позы"""

    w2d: float = Field(1.0, ge=0, description="Вес члена 2D суставов")
    w3d: float = Field(0.1, ge=0, description="Вес 3D априорной позы")
    wm: float = Field(0.01, ge=0, description="Вес маски")
    wS: float = Field(1.0, ge=0, description="Вес члена гладкости")
    lambda_mask: float = Field(1.0, ge=0, description="Вес непокрытой маски")
    lambda1: float = Field(0.1, ge=0, description="Временная гладкость суставов")
    lambda2: float = Field(0.0, ge=0, description="Вес оптического потока (0 для LR)")
    gm_sigma: float = Field(100.0, gt=0, description="Масштаб Geman-McClure, px")
    max_iters: int = Field(100, ge=0, description="Максимум итераций L-BFGS")
    grad_tol: float = Field(1e-6, gt=0, description="Порог нормы градиента")
    batch_size: int = Field(
        default_factory=lambda: settings.DEFAULT_BATCH_SIZE, ge=1, description="Кадров в окне батча"
    )
    shared_beta: bool = Field(True, description="Одна форма на последовательность")
    mask_samples: int = Field(64, ge=1, description="Граничных пикселей маски в суррогате")
    default_depth: float = Field(4.0, gt=0, description="Глубина, если торс не виден")
    try_flip: bool = Field(False, description="Пробовать разворот корня на pi")


class RefineConfig(BaseModel):
    """Параметры уточнения движения"""

    enabled: bool = Field(True, description="Выключение даёт LR позы без уточнения")
    trend_degree: int = Field(3, ge=0, description="Степень полинома тренда")
    min_period: int = Field(4, ge=2, description="Минимальный период сезонности")
    acf_threshold: float = Field(0.3, gt=0, le=1, description="Порог пика ACF")
    default_window: int = Field(5, ge=1, description="Окно скользящего среднего без периода")

    @field_validator("default_window")
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("окно должно быть нечётным")
        return value


class AdaptConfig(BaseModel):
    """Параметры адаптации шаблона"""

    lambda_smooth: float = Field(0.5, ge=0, description="Гладкость соответствия контуров")
    contour_samples: int = Field(64, ge=3, description="Точек контура для DP")
    omega: float = Field(1.0, ge=0, description="Вес лапласиана обычной вершины")
    omega_tagged: float = Field(0.25, ge=0, description="Вес лапласиана вершины контура")
    depth_gap: float = Field(0.05, ge=0, description="Разница глубин для перекрытия, м")
    max_iters: int = Field(200, ge=0, description="Итерации деформации")
    grad_tol: float = Field(1e-8, gt=0, description="Порог градиента деформации")
    tolerance_px: float = Field(1.5, gt=0, description="Допуск проекции вершины контура")


class RenderConfig(BaseModel):
    """Параметры рендера"""

    cull_backfaces: bool = Field(True, description="Отсекать задние грани")


ConfigT = TypeVar("ConfigT", bound=BaseModel)


def load_config(path: str, model: Type[ConfigT]) -> ConfigT:
    """Загрузить конфиг из JSON, ключи совпадают с полями"""
    filepath = Path(path)
    try:
        data = json.loads(filepath.read_text(encoding="utf-8"))
    except OSError as e:
        raise DataIOError(f"Не удалось прочитать {filepath}: {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(
            f"{filepath}: строка {e.lineno}, столбец {e.colno}: {e.msg}", field=None
        ) from e
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first["loc"])
        raise ManifestError(f"{filepath}: поле {field}: {first['msg']}", field=field) from e


# Создание экземпляра настроек
settings = Settings()
