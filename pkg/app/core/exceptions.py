"""
Иерархия исключений HumanSR с кодами выхода CLI
"""

from typing import Optional

import numpy as np


class HumanSRError(Exception):
    """Базовая ошибка пайплайна"""

    exit_code = 1
    frame: Optional[int] = None


class InvalidArgumentError(HumanSRError, ValueError):
    """Нарушено предусловие или инвариант входных данных"""

    exit_code = 2


class BehindCameraError(InvalidArgumentError):
    """Точка за камерой (z <= 0)"""


class EmptyMaskError(InvalidArgumentError):
    """Маска без пикселей переднего плана"""


class ZeroVarianceError(InvalidArgumentError):
    """Постоянный ряд, автокорреляция не определена"""


class DegenerateContourError(InvalidArgumentError):
    """Контур короче трёх точек"""


class ManifestError(InvalidArgumentError):
    """Ошибка манифеста или конфига, указывает поле"""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class InsufficientSeasonalityError(HumanSRError):
    """Меньше двух пересечений одного направления"""

    exit_code = 2


class ClippedSilhouetteError(HumanSRError):
    """Силуэт пуст или полностью вне кадра"""

    exit_code = 2


class NumericalFailureError(HumanSRError):
    """Нечисловое значение функции или градиента"""

    exit_code = 3

    def __init__(self, message: str, last_x: Optional[np.ndarray] = None):
        super().__init__(message)
        self.last_x = last_x


class DataIOError(HumanSRError):
    """Файл не читается или повреждён"""

    exit_code = 4


class StageError(HumanSRError):
    """Сбой этапа пайплайна"""

    def __init__(self, stage: str, cause: Exception, frame: Optional[int] = None):
        where = f"этап {stage}" if frame is None else f"этап {stage}, кадр {frame}"
        super().__init__(f"{where}: {cause}")
        self.stage = stage
        self.frame = frame
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
