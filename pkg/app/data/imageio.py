"""
Чтение и запись PNM (PPM P6 для кадров, PGM P5 для масок) через OpenCV
"""

from pathlib import Path

import cv2
import numpy as np

from app.core.exceptions import DataIOError


def _read(path: str, flags: int) -> np.ndarray:
    filepath = Path(path)
    if not filepath.exists():
        raise DataIOError(f"Файл {filepath} не найден")
    image = cv2.imread(str(filepath), flags)
    if image is None:
        raise DataIOError(f"Не удалось декодировать {filepath}")
    return image


def _write(path: str, image: np.ndarray) -> str:
    filepath = Path(path)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(filepath), image, [cv2.IMWRITE_PXM_BINARY, 1]):
        raise DataIOError(f"Не удалось записать {filepath}")
    return str(filepath)


def read_ppm(path: str) -> np.ndarray:
    """RGB uint8 H×W×3"""
    image = _read(path, cv2.IMREAD_COLOR)
    return cv2.cvtColor(image, cv2.COLOR_BGR2RGB)


def write_ppm(path: str, image: np.ndarray) -> str:
    rgb = np.ascontiguousarray(image, dtype=np.uint8)
    return _write(path, cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR))


def read_mask(path: str) -> np.ndarray:
    """Бинарная маска: ненулевое = передний план"""
    image = _read(path, cv2.IMREAD_GRAYSCALE)
    return image > 0


def write_mask(path: str, mask: np.ndarray) -> str:
    return _write(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def upsample_nearest(image: np.ndarray, scale: int) -> np.ndarray:
    """Ближайший сосед, каждый пиксель становится блоком scale×scale"""
    if scale == 1:
        return image.copy()
    height, width = image.shape[:2]
    return cv2.resize(image, (width * scale, height * scale), interpolation=cv2.INTER_NEAREST)


def downsample_area(image: np.ndarray, scale: int) -> np.ndarray:
    """Усреднение блоков scale×scale"""
    if scale == 1:
        return image.copy()
    height, width = image.shape[:2]
    return cv2.resize(image, (width // scale, height // scale), interpolation=cv2.INTER_AREA)
