"""
Композитинг рендера на апсемплированный LR кадр и PSNR
"""

import numpy as np

from app.core.exceptions import InvalidArgumentError
from app.render.rasterizer import RasterOutput


def composite(background: np.ndarray, raster: RasterOutput) -> np.ndarray:
    """Цвет рендера на покрытых пикселях, фон побитово на остальных"""
    background = np.asarray(background)
    if background.shape[:2] != raster.coverage.shape:
        raise InvalidArgumentError(
            f"composite: фон {background.shape[:2]} и рендер {raster.coverage.shape} разного размера"
        )
    output = background.copy()
    output[raster.coverage] = raster.color[raster.coverage]
    return output


def psnr(image_a: np.ndarray, image_b: np.ndarray) -> float:
    """10·log10(255² / MSE); для одинаковых изображений +inf"""
    a = np.asarray(image_a)
    b = np.asarray(image_b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"psnr: размеры {a.shape} и {b.shape} различаются")
    mse = np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(255.0**2 / mse))
