"""
Камера-обскура с фиксированными внутренними параметрами
"""

from typing import Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field, model_validator

from app.core.exceptions import BehindCameraError


class Camera(BaseModel):
    """Фокус и главная точка в пикселях, ось y вниз, камера смотрит вдоль +z"""

    focal: float = Field(..., gt=0, description="Фокусное расстояние, px")
    cx: float = Field(..., description="Главная точка x, px")
    cy: float = Field(..., description="Главная точка y, px")
    width: int = Field(..., ge=1, description="Ширина изображения, px")
    height: int = Field(..., ge=1, description="Высота изображения, px")

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _principal_point_inside(self) -> "Camera":
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError("главная точка должна лежать внутри изображения")
        return self

    @property
    def principal_point(self) -> Tuple[float, float]:
        return self.cx, self.cy

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def scaled(self, factor: float) -> "Camera":
        """Та же камера для изображения в factor раз меньше"""
        return Camera(
            focal=self.focal / factor,
            cx=self.cx / factor,
            cy=self.cy / factor,
            width=int(round(self.width / factor)),
            height=int(round(self.height / factor)),
        )


def project(camera: Camera, points3d) -> np.ndarray:
    """x = f·X/Z + cx, y = f·Y/Z + cy"""
    points = np.asarray(points3d, dtype=np.float64).reshape(-1, 3)
    z = points[:, 2]
    if np.any(z <= 0):
        raise BehindCameraError(f"{int(np.sum(z <= 0))} точек за камерой (z <= 0)")
    return np.stack(
        [
            camera.focal * points[:, 0] / z + camera.cx,
            camera.focal * points[:, 1] / z + camera.cy,
        ],
        axis=1,
    )


def project_torch(camera: Camera, points3d: torch.Tensor) -> torch.Tensor:
    """Дифференцируемая проекция (..., 3) -> (..., 2), без проверки глубины"""
    z = points3d[..., 2:3]
    xy = points3d[..., :2] / z
    scale = xy.new_tensor([camera.focal, camera.focal])
    center = xy.new_tensor([camera.cx, camera.cy])
    return xy * scale + center
