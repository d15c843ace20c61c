"""
Дифференцируемая кинематика на torch (float64) для оптимизации
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch

from app.body.model import NUM_JOINTS, BodyModel

DTYPE = torch.float64


def _skew(v: torch.Tensor) -> torch.Tensor:
    z = torch.zeros_like(v[..., :1])
    return torch.stack(
        [
            torch.cat([z, -v[..., 2:3], v[..., 1:2]], -1),
            torch.cat([v[..., 2:3], z, -v[..., 0:1]], -1),
            torch.cat([-v[..., 1:2], v[..., 0:1], z], -1),
        ],
        -2,
    )


def batch_rodrigues(rot_vecs: torch.Tensor) -> torch.Tensor:
    """(..., 3) -> (..., 3, 3); градиент конечен и в нуле"""
    theta2 = (rot_vecs * rot_vecs).sum(-1, keepdim=True)
    small = theta2 < 1e-8
    safe_theta2 = torch.where(small, torch.ones_like(theta2), theta2)
    theta = torch.sqrt(safe_theta2)
    a = torch.where(small, 1.0 - theta2 / 6.0, torch.sin(theta) / theta)
    b = torch.where(small, 0.5 - theta2 / 24.0, (1.0 - torch.cos(theta)) / safe_theta2)
    k = _skew(rot_vecs)
    eye = torch.eye(3, dtype=rot_vecs.dtype, device=rot_vecs.device)
    return eye + a.unsqueeze(-1) * k + b.unsqueeze(-1) * (k @ k)


def _homog(rotation: torch.Tensor, translation: torch.Tensor) -> torch.Tensor:
    pad = rotation.new_tensor([0.0, 0.0, 0.0, 1.0]).expand(*rotation.shape[:-2], 1, 4)
    return torch.cat((torch.cat((rotation, translation.unsqueeze(-1)), -1), pad), -2)


def batch_forward_kinematics(
    rotations: torch.Tensor, rest_joints: torch.Tensor, parents: Tuple[int, ...]
) -> Tuple[torch.Tensor, torch.Tensor]:
    """rotations (F, J, 3, 3), rest_joints (F, J, 3) -> суставы и относительные преобразования"""
    world = []
    for k, parent in enumerate(parents):
        if parent < 0:
            world.append(_homog(rotations[:, k], rest_joints[:, k]))
        else:
            offset = rest_joints[:, k] - rest_joints[:, parent]
            world.append(world[parent] @ _homog(rotations[:, k], offset))
    transforms = torch.stack(world, dim=1)
    posed_joints = transforms[..., :3, 3]
    shift = torch.einsum("fkij,fkj->fki", transforms[..., :3, :3], rest_joints)
    relative = _homog(transforms[..., :3, :3], posed_joints - shift)
    return posed_joints, relative


@dataclass
class TorchBody:
    """Тензорная копия BodyModel для батчевого LBS"""

    vertices_rest: torch.Tensor
    shape_dirs: torch.Tensor
    joint_regressor: torch.Tensor
    skin_weights: torch.Tensor
    parents: Tuple[int, ...]

    @classmethod
    def from_model(cls, model: BodyModel) -> "TorchBody":
        as_tensor = lambda a: torch.as_tensor(np.array(a), dtype=DTYPE)  # noqa: E731
        return cls(
            vertices_rest=as_tensor(model.vertices_rest),
            shape_dirs=as_tensor(model.shape_dirs),
            joint_regressor=as_tensor(model.joint_regressor),
            skin_weights=as_tensor(model.skin_weights),
            parents=tuple(int(p) for p in model.parents),
        )

    def forward(
        self, theta: torch.Tensor, beta: torch.Tensor, gamma: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """theta (F, 72), beta (F, B), gamma (F, 3) -> вершины (F, N, 3), суставы (F, J, 3)"""
        frames = theta.shape[0]
        shaped = self.vertices_rest + torch.einsum("ncb,fb->fnc", self.shape_dirs, beta)
        rest_joints = torch.einsum("jn,fnc->fjc", self.joint_regressor, shaped)
        rotations = batch_rodrigues(theta.reshape(frames, NUM_JOINTS, 3))
        posed_joints, relative = batch_forward_kinematics(rotations, rest_joints, self.parents)
        blended = torch.einsum("nk,fkij->fnij", self.skin_weights, relative)
        vertices = torch.einsum("fnij,fnj->fni", blended[..., :3, :3], shaped)
        vertices = vertices + blended[..., :3, 3] + gamma.unsqueeze(1)
        return vertices, posed_joints + gamma.unsqueeze(1)
