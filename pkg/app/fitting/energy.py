"""
Члены целевой функции подгонки позы

E = w2d·E_2d + w3d·E_3d + wm·E_m + wS·E_S. Внутри оптимизации маска
считается через гладкий суррогат по карте расстояний, точный подсчёт
пикселей идёт только в отчёт.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from scipy import ndimage

from app.body.camera import Camera, project, project_torch
from app.body.kinematics import DTYPE, TorchBody
from app.body.model import BodyModel, PosedBody, PoseParams, pose_body
from app.core.config import FitConfig
from app.core.exceptions import EmptyMaskError, InvalidArgumentError
from app.fitting.observations import FrameObservation
from app.render.rasterizer import NEAR, rasterize_silhouette

TERM_NAMES = ("e2d", "e3d", "emask", "esmooth")


def gmof(squared_error: torch.Tensor, sigma: float) -> torch.Tensor:
    """Geman-McClure от квадрата ошибки"""
    sigma_squared = sigma**2
    return sigma_squared * squared_error / (sigma_squared + squared_error)


def resolve_keypoints(
    keypoint_map: Sequence[Tuple[int, int]], keypoints2d: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Пары (индекс детектора, сустав) для ключевых точек кадра"""
    mapping = dict(keypoint_map)
    observed = np.nonzero(keypoints2d[:, 2] > 0)[0]
    unmapped = [int(d) for d in observed if int(d) not in mapping]
    if unmapped:
        raise InvalidArgumentError(f"keypoints: индексы {unmapped} не описаны в keypoint_map")
    pairs = sorted((d, j) for d, j in mapping.items() if d < keypoints2d.shape[0])
    detector = np.array([d for d, _ in pairs], dtype=np.int64)
    joints = np.array([j for _, j in pairs], dtype=np.int64)
    return detector, joints


@dataclass
class MaskTarget:
    """Карта расстояний до маски и выборка граничных пикселей"""

    distance: torch.Tensor  # 1×1×H×W
    boundary: torch.Tensor  # S×2, центры пикселей (x, y)


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Пиксели маски с соседом вне маски (включая край изображения)"""
    return mask & ~ndimage.binary_erosion(mask)


def prepare_mask(mask: np.ndarray, samples: int, distance: Optional[np.ndarray] = None) -> MaskTarget:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("маска пуста")
    if distance is None:
        distance = ndimage.distance_transform_edt(~mask)
    rows, cols = np.nonzero(boundary_pixels(mask))
    picks = np.unique(np.linspace(0, rows.size - 1, min(samples, rows.size)).round().astype(np.int64))
    boundary = np.stack([cols[picks] + 0.5, rows[picks] + 0.5], axis=1)
    return MaskTarget(
        distance=torch.as_tensor(np.asarray(distance, dtype=np.float64), dtype=DTYPE)[None, None],
        boundary=torch.as_tensor(boundary, dtype=DTYPE),
    )


def sample_distance(target: MaskTarget, points2d: torch.Tensor) -> torch.Tensor:
    """Бикубическая выборка карты расстояний; вне кадра добавляется расстояние до края"""
    height, width = target.distance.shape[-2:]
    lo = points2d.new_tensor([0.5, 0.5])
    hi = points2d.new_tensor([width - 0.5, height - 0.5])
    clamped = torch.maximum(torch.minimum(points2d, hi), lo)
    overshoot_sq = ((points2d - clamped) ** 2).sum(-1)
    positive = overshoot_sq > 0
    overshoot = torch.where(
        positive, torch.sqrt(torch.where(positive, overshoot_sq, torch.ones_like(overshoot_sq))), 0.0
    )
    scale = points2d.new_tensor([max(width - 1, 1), max(height - 1, 1)])
    grid = ((clamped - 0.5) / scale * 2.0 - 1.0).reshape(1, 1, -1, 2)
    values = F.grid_sample(
        target.distance, grid, mode="bicubic", padding_mode="border", align_corners=True
    ).reshape(-1)
    return values + overshoot


def mask_surrogate(
    target: MaskTarget, points2d: torch.Tensor, lambda_mask: float
) -> torch.Tensor:
    outside = (sample_distance(target, points2d) ** 2).sum()
    if lambda_mask == 0:
        return outside
    gaps = ((target.boundary[:, None, :] - points2d[None, :, :]) ** 2).sum(-1)
    return outside + lambda_mask * gaps.min(dim=1).values.sum()


def joints2d_term(
    joints3d: torch.Tensor,
    camera: Camera,
    keypoints2d: torch.Tensor,
    pairs: Tuple[np.ndarray, np.ndarray],
    sigma: float,
) -> torch.Tensor:
    detector, joint_ids = pairs
    if detector.size == 0:
        return joints3d.sum() * 0.0
    projected = project_torch(camera, joints3d[joint_ids])
    target = keypoints2d[detector]
    squared = ((projected - target[:, :2]) ** 2).sum(-1)
    return (target[:, 2] * gmof(squared, sigma)).sum()


def e_joints2d(
    posed: PosedBody,
    camera: Camera,
    obs: FrameObservation,
    gm_sigma: float,
    keypoint_map: Sequence[Tuple[int, int]],
) -> float:
    """Σ conf·ρ(‖π(J) − x‖) по наблюдаемым ключевым точкам"""
    project(camera, posed.joints3d)
    pairs = resolve_keypoints(keypoint_map, obs.keypoints2d)
    value = joints2d_term(
        torch.as_tensor(posed.joints3d, dtype=DTYPE),
        camera,
        torch.as_tensor(obs.keypoints2d, dtype=DTYPE),
        pairs,
        gm_sigma,
    )
    return float(value)


def e_prior3d(theta, prior_theta) -> float:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    prior_theta = np.asarray(prior_theta, dtype=np.float64).reshape(-1)
    if theta.shape != prior_theta.shape:
        raise InvalidArgumentError(
            f"e_prior3d: длины {theta.shape[0]} и {prior_theta.shape[0]} различаются"
        )
    return float(np.sum((theta - prior_theta) ** 2))


def e_mask_exact(mask3d: np.ndarray, mask2d: np.ndarray, lambda_mask: float) -> float:
    """count(M3d ∧ ¬M2d) + λ·count(¬M3d ∧ M2d)"""
    mask3d = np.asarray(mask3d, dtype=bool)
    mask2d = np.asarray(mask2d, dtype=bool)
    if mask3d.shape != mask2d.shape:
        raise InvalidArgumentError(f"e_mask_exact: размеры {mask3d.shape} и {mask2d.shape}")
    outside = np.count_nonzero(mask3d & ~mask2d)
    uncovered = np.count_nonzero(~mask3d & mask2d)
    return float(outside + lambda_mask * uncovered)


def e_mask_smooth(
    posed: PosedBody,
    camera: Camera,
    distance_transform: np.ndarray,
    mask2d: np.ndarray,
    lambda_mask: float,
    samples: int = 64,
) -> float:
    """Гладкий суррогат маски для заданного тела"""
    points = project(camera, posed.vertices)
    target = prepare_mask(mask2d, samples, distance_transform)
    return float(mask_surrogate(target, torch.as_tensor(points, dtype=DTYPE), lambda_mask))


def smooth_term(
    joints: torch.Tensor,
    vertices: torch.Tensor,
    flows: Sequence[Optional[Tuple[np.ndarray, torch.Tensor]]],
    lambda1: float,
    lambda2: float,
    previous_joints: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    chain = joints if previous_joints is None else torch.cat([previous_joints[None], joints])
    value = joints.sum() * 0.0
    if lambda1 > 0 and chain.shape[0] >= 2:
        value = value + lambda1 * ((chain[1:] - chain[:-1]) ** 2).sum()
    if lambda2 > 0:
        for frame, flow in enumerate(flows):
            if flow is None:
                continue
            indices, targets = flow
            value = value + lambda2 * ((targets - vertices[frame, indices]) ** 2).sum()
    return value


def e_smooth(
    seq_joints3d,
    posed_vertices,
    flow_targets: Optional[Sequence[Optional[Tuple[np.ndarray, np.ndarray]]]],
    lambda1: float,
    lambda2: float,
) -> float:
    """λ1·Σ‖J_t − J_{t+1}‖² + λ2·Σ‖v^f − v‖²"""
    joints = torch.as_tensor(np.asarray(seq_joints3d, dtype=np.float64))
    vertices = torch.as_tensor(np.asarray(posed_vertices, dtype=np.float64))
    if vertices.ndim == 2:
        vertices = vertices[None]
    flows = []
    for flow in flow_targets or []:
        if flow is None:
            flows.append(None)
        else:
            indices, targets = flow
            target_t = torch.as_tensor(np.asarray(targets, dtype=np.float64))
            flows.append((np.asarray(indices, dtype=np.int64), target_t))
    return float(smooth_term(joints, vertices, flows, lambda1, lambda2))


class SequenceEnergy:
    """Энергия окна кадров как функция тензоров (theta, beta, gamma)"""

    def __init__(
        self,
        model: BodyModel,
        camera: Camera,
        observations: Sequence[FrameObservation],
        config: FitConfig,
        body: Optional[TorchBody] = None,
        previous_joints: Optional[np.ndarray] = None,
    ):
        self.model = model
        self.camera = camera
        self.config = config
        self.body = body or TorchBody.from_model(model)
        self.pairs = []
        self.keypoints = []
        self.masks: List[Optional[MaskTarget]] = []
        self.flows: List[Optional[Tuple[np.ndarray, torch.Tensor]]] = []
        for obs in observations:
            if obs.mask.shape != camera.shape:
                raise InvalidArgumentError(
                    f"mask: размер {obs.mask.shape} не совпадает с камерой {camera.shape}"
                )
            if obs.has_flow and obs.flow_indices.max() >= model.num_vertices:
                raise InvalidArgumentError("flow_targets: индекс вершины вне модели")
            self.pairs.append(resolve_keypoints(model.keypoint_map, obs.keypoints2d))
            self.keypoints.append(torch.as_tensor(obs.keypoints2d, dtype=DTYPE))
            if obs.mask.any() or config.wm > 0:
                self.masks.append(prepare_mask(obs.mask, config.mask_samples))
            else:
                self.masks.append(None)
            self.flows.append(
                (obs.flow_indices, torch.as_tensor(obs.flow_targets, dtype=DTYPE))
                if obs.has_flow
                else None
            )
        self.priors = torch.as_tensor(np.stack([o.prior_theta for o in observations]), dtype=DTYPE)
        self.previous_joints = (
            None if previous_joints is None else torch.as_tensor(previous_joints, dtype=DTYPE)
        )

    def terms(
        self, theta: torch.Tensor, beta: torch.Tensor, gamma: torch.Tensor
    ) -> Dict[str, torch.Tensor]:
        vertices, joints = self.body.forward(theta, beta, gamma)
        if bool((vertices[..., 2] <= NEAR).any()):
            inf = theta.new_tensor(float("inf"))
            return {name: inf for name in TERM_NAMES}
        e2d = sum(
            joints2d_term(joints[f], self.camera, self.keypoints[f], self.pairs[f], self.config.gm_sigma)
            for f in range(theta.shape[0])
        )
        e3d = ((theta - self.priors) ** 2).sum()
        projected = project_torch(self.camera, vertices)
        emask = sum(
            (
                mask_surrogate(self.masks[f], projected[f], self.config.lambda_mask)
                for f in range(theta.shape[0])
                if self.masks[f] is not None
            ),
            theta.new_tensor(0.0),
        )
        esmooth = smooth_term(
            joints,
            vertices,
            self.flows,
            self.config.lambda1,
            self.config.lambda2,
            self.previous_joints,
        )
        return {"e2d": e2d, "e3d": e3d, "emask": emask, "esmooth": esmooth}

    def weighted(self, terms: Dict[str, torch.Tensor]) -> torch.Tensor:
        c = self.config
        return (
            c.w2d * terms["e2d"]
            + c.w3d * terms["e3d"]
            + c.wm * terms["emask"]
            + c.wS * terms["esmooth"]
        )

    def __call__(self, theta: torch.Tensor, beta: torch.Tensor, gamma: torch.Tensor) -> torch.Tensor:
        return self.weighted(self.terms(theta, beta, gamma))


def _stack_params(params_per_frame: Sequence[PoseParams]):
    theta = torch.as_tensor(np.stack([p.theta for p in params_per_frame]), dtype=DTYPE)
    beta = torch.as_tensor(np.stack([p.beta for p in params_per_frame]), dtype=DTYPE)
    gamma = torch.as_tensor(np.stack([p.gamma for p in params_per_frame]), dtype=DTYPE)
    return theta, beta, gamma


def energy_breakdown(
    model: BodyModel,
    camera: Camera,
    params_per_frame: Sequence[PoseParams],
    observations: Sequence[FrameObservation],
    config: FitConfig,
    previous_joints: Optional[np.ndarray] = None,
) -> Dict[str, float]:
    """Члены энергии, их взвешенная сумма и точная энергия маски"""
    if len(params_per_frame) != len(observations):
        raise InvalidArgumentError("total_energy: по одному набору параметров на наблюдение")
    energy = SequenceEnergy(model, camera, observations, config, previous_joints=previous_joints)
    with torch.no_grad():
        terms = energy.terms(*_stack_params(params_per_frame))
    report = {name: float(value) for name, value in terms.items()}
    report["total"] = (
        config.w2d * report["e2d"]
        + config.w3d * report["e3d"]
        + config.wm * report["emask"]
        + config.wS * report["esmooth"]
    )
    mask_exact = 0.0
    for params, obs in zip(params_per_frame, observations):
        posed = pose_body(model, params)
        silhouette = rasterize_silhouette(posed.vertices, model.faces, camera)
        mask_exact += e_mask_exact(silhouette, obs.mask, config.lambda_mask)
    report["mask_exact"] = mask_exact
    return report


def total_energy(
    model: BodyModel,
    camera: Camera,
    params_per_frame: Sequence[PoseParams],
    observations: Sequence[FrameObservation],
    config: FitConfig,
) -> float:
    return energy_breakdown(model, camera, params_per_frame, observations, config)["total"]
