"""
Подгонка параметров (theta, beta, gamma) к последовательности кадров

Режимы: sequential (кадр за кадром, предыдущий решённый кадр зафиксирован
во временном члене) и batch (окна по batch_size кадров с перекрытием в
один кадр, перекрывающий кадр зафиксирован).
"""

from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
import torch
from loguru import logger
from scipy.spatial.transform import Rotation

from app.body.camera import Camera
from app.body.kinematics import DTYPE, TorchBody
from app.body.model import NUM_POSE_PARAMS, BodyModel, PoseParams, pose_body
from app.core.config import FitConfig, settings
from app.core.exceptions import InvalidArgumentError, NumericalFailureError
from app.fitting.energy import SequenceEnergy, energy_breakdown
from app.fitting.observations import FrameObservation, PoseSequence
from app.fitting.optimizer import minimize, torch_objective

FitMode = Literal["batch", "sequential"]

# (плечо, бедро) слева и справа
TORSO_PAIRS = ((16, 1), (17, 2))


def flip_orient(root_orient: np.ndarray) -> np.ndarray:
    """Повернуть ориентацию корня на pi вокруг вертикальной оси"""
    flipped = Rotation.from_rotvec(root_orient) * Rotation.from_rotvec([0.0, np.pi, 0.0])
    return flipped.as_rotvec()


def guess_translation(
    model: BodyModel,
    camera: Camera,
    obs: FrameObservation,
    theta: np.ndarray,
    beta: np.ndarray,
    default_depth: float,
) -> np.ndarray:
    """Глубина по отношению 3D и 2D высоты торса, x/y по наблюдаемому тазу"""
    posed = pose_body(model, PoseParams(theta, beta, np.zeros(3)))
    by_joint = {j: d for d, j in model.keypoint_map if d < obs.keypoints2d.shape[0]}

    heights3d, heights2d = [], []
    for shoulder, hip in TORSO_PAIRS:
        if shoulder not in by_joint or hip not in by_joint:
            continue
        ks, kh = obs.keypoints2d[by_joint[shoulder]], obs.keypoints2d[by_joint[hip]]
        if ks[2] <= 0 or kh[2] <= 0:
            continue
        heights3d.append(np.linalg.norm(posed.joints3d[shoulder] - posed.joints3d[hip]))
        heights2d.append(np.linalg.norm(ks[:2] - kh[:2]))

    if not heights2d or np.mean(heights2d) < 1e-6:
        logger.warning("⚠️ Торс не наблюдается, начальная глубина по умолчанию")
        return np.array([0.0, 0.0, default_depth]) - np.array([0.0, 0.0, posed.joints3d[0, 2]])

    depth = camera.focal * np.mean(heights3d) / np.mean(heights2d)
    pelvis = posed.joints3d[0]
    gamma = np.array([0.0, 0.0, depth - pelvis[2]])
    if 0 in by_joint and obs.keypoints2d[by_joint[0], 2] > 0:
        u, v = obs.keypoints2d[by_joint[0], :2]
        gamma[0] = (u - camera.cx) * depth / camera.focal - pelvis[0]
        gamma[1] = (v - camera.cy) * depth / camera.focal - pelvis[1]
    return gamma


def initial_sequence(
    model: BodyModel,
    camera: Camera,
    observations: Sequence[FrameObservation],
    config: FitConfig,
) -> PoseSequence:
    """theta из prior_theta, beta = 0, gamma по оценке глубины"""
    beta = np.zeros(model.num_betas)
    frames = []
    for obs in observations:
        gamma = guess_translation(model, camera, obs, obs.prior_theta, beta, config.default_depth)
        frames.append(PoseParams(obs.prior_theta, beta, gamma))
    return PoseSequence(
        frames=frames,
        timestamps=[o.timestamp for o in observations],
        shared_beta=config.shared_beta,
    )


def _windows(count: int, mode: FitMode, batch_size: int) -> List[List[int]]:
    """Свободные кадры каждого окна; первый кадр следующего окна батча уже решён"""
    if mode == "sequential" or batch_size == 1:
        return [[i] for i in range(count)]
    windows = [list(range(0, min(batch_size, count)))]
    start = windows[0][-1]
    while start < count - 1:
        end = min(start + batch_size, count)
        windows.append(list(range(start + 1, end)))
        start = end - 1
    return windows


class _WindowProblem:
    """Упаковка параметров окна в плоский вектор"""

    def __init__(
        self,
        energy: SequenceEnergy,
        frames: int,
        num_betas: int,
        shared: bool,
        free_beta: bool,
        beta: np.ndarray,
    ):
        self.energy = energy
        self.frames = frames
        self.num_betas = num_betas
        self.shared = shared
        self.free_beta = free_beta
        self.fixed_beta = torch.as_tensor(np.array(beta), dtype=DTYPE)

    def pack(self, thetas: np.ndarray, gammas: np.ndarray, betas: np.ndarray) -> np.ndarray:
        parts = [thetas.reshape(-1), gammas.reshape(-1)]
        if not self.shared:
            parts.append(betas.reshape(-1))
        elif self.free_beta:
            parts.append(betas[0])
        return np.concatenate(parts)

    def unpack(self, x: torch.Tensor):
        n_theta = self.frames * NUM_POSE_PARAMS
        n_gamma = self.frames * 3
        theta = x[:n_theta].reshape(self.frames, NUM_POSE_PARAMS)
        gamma = x[n_theta : n_theta + n_gamma].reshape(self.frames, 3)
        rest = x[n_theta + n_gamma :]
        if not self.shared:
            beta = rest.reshape(self.frames, self.num_betas)
        elif self.free_beta:
            beta = rest.reshape(1, self.num_betas).expand(self.frames, self.num_betas)
        else:
            beta = self.fixed_beta.reshape(1, -1).expand(self.frames, self.num_betas)
        return theta, beta, gamma

    def unpack_numpy(self, x: np.ndarray):
        return tuple(t.numpy() for t in self.unpack(torch.as_tensor(x, dtype=DTYPE)))

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        return self.energy(*self.unpack(x))


def fit_frames(
    model: BodyModel,
    camera: Camera,
    observations: Sequence[FrameObservation],
    config: FitConfig,
    init: Optional[PoseSequence] = None,
    mode: FitMode = "batch",
) -> PoseSequence:
    """Минимизировать энергию по кадрам; возвращает параметры и итоговые энергии кадров"""
    if not observations:
        raise InvalidArgumentError("fit_frames: пустой список наблюдений")
    if mode not in ("batch", "sequential"):
        raise InvalidArgumentError(f"mode: неизвестный режим {mode}")
    if init is None:
        init = initial_sequence(model, camera, observations, config)
    if len(init) != len(observations):
        raise InvalidArgumentError("init: по одному набору параметров на кадр")

    torch.set_num_threads(settings.TORCH_THREADS)
    body = TorchBody.from_model(model)
    thetas = init.thetas.copy()
    gammas = init.gammas.copy()
    betas = init.betas.copy()
    if config.shared_beta:
        betas[:] = betas[0]

    windows = _windows(len(observations), mode, config.batch_size)
    logger.info(f"🔧 Подгонка {len(observations)} кадров, режим {mode}, окон {len(windows)}")
    solved_joints: Dict[int, np.ndarray] = {}

    for window_id, free in enumerate(windows):
        previous = free[0] - 1
        previous_joints = solved_joints.get(previous)
        if previous >= 0 and previous_joints is None:
            previous_joints = pose_body(
                model, PoseParams(thetas[previous], betas[previous], gammas[previous])
            ).joints3d
        energy = SequenceEnergy(
            model,
            camera,
            [observations[i] for i in free],
            config,
            body=body,
            previous_joints=previous_joints,
        )
        problem = _WindowProblem(
            energy,
            len(free),
            model.num_betas,
            shared=config.shared_beta,
            free_beta=window_id == 0,
            beta=betas[free[0]],
        )
        if window_id == 0 and config.try_flip:
            thetas[free[0], :3] = _best_orientation(problem, thetas[free], gammas[free], betas[free])

        x0 = problem.pack(thetas[free], gammas[free], betas[free])
        objective = torch_objective(problem)
        try:
            result = minimize(objective, x0, config.max_iters, config.grad_tol)
        except NumericalFailureError as e:
            e.frame = free[0]
            raise

        theta, beta, gamma = problem.unpack_numpy(result.x)
        thetas[free] = theta
        gammas[free] = gamma
        betas[free] = beta
        if config.shared_beta and window_id == 0:
            betas[:] = beta[0]
        last = free[-1]
        solved_joints[last] = pose_body(
            model, PoseParams(thetas[last], betas[last], gammas[last])
        ).joints3d
        logger.debug(
            f"Окно {window_id}: кадры {free[0]}..{free[-1]}, f={result.fun:.6e}, "
            f"итераций {result.iterations}"
        )

    sequence = PoseSequence.from_arrays(
        thetas, betas, gammas, init.timestamps, shared_beta=config.shared_beta
    )
    sequence.energies = frame_energies(model, camera, sequence, observations, config)
    total = sum(e["total"] for e in sequence.energies)
    logger.success(f"✅ Подгонка завершена, суммарная энергия {total:.4f}")
    return sequence


def _best_orientation(problem: _WindowProblem, thetas, gammas, betas) -> np.ndarray:
    """Ориентация корня первого кадра с меньшей начальной энергией"""
    candidates = [thetas[0, :3].copy(), flip_orient(thetas[0, :3])]
    values = []
    for orient in candidates:
        trial = thetas.copy()
        trial[0, :3] = orient
        with torch.no_grad():
            x = torch.as_tensor(problem.pack(trial, gammas, betas), dtype=DTYPE)
            values.append(float(problem(x)))
    best = int(np.argmin(values))
    if best == 1:
        logger.info("🔄 Развёрнутая ориентация корня дала меньшую энергию")
    return candidates[best]


def frame_energies(
    model: BodyModel,
    camera: Camera,
    sequence: PoseSequence,
    observations: Sequence[FrameObservation],
    config: FitConfig,
) -> List[Dict[str, float]]:
    """Энергии по кадрам, временной член связывает кадр с предыдущим"""
    energies = []
    previous_joints = None
    for params, obs in zip(sequence.frames, observations):
        energies.append(
            energy_breakdown(model, camera, [params], [obs], config, previous_joints=previous_joints)
        )
        previous_joints = pose_body(model, params).joints3d
    return energies
