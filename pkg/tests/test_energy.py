"""
Тесты членов энергии подгонки
"""

import numpy as np
import pytest
import torch
from scipy import ndimage

from app.body.camera import project
from app.body.kinematics import DTYPE
from app.body.model import NUM_POSE_PARAMS, PosedBody, PoseParams, pose_body
from app.core.config import FitConfig
from app.core.exceptions import EmptyMaskError, InvalidArgumentError
from app.data.fixture import ground_truth_sequence
from app.fitting.energy import (
    SequenceEnergy,
    e_joints2d,
    e_mask_exact,
    e_mask_smooth,
    e_prior3d,
    e_smooth,
    energy_breakdown,
    gmof,
    resolve_keypoints,
    total_energy,
)
from app.fitting.observations import FrameObservation
from app.fitting.optimizer import torch_objective
from app.render.rasterizer import rasterize_silhouette


def observation_for(model, camera, params, prior=None):
    """Наблюдение без шума для заданной позы"""
    posed = pose_body(model, params)
    keypoints = np.column_stack([project(camera, posed.joints3d), np.ones(len(posed.joints3d))])
    return FrameObservation(
        keypoints2d=keypoints,
        mask=rasterize_silhouette(posed.vertices, model.faces, camera),
        prior_theta=params.theta if prior is None else prior,
        timestamp=0.0,
    )


def test_gmof_limits():
    small = gmof(torch.tensor([1e-4], dtype=DTYPE), 100.0)
    large = gmof(torch.tensor([1e12], dtype=DTYPE), 10.0)
    assert float(small) == pytest.approx(1e-4, rel=1e-6)
    assert float(large) == pytest.approx(100.0, rel=1e-6)


def test_joints2d_zero_at_exact_keypoints(toy_model, camera):
    params = ground_truth_sequence([0.0], 10).frames[0]
    obs = observation_for(toy_model, camera, params)
    posed = pose_body(toy_model, params)
    assert e_joints2d(posed, camera, obs, 100.0, toy_model.keypoint_map) == pytest.approx(0.0, abs=1e-18)


def test_joints2d_ignores_zero_confidence(toy_model, camera):
    params = ground_truth_sequence([0.0], 10).frames[0]
    obs = observation_for(toy_model, camera, params)
    obs.keypoints2d[5, :2] += 40.0
    posed = pose_body(toy_model, params)
    assert e_joints2d(posed, camera, obs, 100.0, toy_model.keypoint_map) > 0
    obs.keypoints2d[5, 2] = 0.0
    assert e_joints2d(posed, camera, obs, 100.0, toy_model.keypoint_map) == pytest.approx(0.0, abs=1e-18)


def test_joints2d_robust_value(toy_model, camera):
    """Сдвиг одной точки на 5 px: 100² · 25 / (100² + 25)"""
    params = ground_truth_sequence([0.0], 10).frames[0]
    obs = observation_for(toy_model, camera, params)
    obs.keypoints2d[5, 0] += 5.0
    posed = pose_body(toy_model, params)
    value = e_joints2d(posed, camera, obs, 100.0, toy_model.keypoint_map)
    assert value == pytest.approx(24.9377, abs=1e-4)


def test_unmapped_keypoint_is_rejected():
    keypoints = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 0.5]])
    with pytest.raises(InvalidArgumentError):
        resolve_keypoints(((0, 0),), keypoints)
    keypoints[1, 2] = 0.0
    detector, joints = resolve_keypoints(((0, 0),), keypoints)
    assert detector.tolist() == [0] and joints.tolist() == [0]


def test_prior3d():
    assert e_prior3d(np.ones(72), np.ones(72)) == 0.0
    assert e_prior3d(np.full(72, 0.5), np.zeros(72)) == pytest.approx(18.0)
    with pytest.raises(InvalidArgumentError):
        e_prior3d(np.zeros(72), np.zeros(69))


def test_mask_exact_by_hand():
    mask3d = np.array([[1, 1], [0, 0]], dtype=bool)
    mask2d = np.array([[1, 0], [1, 1]], dtype=bool)
    assert e_mask_exact(mask3d, mask2d, 1.0) == 3.0
    assert e_mask_exact(mask3d, mask2d, 0.5) == 2.0
    with pytest.raises(InvalidArgumentError):
        e_mask_exact(mask3d, np.zeros((3, 3), dtype=bool), 1.0)


def single_vertex(x: float) -> PosedBody:
    vertices = np.array([[x, 0.01, 2.0]])
    return PosedBody(
        vertices=vertices,
        joints3d=np.zeros((24, 3)),
        per_vertex_transform=np.tile(np.eye(4), (1, 1, 1)),
    )


def test_mask_smooth_by_hand(small_camera):
    """Маска из столбцов 0..19; вершина в центре пикселя (22, 32) в 3 px от неё"""
    mask = np.zeros((64, 64), dtype=bool)
    mask[:, :20] = True
    distance = ndimage.distance_transform_edt(~mask)

    outside = e_mask_smooth(single_vertex(-0.19), small_camera, distance, mask, 0.0)
    assert outside == pytest.approx(9.0, rel=1e-6)

    inside = single_vertex(-0.43)
    assert e_mask_smooth(inside, small_camera, distance, mask, 0.0) == pytest.approx(0.0, abs=1e-9)
    assert e_mask_smooth(inside, small_camera, distance, mask, 0.5) > 0

    with pytest.raises(EmptyMaskError):
        e_mask_smooth(inside, small_camera, distance, np.zeros((64, 64), dtype=bool), 0.0)


def test_smooth_term():
    still = np.zeros((4, 24, 3))
    assert e_smooth(still, np.zeros((4, 5, 3)), None, 1.0, 1.0) == 0.0
    moving = np.stack([np.zeros((24, 3)), np.full((24, 3), 0.1)])
    assert e_smooth(moving, np.zeros((2, 5, 3)), None, 2.0, 0.0) == pytest.approx(2.0 * 24 * 3 * 0.01)


def test_smooth_flow_targets():
    vertices = np.zeros((1, 5, 3))
    flows = [(np.array([1, 3]), np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]))]
    assert e_smooth(np.zeros((1, 24, 3)), vertices, flows, 0.0, 0.5) == pytest.approx(2.5)


def test_breakdown_at_ground_truth(toy_model, camera):
    """В истинной позе без шума остаются только временной член и априор"""
    truth = ground_truth_sequence(np.arange(3.0), 10)
    observations = [observation_for(toy_model, camera, p) for p in truth.frames]
    report = energy_breakdown(toy_model, camera, truth.frames, observations, FitConfig())
    assert report["e2d"] == pytest.approx(0.0, abs=1e-12)
    assert report["e3d"] == pytest.approx(0.0, abs=1e-12)
    assert report["mask_exact"] == 0.0
    assert report["esmooth"] > 0


def test_total_energy_weighted_sum(toy_model, camera):
    """1 · 24.9377 + 2 · 72 · 0.1²"""
    params = ground_truth_sequence([0.0], 10).frames[0]
    obs = observation_for(toy_model, camera, params, prior=params.theta - 0.1)
    obs.keypoints2d[5, 0] += 5.0
    config = FitConfig(w2d=1.0, w3d=2.0, wm=0.0, wS=0.0)
    assert total_energy(toy_model, camera, [params], [obs], config) == pytest.approx(26.3777, abs=1e-4)

    silent = FitConfig(w2d=0.0, w3d=0.0, wm=0.0, wS=0.0)
    assert total_energy(toy_model, camera, [params], [obs], silent) == 0.0


def test_gradient_matches_finite_differences(toy_model, camera):
    """Градиент autograd совпадает с центральными разностями в 20 случайных точках"""
    rng = np.random.default_rng(7)
    truth = ground_truth_sequence(np.arange(2.0), 10)
    observations = [observation_for(toy_model, camera, p) for p in truth.frames]
    config = FitConfig(wm=1.0, lambda2=0.0)
    energy = SequenceEnergy(toy_model, camera, observations, config)
    frames, num_betas = 2, toy_model.num_betas

    def fn(x: torch.Tensor) -> torch.Tensor:
        theta = x[: frames * NUM_POSE_PARAMS].reshape(frames, NUM_POSE_PARAMS)
        beta = x[frames * NUM_POSE_PARAMS : frames * NUM_POSE_PARAMS + num_betas]
        gamma = x[frames * NUM_POSE_PARAMS + num_betas :].reshape(frames, 3)
        return energy(theta, beta.expand(frames, num_betas), gamma)

    objective = torch_objective(fn)

    def value(x: np.ndarray) -> float:
        with torch.no_grad():
            return float(fn(torch.as_tensor(x, dtype=DTYPE)))

    base = np.concatenate([truth.thetas.reshape(-1), truth.betas[0], truth.gammas.reshape(-1)])
    h = 1e-5
    for _ in range(20):
        x = base + rng.normal(0.0, 0.05, base.shape)
        _, grad = objective(x)
        numeric = np.empty_like(x)
        for i in range(x.shape[0]):
            step = np.zeros_like(x)
            step[i] = h
            numeric[i] = (value(x + step) - value(x - step)) / (2 * h)
        assert np.linalg.norm(grad - numeric) <= 1e-4 * np.linalg.norm(grad)


def test_mask_shape_must_match_camera(toy_model, camera):
    params = PoseParams.zeros(toy_model.num_betas)
    obs = FrameObservation(np.zeros((0, 3)), np.ones((10, 10), dtype=bool), params.theta, 0.0)
    with pytest.raises(InvalidArgumentError):
        SequenceEnergy(toy_model, camera, [obs], FitConfig())
