"""
Синтетический проект: игрушечная модель тела, сезонное движение, кадры LR и HR

Модель - 23 квадратные трубки по костям скелета из 24 суставов, ось y вниз,
человек смотрит на камеру (вдоль -z). Каждая трубка жёстко привязана
к родительскому суставу кости.
"""

import json
from pathlib import Path
from typing import List, Tuple

import numpy as np
from loguru import logger

from app.body.camera import Camera, project
from app.body.model import (
    NUM_JOINTS,
    NUM_POSE_PARAMS,
    SMPL_PARENTS,
    BodyModel,
    PoseParams,
    pose_body,
    save_body_model,
)
from app.core.exceptions import InvalidArgumentError
from app.data.imageio import downsample_area, write_mask, write_ppm
from app.fitting.observations import PoseSequence, save_poses
from app.render.compose import composite
from app.render.rasterizer import rasterize_mesh, rasterize_silhouette

REST_JOINTS = np.array(
    [
        [0.0, 0.0, 0.0],  # pelvis
        [0.09, 0.06, 0.0],
        [-0.09, 0.06, 0.0],
        [0.0, -0.10, 0.0],  # spine1
        [0.09, 0.48, 0.0],
        [-0.09, 0.48, 0.0],
        [0.0, -0.22, 0.0],  # spine2
        [0.09, 0.88, 0.0],
        [-0.09, 0.88, 0.0],
        [0.0, -0.34, 0.0],  # spine3
        [0.09, 0.92, -0.12],
        [-0.09, 0.92, -0.12],
        [0.0, -0.52, 0.0],  # neck
        [0.07, -0.46, 0.0],
        [-0.07, -0.46, 0.0],
        [0.0, -0.68, 0.0],  # head
        [0.17, -0.48, 0.0],
        [-0.17, -0.48, 0.0],
        [0.28, -0.26, 0.0],
        [-0.28, -0.26, 0.0],
        [0.34, -0.04, 0.0],
        [-0.34, -0.04, 0.0],
        [0.36, 0.04, 0.0],
        [-0.36, 0.04, 0.0],
    ]
)

# Радиус трубки по суставу, в который входит кость
BONE_RADII = {
    1: 0.06, 2: 0.06, 3: 0.1, 6: 0.1, 9: 0.1, 12: 0.05, 13: 0.04, 14: 0.04, 15: 0.08,
    10: 0.035, 11: 0.035, 22: 0.035, 23: 0.035,
}
LIMB_RADIUS = 0.045
RING_STEPS = (0.0, 0.5, 1.0)
NUM_BETAS = 4

# (канал theta, амплитуда, фаза) сезонного движения
SEASONAL_CHANNELS = (
    (1 * 3 + 2, 0.25, 0.0),
    (2 * 3 + 2, -0.25, 0.0),
    (4 * 3 + 2, 0.15, 0.5 * np.pi),
    (5 * 3 + 2, -0.15, 0.5 * np.pi),
    (16 * 3 + 2, 0.3, np.pi),
    (17 * 3 + 2, -0.3, np.pi),
    (18 * 3 + 2, 0.2, 0.5 * np.pi),
    (19 * 3 + 2, -0.2, 0.5 * np.pi),
)
TREND_CHANNELS = (16 * 3 + 2, 17 * 3 + 2)
TREND_SLOPE = 0.002
GT_BETA = np.array([0.0, 0.1, -0.1, 0.2])
BASE_TRANSLATION = np.array([0.0, -0.05, 4.0])
DRIFT_X = 0.002
FIXTURE_CAMERA = Camera(focal=200.0, cx=64.0, cy=64.0, width=128, height=128)


def _ring_frame(direction: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    axis = np.array([0.0, 0.0, 1.0]) if abs(direction[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(direction, axis)
    u /= np.linalg.norm(u)
    return u, np.cross(direction, u)


def make_toy_model() -> BodyModel:
    """Игрушечная модель с тем же скелетом и той же раскладкой параметров"""
    vertices: List[np.ndarray] = []
    faces: List[List[int]] = []
    labels: List[int] = []
    girth: List[np.ndarray] = []
    ring_members = {}

    for joint in range(1, NUM_JOINTS):
        parent = SMPL_PARENTS[joint]
        start, end = REST_JOINTS[parent], REST_JOINTS[joint]
        direction = (end - start) / np.linalg.norm(end - start)
        u, v = _ring_frame(direction)
        radius = BONE_RADII.get(joint, LIMB_RADIUS)
        base = len(vertices)
        for ring, step in enumerate(RING_STEPS):
            centre = start + step * (end - start)
            for k in range(4):
                angle = 0.25 * np.pi + 0.5 * np.pi * k
                offset = radius * (np.cos(angle) * u + np.sin(angle) * v)
                vertices.append(centre + offset)
                girth.append(offset)
                labels.append(parent)
            ring_members[(joint, ring)] = list(range(base + 4 * ring, base + 4 * ring + 4))

        tube_faces = []
        for ring in range(len(RING_STEPS) - 1):
            for k in range(4):
                a = base + 4 * ring + k
                b = base + 4 * ring + (k + 1) % 4
                c = b + 4
                d = a + 4
                tube_faces += [[a, b, c], [a, c, d]]
        for ring in (0, len(RING_STEPS) - 1):
            r = base + 4 * ring
            tube_faces += [[r, r + 1, r + 2], [r, r + 2, r + 3]]

        # Наружная ориентация: нормаль от центра трубки
        points = np.array(vertices[base:])
        centre = points.mean(axis=0)
        for face in tube_faces:
            a, b, c = (np.array(vertices[i]) for i in face)
            normal = np.cross(b - a, c - a)
            if normal @ ((a + b + c) / 3.0 - centre) < 0:
                face[1], face[2] = face[2], face[1]
            faces.append(face)

    vertices_rest = np.array(vertices)
    num_vertices = vertices_rest.shape[0]
    regressor = np.zeros((NUM_JOINTS, num_vertices))
    regressor[0, ring_members[(3, 0)]] = 0.25
    for joint in range(1, NUM_JOINTS):
        regressor[joint, ring_members[(joint, len(RING_STEPS) - 1)]] = 0.25

    skin_weights = np.zeros((num_vertices, NUM_JOINTS))
    skin_weights[np.arange(num_vertices), labels] = 1.0

    shape_dirs = np.zeros((num_vertices, 3, NUM_BETAS))
    shape_dirs[:, :, 0] = 0.1 * vertices_rest
    shape_dirs[:, 1, 1] = 0.1 * vertices_rest[:, 1]
    shape_dirs[:, 0, 2] = 0.1 * vertices_rest[:, 0]
    shape_dirs[:, :, 3] = 0.3 * np.array(girth)

    return BodyModel(
        vertices_rest=vertices_rest,
        faces=np.array(faces),
        shape_dirs=shape_dirs,
        joint_regressor=regressor,
        skin_weights=skin_weights,
        parents=np.array(SMPL_PARENTS),
        part_labels=np.array(labels),
        keypoint_map=tuple((j, j) for j in range(NUM_JOINTS)),
    )


def part_colors(model: BodyModel) -> np.ndarray:
    """Цвет вершины по метке части тела"""
    labels = model.part_labels.astype(np.int64)
    return np.stack(
        [(labels * 53) % 200 + 40, (labels * 97) % 200 + 40, (labels * 151) % 200 + 40], axis=1
    ).astype(np.uint8)


def background_image(camera: Camera) -> np.ndarray:
    rows, cols = np.mgrid[0 : camera.height, 0 : camera.width]
    return np.stack(
        [(cols * 2) % 256, (rows * 2) % 256, np.full_like(rows, 96)], axis=-1
    ).astype(np.uint8)


def seasonal_thetas(timestamps: np.ndarray, period: int) -> np.ndarray:
    """Сезонные каналы с линейным трендом, остальные каналы нулевые"""
    thetas = np.zeros((timestamps.shape[0], NUM_POSE_PARAMS))
    phase = 2.0 * np.pi * timestamps / period
    for channel, amplitude, shift in SEASONAL_CHANNELS:
        thetas[:, channel] = amplitude * np.sin(phase + shift)
    for channel in TREND_CHANNELS:
        thetas[:, channel] += TREND_SLOPE * timestamps
    return thetas


def ground_truth_sequence(timestamps, period: int) -> PoseSequence:
    timestamps = np.asarray(timestamps, dtype=np.float64)
    thetas = seasonal_thetas(timestamps, period)
    gammas = np.tile(BASE_TRANSLATION, (timestamps.shape[0], 1))
    gammas[:, 0] += DRIFT_X * timestamps
    betas = np.tile(GT_BETA, (timestamps.shape[0], 1))
    return PoseSequence.from_arrays(thetas, betas, gammas, timestamps)


def _keypoints(model: BodyModel, params: PoseParams, camera: Camera) -> List[List[float]]:
    joints = project(camera, pose_body(model, params).joints3d)
    return [[float(x), float(y), 1.0] for x, y in joints]


def _render(model: BodyModel, params: PoseParams, camera: Camera, colors, background) -> np.ndarray:
    raster = rasterize_mesh(pose_body(model, params).vertices, model.faces, camera, colors)
    return composite(background, raster)


def _silhouette(model: BodyModel, params: PoseParams, camera: Camera) -> np.ndarray:
    return rasterize_silhouette(pose_body(model, params).vertices, model.faces, camera)


def _write_frame(directory: Path, number: int, entry: dict) -> None:
    with open(directory / f"frame_{number:06d}.json", "w", encoding="utf-8") as f:
        json.dump(entry, f, indent=2)


def make_synthetic_fixture(
    seed: int,
    n_lr: int,
    n_hr: int,
    period: int,
    noise_sigma: float,
    out: str,
    scale: int = 4,
) -> str:
    """Записать проект в out и вернуть путь к manifest.json"""
    if period < 2:
        raise InvalidArgumentError("period: нужен период не меньше 2")
    if n_lr < 2 * period:
        raise InvalidArgumentError(f"n_lr: нужно не меньше 2·period = {2 * period} кадров")
    if not 1 <= n_hr <= n_lr:
        raise InvalidArgumentError("n_hr: от 1 до n_lr кадров")
    if noise_sigma < 0:
        raise InvalidArgumentError("noise_sigma: шум не может быть отрицательным")
    camera = FIXTURE_CAMERA
    if scale < 1 or camera.width % scale or camera.height % scale:
        raise InvalidArgumentError(f"scale: {camera.width}×{camera.height} не делится на {scale}")

    rng = np.random.default_rng(seed)
    root = Path(out)
    for sub in ("hr", "lr", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    logger.info(f"🧪 Синтетический проект: {n_lr} LR, {n_hr} HR, период {period}, σ={noise_sigma}")

    model = make_toy_model()
    save_body_model(model, str(root / "model.json"))
    colors = part_colors(model)
    background = background_image(camera)
    lr_camera = camera.scaled(scale)

    lr_truth = ground_truth_sequence(np.arange(n_lr), period)
    save_poses(lr_truth, str(root / "gt" / "poses.json"))

    active = np.array([channel for channel, _, _ in SEASONAL_CHANNELS])
    for i, params in enumerate(lr_truth.frames):
        observed_theta = params.theta.copy()
        observed_theta[active] += rng.normal(0.0, noise_sigma, active.shape[0])
        observed = PoseParams(observed_theta, params.beta, params.gamma)

        frame = _render(model, params, camera, colors, background)
        write_ppm(str(root / "gt" / f"render_{i:06d}.ppm"), frame)
        write_ppm(str(root / "lr" / f"image_{i:06d}.ppm"), downsample_area(frame, scale))
        write_mask(str(root / "lr" / f"mask_{i:06d}.pgm"), _silhouette(model, observed, lr_camera))
        _write_frame(
            root / "lr",
            i,
            {
                "timestamp": float(i),
                "keypoints": _keypoints(model, observed, lr_camera),
                "prior_theta": observed_theta.tolist(),
                "mask": f"mask_{i:06d}.pgm",
                "image": f"image_{i:06d}.ppm",
            },
        )

    hr_start = (n_lr - n_hr) // 2
    hr_times = np.arange(hr_start, hr_start + n_hr, dtype=np.float64)
    hr_truth = ground_truth_sequence(hr_times, period)
    save_poses(hr_truth, str(root / "gt" / "hr_poses.json"))
    for i, params in enumerate(hr_truth.frames):
        frame = _render(model, params, camera, colors, background)
        write_ppm(str(root / "hr" / f"image_{i:06d}.ppm"), frame)
        write_mask(str(root / "hr" / f"mask_{i:06d}.pgm"), _silhouette(model, params, camera))
        _write_frame(
            root / "hr",
            i,
            {
                "timestamp": float(hr_times[i]),
                "keypoints": _keypoints(model, params, camera),
                "prior_theta": params.theta.tolist(),
                "mask": f"mask_{i:06d}.pgm",
                "image": f"image_{i:06d}.ppm",
            },
        )

    manifest = {
        "model": "model.json",
        "camera": camera.model_dump(),
        "hr_dir": "hr",
        "hr_timestamps": hr_times.tolist(),
        "lr_dir": "lr",
        "scale": scale,
        "output": "out",
    }
    manifest_path = root / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    logger.success(f"✅ Синтетический проект записан в {root}")
    return str(manifest_path)
