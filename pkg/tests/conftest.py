"""
Общие фикстуры тестов
"""

import numpy as np
import pytest

from app.body.camera import Camera
from app.body.model import NUM_JOINTS, SMPL_PARENTS, BodyModel
from app.core.logger import setup_logging
from app.data.fixture import FIXTURE_CAMERA, make_synthetic_fixture, make_toy_model

setup_logging("WARNING")


@pytest.fixture(scope="session")
def toy_model() -> BodyModel:
    return make_toy_model()


@pytest.fixture(scope="session")
def camera() -> Camera:
    return FIXTURE_CAMERA


@pytest.fixture
def small_camera() -> Camera:
    return Camera(focal=100.0, cx=32.0, cy=32.0, width=64, height=64)


@pytest.fixture(scope="session")
def chain_model() -> BodyModel:
    """Цепочка корень (0) -> сустав 3 -> сустав 6, остальные суставы в начале координат"""
    vertices = np.array(
        [
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 2.0, 0.0],
            [1.0, 2.0, 0.0],
        ]
    )
    regressor = np.zeros((NUM_JOINTS, 4))
    regressor[:, 0] = 1.0
    regressor[3] = [0.0, 1.0, 0.0, 0.0]
    regressor[6] = [0.0, 0.0, 1.0, 0.0]
    weights = np.zeros((4, NUM_JOINTS))
    weights[0, 0] = 1.0
    weights[1, 3] = 1.0
    weights[2, 6] = 1.0
    weights[3, 6] = 1.0
    return BodyModel(
        vertices_rest=vertices,
        faces=np.array([[0, 1, 3], [1, 2, 3]]),
        shape_dirs=np.zeros((4, 3, 1)),
        joint_regressor=regressor,
        skin_weights=weights,
        parents=np.array(SMPL_PARENTS),
        part_labels=np.array([0, 3, 6, 6]),
        keypoint_map=((0, 0), (1, 3), (2, 6)),
    )


@pytest.fixture(scope="session")
def small_project(tmp_path_factory) -> str:
    """Маленький синтетический проект на диске, путь к manifest.json"""
    root = tmp_path_factory.mktemp("project")
    return make_synthetic_fixture(seed=3, n_lr=8, n_hr=2, period=4, noise_sigma=0.0, out=str(root), scale=4)
