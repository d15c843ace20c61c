"""
Тесты лапласовых координат и деформации шаблона по контуру
"""

import numpy as np
import pytest

from app.body.camera import project
from app.body.model import PosedBody, rodrigues
from app.core.config import AdaptConfig
from app.core.exceptions import InvalidArgumentError
from app.mesh.contour import (
    Contour,
    Correspondence,
    extract_mask_contour,
    extract_model_contour,
    match_contours,
    resample_indices,
)
from app.mesh.deform import constraint_error, deform_template, laplacian_coords, uniform_laplacian
from app.render.rasterizer import rasterize_silhouette


def fan(count: int, radius: float, depth: float = 2.0):
    """Центр и кольцо из count вершин в плоскости z = depth"""
    angles = 2 * np.pi * np.arange(count) / count
    ring = np.column_stack([radius * np.cos(angles), radius * np.sin(angles), np.full(count, depth)])
    vertices = np.vstack([[0.0, 0.0, depth], ring])
    faces = np.array([[0, 1 + i, 1 + (i + 1) % count] for i in range(count)])
    return vertices, faces


def iou(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.count_nonzero(a & b) / np.count_nonzero(a | b))


def test_laplacian_of_fan_centre_is_zero():
    vertices, faces = fan(6, 1.0)
    coords = laplacian_coords(vertices, faces)
    np.testing.assert_allclose(coords[0], 0.0, atol=1e-12)


def test_laplacian_of_tetrahedron():
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    faces = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    coords = laplacian_coords(vertices, faces)
    for i in range(4):
        others = np.delete(vertices, i, axis=0)
        np.testing.assert_allclose(coords[i], vertices[i] - others.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(laplacian_coords(vertices + [3.0, -1.0, 2.0], faces), coords, atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_laplacian_turns_with_mesh(seed):
    rng = np.random.default_rng(seed)
    vertices, faces = fan(7, 0.5)
    vertices = vertices + rng.normal(0.0, 0.05, vertices.shape)
    rotation = rodrigues(rng.normal(0.0, 1.0, 3))
    rotated = laplacian_coords(vertices @ rotation.T, faces)
    np.testing.assert_allclose(rotated, laplacian_coords(vertices, faces) @ rotation.T, atol=1e-9)


def test_isolated_vertex_is_rejected():
    with pytest.raises(InvalidArgumentError):
        uniform_laplacian(np.array([[0, 1, 2]]), 4)


def test_empty_correspondence_keeps_template(small_camera):
    vertices, faces = fan(4, 0.2)
    correspondence = Correspondence(psi=np.zeros(0, dtype=np.int64), cost=0.0)
    result = deform_template(vertices, faces, small_camera, correspondence, np.zeros((0, 2)))
    np.testing.assert_array_equal(result, vertices)
    assert result is not vertices


def test_target_at_projection_does_not_move(small_camera):
    vertices, faces = fan(4, 0.2)
    tags = np.array([1, 3])
    correspondence = Correspondence(psi=np.arange(2), cost=0.0, vertex_ids=tags)
    targets = project(small_camera, vertices[tags])
    result = deform_template(vertices, faces, small_camera, correspondence, targets)
    np.testing.assert_allclose(result, vertices, atol=1e-12)


def test_mismatched_targets(small_camera):
    vertices, faces = fan(4, 0.2)
    correspondence = Correspondence(psi=np.arange(2), cost=0.0, vertex_ids=np.array([1, 2]))
    with pytest.raises(InvalidArgumentError):
        deform_template(vertices, faces, small_camera, correspondence, np.zeros((3, 2)))


def test_pulled_vertex_reaches_target_and_keeps_shape(small_camera):
    """Сдвиг на 2 px достижим переносом, лапласовы координаты не меняются"""
    vertices, faces = fan(4, 0.2)
    np.testing.assert_allclose(project(small_camera, vertices[1]), [[42.0, 32.0]])
    correspondence = Correspondence(psi=np.zeros(1, dtype=np.int64), cost=0.0, vertex_ids=np.array([1]))
    target = np.array([[44.0, 32.0]])

    result = deform_template(vertices, faces, small_camera, correspondence, target)

    np.testing.assert_allclose(project(small_camera, result[1]), target, atol=1e-3)
    np.testing.assert_allclose(laplacian_coords(result, faces), laplacian_coords(vertices, faces), atol=1e-4)


@pytest.mark.parametrize("seed", range(20))
def test_disc_follows_larger_mask(small_camera, seed):
    rng = np.random.default_rng(seed)
    scale = rng.uniform(1.05, 1.3)
    offset = rng.integers(-1, 2, 2)
    vertices, faces = fan(24, 0.4)
    posed = PosedBody(
        vertices=vertices,
        joints3d=np.zeros((24, 3)),
        per_vertex_transform=np.tile(np.eye(4), (len(vertices), 1, 1)),
    )
    rows, cols = np.mgrid[0:64, 0:64]
    cx, cy = 32.0 + offset[0], 32.0 + offset[1]
    mask = (cols + 0.5 - cx) ** 2 + (rows + 0.5 - cy) ** 2 <= (20.0 * scale) ** 2

    model_contour, vertex_ids = extract_model_contour(posed, faces, small_camera)
    mask_contour = extract_mask_contour(mask)
    model_ids = resample_indices(len(model_contour), 64)
    mask_ids = resample_indices(len(mask_contour), 64)
    p_m = Contour(mask_contour.points[mask_ids])
    correspondence = match_contours(p_m, Contour(model_contour.points[model_ids], source="model"), 0.5)
    correspondence.vertex_ids = vertex_ids[model_ids][correspondence.psi]

    deformed = deform_template(
        vertices, faces, small_camera, correspondence, p_m.points, config=AdaptConfig()
    )

    before = iou(rasterize_silhouette(vertices, faces, small_camera), mask)
    after = iou(rasterize_silhouette(deformed, faces, small_camera), mask)
    assert after >= before
    assert after > 0.85
    assert constraint_error(deformed, small_camera, correspondence.vertex_ids, p_m.points) <= 1.5
