"""
Тесты запекания цветов, распозирования и файла шаблона
"""

import numpy as np
import pytest

from app.body.model import NUM_POSE_PARAMS, PoseParams, pose_body, shape_body
from app.core.exceptions import DataIOError, InvalidArgumentError
from app.mesh.texture import (
    DeformedTemplate,
    bake_vertex_colors,
    load_deformed_template,
    save_deformed_template,
    to_zero_shape,
    unpose_template,
)


def front_triangle_with_hidden_apex():
    """Треугольник лицом к камере на z=2 и вершина за ним на z=3"""
    vertices = np.array(
        [[-0.4, -0.4, 2.0], [0.4, -0.4, 2.0], [0.0, 0.4, 2.0], [0.0, 0.0, 3.0]]
    )
    faces = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]])
    return vertices, faces


def random_params(model, seed: int) -> PoseParams:
    rng = np.random.default_rng(seed)
    return PoseParams(
        rng.normal(0.0, 0.3, NUM_POSE_PARAMS),
        rng.normal(0.0, 0.5, model.num_betas),
        np.array([0.1, -0.2, 4.0]) + rng.normal(0.0, 0.1, 3),
    )


def test_uniform_image_gives_uniform_colors(small_camera):
    vertices, faces = front_triangle_with_hidden_apex()
    image = np.full((64, 64, 3), 128, dtype=np.uint8)
    colors, _ = bake_vertex_colors(vertices, faces, image, small_camera)
    assert colors.dtype == np.uint8
    assert np.all(colors == 128)


def test_colour_is_sampled_at_projection(small_camera):
    vertices, faces = front_triangle_with_hidden_apex()
    image = np.zeros((64, 64, 3), dtype=np.uint8)
    # Вершина 1 проецируется в (52, 12)
    image[10:15, 50:55] = (200, 10, 50)
    colors, visible = bake_vertex_colors(vertices, faces, image, small_camera)
    assert visible[1]
    np.testing.assert_array_equal(colors[1], [200, 10, 50])
    np.testing.assert_array_equal(colors[0], [0, 0, 0])


def test_hidden_vertex_takes_neighbour_mean(small_camera):
    vertices, faces = front_triangle_with_hidden_apex()
    image = np.zeros((64, 64, 3), dtype=np.uint8)
    image[10:15, 10:15] = (90, 0, 0)
    image[10:15, 50:55] = (0, 90, 0)
    image[50:55, 30:35] = (0, 0, 90)
    colors, visible = bake_vertex_colors(vertices, faces, image, small_camera)
    np.testing.assert_array_equal(visible, [True, True, True, False])
    np.testing.assert_array_equal(colors[3], [30, 30, 30])


def test_image_size_must_match_camera(small_camera):
    vertices, faces = front_triangle_with_hidden_apex()
    with pytest.raises(InvalidArgumentError):
        bake_vertex_colors(vertices, faces, np.zeros((10, 10, 3), dtype=np.uint8), small_camera)


def test_undeformed_template_unposes_to_shaped_rest(toy_model):
    params = random_params(toy_model, 0)
    posed = pose_body(toy_model, params)
    rest = unpose_template(posed.vertices, params, posed.per_vertex_transform)
    shaped, _ = shape_body(toy_model, params.beta)
    np.testing.assert_allclose(rest, shaped, atol=1e-9)


def test_unpose_then_pose_restores_deformation(toy_model):
    rng = np.random.default_rng(5)
    for seed in range(10):
        params = random_params(toy_model, seed)
        posed = pose_body(toy_model, params)
        deformed = posed.vertices + rng.normal(0.0, 0.01, posed.vertices.shape)

        rest = unpose_template(deformed, params, posed.per_vertex_transform)
        template = DeformedTemplate(
            vertices=to_zero_shape(toy_model, rest, params.beta),
            faces=toy_model.faces,
            colors=np.zeros((toy_model.num_vertices, 3)),
            keyframe=0,
        )
        np.testing.assert_allclose(template.pose(toy_model, params).vertices, deformed, atol=1e-6)


def test_singular_transform_borrows_nearest_inverse():
    transforms = np.tile(np.eye(4), (3, 1, 1))
    transforms[0, :3, 3] = [1.0, 0.0, 0.0]
    transforms[1, :3, :3] = 0.0
    vertices = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [5.0, 5.0, 5.0]])
    rest = unpose_template(vertices, PoseParams.zeros(1), transforms)
    np.testing.assert_allclose(rest, [[-1.0, 0.0, 0.0], [-0.9, 0.0, 0.0], [5.0, 5.0, 5.0]])

    transforms[:, :3, :3] = 0.0
    with pytest.raises(InvalidArgumentError):
        unpose_template(vertices, PoseParams.zeros(1), transforms)


def test_template_file(tmp_path):
    vertices, faces = front_triangle_with_hidden_apex()
    template = DeformedTemplate(
        vertices=vertices + 1e-7,
        faces=faces,
        colors=[[1, 2, 3], [4, 5, 6], [7, 8, 9], [10, 11, 12]],
        keyframe=7,
        visible=[True, True, True, False],
    )
    path = save_deformed_template(template, str(tmp_path / "template.ply"))
    loaded = load_deformed_template(path)
    np.testing.assert_array_equal(loaded.vertices, template.vertices)
    np.testing.assert_array_equal(loaded.faces, template.faces)
    np.testing.assert_array_equal(loaded.colors, template.colors)
    np.testing.assert_array_equal(loaded.visible, template.visible)
    assert loaded.keyframe == 7


def test_template_file_errors(tmp_path):
    with pytest.raises(DataIOError):
        load_deformed_template(str(tmp_path / "missing.ply"))
    broken = tmp_path / "broken.ply"
    broken.write_text("ply\nformat ascii 1.0\n", encoding="utf-8")
    with pytest.raises(DataIOError):
        load_deformed_template(str(broken))
