"""
Лапласовы координаты и деформация шаблона по соответствию контуров
"""

from typing import Optional

import numpy as np
import torch
from loguru import logger
from scipy import sparse

from app.body.camera import Camera, project, project_torch
from app.body.kinematics import DTYPE
from app.core.config import AdaptConfig
from app.core.exceptions import InvalidArgumentError
from app.fitting.optimizer import minimize, torch_objective
from app.mesh.contour import Correspondence


def adjacency(faces: np.ndarray, num_vertices: int) -> sparse.csr_matrix:
    """Симметричная матрица смежности по рёбрам треугольников"""
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2], f[:, 1], f[:, 2], f[:, 0]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0], f[:, 0], f[:, 1], f[:, 2]])
    matrix = sparse.coo_matrix(
        (np.ones(rows.shape[0]), (rows, cols)), shape=(num_vertices, num_vertices)
    ).tocsr()
    matrix.data[:] = 1.0
    return matrix


def uniform_laplacian(faces: np.ndarray, num_vertices: int) -> sparse.csr_matrix:
    """L = I - D^-1 A; вершина без соседей - ошибка"""
    neighbours = adjacency(faces, num_vertices)
    degree = np.asarray(neighbours.sum(axis=1)).ravel()
    isolated = np.nonzero(degree == 0)[0]
    if isolated.size:
        raise InvalidArgumentError(f"изолированные вершины: {isolated[:10].tolist()}")
    return (sparse.identity(num_vertices, format="csr") - sparse.diags(1.0 / degree) @ neighbours).tocsr()


def laplacian_coords(vertices, faces) -> np.ndarray:
    """v_i - среднее соседей по одному кольцу"""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    return uniform_laplacian(faces, v.shape[0]) @ v


def _torch_sparse(matrix: sparse.csr_matrix) -> torch.Tensor:
    coo = matrix.tocoo()
    indices = torch.as_tensor(np.vstack((coo.row, coo.col)), dtype=torch.int64)
    return torch.sparse_coo_tensor(indices, torch.as_tensor(coo.data, dtype=DTYPE), coo.shape).coalesce()


def smoothness_weights(num_vertices: int, tagged: np.ndarray, config: AdaptConfig) -> np.ndarray:
    """omega по умолчанию, ослабленный вес у вершин контура"""
    omega = np.full(num_vertices, config.omega)
    omega[np.asarray(tagged, dtype=np.int64)] = config.omega_tagged
    return omega


def deform_template(
    vertices,
    faces,
    camera: Camera,
    correspondence: Correspondence,
    targets,
    omega: Optional[np.ndarray] = None,
    config: Optional[AdaptConfig] = None,
) -> np.ndarray:
    """Минимизация Σ|p_m - П(v_tag)|² + Σ ω|L(v) - L0(v)|² по всем вершинам"""
    config = config or AdaptConfig()
    v0 = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tags = (
        np.zeros(0, dtype=np.int64)
        if correspondence.vertex_ids is None
        else np.asarray(correspondence.vertex_ids, dtype=np.int64)
    )
    points = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    if tags.size == 0:
        logger.info("Соответствие пусто, шаблон не деформируется")
        return v0.copy()
    if tags.shape[0] != points.shape[0]:
        raise InvalidArgumentError("deform_template: число целей не совпадает с числом меток")
    if omega is None:
        omega = smoothness_weights(v0.shape[0], tags, config)

    laplacian = _torch_sparse(uniform_laplacian(faces, v0.shape[0]))
    reference = torch.sparse.mm(laplacian, torch.as_tensor(v0, dtype=DTYPE))
    weights = torch.as_tensor(np.asarray(omega, dtype=np.float64), dtype=DTYPE)[:, None]
    target_t = torch.as_tensor(points, dtype=DTYPE)
    tags_t = torch.as_tensor(tags)

    def energy(x: torch.Tensor) -> torch.Tensor:
        v = x.reshape(-1, 3)
        fit = ((target_t - project_torch(camera, v[tags_t])) ** 2).sum()
        smooth = (weights * (torch.sparse.mm(laplacian, v) - reference) ** 2).sum()
        return fit + smooth

    result = minimize(torch_objective(energy), v0.reshape(-1), config.max_iters, config.grad_tol)
    deformed = result.x.reshape(-1, 3)

    miss = constraint_error(deformed, camera, tags, points)
    if miss > config.tolerance_px:
        logger.warning(f"⚠️ Вершины контура отстают от целей на {miss:.2f} px")
    logger.info(f"🧵 Деформация шаблона: {result.iterations} итераций, f={result.fun:.4f}")
    return deformed


def constraint_error(vertices: np.ndarray, camera: Camera, tags: np.ndarray, targets: np.ndarray) -> float:
    """Наибольшее расстояние проекции вершины до центра её целей, px"""
    tags = np.asarray(tags, dtype=np.int64)
    if tags.size == 0:
        return 0.0
    worst = 0.0
    for vertex in np.unique(tags):
        centre = targets[tags == vertex].mean(axis=0)
        worst = max(worst, float(np.linalg.norm(project(camera, vertices[vertex])[0] - centre)))
    return worst
