"""
L-BFGS с поиском шага по Армихо

Общий решатель для подгонки позы и деформации шаблона. Целевая функция
возвращает пару (значение, градиент).
"""

from typing import Callable, List, NamedTuple, Tuple

import numpy as np
import torch
from loguru import logger

from app.core.exceptions import InvalidArgumentError, NumericalFailureError

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]

HISTORY = 10
ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60


class MinimizeResult(NamedTuple):
    x: np.ndarray
    fun: float
    iterations: int


def torch_objective(fn: Callable[[torch.Tensor], torch.Tensor]) -> Objective:
    """Обернуть скалярную функцию torch в (значение, градиент) через autograd"""

    def wrapped(x: np.ndarray) -> Tuple[float, np.ndarray]:
        xt = torch.tensor(x, dtype=torch.float64, requires_grad=True)
        value = fn(xt)
        if not torch.isfinite(value):
            return float(value.detach()), np.full_like(x, np.nan)
        (grad,) = torch.autograd.grad(value, xt, allow_unused=True)
        if grad is None:
            return float(value.detach()), np.zeros_like(x)
        return float(value.detach()), grad.numpy().copy()

    return wrapped


def _two_loop(grad: np.ndarray, s_hist: List[np.ndarray], y_hist: List[np.ndarray]) -> np.ndarray:
    q = grad.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        alpha = rho * (s @ q)
        q -= alpha * y
        alphas.append((rho, alpha))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    else:
        q /= max(np.linalg.norm(grad), 1.0)
    for (s, y), (rho, alpha) in zip(zip(s_hist, y_hist), reversed(alphas)):
        beta = rho * (y @ q)
        q += (alpha - beta) * s
    return -q


def minimize(
    objective: Objective,
    x0,
    max_iters: int = 100,
    grad_tol: float = 1e-6,
) -> MinimizeResult:
    """Квазиньютоновский спуск; f(x*) <= f(x0), детерминирован"""
    x = np.array(x0, dtype=np.float64).reshape(-1)
    if max_iters < 0:
        raise InvalidArgumentError("max_iters должен быть неотрицательным")

    f, g = objective(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalFailureError("целевая функция не конечна в начальной точке", last_x=x)
    if max_iters == 0:
        return MinimizeResult(x, float(f), 0)

    s_hist: List[np.ndarray] = []
    y_hist: List[np.ndarray] = []
    iterations = 0
    while iterations < max_iters:
        if np.max(np.abs(g)) < grad_tol:
            break
        direction = _two_loop(g, s_hist, y_hist)
        slope = g @ direction
        if slope >= 0:
            # Сброс памяти, если направление не спусковое
            s_hist.clear()
            y_hist.clear()
            direction = -g / max(np.linalg.norm(g), 1.0)
            slope = g @ direction

        step = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = x + step * direction
            f_new, g_new = objective(x_new)
            # Нечисловое пробное значение считается неудачей Армихо
            if np.isfinite(f_new) and f_new <= f + ARMIJO_C * step * slope:
                accepted = True
                break
            step *= BACKTRACK
        if not accepted:
            logger.debug(f"Поиск шага не нашёл спуска на итерации {iterations}")
            break
        if not np.all(np.isfinite(g_new)):
            raise NumericalFailureError(
                f"градиент не конечен на итерации {iterations + 1}", last_x=x
            )

        iterations += 1
        s = x_new - x
        y = g_new - g
        if s @ y > 1e-12:
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > HISTORY:
                s_hist.pop(0)
                y_hist.pop(0)
        x, f, g = x_new, f_new, g_new
        logger.debug(f"L-BFGS итерация {iterations}: f={f:.6e}, |g|={np.max(np.abs(g)):.3e}")

    return MinimizeResult(x, float(f), iterations)
