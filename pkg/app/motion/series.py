"""
Примитивы анализа временных рядов: ACF, тренд, скользящее среднее,
точки пересечения и аддитивные факторы
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.polynomial import polynomial

from app.core.exceptions import (
    InsufficientSeasonalityError,
    InvalidArgumentError,
    ZeroVarianceError,
)

# Пики смещённой ACF ближе этого считаются равными, берётся меньший лаг
PEAK_TIE = 1e-3


@dataclass
class AngleSeries:
    """Один канал позы по кадрам на общих часах LR"""

    values: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        if self.values.shape != self.timestamps.shape:
            raise InvalidArgumentError("AngleSeries: значения и метки времени разной длины")
        if self.values.size == 0:
            raise InvalidArgumentError("AngleSeries: пустой ряд")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("AngleSeries: нечисловые значения")
        if np.any(np.diff(self.timestamps) <= 0):
            raise InvalidArgumentError("AngleSeries: метки времени должны строго возрастать")

    def __len__(self) -> int:
        return self.values.shape[0]


def autocorrelation(series) -> np.ndarray:
    """Несмещённая ACF с вычитанием среднего для лагов 0..n//2, acf[0] = 1"""
    y = np.asarray(series, dtype=np.float64).reshape(-1)
    n = y.shape[0]
    if n < 4:
        raise InvalidArgumentError(f"autocorrelation: нужно не меньше 4 отсчётов, получено {n}")
    centered = y - y.mean()
    if not np.any(np.abs(centered) > 1e-12 * max(1.0, np.abs(y).max())):
        raise ZeroVarianceError("autocorrelation: постоянный ряд")
    spectrum = np.fft.rfft(centered, n=2 * n)
    raw = np.fft.irfft(spectrum * np.conjugate(spectrum), n=2 * n)[: n // 2 + 1]
    lags = np.arange(n // 2 + 1)
    unbiased = raw / (n - lags)
    return unbiased / unbiased[0]


def _shift_mismatch(y: np.ndarray, lag: int) -> float:
    """Средний квадрат разности ряда и его сдвига на lag"""
    return float(np.mean((y[lag:] - y[:-lag]) ** 2))


def detect_period(series, min_period: int = 4, threshold: float = 0.3) -> Optional[int]:
    """Лаг наибольшего локального максимума ACF (>= threshold, лаг >= min_period)

    Пики сравниваются по смещённой ACF, иначе кратные периоду лаги с шумом
    обгоняют основной. Лаг пика уточняется среди соседних целых по
    наименьшему среднему квадрату разности со сдвигом.
    """
    y = np.asarray(series, dtype=np.float64).reshape(-1)
    try:
        acf = autocorrelation(y)
    except InvalidArgumentError:
        return None
    n = y.shape[0]
    lo = max(min_period, 1)
    peaks = [
        k
        for k in range(lo, acf.shape[0] - 1)
        if acf[k] > acf[k - 1] and acf[k] >= acf[k + 1] and acf[k] >= threshold
    ]
    if not peaks:
        return None
    biased = acf * (n - np.arange(acf.shape[0])) / n
    best = max(biased[k] for k in peaks)
    peak = min(k for k in peaks if biased[k] > best - PEAK_TIE)
    candidates = range(max(lo, peak - 1), min(acf.shape[0] - 1, peak + 1) + 1)
    return int(min(candidates, key=lambda k: (_shift_mismatch(y, k), k)))


class Trend(NamedTuple):
    coefficients: np.ndarray  # по возрастанию степени
    values: np.ndarray


def fit_trend(series, degree: int, timestamps=None) -> Trend:
    """Полином МНК по меткам времени"""
    y = np.asarray(series, dtype=np.float64).reshape(-1)
    t = (
        np.arange(y.shape[0], dtype=np.float64)
        if timestamps is None
        else np.asarray(timestamps, dtype=np.float64)
    )
    if degree < 0:
        raise InvalidArgumentError("degree: степень должна быть неотрицательной")
    if y.shape[0] <= degree:
        raise InvalidArgumentError(
            f"fit_trend: {y.shape[0]} точек недостаточно для степени {degree}"
        )
    coefficients = polynomial.polyfit(t, y, degree)
    return Trend(coefficients, polynomial.polyval(t, coefficients))


def evaluate_trend(coefficients: np.ndarray, timestamps) -> np.ndarray:
    return polynomial.polyval(np.asarray(timestamps, dtype=np.float64), coefficients)


def round_to_odd(value: float) -> int:
    return max(1, 2 * int(np.floor(value / 2.0)) + 1)


def moving_average(series, window: int) -> np.ndarray:
    """Центрированное среднее; у краёв окно обрезается"""
    y = np.asarray(series, dtype=np.float64).reshape(-1)
    if window < 1 or window % 2 == 0:
        raise InvalidArgumentError(f"window: ожидается нечётное окно >= 1, получено {window}")
    if window > y.shape[0]:
        raise InvalidArgumentError(f"window: окно {window} длиннее ряда {y.shape[0]}")
    if window == 1:
        return y.copy()
    half = window // 2
    windows = sliding_window_view(np.pad(y, half, constant_values=np.nan), window)
    # Среднее отклонений от центра точно сохраняет константы
    smoothed = y + np.nanmean(windows - y[:, None], axis=1)
    return np.clip(smoothed, np.nanmin(windows, axis=1), np.nanmax(windows, axis=1))


class Crossovers(NamedTuple):
    indices: np.ndarray  # i, где знак P - L меняется между i и i+1 (вверх)
    positions: np.ndarray  # дробные положения нулей
    periods: np.ndarray  # целые длины периодов T_LR

    @property
    def t_max(self) -> int:
        return int(self.periods.max())


def _signs(diff: np.ndarray) -> np.ndarray:
    """Знак разности; ноль получает знак следующего ненулевого отсчёта"""
    signs = np.sign(diff)
    following = 0.0
    for i in range(signs.shape[0] - 1, -1, -1):
        if signs[i] == 0:
            signs[i] = following
        else:
            following = signs[i]
    return signs


def _schmitt_upward(diff: np.ndarray, hysteresis: float) -> np.ndarray:
    """Восходящие пересечения с гистерезисом: ниже -h, затем выше +h"""
    upward = []
    state = 0
    for i, value in enumerate(diff):
        if value < -hysteresis:
            state = -1
        elif value > hysteresis:
            if state < 0:
                j = i - 1
                while diff[j] >= 0:
                    j -= 1
                upward.append(j)
            state = 1
    return np.array(upward, dtype=np.int64)


def _zero_position(diff: np.ndarray, i: int, fit_radius: int) -> float:
    if fit_radius <= 0:
        d0, d1 = diff[i], diff[i + 1]
        return float(i + d0 / (d0 - d1))
    lo = max(0, i - fit_radius)
    hi = min(diff.shape[0], i + 2 + fit_radius)
    t = np.arange(lo, hi, dtype=np.float64)
    intercept, slope = polynomial.polyfit(t, diff[lo:hi], 1)
    if slope <= 0:
        d0, d1 = diff[i], diff[i + 1]
        return float(i + d0 / (d0 - d1))
    return float(np.clip(-intercept / slope, lo, hi - 1))


def find_crossovers(
    L, P, min_gap: int = 0, fit_radius: int = 0, hysteresis: float = 0.0
) -> Crossovers:
    """Восходящие пересечения P с трендом L; период от одного до следующего

    hysteresis > 0 отбрасывает дребезг знака у нисходящих пересечений
    зашумлённого ряда.
    """
    trend = np.asarray(L, dtype=np.float64).reshape(-1)
    smoothed = np.asarray(P, dtype=np.float64).reshape(-1)
    if trend.shape != smoothed.shape:
        raise InvalidArgumentError("find_crossovers: L и P разной длины")
    if hysteresis < 0:
        raise InvalidArgumentError("hysteresis: порог не может быть отрицательным")
    diff = smoothed - trend
    if hysteresis > 0:
        upward = _schmitt_upward(diff, hysteresis)
    else:
        signs = _signs(diff)
        upward = np.nonzero((signs[:-1] < 0) & (signs[1:] > 0))[0]

    kept = []
    for i in upward:
        if kept and i - kept[-1] < min_gap:
            continue
        kept.append(int(i))
    if len(kept) < 2:
        raise InsufficientSeasonalityError(
            f"найдено {len(kept)} восходящих пересечений, нужно не меньше 2"
        )
    indices = np.array(kept, dtype=np.int64)
    positions = np.array([_zero_position(diff, i, fit_radius) for i in kept])
    periods = np.rint(np.diff(positions)).astype(np.int64)
    return Crossovers(indices, positions, periods)


def additive_factors(hr_residual, hr_period_boundaries, t_max: int, timestamps=None) -> np.ndarray:
    """Каждый период остатка HR пересэмплируется в t_max точек, затем усредняется"""
    residual = np.asarray(hr_residual, dtype=np.float64).reshape(-1)
    boundaries = np.asarray(hr_period_boundaries, dtype=np.float64).reshape(-1)
    t = (
        np.arange(residual.shape[0], dtype=np.float64)
        if timestamps is None
        else np.asarray(timestamps, dtype=np.float64)
    )
    if boundaries.shape[0] < 2:
        raise InsufficientSeasonalityError("additive_factors: нет ни одного полного периода HR")
    if t_max < 1:
        raise InvalidArgumentError("t_max: длина факторов должна быть положительной")
    steps = np.arange(t_max) / t_max
    samples = [
        np.interp(start + steps * (end - start), t, residual)
        for start, end in zip(boundaries[:-1], boundaries[1:])
    ]
    return np.mean(samples, axis=0)


def stretch_factors(timestamps, boundaries, factors: np.ndarray) -> np.ndarray:
    """Растянуть A на каждый период; до первой и после последней границы период соседний"""
    t = np.asarray(timestamps, dtype=np.float64)
    b = np.asarray(boundaries, dtype=np.float64)
    t_max = factors.shape[0]
    k = np.clip(np.searchsorted(b, t, side="right") - 1, 0, b.shape[0] - 2)
    start = b[k]
    length = b[k + 1] - b[k]
    phase = np.mod((t - start) / length, 1.0)
    cyclic = np.append(factors, factors[0])
    return np.interp(phase * t_max, np.arange(t_max + 1), cyclic)
