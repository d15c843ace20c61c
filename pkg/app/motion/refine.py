"""
Уточнение LR последовательности поз по сезонной детали HR

Для каждого канала: тренд L по LR, сглаживание P_LR и P_HR, периоды по
восходящим пересечениям, аддитивные факторы A из остатка HR и сборка
L + A по фазе каждого периода LR.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from app.body.model import PoseParams
from app.core.config import RefineConfig
from app.core.exceptions import HumanSRError, InvalidArgumentError
from app.fitting.observations import PoseSequence
from app.motion.series import (
    AngleSeries,
    additive_factors,
    detect_period,
    evaluate_trend,
    find_crossovers,
    fit_trend,
    moving_average,
    round_to_odd,
    stretch_factors,
)

RESIDUAL_EPS = 1e-12
# Порог гистерезиса пересечений в долях СКО остатка
HYSTERESIS_FRACTION = 0.5


@dataclass
class ChannelReport:
    """Итог по одному каналу theta"""

    channel: int
    status: str  # refined | passthrough | failed
    period: Optional[int] = None
    window: Optional[int] = None
    trend_coefficients: List[float] = field(default_factory=list)
    boundaries: List[float] = field(default_factory=list)
    periods: List[int] = field(default_factory=list)
    t_max: Optional[int] = None
    factors: List[float] = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class RefinementReport:
    channels: List[ChannelReport] = field(default_factory=list)

    def counts(self) -> Dict[str, int]:
        result: Dict[str, int] = {"refined": 0, "passthrough": 0, "failed": 0}
        for report in self.channels:
            result[report.status] += 1
        return result

    def to_dict(self) -> dict:
        return {"summary": self.counts(), "channels": [asdict(c) for c in self.channels]}


def _effective_window(window: int, length: int) -> int:
    """Нечётное окно, не длиннее ряда"""
    window = min(window, length)
    return window if window % 2 == 1 else window - 1


def _wrap(values: np.ndarray) -> np.ndarray:
    return np.mod(values + np.pi, 2 * np.pi) - np.pi


def _passthrough_values(lr_values: np.ndarray, config: RefineConfig) -> Tuple[np.ndarray, int]:
    """P_LR окном по умолчанию"""
    window = _effective_window(config.default_window, lr_values.shape[0])
    return moving_average(lr_values, window), window


def refine_channel_with_report(
    lr: AngleSeries, hr: AngleSeries, config: RefineConfig, channel: int = 0
) -> Tuple[AngleSeries, ChannelReport]:
    """Уточнение одного канала с отчётом"""
    lr_values = np.unwrap(lr.values)
    hr_values = np.unwrap(hr.values)
    wrapped = not (np.array_equal(lr_values, lr.values) and np.array_equal(hr_values, hr.values))

    def finish(values: np.ndarray) -> AngleSeries:
        return AngleSeries(_wrap(values) if wrapped else values, lr.timestamps)

    trend = fit_trend(lr_values, min(config.trend_degree, len(lr) - 1), lr.timestamps)
    period = detect_period(
        lr_values - trend.values, config.min_period, config.acf_threshold
    )
    if period is None:
        smoothed, window = _passthrough_values(lr_values, config)
        return finish(smoothed), ChannelReport(
            channel=channel, status="passthrough", window=window
        )

    window = _effective_window(round_to_odd(period / 4), len(lr))
    radius = window // 2
    p_lr = moving_average(lr_values, window)
    p_hr = moving_average(hr_values, _effective_window(window, len(hr)))

    lr_cross = find_crossovers(
        trend.values,
        p_lr,
        min_gap=period // 2,
        fit_radius=radius,
        hysteresis=HYSTERESIS_FRACTION * np.std(p_lr - trend.values),
    )
    lr_bounds = np.interp(lr_cross.positions, np.arange(len(lr)), lr.timestamps)
    t_max = lr_cross.t_max

    hr_trend = evaluate_trend(trend.coefficients, hr.timestamps)
    residual = p_hr - hr_trend
    if np.max(np.abs(residual)) < RESIDUAL_EPS:
        factors = np.zeros(t_max)
    else:
        hr_cross = find_crossovers(
            hr_trend,
            p_hr,
            min_gap=period // 2,
            fit_radius=radius,
            hysteresis=HYSTERESIS_FRACTION * np.std(residual),
        )
        hr_bounds = np.interp(hr_cross.positions, np.arange(len(hr)), hr.timestamps)
        factors = additive_factors(residual, hr_bounds, t_max, hr.timestamps)

    refined = trend.values + stretch_factors(lr.timestamps, lr_bounds, factors)
    return finish(refined), ChannelReport(
        channel=channel,
        status="refined",
        period=period,
        window=window,
        trend_coefficients=trend.coefficients.tolist(),
        boundaries=lr_bounds.tolist(),
        periods=lr_cross.periods.tolist(),
        t_max=t_max,
        factors=factors.tolist(),
    )


def refine_channel(lr: AngleSeries, hr: AngleSeries, config: RefineConfig) -> AngleSeries:
    """Уточнённый ряд той же длины, что и LR"""
    return refine_channel_with_report(lr, hr, config)[0]


def _failed_channel(values: np.ndarray, config: RefineConfig) -> Tuple[np.ndarray, Optional[int]]:
    """Канал с ошибкой уходит в P_LR; нечисловой ряд не сглаживается"""
    if not np.all(np.isfinite(values)):
        return values.copy(), None
    unwrapped = np.unwrap(values)
    smoothed, window = _passthrough_values(unwrapped, config)
    return (smoothed if np.array_equal(unwrapped, values) else _wrap(smoothed)), window


def refine_channels(
    lr_thetas: np.ndarray,
    lr_timestamps: np.ndarray,
    hr_thetas: np.ndarray,
    hr_timestamps: np.ndarray,
    config: RefineConfig,
) -> Tuple[np.ndarray, RefinementReport]:
    """Каналы (столбцы) уточняются независимо; ошибка канала его не останавливает"""
    lr_thetas = np.asarray(lr_thetas, dtype=np.float64)
    hr_thetas = np.asarray(hr_thetas, dtype=np.float64)
    if lr_thetas.ndim != 2 or hr_thetas.ndim != 2 or lr_thetas.shape[1] != hr_thetas.shape[1]:
        raise InvalidArgumentError("refine_channels: ожидаются матрицы кадры × каналы")
    refined = lr_thetas.copy()
    report = RefinementReport()

    for channel in range(lr_thetas.shape[1]):
        try:
            series, channel_report = refine_channel_with_report(
                AngleSeries(lr_thetas[:, channel], lr_timestamps),
                AngleSeries(hr_thetas[:, channel], hr_timestamps),
                config,
                channel,
            )
            refined[:, channel] = series.values
        except HumanSRError as e:
            refined[:, channel], window = _failed_channel(lr_thetas[:, channel], config)
            kept = "сглажен окном по умолчанию" if window else "оставлен без изменений"
            logger.warning(f"⚠️ Канал {channel}: {e}, {kept}")
            channel_report = ChannelReport(
                channel=channel, status="failed", window=window, error=str(e)
            )
        report.channels.append(channel_report)
    return refined, report


def refine_pose_sequence(
    lr_seq: PoseSequence, hr_seq: PoseSequence, config: RefineConfig
) -> Tuple[PoseSequence, RefinementReport]:
    """72 канала theta независимо; beta из LR, gamma сглаживается"""
    if len(lr_seq) == 0 or len(hr_seq) == 0:
        raise InvalidArgumentError("refine_pose_sequence: пустая последовательность")

    refined, report = refine_channels(
        lr_seq.thetas, lr_seq.timestamps, hr_seq.thetas, hr_seq.timestamps, config
    )

    window = _effective_window(config.default_window, len(lr_seq))
    gammas = np.stack([moving_average(lr_seq.gammas[:, axis], window) for axis in range(3)], axis=1)
    frames = [
        PoseParams(theta, params.beta, gamma)
        for theta, params, gamma in zip(refined, lr_seq.frames, gammas)
    ]
    counts = report.counts()
    logger.success(
        f"✅ Уточнение движения: {counts['refined']} каналов уточнено, "
        f"{counts['passthrough']} без сезонности, {counts['failed']} с ошибкой"
    )
    return PoseSequence(frames, lr_seq.timestamps, lr_seq.shared_beta), report


def save_refine_report(report: RefinementReport, path: str) -> str:
    filepath = Path(path)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    with open(filepath, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
    logger.info(f"Отчёт уточнения записан в {filepath}")
    return str(filepath)
