"""
Тесты анализа рядов: ACF, период, тренд, сглаживание, пересечения, факторы
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.exceptions import (
    InsufficientSeasonalityError,
    InvalidArgumentError,
    ZeroVarianceError,
)
from app.motion.series import (
    AngleSeries,
    additive_factors,
    autocorrelation,
    detect_period,
    find_crossovers,
    fit_trend,
    moving_average,
    round_to_odd,
    stretch_factors,
)


def test_autocorrelation_basics():
    acf = autocorrelation(np.sin(np.arange(40) / 3.0))
    assert acf[0] == pytest.approx(1.0)
    assert acf.shape == (21,)
    with pytest.raises(InvalidArgumentError):
        autocorrelation([1.0, 2.0, 3.0])
    with pytest.raises(ZeroVarianceError):
        autocorrelation(np.full(10, 0.7))


@pytest.mark.parametrize("period", [8, 13, 25, 50])
def test_exact_period_of_pure_sinusoid(period):
    t = np.arange(4 * period)
    assert detect_period(np.sin(2 * np.pi * t / period)) == period


@pytest.mark.parametrize("period", [8, 13, 25, 50])
def test_period_under_noise(period):
    """20 зашумлённых рядов, отношение СКО сигнала к шуму 10"""
    t = np.arange(4 * period)
    signal = np.sin(2 * np.pi * t / period)
    sigma = np.std(signal) / 10
    for seed in range(20):
        noise = np.random.default_rng(seed).normal(0.0, sigma, t.shape)
        detected = detect_period(signal + noise)
        assert detected == period, f"seed {seed}"


def test_no_period_in_constant_or_short_series():
    assert detect_period(np.full(50, 2.0)) is None
    assert detect_period([0.0, 1.0]) is None


def test_no_period_in_ramp():
    """ACF линейного ряда монотонно убывает, локальных максимумов нет"""
    assert detect_period(np.arange(100.0)) is None
    assert detect_period(0.05 * np.arange(240.0) - 3.0) is None


def test_fundamental_beats_stronger_harmonic():
    """Слабая основная 24 и сильная гармоника 12: период ряда 24"""
    t = np.arange(240)
    y = 0.3 * np.sin(2 * np.pi * t / 24) + np.sin(2 * np.pi * t / 12 + 0.4)
    assert detect_period(y) == 24


def test_fit_trend_recovers_cubic():
    t = np.linspace(0.0, 10.0, 30)
    y = 1.0 - 0.5 * t + 0.02 * t**2 + 0.003 * t**3
    trend = fit_trend(y, 3, t)
    np.testing.assert_allclose(trend.coefficients, [1.0, -0.5, 0.02, 0.003], atol=1e-9)
    np.testing.assert_allclose(trend.values, y, atol=1e-9)
    with pytest.raises(InvalidArgumentError):
        fit_trend([1.0, 2.0], 3)


def test_round_to_odd():
    assert round_to_odd(25 / 4) == 7
    assert round_to_odd(4) == 5
    assert round_to_odd(0.5) == 1
    assert round_to_odd(1.25) == 1


@settings(max_examples=30, deadline=None)
@given(
    st.floats(min_value=-10.0, max_value=10.0),
    st.integers(min_value=5, max_value=40),
    st.sampled_from([1, 3, 5]),
)
def test_moving_average_keeps_constants(value, length, window):
    np.testing.assert_allclose(moving_average(np.full(length, value), window), value, atol=1e-12)


def test_moving_average_linear_interior():
    ramp = np.arange(20.0)
    smoothed = moving_average(ramp, 5)
    np.testing.assert_allclose(smoothed[2:-2], ramp[2:-2])
    np.testing.assert_array_equal(moving_average(ramp, 1), ramp)


def test_moving_average_rejects_bad_window():
    with pytest.raises(InvalidArgumentError):
        moving_average(np.arange(10.0), 4)
    with pytest.raises(InvalidArgumentError):
        moving_average(np.arange(3.0), 5)


def test_crossovers_of_shifted_sine():
    """Нули между отсчётами 19 и 20: линейная интерполяция даёт 19.5"""
    t = np.arange(100)
    smoothed = np.sin(2 * np.pi * (t + 0.5) / 20)
    crossings = find_crossovers(np.zeros(100), smoothed)
    np.testing.assert_array_equal(crossings.indices, [19, 39, 59, 79])
    np.testing.assert_allclose(crossings.positions, [19.5, 39.5, 59.5, 79.5])
    np.testing.assert_array_equal(crossings.periods, [20, 20, 20])
    assert crossings.t_max == 20


def test_crossovers_against_trend():
    t = np.arange(100.0)
    trend = 0.01 * t
    crossings = find_crossovers(trend, trend + np.sin(2 * np.pi * (t + 0.5) / 20))
    np.testing.assert_allclose(crossings.positions, [19.5, 39.5, 59.5, 79.5])


def test_hysteresis_ignores_chatter():
    """Дребезг у нисходящего пересечения не даёт ложного восходящего"""
    t = np.arange(60)
    diff = np.sin(2 * np.pi * (t + 0.5) / 20)
    chatter = diff.copy()
    chatter[10] = 0.05
    chatter[9] = -0.05
    without = find_crossovers(np.zeros(60), chatter)
    assert 9 in without.indices
    with_hysteresis = find_crossovers(np.zeros(60), chatter, hysteresis=0.3)
    np.testing.assert_array_equal(with_hysteresis.indices, [19, 39])


def test_too_few_crossovers():
    t = np.arange(30)
    with pytest.raises(InsufficientSeasonalityError):
        find_crossovers(np.zeros(30), np.sin(2 * np.pi * (t + 0.5) / 20))


def test_additive_factors_average_periods():
    t = np.arange(41)
    residual = np.sin(2 * np.pi * t / 20)
    factors = additive_factors(residual, [0, 20, 40], 20)
    np.testing.assert_allclose(factors, np.sin(2 * np.pi * np.arange(20) / 20), atol=1e-12)
    with pytest.raises(InsufficientSeasonalityError):
        additive_factors(residual, [0], 20)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
def test_additive_factors_shift_with_residual(shift):
    t = np.arange(41)
    residual = np.sin(2 * np.pi * t / 20) + 0.1 * np.cos(2 * np.pi * t / 7)
    base = additive_factors(residual, [0.0, 13.5, 27.0, 40.0], 17)
    shifted = additive_factors(residual + shift, [0.0, 13.5, 27.0, 40.0], 17)
    np.testing.assert_allclose(shifted, base + shift, atol=1e-9)


def test_stretch_factors_by_phase():
    factors = np.arange(4.0)
    values = stretch_factors([0.0, 5.0, 12.5, 15.0], [0.0, 10.0, 20.0], factors)
    np.testing.assert_allclose(values, [0.0, 2.0, 1.0, 2.0])


def test_angle_series_validation():
    with pytest.raises(InvalidArgumentError):
        AngleSeries([1.0, 2.0], [0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        AngleSeries([], [])
    with pytest.raises(InvalidArgumentError):
        AngleSeries([np.nan], [0.0])
