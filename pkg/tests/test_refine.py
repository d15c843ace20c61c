"""
Тесты уточнения движения по HR
"""

import json

import numpy as np
import pytest

from app.core.config import RefineConfig
from app.core.exceptions import InvalidArgumentError
from app.data.fixture import SEASONAL_CHANNELS, ground_truth_sequence
from app.fitting.observations import PoseSequence
from app.motion.metrics import jitter
from app.motion.refine import (
    RefinementReport,
    refine_channel,
    refine_channel_with_report,
    refine_channels,
    refine_pose_sequence,
    save_refine_report,
)
from app.motion.series import AngleSeries, moving_average, round_to_odd


def seasonal(t: np.ndarray) -> np.ndarray:
    return 0.001 * t + 0.25 * np.sin(2 * np.pi * t / 25)


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def test_refinement_beats_smoothed_lr():
    """Шумный LR и чистый HR на двух с лишним периодах: RMSE ниже P_LR минимум на 30%"""
    t = np.arange(200.0)
    truth = seasonal(t)
    lr = truth + np.random.default_rng(0).normal(0.0, 0.1, t.shape)
    hr_t = np.arange(70.0, 130.0)

    refined = refine_channel(AngleSeries(lr, t), AngleSeries(seasonal(hr_t), hr_t), RefineConfig())
    baseline = moving_average(lr, round_to_odd(25 / 4))

    assert len(refined) == 200
    np.testing.assert_array_equal(refined.timestamps, t)
    assert rmse(refined.values, truth) <= 0.7 * rmse(baseline, truth)


def test_channel_without_season_is_smoothed():
    t = np.arange(30.0)
    line = 0.02 * t - 0.3
    series, report = refine_channel_with_report(
        AngleSeries(line, t), AngleSeries(line[10:20], t[10:20]), RefineConfig()
    )
    assert report.status == "passthrough"
    assert report.window == 5
    np.testing.assert_allclose(series.values[2:-2], line[2:-2], atol=1e-12)


def test_wrapped_channel_stays_in_range():
    """Канал около pi разворачивается перед анализом и сворачивается обратно"""
    t = np.arange(100.0)
    truth = np.pi - 0.2 + 0.4 * np.sin(2 * np.pi * t / 20)
    wrap = lambda v: np.mod(v + np.pi, 2 * np.pi) - np.pi  # noqa: E731
    hr_t = np.arange(30.0, 70.0)
    hr = np.pi - 0.2 + 0.4 * np.sin(2 * np.pi * hr_t / 20)

    refined = refine_channel(AngleSeries(wrap(truth), t), AngleSeries(wrap(hr), hr_t), RefineConfig())

    assert np.all(refined.values >= -np.pi) and np.all(refined.values < np.pi)
    error = np.angle(np.exp(1j * (refined.values - truth)))
    assert np.max(np.abs(error)) < 0.15


def test_pose_sequence_refinement():
    lr = ground_truth_sequence(np.arange(40.0), 10)
    hr = ground_truth_sequence(np.arange(5.0, 35.0), 10)

    refined, report = refine_pose_sequence(lr, hr, RefineConfig())

    assert len(refined) == 40
    assert len(report.channels) == 72
    assert report.counts() == {"refined": 8, "passthrough": 64, "failed": 0}
    np.testing.assert_array_equal(refined.betas, lr.betas)
    np.testing.assert_allclose(refined.gammas[2:-2], lr.gammas[2:-2], atol=1e-12)
    np.testing.assert_array_equal(refined.thetas[:, 0], 0.0)


def test_failed_channel_falls_back_to_smoothed_lr():
    """Четыре кадра HR не вмещают двух пересечений: сезонные каналы уходят в P_LR"""
    lr = ground_truth_sequence(np.arange(40.0), 10)
    hr = ground_truth_sequence(np.arange(18.0, 22.0), 10)

    refined, report = refine_pose_sequence(lr, hr, RefineConfig())

    assert report.counts() == {"refined": 0, "passthrough": 64, "failed": 8}
    for channel, _, _ in SEASONAL_CHANNELS:
        assert report.channels[channel].status == "failed"
        assert report.channels[channel].window == 5
        expected = moving_average(lr.thetas[:, channel], 5)
        np.testing.assert_allclose(refined.thetas[:, channel], expected, atol=1e-12)
        assert not np.allclose(refined.thetas[:, channel], lr.thetas[:, channel])
    np.testing.assert_array_equal(refined.thetas[:, 0], 0.0)


def test_bad_hr_channel_does_not_touch_others():
    lr = ground_truth_sequence(np.arange(40.0), 10)
    hr = ground_truth_sequence(np.arange(5.0, 35.0), 10)
    clean, _ = refine_channels(lr.thetas, lr.timestamps, hr.thetas, hr.timestamps, RefineConfig())
    hr_thetas = hr.thetas.copy()
    hr_thetas[12, 5] = np.nan

    refined, report = refine_channels(
        lr.thetas, lr.timestamps, hr_thetas, hr.timestamps, RefineConfig()
    )

    assert report.counts() == {"refined": 7, "passthrough": 64, "failed": 1}
    assert report.channels[5].status == "failed"
    np.testing.assert_allclose(refined[:, 5], moving_average(lr.thetas[:, 5], 5), atol=1e-12)
    others = [c for c in range(72) if c != 5]
    np.testing.assert_array_equal(refined[:, others], clean[:, others])


def test_nan_lr_channel_is_isolated():
    lr = ground_truth_sequence(np.arange(40.0), 10)
    hr = ground_truth_sequence(np.arange(5.0, 35.0), 10)
    clean, _ = refine_channels(lr.thetas, lr.timestamps, hr.thetas, hr.timestamps, RefineConfig())
    lr_thetas = lr.thetas.copy()
    lr_thetas[7, 30] = np.nan

    refined, report = refine_channels(
        lr_thetas, lr.timestamps, hr.thetas, hr.timestamps, RefineConfig()
    )

    assert report.channels[30].status == "failed"
    assert report.channels[30].window is None
    np.testing.assert_array_equal(refined[:, 30], lr_thetas[:, 30])
    others = [c for c in range(72) if c != 30]
    np.testing.assert_array_equal(refined[:, others], clean[:, others])
    assert all(report.channels[c].status != "failed" for c in others)


def test_refine_channels_rejects_mismatched_shapes():
    lr = ground_truth_sequence(np.arange(40.0), 10)
    with pytest.raises(InvalidArgumentError):
        refine_channels(lr.thetas, lr.timestamps, lr.thetas[:, :10], lr.timestamps, RefineConfig())


def test_refinement_is_deterministic():
    lr = ground_truth_sequence(np.arange(40.0), 10)
    hr = ground_truth_sequence(np.arange(5.0, 35.0), 10)
    first, _ = refine_pose_sequence(lr, hr, RefineConfig())
    second, _ = refine_pose_sequence(lr, hr, RefineConfig())
    np.testing.assert_array_equal(first.thetas, second.thetas)


def test_empty_sequence_rejected():
    hr = ground_truth_sequence(np.arange(5.0), 10)
    with pytest.raises(InvalidArgumentError):
        refine_pose_sequence(PoseSequence([], []), hr, RefineConfig())


def test_report_file(tmp_path):
    lr = ground_truth_sequence(np.arange(40.0), 10)
    hr = ground_truth_sequence(np.arange(5.0, 35.0), 10)
    _, report = refine_pose_sequence(lr, hr, RefineConfig())
    path = save_refine_report(report, str(tmp_path / "refine_report.json"))
    data = json.loads(open(path, encoding="utf-8").read())
    assert data["summary"]["refined"] == 8
    assert data["channels"][5]["status"] == "refined"
    assert RefinementReport().counts() == {"refined": 0, "passthrough": 0, "failed": 0}


def test_jitter():
    still = np.zeros((10, 24, 3))
    assert jitter(still) == 0.0
    assert jitter(np.zeros((3, 24, 3))) == 0.0
    ramp = np.arange(10.0)[:, None, None] * np.ones((10, 24, 3))
    assert jitter(ramp) == pytest.approx(0.0, abs=1e-12)
    shaky = still.copy()
    shaky[5] += 0.1
    assert jitter(shaky) > 0
