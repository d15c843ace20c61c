"""
Уточнение движения аддитивной сезонной декомпозицией
"""

from app.motion.refine import (
    RefinementReport,
    refine_channel,
    refine_channels,
    refine_pose_sequence,
)
from app.motion.series import (
    AngleSeries,
    additive_factors,
    autocorrelation,
    detect_period,
    find_crossovers,
    fit_trend,
    moving_average,
)

__all__ = [
    "AngleSeries",
    "RefinementReport",
    "additive_factors",
    "autocorrelation",
    "detect_period",
    "find_crossovers",
    "fit_trend",
    "moving_average",
    "refine_channel",
    "refine_channels",
    "refine_pose_sequence",
]
