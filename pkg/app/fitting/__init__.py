"""
Оценка (theta, beta, gamma) минимизацией энергии по кадрам
"""

from app.fitting.energy import (
    e_joints2d,
    e_mask_exact,
    e_mask_smooth,
    e_prior3d,
    e_smooth,
    energy_breakdown,
    total_energy,
)
from app.fitting.fitter import fit_frames, initial_sequence
from app.fitting.observations import FrameObservation, PoseSequence, load_poses, save_poses
from app.fitting.optimizer import minimize

__all__ = [
    "FrameObservation",
    "PoseSequence",
    "e_joints2d",
    "e_mask_exact",
    "e_mask_smooth",
    "e_prior3d",
    "e_smooth",
    "energy_breakdown",
    "fit_frames",
    "initial_sequence",
    "load_poses",
    "minimize",
    "save_poses",
    "total_energy",
]
