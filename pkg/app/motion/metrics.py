"""
Метрика дрожания движения
"""

import numpy as np


def jitter(joints3d_seq) -> float:
    """Средняя норма третьей конечной разности положений суставов"""
    joints = np.asarray(joints3d_seq, dtype=np.float64)
    if joints.shape[0] < 4:
        return 0.0
    return float(np.linalg.norm(np.diff(joints, n=3, axis=0), axis=-1).mean())
