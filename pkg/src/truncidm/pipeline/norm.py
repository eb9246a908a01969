from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class NormStats:
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def dim(self):
        return self.mu.shape[0]


def fit_norm_stats(actions):
    """Per-dimension mean and population std of training actions (N, D)."""
    a = np.asarray(actions, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ParameterError(f"need at least 2 training actions, got shape {a.shape}")
    return NormStats(a.mean(axis=0), np.maximum(a.std(axis=0), SIGMA_FLOOR))


def _check(a, stats):
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != stats.dim:
        raise ShapeError(f"action dim {a.shape[-1]} does not match stats dim {stats.dim}")
    return a


def normalize_action(a, stats: NormStats):
    return (_check(a, stats) - stats.mu) / stats.sigma


def denormalize_action(a_hat, stats: NormStats):
    return stats.mu + stats.sigma * _check(a_hat, stats)
