from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, ParameterError


@dataclass(frozen=True)
class SplitRule:
    """Occupancy at or above ``threshold`` is light truncation, below is heavy."""
    threshold: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ParameterError(f"split threshold must lie in (0, 1), got {self.threshold}")

    def label(self, occ):
        return "light" if occ >= self.threshold else "heavy"


def split_by_truncation(occupancies, rule: SplitRule = SplitRule()):
    """Index arrays (light, heavy) partitioning the samples.

    ``occupancies`` may be a sequence of numbers or of mappings with an
    ``occupancy`` key; a missing or NaN value is a data error.
    """
    vals = []
    for i, s in enumerate(occupancies):
        v = s.get("occupancy") if isinstance(s, dict) else s
        if v is None or not np.isfinite(v):
            raise DataError(f"sample {i} has no occupancy")
        vals.append(float(v))
    occ = np.asarray(vals, dtype=np.float64)
    light = occ >= rule.threshold
    return np.flatnonzero(light), np.flatnonzero(~light)
