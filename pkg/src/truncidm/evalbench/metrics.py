"""Per-sample action metrics in raw units."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError


@dataclass(frozen=True)
class ThresholdSpec:
    rotation: float = 0.1
    gripper: float = 0.5

    def __post_init__(self):
        if not (self.rotation > 0 and self.gripper > 0):
            raise ParameterError("thresholds must be positive")

    def vector(self, dim_kinds):
        table = {"rotation": self.rotation, "gripper": self.gripper}
        try:
            return np.array([table[k] for k in dim_kinds], dtype=np.float64)
        except KeyError as e:
            raise ShapeError(f"unknown dim kind {e.args[0]!r}") from None


def _pair(pred, gt, dim_kinds=None):
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim < 1:
        raise ShapeError(f"prediction {p.shape} and ground truth {g.shape} differ")
    if dim_kinds is not None and len(dim_kinds) != p.shape[-1]:
        raise ShapeError(f"{len(dim_kinds)} dim kinds for {p.shape[-1]} action dims")
    return p, g


def hits(pred, gt, dim_kinds, spec: ThresholdSpec = ThresholdSpec()):
    """Per-dimension success indicators (inclusive boundary)."""
    p, g = _pair(pred, gt, dim_kinds)
    return np.abs(p - g) <= spec.vector(dim_kinds)


def strict_acc(pred, gt, dim_kinds, spec: ThresholdSpec = ThresholdSpec()):
    """1 when every dimension is within threshold; vectorised over leading axes."""
    out = hits(pred, gt, dim_kinds, spec).all(axis=-1).astype(np.float64)
    return out if out.ndim else float(out)


def acc_per_dim(pred, gt, dim_kinds, spec: ThresholdSpec = ThresholdSpec()):
    out = hits(pred, gt, dim_kinds, spec).mean(axis=-1)
    return out if np.ndim(out) else float(out)


def l1_distance(pred, gt):
    p, g = _pair(pred, gt)
    out = np.abs(p - g).mean(axis=-1)
    return out if np.ndim(out) else float(out)
