"""Robot-centric masks: pixel masking, area pooling to the feature grid, and
controlled degradation for mask-quality studies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError, ShapeError
from .fmap import load_fmap

SOURCES = ("ground_truth", "external", "degraded")


@dataclass(frozen=True)
class RobotMask:
    grid: np.ndarray
    source: str = "ground_truth"

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {g.shape}")
        if not np.isin(g, (0, 1)).all():
            raise ParameterError("mask values must be 0 or 1")
        if self.source not in SOURCES:
            raise ParameterError(f"unknown mask source {self.source!r}")
        object.__setattr__(self, "grid", g.astype(np.uint8))

    @property
    def shape(self):
        return self.grid.shape


def _grid(mask):
    return mask.grid if isinstance(mask, RobotMask) else np.asarray(mask)


def load_external_masks(path):
    """Masks from an ``.fmap`` file (uint8, (H, W) or (T, H, W))."""
    arr = load_fmap(path)
    if arr.ndim == 2:
        return RobotMask(arr, "external")
    return [RobotMask(m, "external") for m in arr]


def apply_mask(frame, mask):
    """Zero every pixel outside the mask; frames are (..., H, W, C)."""
    f = np.asarray(frame)
    m = _grid(mask)
    if f.shape[:-1] != m.shape:
        raise ShapeError(f"frame {f.shape} and mask {m.shape} extents differ")
    return f * m[..., None].astype(f.dtype)


def _overlap_matrix(n_out, n_in):
    """(n_out, n_in) fraction of each output cell covered by each input pixel."""
    edges = np.arange(n_out + 1) * (n_in / n_out)
    lo = np.maximum(edges[:-1, None], np.arange(n_in)[None, :])
    hi = np.minimum(edges[1:, None], np.arange(n_in)[None, :] + 1)
    return np.clip(hi - lo, 0.0, None) / (n_in / n_out)


def downsample_mask(mask, extents):
    """Area-weighted pooling of a (…, H_img, W_img) mask to ``extents``.

    Each cell holds the fraction of mask-on pixels it covers.
    """
    h, w = extents
    if h <= 0 or w <= 0:
        raise ParameterError(f"target extents must be positive, got {extents}")
    m = _grid(mask).astype(np.float64)
    ry = _overlap_matrix(h, m.shape[-2])
    rx = _overlap_matrix(w, m.shape[-1])
    hm, wm = m.shape[-2:]
    if hm % h == 0 and wm % w == 0:
        lead = m.shape[:-2]
        return m.reshape(lead + (h, hm // h, w, wm // w)).mean(axis=(-3, -1))
    return ry @ m @ rx.T


@dataclass(frozen=True)
class DegradeConfig:
    erosion_iters: int = 2
    cutout_radius: float = 6.0
    blobs: int = 2
    blob_radius: tuple = (4.0, 7.0)


def _disc(shape, cy, cx, r):
    yy, xx = np.ogrid[:shape[0], :shape[1]]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def degrade_mask(mask, severity, seed, config: DegradeConfig = DegradeConfig()):
    """Simulate segmentation failure.

    With probability ``severity`` the manipulator is eroded and a disc of it
    cut out; independently with probability ``severity`` background discs
    leak into the mask.  Severity 0 returns the input unchanged.
    """
    if not 0.0 <= severity <= 1.0:
        raise ParameterError(f"severity must lie in [0, 1], got {severity}")
    g = _grid(mask).astype(bool)
    if g.ndim != 2:
        raise ShapeError(f"degrade_mask expects a 2-D mask, got {g.shape}")
    rng = np.random.default_rng(seed)
    u_miss, u_leak = rng.random(2)
    out = g.copy()
    if severity > 0 and u_miss < severity and out.any():
        out = ndimage.binary_erosion(out, iterations=config.erosion_iters)
        ys, xs = np.nonzero(g)
        k = int(rng.integers(len(ys)))
        out &= ~_disc(g.shape, ys[k], xs[k], config.cutout_radius)
    if severity > 0 and u_leak < severity:
        for _ in range(config.blobs):
            cy, cx = rng.uniform(0, g.shape[0]), rng.uniform(0, g.shape[1])
            out |= _disc(g.shape, cy, cx, rng.uniform(*config.blob_radius))
    if not isinstance(mask, RobotMask):
        return out.astype(np.uint8)
    return RobotMask(out.astype(np.uint8), "degraded")


def iou(a, b):
    a, b = _grid(a).astype(bool), _grid(b).astype(bool)
    union = np.count_nonzero(a | b)
    return 1.0 if union == 0 else np.count_nonzero(a & b) / union
