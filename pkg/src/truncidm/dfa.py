"""Directional feature aggregation.

For each analysis angle an oriented line filter (L taps bilinearly sampled
along the angle, one tap vector per channel) is run over the fused feature
grid, projected to ``d_dir`` channels with a leaky rectifier, mask-pooled,
scaled by a softmax weight derived from the global context, and the scaled
blocks are concatenated in angle order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError
from .numcore import (Tensor, bilinear_matrix, fan_in_uniform, leaky_relu, matmul, ops, resample,
                      softmax, transpose)

EMPTY_EPS = 1e-9


@dataclass(frozen=True)
class DFAConfig:
    angles_deg: tuple = (0.0, 45.0, 90.0, 135.0)
    taps: int = 5
    d_dir: int = 32
    temperature: float = 1.0
    slope: float = 0.01

    def __post_init__(self):
        if len(self.angles_deg) == 0:
            raise ConfigError("direction bank needs at least one angle")
        if any(not 0.0 <= a < 180.0 for a in self.angles_deg):
            raise ConfigError("angles must lie in [0, 180)")
        if len(set(self.angles_deg)) != len(self.angles_deg):
            raise ConfigError("angles must be pairwise distinct")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")

    @property
    def num_dirs(self):
        return len(self.angles_deg)

    @property
    def descriptor_dim(self):
        return self.num_dirs * self.d_dir


def init_dfa(rng, cfg: DFAConfig, channels, context_dim, prefix="dfa."):
    a = cfg.num_dirs
    return {
        f"{prefix}taps": fan_in_uniform(rng, (channels, a, cfg.taps), cfg.taps),
        f"{prefix}proj.w": fan_in_uniform(rng, (a, channels, cfg.d_dir), channels),
        f"{prefix}proj.b": np.zeros((a, 1, cfg.d_dir)),
        f"{prefix}U": fan_in_uniform(rng, (a, context_dim), context_dim),
    }


def line_offsets(angle_deg, taps):
    """(row, col) offsets of the taps of a line centred on the cell."""
    s = np.arange(taps) - (taps - 1) / 2
    th = np.deg2rad(angle_deg)
    return s * np.sin(th), s * np.cos(th)


@lru_cache(maxsize=32)
def sampling_matrix(angles_deg, taps, h, w):
    """Sparse (A*L*h*w, h*w) matrix of every tap position for every cell."""
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    rows, cols = [], []
    for ang in angles_deg:
        dr, dc = line_offsets(ang, taps)
        for k in range(taps):
            rows.append(rr + dr[k])
            cols.append(cc + dc[k])
    coords = np.stack([np.stack(rows), np.stack(cols)])
    return bilinear_matrix(coords, h, w)


def _oriented_lines(fmap, taps, cfg: DFAConfig):
    """(N, C, A, h*w) line-filter responses."""
    n, c, h, w = fmap.shape
    a, L = cfg.num_dirs, cfg.taps
    m = sampling_matrix(tuple(cfg.angles_deg), L, h, w)
    sampled = resample(fmap, m, (a, L, h * w))
    return ops.sum(sampled * ops.reshape(taps, (c, a, L, 1)), axis=3)


def _extract_flat(fmap, params, cfg: DFAConfig, prefix="dfa."):
    """(N, A, h*w, d_dir) directional responses."""
    lines = _oriented_lines(fmap, params[f"{prefix}taps"], cfg)
    y = matmul(transpose(lines, (0, 2, 3, 1)), params[f"{prefix}proj.w"]) + params[f"{prefix}proj.b"]
    return leaky_relu(y, cfg.slope)


def directional_extract(fmap, params, cfg: DFAConfig, prefix="dfa."):
    """Return (N, A, d_dir, h, w) direction-specific feature maps."""
    fmap = _batched(fmap)
    n, c, h, w = fmap.shape
    if params[f"{prefix}taps"].shape[0] != c:
        raise ShapeError(f"direction bank expects {params[prefix + 'taps'].shape[0]} channels, map has {c}")
    y = _extract_flat(fmap, params, cfg, prefix)
    return ops.reshape(transpose(y, (0, 1, 3, 2)), (n, cfg.num_dirs, cfg.d_dir, h, w))


def _batched(fmap):
    if not isinstance(fmap, Tensor):
        fmap = Tensor(fmap)
    if fmap.ndim == 3:
        fmap = ops.reshape(fmap, (1,) + fmap.shape)
    if fmap.ndim != 4:
        raise ShapeError(f"feature map must be (N, C, H, W), got {fmap.shape}")
    return fmap


def pool_weights(mask_grid):
    """Normalised pooling weights (N, h*w) and per-frame empty flags.

    A frame whose mask grid sums below 1e-9 falls back to uniform weights.
    """
    m = np.asarray(mask_grid, dtype=np.float64)
    if m.ndim == 2:
        m = m[None]
    flat = m.reshape(m.shape[0], -1)
    tot = flat.sum(axis=1)
    empty = tot < EMPTY_EPS
    flat = np.where(empty[:, None], 1.0, flat)
    return flat / flat.sum(axis=1, keepdims=True), empty


def masked_pool(fmap, mask_grid):
    """Mask-weighted spatial mean of (N, D, H, W) maps; returns ((N, D), empty flags)."""
    fmap = _batched(fmap)
    n, d, h, w = fmap.shape
    m = np.asarray(mask_grid)
    if m.shape[-2:] != (h, w):
        raise ShapeError(f"mask grid {m.shape} does not match map extents {(h, w)}")
    wts, empty = pool_weights(m)
    wts = np.broadcast_to(wts, (n, h * w))
    pooled = matmul(ops.reshape(fmap, (n, d, h * w)), Tensor(wts[:, :, None]))
    return ops.reshape(pooled, (n, d)), empty


def context_weights(g, U, temperature=1.0):
    """softmax(U g / temperature) per row of ``g`` (N, C_g) -> (N, A)."""
    g = g if isinstance(g, Tensor) else Tensor(g)
    U = U if isinstance(U, Tensor) else Tensor(U)
    if g.shape[-1] != U.shape[-1]:
        raise ShapeError(f"context dim {g.shape[-1]} does not match projection columns {U.shape[-1]}")
    logits = matmul(g, transpose(U, (1, 0))) if g.ndim == 2 else matmul(U, g)
    return softmax(logits, temperature)


def dfa_descriptor(fmap, mask_grid, g, params, cfg: DFAConfig, prefix="dfa.", weights=None):
    """Direction-blocked descriptor (N, A*d_dir) and per-frame empty-mask flags.

    Block k is ``w_k * masked_pool(extract_k(fmap))``.  ``weights`` overrides
    the context-derived directional weights when given.
    """
    fmap = _batched(fmap)
    n, c, h, w = fmap.shape
    y = _extract_flat(fmap, params, cfg, prefix)  # (N, A, hw, D)
    wts, empty = pool_weights(np.asarray(mask_grid).reshape(-1, h, w))
    wts = np.broadcast_to(wts, (n, h * w))
    pooled = matmul(Tensor(wts[:, None, None, :]), y)  # (N, A, 1, D)
    if weights is None:
        gg = g if isinstance(g, Tensor) else Tensor(g)
        if gg.ndim == 1:
            gg = ops.reshape(gg, (1, -1))
        weights = context_weights(gg, params[f"{prefix}U"], cfg.temperature)
    weights = weights if isinstance(weights, Tensor) else Tensor(weights)
    scaled = pooled * ops.reshape(weights, (-1, cfg.num_dirs, 1, 1))
    return ops.reshape(scaled, (n, cfg.descriptor_dim)), empty
