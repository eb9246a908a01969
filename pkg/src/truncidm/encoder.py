"""Small trainable patch encoder producing a feature grid and a context vector.

Three strided convolution stages reduce the image to a patch grid.  Each
stage's kernel spans its stride plus ``overlap`` pixels on either side, with
edge-replicated borders so a constant image still maps to a constant grid.
``overlap=0`` gives non-overlapping patches.  The context vector is an
affine map of the mean grid feature plus a learned token.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .fmap import load_fmap, save_fmap  # noqa: F401  (re-exported: the feature-map file format)
from .numcore import Tensor, conv2d, fan_in_uniform, leaky_relu, linear, ops, pad_edge


@dataclass(frozen=True)
class EncoderConfig:
    resolution: int = 64
    patch: int = 8
    channels: int = 32
    context_dim: int = 32
    hidden: tuple = (16, 24)
    overlap: int = 1

    def __post_init__(self):
        if self.resolution % self.patch:
            raise ConfigError(f"resolution {self.resolution} not divisible by patch {self.patch}")
        if self.overlap < 0:
            raise ConfigError("overlap must be non-negative")

    def kernel(self, stride):
        return stride + 2 * self.overlap

    @property
    def grid(self):
        return self.resolution // self.patch

    @property
    def strides(self):
        return stage_strides(self.patch)


def stage_strides(patch):
    """Split ``patch`` into three integer stride factors (largest last)."""
    primes, n, p = [], patch, 2
    while n > 1:
        while n % p == 0:
            primes.append(p)
            n //= p
        p += 1
    stages = [1, 1, 1]
    for f in sorted(primes, reverse=True):
        i = int(np.argmin(stages))
        stages[i] *= f
    return tuple(sorted(stages))


def receptive_field(cfg: EncoderConfig):
    """Input pixels seen by one grid cell along each axis."""
    rf, jump = 1, 1
    for s in cfg.strides:
        rf += (cfg.kernel(s) - 1) * jump
        jump *= s
    return rf


def init_encoder(rng, cfg: EncoderConfig, prefix="enc."):
    chans = (3,) + tuple(cfg.hidden) + (cfg.channels,)
    p = {}
    for i, s in enumerate(cfg.strides):
        cin, cout, k = chans[i], chans[i + 1], cfg.kernel(s)
        p[f"{prefix}conv{i}.w"] = fan_in_uniform(rng, (cout, cin, k, k), cin * k * k)
        p[f"{prefix}conv{i}.b"] = np.zeros(cout)
    p[f"{prefix}ctx.w"] = fan_in_uniform(rng, (cfg.channels, cfg.context_dim), cfg.channels)
    p[f"{prefix}ctx.token"] = np.zeros(cfg.context_dim)
    return p


def encode(frames, params, cfg: EncoderConfig, prefix="enc."):
    """Encode masked frames.

    ``frames`` is a (N, H, W, 3) array in [0, 1] (or a Tensor already laid out
    (N, 3, H, W)).  Returns the (N, C, h, w) feature grid and (N, C_g) context.
    """
    if isinstance(frames, Tensor):
        x = frames
    else:
        arr = np.asarray(frames, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.shape[1:3] != (cfg.resolution, cfg.resolution):
            raise ShapeError(f"frame extents {arr.shape[1:3]} do not match encoder resolution {cfg.resolution}")
        x = Tensor(arr.transpose(0, 3, 1, 2))
    if x.shape[-2:] != (cfg.resolution, cfg.resolution):
        raise ShapeError(f"frame extents {x.shape[-2:]} do not match encoder resolution {cfg.resolution}")
    n_stage = len(cfg.strides)
    for i, s in enumerate(cfg.strides):
        x = conv2d(pad_edge(x, cfg.overlap), params[f"{prefix}conv{i}.w"], stride=s,
                   bias=params[f"{prefix}conv{i}.b"])
        if i < n_stage - 1:
            x = leaky_relu(x)
    pooled = ops.mean(x, axis=(2, 3))
    g = linear(pooled, params[f"{prefix}ctx.w"], params[f"{prefix}ctx.token"])
    return x, g
