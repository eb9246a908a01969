"""Temporal refinement: gated warp fusion of adjacent feature maps before
aggregation, and a causal dilated TCN residual on the descriptor history
after it."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .numcore import (Tensor, bilinear_sample, concat, conv2d, fan_in_uniform, identity_grid,
                      leaky_relu, linear, ops, sigmoid, softplus, tanh)


def softplus_inverse(beta):
    return math.log(math.expm1(beta))


@dataclass(frozen=True)
class TDRConfig:
    window: int = 8
    max_offset: float = 2.0
    fusion_hidden: int = 16
    dilations: tuple = (1, 2, 4, 8)
    kernel_width: int = 2
    tcn_hidden: int = 64
    head_hidden: int = 64
    beta_init: float = 0.1
    cascade: bool = False

    def __post_init__(self):
        if self.window < 1:
            raise ParameterError("window length must be >= 1")
        if not self.dilations or self.kernel_width < 1:
            raise ParameterError("TCN needs dilations and a positive kernel width")


def tcn_receptive_field(dilations, kernel_width):
    if len(dilations) == 0 or kernel_width < 1:
        raise ParameterError("need a non-empty dilation list and kernel width >= 1")
    return 1 + (kernel_width - 1) * int(sum(dilations))


def beta(rho):
    """Non-negative residual scale from its unconstrained parameter."""
    return softplus(rho)


# ---------------------------------------------------------------- fusion

def init_fusion(rng, cfg: TDRConfig, channels, prefix="fuse."):
    hdim = cfg.fusion_hidden
    return {
        f"{prefix}conv0.w": fan_in_uniform(rng, (hdim, 2 * channels, 3, 3), 2 * channels * 9),
        f"{prefix}conv0.b": np.zeros(hdim),
        # zero head: identity warp and gate 0.5 at start
        f"{prefix}conv1.w": np.zeros((3, hdim, 3, 3)),
        f"{prefix}conv1.b": np.zeros(3),
        f"{prefix}rho": np.array(softplus_inverse(cfg.beta_init)),
    }


def predict_warp_gate(g_prev, g_cur, params, cfg: TDRConfig, prefix="fuse."):
    """Offsets (N, 2, h, w), bounded by ``max_offset``, and gate (N, 1, h, w) in (0, 1)."""
    if g_prev.shape != g_cur.shape:
        raise ShapeError(f"adjacent feature maps differ in shape: {g_prev.shape} vs {g_cur.shape}")
    x = concat([g_prev, g_cur], axis=1)
    x = leaky_relu(conv2d(x, params[f"{prefix}conv0.w"], padding=1, bias=params[f"{prefix}conv0.b"]))
    raw = conv2d(x, params[f"{prefix}conv1.w"], padding=1, bias=params[f"{prefix}conv1.b"])
    offsets = tanh(raw[:, 0:2]) * cfg.max_offset
    gate = sigmoid(raw[:, 2:3])
    return offsets, gate


def fuse_with(g_prev, g_cur, offsets, gate, beta_fusion):
    """``G_cur + beta * gate * (warp(G_prev) - G_cur)`` for explicit fields.

    Evaluated as the convex blend ``(1 - a) G_cur + a warp(G_prev)`` with
    ``a = beta * gate``, so a = 0 returns G_cur and a = 1 with zero offsets
    returns G_prev without rounding.
    """
    n, c, h, w = g_cur.shape
    coords = ops.add(Tensor(identity_grid(h, w)), offsets)
    warped = bilinear_sample(g_prev, coords)
    a = beta_fusion * gate
    return (1.0 - a) * g_cur + a * warped


def temporal_fuse(g_prev, g_cur, params, cfg: TDRConfig, prefix="fuse.", pair_valid=None):
    """Fuse the preceding map into the current one.

    ``pair_valid`` (N,) zeroes the residual for pairs whose predecessor is
    padding, which leaves those outputs exactly equal to ``g_cur``.
    """
    offsets, gate = predict_warp_gate(g_prev, g_cur, params, cfg, prefix)
    b = beta(params[f"{prefix}rho"])
    if pair_valid is not None:
        gate = gate * Tensor(np.asarray(pair_valid, dtype=np.float64).reshape(-1, 1, 1, 1))
    return fuse_with(g_prev, g_cur, offsets, gate, b)


def fuse_window(window, params, cfg: TDRConfig, prefix="fuse.", valid=None):
    """Fuse a (B, K, C, h, w) window pairwise; the first frame passes through.

    Sources are raw predecessors unless ``cfg.cascade`` is set, in which case
    each frame is fused with the already-fused previous output.
    """
    if window.ndim == 4:
        window = ops.reshape(window, (1,) + window.shape)
    b, k = window.shape[:2]
    if k == 0:
        raise ParameterError("empty window")
    if k == 1:
        return window
    rest = window.shape[2:]
    pv = None
    if valid is not None:
        v = np.asarray(valid, dtype=bool).reshape(b, k)
        pv = (v[:, :-1] & v[:, 1:]).astype(np.float64)
    if cfg.cascade:
        outs = [window[:, 0]]
        for t in range(1, k):
            fused = temporal_fuse(outs[-1], window[:, t], params, cfg, prefix,
                                  None if pv is None else pv[:, t - 1])
            outs.append(fused)
        return ops.stack(outs, axis=1)
    prev = ops.reshape(window[:, :-1], (b * (k - 1),) + rest)
    cur = ops.reshape(window[:, 1:], (b * (k - 1),) + rest)
    fused = temporal_fuse(prev, cur, params, cfg, prefix, None if pv is None else pv.reshape(-1))
    fused = ops.reshape(fused, (b, k - 1) + rest)
    return concat([window[:, 0:1], fused], axis=1)


# ---------------------------------------------------------------- regression

def init_regressor(rng, cfg: TDRConfig, z_dim, action_dim, prefix="reg."):
    hd, th = cfg.head_hidden, cfg.tcn_hidden
    p = {
        f"{prefix}h0.w": fan_in_uniform(rng, (z_dim, hd), z_dim),
        f"{prefix}h0.b": np.zeros(hd),
        f"{prefix}h1.w": fan_in_uniform(rng, (hd, action_dim), hd),
        f"{prefix}h1.b": np.zeros(action_dim),
        f"{prefix}tcn.in.w": fan_in_uniform(rng, (z_dim, th), z_dim),
        f"{prefix}tcn.in.b": np.zeros(th),
        f"{prefix}tcn.out.w": fan_in_uniform(rng, (th, action_dim), th),
        f"{prefix}tcn.out.b": np.zeros(action_dim),
        f"{prefix}rho": np.array(softplus_inverse(cfg.beta_init)),
    }
    for i, _ in enumerate(cfg.dilations):
        fan = th * cfg.kernel_width
        for j in range(cfg.kernel_width):
            p[f"{prefix}tcn.l{i}.w{j}"] = fan_in_uniform(rng, (th, th), fan)
        p[f"{prefix}tcn.l{i}.b"] = np.zeros(th)
    return p


def base_head(z_t, params, prefix="reg."):
    hid = leaky_relu(linear(z_t, params[f"{prefix}h0.w"], params[f"{prefix}h0.b"]))
    return linear(hid, params[f"{prefix}h1.w"], params[f"{prefix}h1.b"])


def _shift(x, d):
    """Delay (B, K, H) sequence by ``d`` steps with zero fill."""
    k = x.shape[1]
    if d == 0:
        return x
    if d >= k:
        return Tensor(np.zeros(x.shape))
    return ops.pad_left(x[:, : k - d], d, axis=1)


def tcn(z_hist, params, cfg: TDRConfig, prefix="reg."):
    """Causal dilated TCN over (B, K, Z); returns the (B, D) output at the last step."""
    x = linear(z_hist, params[f"{prefix}tcn.in.w"], params[f"{prefix}tcn.in.b"])
    for i, d in enumerate(cfg.dilations):
        y = params[f"{prefix}tcn.l{i}.b"]
        for j in range(cfg.kernel_width):
            # tap j reads index t - (width-1-j)*d, so the last tap is the present
            y = y + linear(_shift(x, (cfg.kernel_width - 1 - j) * d), params[f"{prefix}tcn.l{i}.w{j}"])
        x = x + leaky_relu(y)
    return linear(x[:, -1], params[f"{prefix}tcn.out.w"], params[f"{prefix}tcn.out.b"])


def temporal_regress(z_hist, params, cfg: TDRConfig, prefix="reg.", beta_tcn=None):
    """Normalised action for the last step of each (B, K, Z) history.

    ``h(z_t) + beta * tcn(history)``; ``beta_tcn=0`` skips the TCN so the
    result is exactly ``h(z_t)``.
    """
    if z_hist.ndim == 2:
        z_hist = ops.reshape(z_hist, (1,) + z_hist.shape)
    if z_hist.shape[-1] != params[f"{prefix}h0.w"].shape[0]:
        raise ShapeError(f"descriptor dim {z_hist.shape[-1]} does not match head input {params[prefix + 'h0.w'].shape[0]}")
    out = base_head(z_hist[:, -1], params, prefix)
    if beta_tcn is not None and not isinstance(beta_tcn, Tensor) and beta_tcn == 0:
        return out
    b = beta(params[f"{prefix}rho"]) if beta_tcn is None else beta_tcn
    return out + b * tcn(z_hist, params, cfg, prefix)


def pad_history(z_seq, window):
    """Left-pad a (n, Z) numpy descriptor sequence with zeros to ``window`` rows."""
    z = np.asarray(z_seq)
    n = z.shape[0]
    if n >= window:
        return z[n - window:]
    return np.concatenate([np.zeros((window - n,) + z.shape[1:]), z], axis=0)
