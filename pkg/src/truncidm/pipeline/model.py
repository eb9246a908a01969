"""Model assembly: masking -> encoding -> window fusion -> aggregation ->
temporal regression."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import dfa, encoder, tdr
from ..errors import ShapeError
from ..masking import downsample_mask
from ..numcore import Tensor, linear, ops
from .config import Ablation, PipelineConfig
from .norm import NormStats, denormalize_action


def init_params(cfg: PipelineConfig, action_dim, seed):
    """All learnable arrays for every variant, keyed by dotted name."""
    rng = np.random.default_rng([seed, 0xA11])
    ec = cfg.encoder
    z_dim = cfg.dfa.descriptor_dim
    p = {}
    p.update(encoder.init_encoder(rng, ec))
    p.update(dfa.init_dfa(rng, cfg.dfa, ec.channels, ec.context_dim))
    p["gap.w"] = np.asarray(rng.uniform(-1, 1, size=(ec.channels, z_dim)) * np.sqrt(6.0 / ec.channels))
    p["gap.b"] = np.zeros(z_dim)
    p.update(tdr.init_fusion(rng, cfg.tdr, ec.channels))
    p.update(tdr.init_regressor(rng, cfg.tdr, z_dim, action_dim))
    return p


def as_tensors(arrays, requires_grad=False):
    return {k: Tensor(v, requires_grad=requires_grad, name=k) for k, v in arrays.items()}


@dataclass
class ModelParams:
    tensors: dict
    norm: NormStats
    config: PipelineConfig
    dim_kinds: list = field(default_factory=list)
    loss_curve: list = field(default_factory=list)

    @property
    def action_dim(self):
        return self.norm.dim

    def arrays(self):
        return {k: t.data for k, t in self.tensors.items()}


def _frames_to_float(frames, masks):
    x = np.asarray(frames, dtype=np.float64) * (np.asarray(masks, dtype=np.float64)[..., None] / 255.0)
    return x


def frame_features(P, cfg: PipelineConfig, frames, masks, ablation: Ablation):
    """Encode (N, H, W, 3) frames; returns raw grid, context and pooling mask grid."""
    m = np.ones(np.shape(frames)[:-1]) if ablation.mask_off else masks
    x = _frames_to_float(frames, m)
    G, g = encoder.encode(x, P, cfg.encoder)
    h = cfg.encoder.grid
    grid = downsample_mask(np.asarray(m, dtype=np.float64), (h, h))
    return G, g, grid


def descriptors(P, cfg: PipelineConfig, G, g, grid, ablation: Ablation):
    """(N, Z) descriptors; with DFA off, a projected masked average pool."""
    if ablation.dfa_off:
        pooled, _ = dfa.masked_pool(G, grid)
        return linear(pooled, P["gap.w"], P["gap.b"])
    z, _ = dfa.dfa_descriptor(G, grid, g, P, cfg.dfa)
    return z


def _check_stack(frames, masks, what):
    frames = np.asarray(frames)
    masks = np.asarray(masks)
    if frames.ndim != 5 or masks.shape != frames.shape[:-1]:
        raise ShapeError(f"{what} frames {frames.shape} / masks {masks.shape} malformed")
    return frames, masks


def _single_frame(P, cfg, frames, masks, ab):
    """Prediction from frame t alone with the temporal residual switched off."""
    G, g, grid = frame_features(P, cfg, frames, masks, ab)
    z = descriptors(P, cfg, G, g, grid, ab)
    return tdr.temporal_regress(ops.reshape(z, (z.shape[0], 1, z.shape[1])), P, cfg.tdr, beta_tcn=0.0)


def forward_segments(P, cfg: PipelineConfig, frames, masks, valid, ends, ablation=None):
    """Normalised predictions for many causal windows cut from shared segments.

    ``frames`` (S, L, H, W, 3) and ``masks`` (S, L, H, W) hold contiguous
    frames; ``valid`` (S, L) flags real frames (left padding is invalid).
    ``ends`` lists window end positions, each >= K-1, shared by all
    segments.  Every frame is encoded once; the result, shaped (S*m, D) in
    segment-major order, equals running each window separately.
    """
    ab = cfg.ablation if ablation is None else ablation
    frames, masks = _check_stack(frames, masks, "segment")
    s_n, l_n = frames.shape[:2]
    hw = frames.shape[2:4]
    valid = np.ones((s_n, l_n), bool) if valid is None else np.asarray(valid, bool)
    ends = np.asarray(ends, dtype=np.int64).reshape(-1)
    k = cfg.window
    if ab.tdr_off or k == 1:
        return _single_frame(P, cfg, frames[:, ends].reshape((-1,) + frames.shape[2:]),
                             masks[:, ends].reshape((-1,) + hw), ab)
    if ends.min() < k - 1 or ends.max() >= l_n:
        raise ShapeError(f"window ends {ends.min()}..{ends.max()} outside [{k - 1}, {l_n - 1}]")
    if cfg.tdr.cascade:
        idx = ends[:, None] + np.arange(1 - k, 1)
        f = frames[:, idx].reshape((-1, k) + frames.shape[2:])
        m = masks[:, idx].reshape((-1, k) + hw)
        return forward_windows(P, cfg, f, m, valid[:, idx].reshape(-1, k), ab)
    G, g, grid = frame_features(P, cfg, frames.reshape((-1,) + frames.shape[2:]), masks.reshape((-1,) + hw), ab)
    rest = G.shape[1:]
    G5 = ops.reshape(G, (s_n, l_n) + rest)
    g3 = ops.reshape(g, (s_n, l_n, g.shape[-1]))
    grid3 = grid.reshape((s_n, l_n) + grid.shape[1:])
    # fused maps for positions 1..L-1, each from its raw predecessor
    n_pair = s_n * (l_n - 1)
    prev = ops.reshape(G5[:, :-1], (n_pair,) + rest)
    cur = ops.reshape(G5[:, 1:], (n_pair,) + rest)
    pair_valid = (valid[:, :-1] & valid[:, 1:]).reshape(-1)
    fused = tdr.temporal_fuse(prev, cur, P, cfg.tdr, pair_valid=pair_valid)
    z_f = descriptors(P, cfg, fused, ops.reshape(g3[:, 1:], (n_pair, g.shape[-1])),
                      grid3[:, 1:].reshape((n_pair,) + grid.shape[1:]), ab)
    # the first frame of every window stays unfused
    seg = np.repeat(np.arange(s_n), len(ends))
    first = np.tile(ends - k + 1, s_n)
    z_0 = descriptors(P, cfg, G5[seg, first], g3[seg, first], grid3[seg, first], ab)
    table = ops.concat([z_f, z_0], axis=0)
    # position p >= 1 of segment i lives at row i*(L-1) + p-1 of z_f
    steps = first[:, None] + np.arange(1, k)
    rows = np.concatenate([n_pair + np.arange(len(seg))[:, None], seg[:, None] * (l_n - 1) + steps - 1], axis=1)
    hist = table[rows]
    win_valid = valid[seg[:, None], first[:, None] + np.arange(k)]
    if not win_valid.all():
        hist = hist * Tensor(win_valid[..., None].astype(np.float64))
    return tdr.temporal_regress(hist, P, cfg.tdr)


def forward_windows(P, cfg: PipelineConfig, frames, masks, valid=None, ablation=None):
    """Normalised action prediction for a batch of causal windows.

    ``frames`` (B, K, H, W, 3) uint8, ``masks`` (B, K, H, W) and ``valid``
    (B, K) marking real (non-padding) frames; the last frame is time t.
    """
    ab = cfg.ablation if ablation is None else ablation
    frames, masks = _check_stack(frames, masks, "window")
    b, k = frames.shape[:2]
    valid = np.ones((b, k), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    if ab.tdr_off or k == 1:
        return _single_frame(P, cfg, frames[:, -1], masks[:, -1], ab)
    if not cfg.tdr.cascade:
        return forward_segments(P, cfg, frames, masks, valid, [k - 1], ab)
    hw = frames.shape[2:4]
    G, g, grid = frame_features(P, cfg, frames.reshape((b * k,) + frames.shape[2:]),
                                masks.reshape((b * k,) + hw), ab)
    rest = G.shape[1:]
    G = tdr.fuse_window(ops.reshape(G, (b, k) + rest), P, cfg.tdr, valid=valid)
    G = ops.reshape(G, (b * k,) + rest)
    z = descriptors(P, cfg, G, g, grid, ab)
    z = ops.reshape(z, (b, k, z.shape[-1]))
    if not valid.all():
        z = z * Tensor(valid[..., None].astype(np.float64))
    return tdr.temporal_regress(z, P, cfg.tdr)


def pad_window(frames, masks, window):
    """Left-pad up to ``window`` frames with zeros; returns arrays plus validity."""
    frames = np.asarray(frames)
    masks = np.asarray(masks)
    n = frames.shape[0]
    if n > window:
        frames, masks, n = frames[-window:], masks[-window:], window
    pad = window - n
    valid = np.r_[np.zeros(pad, dtype=bool), np.ones(n, dtype=bool)]
    if pad:
        frames = np.concatenate([np.zeros((pad,) + frames.shape[1:], frames.dtype), frames])
        masks = np.concatenate([np.zeros((pad,) + masks.shape[1:], masks.dtype), masks])
    return frames, masks, valid


def infer(model: ModelParams, frames, masks, ablation=None):
    """Raw action for the last frame of a causal window of <= K frames."""
    cfg = model.config
    f, m, v = pad_window(frames, masks, cfg.window)
    out = forward_windows(model.tensors, cfg, f[None], m[None], v[None], ablation)
    return denormalize_action(out.data[0], model.norm)


def predict_episode(model: ModelParams, frames, masks, ablation=None):
    """Raw predictions (T, D) for every causal window of one episode.

    The episode is treated as a single left-padded segment, so each frame is
    encoded once; agrees with per-window :func:`infer` to rounding.
    """
    cfg = model.config
    frames = np.asarray(frames)
    masks = np.asarray(masks)
    t_len = frames.shape[0]
    k = cfg.window
    f, m, v = pad_window(frames, masks, t_len + k - 1)
    ends = np.arange(k - 1, k - 1 + t_len)
    out = forward_segments(model.tensors, cfg, f[None], m[None], v[None], ends, ablation)
    return denormalize_action(out.data, model.norm)
