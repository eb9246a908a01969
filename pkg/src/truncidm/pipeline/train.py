from __future__ import annotations

import logging

import numpy as np

from ..errors import DataError, NumericError, TrainingError
from ..numcore import Adam, GradTape, Tensor, backward, ops
from .config import PipelineConfig
from .model import ModelParams, as_tensors, forward_segments, init_params
from .norm import fit_norm_stats, normalize_action

log = logging.getLogger(__name__)


def shift_view(frames, masks, dy, dx):
    """Translate frames (..., H, W, 3) and masks (..., H, W) together, zero fill."""
    f = np.zeros_like(frames)
    m = np.zeros_like(masks)
    h, w = masks.shape[-2:]
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    f[..., yd, xd, :] = frames[..., ys, xs, :]
    m[..., yd, xd] = masks[..., ys, xs]
    return f, m


def segment_slices(rec, first_end, n_windows, window):
    """Frames, masks and validity covering windows ending at
    ``first_end .. first_end + n_windows - 1``, left-padded before frame 0."""
    start = first_end - window + 1
    length = window + n_windows - 1
    frames = np.zeros((length,) + rec.frames.shape[1:], np.uint8)
    masks = np.zeros((length,) + rec.masks.shape[1:], np.uint8)
    lo = max(start, 0)
    hi = first_end + n_windows
    frames[lo - start:] = rec.frames[lo:hi]
    masks[lo - start:] = rec.masks[lo:hi]
    valid = np.arange(start, hi) >= 0
    return frames, masks, valid


def segment_length(cfg: PipelineConfig, t_len):
    return min(cfg.segment_windows, t_len)


def sample_segments(episodes, cfg: PipelineConfig, rng):
    """Shuffled (episode, first window end) pairs for one epoch.

    Each episode contributes ``ceil(windows_per_episode / m)`` runs of ``m``
    consecutive windows whose first end time is uniform over valid starts.
    """
    items = []
    for e, rec in enumerate(episodes):
        m = segment_length(cfg, len(rec))
        n_seg = -(-cfg.windows_per_episode // m)
        for t in rng.integers(0, len(rec) - m + 1, size=n_seg):
            items.append((e, int(t)))
    order = rng.permutation(len(items))
    return [items[i] for i in order]


def build_batch(episodes, items, cfg: PipelineConfig, rng=None):
    """Stack segments; returns frames, masks, validity, window ends and targets."""
    window = 1 if cfg.ablation.tdr_off else cfg.window
    m = min(segment_length(cfg, len(episodes[e])) for e, _ in items)
    fs, ms, vs, ys = [], [], [], []
    for e, t in items:
        rec = episodes[e]
        f, mk, v = segment_slices(rec, t, m, window)
        if rng is not None and cfg.augment_shift > 0:
            dy, dx = (int(u) for u in rng.integers(-cfg.augment_shift, cfg.augment_shift + 1, size=2))
            f, mk = shift_view(f, mk, dy, dx)
        fs.append(f)
        ms.append(mk)
        vs.append(v)
        ys.append(rec.actions[t:t + m])
    ends = np.arange(window - 1, window - 1 + m)
    return np.stack(fs), np.stack(ms), np.stack(vs), ends, np.concatenate(ys)


def l1_loss(pred, target):
    return ops.mean(ops.abs(pred - Tensor(target)))


def batch_loss(P, cfg, norm, frames, masks, valid, ends, targets):
    pred = forward_segments(P, cfg, frames, masks, valid, ends)
    return l1_loss(pred, normalize_action(targets, norm))


def train(episodes, cfg: PipelineConfig, progress=None):
    """Fit a model on training episodes; returns (ModelParams, per-epoch loss curve).

    The loss is the mean absolute error in normalised action space.  Runs are
    deterministic given ``cfg.seed``.
    """
    if not episodes:
        raise DataError("training split is empty")
    dim_kinds = list(episodes[0].dim_kinds)
    norm = fit_norm_stats(np.concatenate([r.actions for r in episodes]))
    P = as_tensors(init_params(cfg, norm.dim, cfg.seed), requires_grad=True)
    opt = Adam(lr=cfg.lr)
    rng = np.random.default_rng([cfg.seed, 0xDA7A])
    per_batch = max(1, cfg.batch_size // cfg.segment_windows)
    curve = []
    for epoch in range(cfg.epochs):
        items = sample_segments(episodes, cfg, rng)
        losses = []
        for i in range(0, len(items), per_batch):
            batch = build_batch(episodes, items[i:i + per_batch], cfg, rng)
            try:
                with GradTape() as tape:
                    loss = batch_loss(P, cfg, norm, *batch)
                grads = backward(tape, loss)
            except NumericError as e:
                raise TrainingError(f"training diverged in epoch {epoch}: {e}", epoch) from None
            P = opt.step(P, {t.name: g for t, g in grads.items()})
            losses.append(loss.item())
        mean_loss = float(np.mean(losses))
        if not np.isfinite(mean_loss):
            raise TrainingError(f"training diverged in epoch {epoch}: loss {mean_loss}", epoch)
        curve.append(mean_loss)
        log.info("epoch %d loss %.5f", epoch, mean_loss)
        if progress is not None:
            progress(epoch, mean_loss)
    model = ModelParams({n: Tensor(t.data, name=n) for n, t in P.items()}, norm, cfg, dim_kinds, curve)
    return model, curve
