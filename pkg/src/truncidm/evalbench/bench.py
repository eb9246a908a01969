"""Benchmark orchestration: per-variant, per-split metric reports and the
mask-quality study."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from ..masking import degrade_mask
from ..pipeline import predict_episode, train, variant
from .metrics import ThresholdSpec, acc_per_dim, l1_distance, strict_acc
from .splits import SplitRule, split_by_truncation

OCC_EDGES = np.round(np.arange(0.0, 0.3001, 0.025), 4)
SPLIT_ORDER = ("light", "heavy")


@dataclass
class MetricReport:
    variant: str
    split: str
    acc: float
    acc_per_dim: float
    l1: float
    n: int
    bins: list = field(default_factory=list)  # (bin centre, mean l1, count)
    config: dict = field(default_factory=dict)

    def row(self):
        return [self.variant, self.split, self.acc, self.acc_per_dim, self.l1, self.n]


@dataclass
class Samples:
    pred: np.ndarray
    gt: np.ndarray
    occ: np.ndarray
    dim_kinds: list


def collect(model, episodes, ablation=None, mask_fn=None):
    """Predict every causal window of every episode, in episode then time order."""
    if not episodes:
        raise DataError("evaluation split is empty")
    preds, gts, occs = [], [], []
    for e, rec in enumerate(episodes):
        masks = rec.masks if mask_fn is None else mask_fn(e, rec)
        preds.append(predict_episode(model, rec.frames, masks, ablation))
        gts.append(rec.actions)
        occs.append(rec.occupancy)
    kinds = list(episodes[0].dim_kinds) or list(model.dim_kinds)
    return Samples(np.concatenate(preds), np.concatenate(gts), np.concatenate(occs), kinds)


def _bins(occ, err):
    idx = np.clip(np.digitize(occ, OCC_EDGES) - 1, 0, len(OCC_EDGES) - 2)
    out = []
    for b in range(len(OCC_EDGES) - 1):
        sel = idx == b
        if sel.any():
            out.append((float((OCC_EDGES[b] + OCC_EDGES[b + 1]) / 2), float(err[sel].mean()), int(sel.sum())))
    return out


def summarize(samples: Samples, name, spec=ThresholdSpec(), rule=SplitRule(), config=None):
    """One report per truncation split, light first."""
    light, heavy = split_by_truncation(samples.occ, rule)
    out = []
    for split, idx in zip(SPLIT_ORDER, (light, heavy)):
        if len(idx) == 0:
            out.append(MetricReport(name, split, float("nan"), float("nan"), float("nan"), 0, [], config or {}))
            continue
        p, g = samples.pred[idx], samples.gt[idx]
        err = l1_distance(p, g)
        out.append(MetricReport(
            name, split,
            float(np.mean(strict_acc(p, g, samples.dim_kinds, spec))),
            float(np.mean(acc_per_dim(p, g, samples.dim_kinds, spec))),
            float(np.mean(err)), int(len(idx)), _bins(samples.occ[idx], err), config or {}))
    return out


def run_benchmark(models, episodes, spec=ThresholdSpec(), rule=SplitRule()):
    """Evaluate ``{variant name: ModelParams}`` on identical windows.

    Each model runs with the ablation it was trained under.
    """
    if not episodes:
        raise DataError("evaluation split is empty")
    reports = []
    for name, model in models.items():
        s = collect(model, episodes)
        reports += summarize(s, name, spec, rule, model.config.to_dict())
    return reports


def train_variants(train_eps, cfg, variants, progress=None):
    models = {}
    for name in variants:
        variant(name)
        m, _ = train(train_eps, cfg.with_variant(name),
                     None if progress is None else (lambda e, l, n=name: progress(n, e, l)))
        models[name] = m
    return models


def run_ablation(train_eps, eval_eps, cfg, variants, spec=ThresholdSpec(), rule=SplitRule(), progress=None):
    """Train every variant from the shared config and seed, then benchmark."""
    if not eval_eps:
        raise DataError("evaluation split is empty")
    models = train_variants(train_eps, cfg, variants, progress)
    return run_benchmark(models, eval_eps, spec, rule), models


def degraded_masks(episodes, severity, seed=0):
    """Mask stacks with every frame degraded under its own seed."""
    return [np.stack([degrade_mask(m, severity, [seed, e, t]) for t, m in enumerate(rec.masks)])
            for e, rec in enumerate(episodes)]


def mask_quality_study(model, episodes, severities, spec=ThresholdSpec(), rule=SplitRule(), seed=0):
    """Clean vs degraded reports per severity on identical windows.

    Returns ``[(severity, clean reports, degraded reports), ...]``; the split
    label of each window always comes from the clean occupancy.
    """
    clean = summarize(collect(model, episodes), "clean", spec, rule)
    out = []
    for sev in severities:
        if sev == 0:
            deg = summarize(collect(model, episodes), "degraded", spec, rule)
        else:
            masks = degraded_masks(episodes, sev, seed)
            deg = summarize(collect(model, episodes, mask_fn=lambda e, rec: masks[e]), "degraded", spec, rule)
        for r in deg:
            r.variant = f"degraded@{sev:g}"
        out.append((float(sev), clean, deg))
    return out
