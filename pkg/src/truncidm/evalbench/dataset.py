"""Dataset directories: ``episodes.csv`` plus one archive directory per episode."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DataError
from ..synthworld import WorldConfig, generate_episode, load_episode, save_episode
from .index import load_episode_index, save_episode_index

INDEX = "episodes.csv"


def episode_seed(seed, i):
    return int(seed) * 1_000_003 + int(i)


def assign_splits(n, eval_fraction, seed):
    n_eval = int(round(n * eval_fraction))
    if n >= 2:
        n_eval = min(max(n_eval, 1), n - 1)
    order = np.random.default_rng([seed, 0x5B17]).permutation(n)
    splits = ["train"] * n
    for i in order[:n_eval]:
        splits[i] = "eval"
    return splits


def generate_dataset(cfg: WorldConfig, out, episodes, seed, log=None):
    """Render ``episodes`` episodes into ``out`` and write the index."""
    if episodes < 1:
        raise DataError("need at least one episode")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    splits = assign_splits(episodes, cfg.eval_fraction, seed)
    rows = []
    for i in range(episodes):
        eid = f"ep{i:04d}"
        rec = generate_episode(cfg, episode_seed(seed, i), episode_id=eid)
        if rec.warning and log is not None:
            log(f"{eid}: {rec.warning}")
        save_episode(rec, out / eid)
        rows.append((eid, splits[i]))
    save_episode_index(rows, out / INDEX)
    return rows


def load_dataset(root):
    """(train episodes, eval episodes) listed in ``root/episodes.csv``, in index order."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory {root} not found")
    rows = load_episode_index(root / INDEX)
    parts = {"train": [], "eval": []}
    for eid, split in rows:
        d = root / eid
        if not d.is_dir():
            raise DataError(f"{root}: episode directory {eid} listed in index is missing")
        rec = load_episode(d)
        if rec.episode_id != eid:
            raise DataError(f"{d}: meta names episode {rec.episode_id!r}, index says {eid!r}")
        parts[split].append(rec)
    return parts["train"], parts["eval"]
