"""Acceptance checks, one pass/fail line per criterion.

Run ``pytest tests/test_acceptance.py -s`` (lines are printed even without
``-s``) or ``python tests/test_acceptance.py``.  The synthetic trend run
(criterion 5) takes up to half an hour on one core; set
``TRUNCIDM_SKIP_TREND=1`` to skip it.
"""
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import random_model, small_episodes  # noqa: E402
from truncidm import dfa, tdr  # noqa: E402
from truncidm.cli import main as cli  # noqa: E402
from truncidm.errors import (BadMagicError, DuplicateIdError, FormatError, MissingHeaderError,  # noqa: E402
                             TruncatedError, VersionError)
from truncidm.evalbench import (SplitRule, acc_per_dim, l1_distance, load_episode_index, mask_quality_study,  # noqa: E402
                                run_ablation, save_episode_index, split_by_truncation, strict_acc)
from truncidm.evalbench.dataset import assign_splits, episode_seed  # noqa: E402
from truncidm.fmap import load_fmap, save_fmap  # noqa: E402
from truncidm.numcore import Tensor, bilinear_sample, conv2d, gradcheck, identity_grid, softmax  # noqa: E402
from truncidm.pipeline import (PipelineConfig, fit_norm_stats, forward_windows, infer, init_params,  # noqa: E402
                               load_model, predict_episode, save_model, train)
from truncidm.pipeline.model import ModelParams, as_tensors  # noqa: E402
from truncidm.synthworld import WorldConfig, generate_episode  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
TREND_CONFIG = ROOT / "configs" / "trend.json"


def say(line):
    """Print past pytest's capture so progress and verdicts always show."""
    capman = getattr(say, "capman", None)
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print(line, flush=True)
    else:
        print(line, flush=True)


def verdict(n, title, ok, detail=""):
    say(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title}" + (f" ({detail})" if detail else ""))
    return ok


@pytest.fixture(autouse=True)
def _uncaptured_printing(request):
    say.capman = request.config.pluginmanager.getplugin("capturemanager")
    yield
    say.capman = None


# ---------------------------------------------------------------- 1. gradients

def _grad_cases():
    """``name -> callable(seed) -> relative error`` for every differentiable op."""
    cases = {}

    def conv(seed):
        r = np.random.default_rng(seed)
        stride, pad = int(r.integers(1, 3)), int(r.integers(0, 2))
        x, k, b = r.normal(size=(2, 2, 5, 5)), r.normal(size=(3, 2, 3, 3)), r.normal(size=3)
        probe = r.normal(size=conv2d(Tensor(x), Tensor(k), stride, pad).shape)
        return gradcheck(lambda x, k, b: (conv2d(x, k, stride, pad, b) * probe).sum(), [x, k, b])

    def soft(seed):
        r = np.random.default_rng(seed)
        t = float(r.uniform(0.3, 3.0))
        x, probe = r.normal(size=(3, 5)), r.normal(size=(3, 5))
        return gradcheck(lambda x: (softmax(x, axis=-1, temperature=t) * probe).sum(), [x])

    def bil(seed):
        r = np.random.default_rng(seed)
        fm = r.normal(size=(1, 2, 4, 5))
        # keep sample points off the integer lattice where bilinear weights kink
        coords = identity_grid(4, 5)[None] + r.uniform(-1.4, 1.4, size=(1, 2, 4, 5))
        coords = np.where(np.abs(coords - np.round(coords)) < 0.05, coords + 0.1, coords)
        probe = r.normal(size=(1, 2, 4, 5))
        return gradcheck(lambda f, c: (bilinear_sample(f, c) * probe).sum(), [fm, coords])

    def dext(seed):
        r = np.random.default_rng(seed)
        cfg = dfa.DFAConfig(d_dir=2, taps=3)
        P = dfa.init_dfa(r, cfg, 3, 2)
        x = r.normal(size=(1, 3, 4, 4))
        probe = r.normal(size=dfa.directional_extract(Tensor(x), P, cfg).shape)

        def fn(x, taps, pw, pb):
            p = dict(P, **{"dfa.taps": taps, "dfa.proj.w": pw, "dfa.proj.b": pb})
            return (dfa.directional_extract(x, p, cfg) * probe).sum()

        return gradcheck(fn, [x, P["dfa.taps"], P["dfa.proj.w"], P["dfa.proj.b"]])

    def mpool(seed):
        r = np.random.default_rng(seed)
        x = r.normal(size=(2, 3, 4, 4))
        m = (r.random((2, 4, 4)) < 0.5).astype(float)
        m[:, 0, 0] = 1.0
        probe = r.normal(size=(2, 3))
        return gradcheck(lambda x: (dfa.masked_pool(x, m)[0] * probe).sum(), [x])

    def tfuse(seed):
        r = np.random.default_rng(seed)
        cfg = tdr.TDRConfig(fusion_hidden=3)
        P = tdr.init_fusion(r, cfg, 2)
        P["fuse.conv1.w"] = 0.3 * r.normal(size=P["fuse.conv1.w"].shape)
        P["fuse.conv1.b"] = 0.3 * r.normal(size=3)
        a, b, probe = r.normal(size=(1, 2, 4, 4)), r.normal(size=(1, 2, 4, 4)), r.normal(size=(1, 2, 4, 4))
        names = ["fuse.conv0.w", "fuse.conv1.w", "fuse.conv1.b", "fuse.rho"]

        def fn(x, y, *arrs):
            return (tdr.temporal_fuse(x, y, dict(P, **dict(zip(names, arrs))), cfg) * probe).sum()

        return gradcheck(fn, [a, b] + [P[n] for n in names])

    def treg(seed):
        r = np.random.default_rng(seed)
        cfg = tdr.TDRConfig(window=5, tcn_hidden=4, head_hidden=4)
        P = tdr.init_regressor(r, cfg, 3, 2)
        for k in ("reg.tcn.out.w", "reg.tcn.out.b"):
            P[k] = 0.3 * r.normal(size=P[k].shape)
        z, probe = r.normal(size=(2, 5, 3)), r.normal(size=(2, 2))
        names = ["reg.h0.w", "reg.tcn.in.w", "reg.tcn.l0.w1", "reg.tcn.l3.w0", "reg.tcn.out.w", "reg.rho"]

        def fn(zz, *arrs):
            return (tdr.temporal_regress(zz, dict(P, **dict(zip(names, arrs))), cfg) * probe).sum()

        return gradcheck(fn, [z] + [P[n] for n in names])

    probe_world = WorldConfig.from_dict({"resolution": [16, 16], "length": 4})
    probe_eps = [generate_episode(probe_world, s, length=4) for s in range(2)]

    def pipe(seed):
        r = np.random.default_rng(seed)
        cfg = PipelineConfig.from_dict({
            "encoder": {"resolution": 16, "patch": 4, "channels": 3, "context_dim": 2, "hidden": [2, 3]},
            "dfa": {"d_dir": 2, "taps": 3},
            "tdr": {"window": 3, "fusion_hidden": 2, "tcn_hidden": 3, "head_hidden": 3}})
        P = init_params(cfg, 8, seed)
        for k, v in P.items():
            if not np.any(v):
                P[k] = 0.2 * r.normal(size=v.shape)
        ep = probe_eps[seed % 2]
        frames, masks = ep.frames[None, 1:4], ep.masks[None, 1:4]
        probe = r.normal(size=(1, 8))
        names = ["enc.conv2.w", "dfa.U", "dfa.taps", "gap.w", "fuse.conv1.w", "fuse.rho", "reg.h1.w",
                 "reg.tcn.l1.w0", "reg.rho"]

        def fn(*arrs):
            p = dict(as_tensors(P), **{n: a for n, a in zip(names, arrs)})
            return (forward_windows(p, cfg, frames, masks) * probe).sum()

        return gradcheck(fn, [P[n] for n in names])

    cases.update(conv2d=conv, softmax=soft, bilinear_sample=bil, directional_extract=dext,
                 masked_pool=mpool, temporal_fuse=tfuse, temporal_regress=treg, pipeline_probe=pipe)
    return cases


def test_criterion_1_gradient_suite():
    t0 = time.time()
    worst = {}
    for name, case in _grad_cases().items():
        worst[name] = max(case(seed) for seed in range(20))
    elapsed = time.time() - t0
    ok = all(v < 1e-4 for v in worst.values()) and elapsed < 120
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.0f}s"
    assert verdict(1, "finite-difference gradient suite, 8 ops x 20 instances", ok, detail)


# ---------------------------------------------------------------- 2. identities

def test_criterion_2_identities():
    r = np.random.default_rng(0)
    checks = {}
    # aggregation: uniform weights scale every block by 1/A
    cfg = dfa.DFAConfig(d_dir=3)
    P = dfa.init_dfa(r, cfg, 4, 3)
    x, m, g = r.normal(size=(2, 4, 5, 5)), (r.random((2, 5, 5)) < 0.6).astype(float), r.normal(size=(2, 3))
    a = cfg.num_dirs
    z, _ = dfa.dfa_descriptor(Tensor(x), m, Tensor(g), P, cfg, weights=np.full((2, a), 1.0 / a))
    ext = dfa.directional_extract(Tensor(x), P, cfg).data.reshape(2, a * 3, 5, 5)
    pooled = dfa.masked_pool(ext, m)[0].data.reshape(2, a, 3)
    checks["uniform 1/A"] = np.abs(z.data.reshape(2, a, 3) - pooled / a).max() <= 1e-10
    perm = [2, 0, 3, 1]
    cfg_p = dfa.DFAConfig(angles_deg=tuple(cfg.angles_deg[i] for i in perm), d_dir=3)
    Pp = {k: v[:, perm] if k == "dfa.taps" else v[perm] for k, v in P.items()}
    z1, _ = dfa.dfa_descriptor(Tensor(x), m, Tensor(g), P, cfg)
    z2, _ = dfa.dfa_descriptor(Tensor(x), m, Tensor(g), Pp, cfg_p)
    checks["block permutation"] = np.abs(z2.data.reshape(2, a, 3) - z1.data.reshape(2, a, 3)[:, perm]).max() <= 1e-10
    # fusion reductions, bit-exact
    prev, cur = Tensor(r.normal(size=(2, 3, 4, 4))), Tensor(r.normal(size=(2, 3, 4, 4)))
    off, gate = Tensor(r.normal(size=(2, 2, 4, 4))), Tensor(r.random((2, 1, 4, 4)))
    checks["beta=0 -> current"] = np.array_equal(tdr.fuse_with(prev, cur, off, gate, Tensor(0.0)).data, cur.data)
    checks["gate=0 -> current"] = np.array_equal(
        tdr.fuse_with(prev, cur, off, Tensor(np.zeros((2, 1, 4, 4))), Tensor(0.8)).data, cur.data)
    checks["gate=1, beta=1, no offset -> previous"] = np.array_equal(
        tdr.fuse_with(prev, cur, Tensor(np.zeros((2, 2, 4, 4))), Tensor(np.ones((2, 1, 4, 4))), Tensor(1.0)).data,
        prev.data)
    # regression reduction, bit-exact
    rcfg = tdr.TDRConfig()
    RP = tdr.init_regressor(r, rcfg, 6, 3)
    RP["reg.tcn.out.w"] = r.normal(size=RP["reg.tcn.out.w"].shape)
    zh = Tensor(r.normal(size=(2, 8, 6)))
    checks["beta_tcn=0 -> h(z_t)"] = np.array_equal(tdr.temporal_regress(zh, RP, rcfg, beta_tcn=0.0).data,
                                                    tdr.base_head(Tensor(zh.data[:, -1]), RP).data)
    failed = [k for k, v in checks.items() if not v]
    assert verdict(2, "aggregation, fusion and regression identities", not failed,
                   "all hold" if not failed else "failed: " + ", ".join(failed))


# ---------------------------------------------------------------- 3. causality

def test_criterion_3_causality_and_statelessness():
    eps = small_episodes(2, length=10)
    model = random_model(PipelineConfig.from_dict({"tdr": {"window": 4}}), eps)
    ep = eps[0]
    base = predict_episode(model, ep.frames, ep.masks)
    causal = True
    for t in (0, 3, 7):
        f, m = ep.frames.copy(), ep.masks.copy()
        f[t + 1:] = np.random.default_rng(t).integers(0, 256, size=f[t + 1:].shape, dtype=np.uint8)
        m[t + 1:] = 1 - m[t + 1:]
        causal &= np.array_equal(predict_episode(model, f, m)[:t + 1], base[:t + 1])
    w = (ep.frames[2:6], ep.masks[2:6])
    stateless = np.array_equal(infer(model, *w), infer(model, *w))
    infer(model, eps[1].frames[:4], eps[1].masks[:4])
    stateless &= np.array_equal(infer(model, *w), infer(model, *w))
    rf = tdr.tcn_receptive_field([1, 2, 4, 8], 2)
    ok = causal and stateless and rf == 16
    assert verdict(3, "causal, stateless inference; TCN receptive field", ok,
                   f"causal={causal}, stateless={stateless}, receptive field={rf}")


# ---------------------------------------------------------------- 4. metrics

def test_criterion_4_metric_oracles():
    kinds = ["rotation"] * 6 + ["gripper"] * 2
    th = np.array([0.1] * 6 + [0.5] * 2)
    r = np.random.default_rng(4)
    pred = r.normal(scale=0.2, size=(1000, 8))
    gt = pred + r.normal(scale=0.1, size=(1000, 8)) * np.where(r.random((1000, 1)) < 0.5, 0.3, 1.5)
    sa, apd, l1 = strict_acc(pred, gt, kinds), acc_per_dim(pred, gt, kinds), l1_distance(pred, gt)
    worst = 0.0
    for i in range(1000):
        ok_dims = [abs(pred[i, d] - gt[i, d]) <= th[d] for d in range(8)]
        worst = max(worst, abs(sa[i] - float(all(ok_dims))), abs(apd[i] - sum(ok_dims) / 8),
                    abs(l1[i] - sum(abs(pred[i, d] - gt[i, d]) for d in range(8)) / 8))
    ordered = bool(np.all(sa <= apd))
    occ = np.r_[r.random(500) * 0.3, [0.15, 0.15 - 1e-12, 0.15 + 1e-12, 0.0, 1.0]]
    light, heavy = split_by_truncation(occ, SplitRule(0.15))
    partition = (sorted(np.r_[light, heavy].tolist()) == list(range(len(occ)))
                 and not set(light) & set(heavy) and np.all(occ[light] >= 0.15) and np.all(occ[heavy] < 0.15))
    ok = worst <= 1e-12 and ordered and partition and strict_acc(pred[:0], gt[:0], kinds).size == 0
    assert verdict(4, "metric oracles on 1000 pairs; split partition at 0.15", ok,
                   f"max deviation {worst:.1e}, acc<=acc_per_dim {ordered}, partition {partition}")


# ---------------------------------------------------------------- 5. trend

def trend_settings():
    return json.loads(TREND_CONFIG.read_text())


def run_trend(settings, seeds, log=say):
    """Train all five variants per seed on a fresh 60/20 benchmark; mean heavy-split metrics."""
    world = WorldConfig.from_dict(settings["world"])
    n_train, n_eval = settings["train_episodes"], settings["eval_episodes"]
    rows = {}
    for seed in seeds:
        t0 = time.time()
        eps = [generate_episode(world, episode_seed(seed, i), f"ep{i:04d}") for i in range(n_train + n_eval)]
        split = assign_splits(n_train + n_eval, n_eval / (n_train + n_eval), seed)
        tr = [e for e, s in zip(eps, split) if s == "train"]
        ev = [e for e, s in zip(eps, split) if s == "eval"]
        cfg = PipelineConfig.from_dict(dict(settings["pipeline"], seed=seed))
        reports, _ = run_ablation(tr, ev, cfg, settings["variants"])
        for rep in reports:
            rows.setdefault((rep.variant, rep.split), []).append((rep.l1, rep.acc))
        log(f"    seed {seed}: " + ", ".join(f"{r.variant} {r.l1:.4f}/{r.acc:.3f}" for r in reports
                                          if r.split == "heavy") + f" ({time.time() - t0:.0f}s)")
    return {k: (float(np.mean([v[0] for v in vals])), float(np.mean([v[1] for v in vals])))
            for k, vals in rows.items()}


@pytest.mark.skipif(os.environ.get("TRUNCIDM_SKIP_TREND") == "1", reason="TRUNCIDM_SKIP_TREND=1")
def test_criterion_5_synthetic_trend():
    settings = trend_settings()
    t0 = time.time()
    means = run_trend(settings, settings["seeds"], log=say)
    elapsed = time.time() - t0
    heavy = {v: means[(v, "heavy")] for v in settings["variants"]}
    full_l1, full_acc = heavy["full"]
    lower = {v: full_l1 < heavy[v][0] for v in ("no_dfa", "no_tdr", "no_refine")}
    acc_gap = full_acc > heavy["no_refine"][1]
    ok = all(lower.values()) and acc_gap and elapsed <= 1800
    detail = ", ".join(f"{v} L1 {l1:.4f} acc {acc:.3f}" for v, (l1, acc) in heavy.items()) + f"; {elapsed:.0f}s"
    assert verdict(5, "heavy-split ordering over 3 seeds", ok, detail)


# ---------------------------------------------------------------- 6. mask quality

def test_criterion_6_mask_quality(tmp_path):
    settings = trend_settings()
    world = WorldConfig.from_dict(settings["world"])
    n = settings["train_episodes"] + settings["eval_episodes"]
    eps = [generate_episode(world, episode_seed(0, i), f"ep{i:04d}") for i in range(n)]
    split = assign_splits(n, settings["eval_episodes"] / n, 0)
    tr = [e for e, s in zip(eps, split) if s == "train"]
    ev = [e for e, s in zip(eps, split) if s == "eval"]
    model, _ = train(tr, PipelineConfig.from_dict(dict(settings["pipeline"], seed=0)))
    (_, clean, deg), = mask_quality_study(model, ev, [0.5])
    parts = []
    ok = True
    for c, d in zip(clean, deg):
        good = c.n > 0 and c.l1 <= d.l1 <= 1.5 * c.l1
        ok &= good
        parts.append(f"{c.split} {c.l1:.4f} -> {d.l1:.4f} (x{d.l1 / c.l1:.3f})")
    assert verdict(6, "severity 0.5 degraded L1 within [1, 1.5] x clean", ok, "; ".join(parts))


# ---------------------------------------------------------------- 7. serialization

def test_criterion_7_serialization(tmp_path):
    checks = {}
    model = random_model()
    save_model(model, tmp_path / "m")
    back = load_model(tmp_path / "m")
    ep = small_episodes(1, length=5)[0]
    checks["model tensors"] = all(np.array_equal(back.tensors[k].data, t.data) for k, t in model.tensors.items())
    checks["model outputs"] = np.array_equal(predict_episode(back, ep.frames, ep.masks),
                                             predict_episode(model, ep.frames, ep.masks))
    r = np.random.default_rng(7)
    arrays = [r.normal(size=(3, 4, 5)), r.normal(size=(2, 3)).astype(np.float32), r.integers(0, 256, (4, 4, 3),
                                                                                                dtype=np.uint8)]
    ok = True
    for i, a in enumerate(arrays):
        save_fmap(a, tmp_path / f"a{i}.fmap")
        b = load_fmap(tmp_path / f"a{i}.fmap")
        ok &= b.dtype == a.dtype and np.array_equal(a, b)
    checks["fmap"] = ok
    rows = [(f"e{i}", "train" if i % 4 else "eval") for i in range(9)]
    save_episode_index(rows, tmp_path / "idx.csv")
    checks["index csv"] = load_episode_index(tmp_path / "idx.csv") == rows

    def raises(exc, fn):
        try:
            fn()
        except exc:
            return True
        except Exception:
            return False
        return False

    good = (tmp_path / "a0.fmap").read_bytes()
    (tmp_path / "magic.fmap").write_bytes(b"XXXX" + good[4:])
    (tmp_path / "short.fmap").write_bytes(good[:-3])
    (tmp_path / "bad.csv").write_text("id,split\n")
    (tmp_path / "dup.csv").write_text("episode_id,split\ne1,train\ne1,eval\n")
    mf = json.loads((tmp_path / "m" / "manifest.json").read_text())
    (tmp_path / "m" / "manifest.json").write_text(json.dumps(dict(mf, version=7)))
    checks["documented errors"] = all([
        raises(BadMagicError, lambda: load_fmap(tmp_path / "magic.fmap")),
        raises(TruncatedError, lambda: load_fmap(tmp_path / "short.fmap")),
        raises(MissingHeaderError, lambda: load_episode_index(tmp_path / "bad.csv")),
        raises(DuplicateIdError, lambda: load_episode_index(tmp_path / "dup.csv")),
        raises(VersionError, lambda: load_model(tmp_path / "m")),
        raises(FormatError, lambda: load_model(tmp_path / "absent")),
    ])
    failed = [k for k, v in checks.items() if not v]
    assert verdict(7, "bit-exact round trips and documented load errors", not failed,
                   "all hold" if not failed else "failed: " + ", ".join(failed))


# ---------------------------------------------------------------- 8. determinism

def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_criterion_8_cli_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"world": {"length": 8, "eval_fraction": 0.5},
                               "pipeline": {"tdr": {"window": 3}, "epochs": 2, "windows_per_episode": 2}}))
    runs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        codes = [cli(["generate", "--config", str(cfg), "--out", str(d / "data"), "--episodes", "4", "--seed", "11"]),
                 cli(["train", "--data", str(d / "data"), "--config", str(cfg), "--out", str(d / "model")]),
                 cli(["eval", "--model", str(d / "model"), "--data", str(d / "data"), "--report",
                      str(d / "report.json")])]
        runs.append((codes, _tree_bytes(d / "data"), _tree_bytes(d / "model"), (d / "report.json").read_bytes()))
    (c0, *a), (c1, *b) = runs
    same = [x == y for x, y in zip(a, b)]
    ok = c0 == c1 == [0, 0, 0] and all(same)
    assert verdict(8, "generate/train/eval byte-identical across two runs", ok,
                   f"exit codes {c0}, identical data/model/report {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-W", "ignore"]))
