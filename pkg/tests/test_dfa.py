import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from truncidm.dfa import (DFAConfig, context_weights, dfa_descriptor, directional_extract, init_dfa,
                          line_offsets, masked_pool, pool_weights)
from truncidm.errors import ConfigError, ShapeError
from truncidm.numcore import Tensor, gradcheck


def identity_bank(cfg, c):
    a = cfg.num_dirs
    taps = np.full((c, a, cfg.taps), 1.0 / cfg.taps)
    proj = np.broadcast_to(np.eye(c), (a, c, c)).copy()
    return {"dfa.taps": taps, "dfa.proj.w": proj, "dfa.proj.b": np.zeros((a, 1, c)), "dfa.U": np.zeros((a, 3))}


def test_config_validation():
    with pytest.raises(ConfigError):
        DFAConfig(angles_deg=())
    with pytest.raises(ConfigError):
        DFAConfig(angles_deg=(0.0, 0.0))
    with pytest.raises(ConfigError):
        DFAConfig(angles_deg=(180.0,))
    with pytest.raises(ConfigError):
        DFAConfig(temperature=0.0)


def test_line_offsets_by_hand():
    dr, dc = line_offsets(90.0, 3)
    assert np.allclose(dr, [-1, 0, 1]) and np.allclose(dc, 0, atol=1e-15)
    dr, dc = line_offsets(0.0, 5)
    assert np.allclose(dc, [-2, -1, 0, 1, 2]) and np.allclose(dr, 0)


def test_constant_input_preserved():
    cfg = DFAConfig(d_dir=3)
    x = np.broadcast_to(np.array([0.5, 2.0, 3.0])[:, None, None], (3, 6, 6)).copy()
    y = directional_extract(x, identity_bank(cfg, 3), cfg).data[0]
    assert y.shape == (4, 3, 6, 6)
    assert np.allclose(y, x[None], atol=1e-12)


def test_vertical_stripe_prefers_vertical_extractor():
    cfg = DFAConfig(d_dir=1)
    x = np.zeros((1, 9, 9))
    x[0, :, 4] = 1.0
    y = directional_extract(x, identity_bank(cfg, 1), cfg).data[0, :, 0]
    assert (y[2, :, 4] > y[0, :, 4]).all()  # 90 deg vs 0 deg


def test_four_maps():
    cfg = DFAConfig()
    P = init_dfa(np.random.default_rng(0), cfg, 8, 4)
    y = directional_extract(np.random.default_rng(1).normal(size=(2, 8, 5, 5)), P, cfg)
    assert y.shape == (2, 4, cfg.d_dir, 5, 5)


def test_masked_pool_examples():
    x = np.random.default_rng(2).normal(size=(3, 4, 5))
    out, empty = masked_pool(x, np.ones((4, 5)))
    assert np.allclose(out.data[0], x.mean(axis=(1, 2)), atol=1e-14) and not empty.any()
    m = np.zeros((4, 5))
    m[2, 3] = 1
    out, _ = masked_pool(x, m)
    assert np.array_equal(out.data[0], x[:, 2, 3])
    with pytest.raises(ShapeError):
        masked_pool(x, np.ones((5, 4)))


def test_masked_pool_summation_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 7, 7))
    m = rng.random((7, 7))
    oracle = np.array([sum(x[c, i, j] * m[i, j] for i in range(7) for j in range(7)) / m.sum() for c in range(6)])
    assert np.allclose(masked_pool(x, m)[0].data[0], oracle, atol=1e-12, rtol=0)


def test_empty_mask_falls_back_to_uniform():
    x = np.random.default_rng(4).normal(size=(2, 3, 3))
    out, empty = masked_pool(x, np.zeros((3, 3)))
    assert empty.all() and np.allclose(out.data[0], x.mean(axis=(1, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_mask_gating_ignores_masked_out_cells(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 4, 4))
    m = (rng.random((4, 4)) < 0.5).astype(float)
    m[0, 0] = 1
    y = x.copy()
    y[:, m == 0] = rng.normal(size=(2, int((m == 0).sum())))
    assert np.array_equal(masked_pool(x, m)[0].data, masked_pool(y, m)[0].data)


def test_context_weights_examples():
    U = np.zeros((4, 3))
    w = context_weights(np.ones(3), U).data
    assert np.allclose(w, 0.25)
    U = np.random.default_rng(5).normal(size=(4, 3))
    w = context_weights(np.ones(3), U, temperature=1e6).data
    assert np.abs(w - 0.25).max() < 1e-5
    U = np.zeros((4, 1))
    U[0, 0] = 2.0
    w = context_weights(np.ones(1), U).data
    e = np.exp([2.0, 0, 0, 0])
    assert np.allclose(w, e / e.sum(), atol=1e-15)
    with pytest.raises(ShapeError):
        context_weights(np.ones(2), np.zeros((4, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 20))
def test_weights_on_simplex(seed, tau):
    rng = np.random.default_rng(seed)
    w = context_weights(rng.normal(size=(3, 5)) * 10, rng.normal(size=(4, 5)), tau).data
    assert (w >= 0).all() and np.allclose(w.sum(axis=1), 1, atol=1e-9)


def setup(seed=0, c=6, cg=5, d=3):
    cfg = DFAConfig(d_dir=d)
    rng = np.random.default_rng(seed)
    P = init_dfa(rng, cfg, c, cg)
    return cfg, P, rng.normal(size=(2, c, 5, 5)), rng.random((2, 5, 5)), rng.normal(size=(2, cg))


def test_descriptor_length_and_uniform_blocks():
    cfg, P, x, m, g = setup()
    z, _ = dfa_descriptor(x, m, g, P, cfg, weights=np.full((2, 4), 0.25))
    assert z.shape == (2, 12)
    pooled = [masked_pool(directional_extract(x, P, cfg).data[:, k], m)[0].data for k in range(4)]
    for k in range(4):
        assert np.allclose(z.data[:, 3 * k:3 * k + 3], pooled[k] / 4, atol=1e-12)
    assert DFAConfig(d_dir=256).descriptor_dim == 1024


def test_block_locality():
    cfg, P, x, m, g = setup(1)
    P2 = dict(P)
    P2["dfa.proj.w"] = P["dfa.proj.w"].copy()
    P2["dfa.proj.b"] = P["dfa.proj.b"].copy()
    P2["dfa.proj.w"][2] = 0
    P2["dfa.proj.b"][2] = 0
    w = np.full((2, 4), 0.25)
    z, _ = dfa_descriptor(x, m, g, P, cfg, weights=w)
    z2, _ = dfa_descriptor(x, m, g, P2, cfg, weights=w)
    assert not z2.data[:, 6:9].any()
    assert np.array_equal(np.delete(z.data, range(6, 9), 1), np.delete(z2.data, range(6, 9), 1))


def test_permutation_symmetry():
    cfg, P, x, m, g = setup(2)
    perm = [2, 0, 3, 1]
    cfg_p = DFAConfig(angles_deg=tuple(cfg.angles_deg[i] for i in perm), d_dir=cfg.d_dir)
    Pp = {k: v[:, perm] if k == "dfa.taps" else v[perm] for k, v in P.items()}
    z, _ = dfa_descriptor(x, m, g, P, cfg)
    zp, _ = dfa_descriptor(x, m, g, Pp, cfg_p)
    blocks = z.data.reshape(2, 4, 3)
    assert np.abs(zp.data.reshape(2, 4, 3) - blocks[:, perm]).max() <= 1e-10


def test_descriptor_gradients():
    cfg, P, x, m, g = setup(3, c=3, cg=2, d=2)

    def fn(fmap, U, taps, pw):
        p = dict(P, **{"dfa.U": U, "dfa.taps": taps, "dfa.proj.w": pw})
        z, _ = dfa_descriptor(fmap, m, Tensor(g), p, cfg)
        return (z * np.arange(1, 9)).sum()

    assert gradcheck(fn, [x, P["dfa.U"], P["dfa.taps"], P["dfa.proj.w"]]) < 1e-4


def test_pool_weights_sum_to_one():
    w, empty = pool_weights(np.random.default_rng(6).random((3, 4, 4)))
    assert np.allclose(w.sum(axis=1), 1) and not empty.any()
