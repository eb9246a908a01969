import numpy as np
import pytest

from truncidm.pipeline import PipelineConfig, fit_norm_stats, init_params
from truncidm.pipeline.model import ModelParams, as_tensors
from truncidm.synthworld import WorldConfig, generate_episode

SMALL_WORLD = WorldConfig.from_dict({"amplitude": 0.25, "nominal_jitter": 0.08, "camera": {"pan_period": 8}})


def small_episodes(n=4, length=12, seed=0):
    return [generate_episode(SMALL_WORLD, seed * 1000 + i, f"t{i}", length=length) for i in range(n)]


def random_model(cfg=None, episodes=None, seed=3, head_scale=0.3):
    """Untrained model whose zero-initialised heads are filled with noise so
    every path contributes to the output."""
    cfg = cfg or PipelineConfig.from_dict({"tdr": {"window": 3}})
    episodes = episodes or small_episodes(2)
    norm = fit_norm_stats(np.concatenate([e.actions for e in episodes]))
    arrays = init_params(cfg, norm.dim, seed)
    rng = np.random.default_rng(seed + 100)
    for k, v in arrays.items():
        if not np.any(v):
            arrays[k] = head_scale * rng.normal(size=v.shape)
    return ModelParams(as_tensors(arrays), norm, cfg, list(episodes[0].dim_kinds))


@pytest.fixture(scope="session")
def episodes():
    return small_episodes()


@pytest.fixture(scope="session")
def model(episodes):
    return random_model(episodes=episodes)
