"""Shared fixtures; the expensive constructions are built once per session."""

import numpy as np
import pytest

from actiongov.simlab import (
    ScenarioConfig,
    build_grid_backend,
    build_moas_backend,
    build_rig,
    example_initial_koopman,
    make_koopman_env,
)
from actiongov.safe_learning import run_safe_koopman


@pytest.fixture(scope="session")
def base_cfg():
    return ScenarioConfig(seed=0)


@pytest.fixture(scope="session")
def rig(base_cfg):
    return build_rig(base_cfg)


@pytest.fixture(scope="session")
def moas_bundle(base_cfg, rig):
    """(oracle, moas) for the worked example."""
    return build_moas_backend(base_cfg, rig)


@pytest.fixture(scope="session")
def grid_bundle(base_cfg, rig):
    """(oracle, dss, tt, grid) on the full example grid."""
    return build_grid_backend(base_cfg, rig)


@pytest.fixture(scope="session")
def koopman_learning(base_cfg, rig, moas_bundle):
    """Full supervised learning run: (model, trajectory)."""
    oracle, moas = moas_bundle
    env = make_koopman_env(base_cfg, rig, oracle, moas)
    km0 = example_initial_koopman(base_cfg.koopman_lambda, base_cfg.koopman_delta)
    rng = np.random.default_rng(base_cfg.seed)
    return run_safe_koopman(env, km0, base_cfg.learn_steps, base_cfg.reset_every, rng)
