import numpy as np
import pytest

from boxpush import harness

PANDA_DH = [
    (0.0, 0.333, 0.0),
    (0.0, 0.0, -np.pi / 2),
    (0.0, 0.316, np.pi / 2),
    (0.0825, 0.0, np.pi / 2),
    (-0.0825, 0.384, -np.pi / 2),
    (0.0, 0.0, np.pi / 2),
    (0.088, 0.0, np.pi / 2),
]
FLANGE_OFFSET = 0.107
ROD_LENGTH = 0.1


@pytest.fixture(scope="session")
def default_cfg():
    """Full default configuration (4096 envs); cheap to load, not to build."""
    return harness.load_config(mode="step")


@pytest.fixture()
def small_cfg():
    return harness.load_config(mode="step", overrides=dict(n_envs=8, seed=7))


@pytest.fixture()
def arm(default_cfg):
    return default_cfg.arm


@pytest.fixture()
def cavity(default_cfg):
    return default_cfg.cavity


@pytest.fixture()
def small_env(small_cfg):
    env = harness.build_env(small_cfg)
    yield env
    env.close()
