import os
import sys

import numpy as np
import pytest

from scaleirl.mdp import assemble_mdp
from scaleirl.ticks import RegimeConfig, generate_synthetic_market

sys.path.insert(0, os.path.dirname(__file__))


def random_mdp(rng, num_states, num_actions=3, num_features=4, start=None, sparse=False):
    """Stochastic MDP with Dirichlet rows; ``sparse`` zeroes some transitions."""
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    if sparse:
        mask = rng.random(P.shape) < 0.4
        mask[..., 0] = False
        P = np.where(mask, 0.0, P)
        P /= P.sum(axis=2, keepdims=True)
    F = rng.normal(size=(num_states, num_features))
    if start is None:
        start = rng.dirichlet(np.ones(num_states))
    return assemble_mdp(F, P, start)


ZERO_DRIFT = dict(drift=(0.0,), spread_change=(0.0,), volume_change=(0.0,),
                  imbalance_change=(0.0,), transition=((1.0,),))


@pytest.fixture(scope="session")
def month():
    """Default three-regime synthetic month (20 sessions, one symbol)."""
    return generate_synthetic_market(RegimeConfig(seed=3))


@pytest.fixture(scope="session")
def zero_drift_month():
    return generate_synthetic_market(RegimeConfig(seed=11, **ZERO_DRIFT))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    """Full pipeline on the default synthetic month, persisted to a temp directory."""
    from scaleirl.pipeline import PipelineConfig, run

    out = tmp_path_factory.mktemp("run")
    config = PipelineConfig(seed=0, out=str(out))
    return config, run(config)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
