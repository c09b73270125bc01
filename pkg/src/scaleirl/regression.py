"""Small fixed MaxEnt instance used for gradient checks and solver regression tests."""

from __future__ import annotations

import numpy as np

from .maxent import backward_pass, sample_trajectories
from .mdp import assemble_mdp, estimate_start_distribution

REGRESSION_THETA = (0.5, -0.3, 0.2, 0.1)


def regression_instance(seed: int = 7, num_states: int = 4, horizon: int = 5,
                        num_trajectories: int = 40):
    """Stochastic 3-action MDP plus demonstrations drawn at ``REGRESSION_THETA``.

    Returns ``(mdp, trajectories, theta)``. The MDP's start distribution is
    the demonstrations' first-state frequency, which makes the analytic
    gradient exact.
    """
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(num_states), size=(num_states, 3))
    F = rng.normal(size=(num_states, 4))
    theta = np.array(REGRESSION_THETA)
    base = assemble_mdp(F, P, np.full(num_states, 1.0 / num_states))
    trajs = sample_trajectories(base, backward_pass(base, theta, horizon), num_trajectories, rng)
    mdp = assemble_mdp(F, P, estimate_start_distribution(trajs, num_states))
    return mdp, trajs, theta
