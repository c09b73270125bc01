"""Maximum entropy inverse reinforcement learning over a finite horizon.

The path distribution over ``T``-step state/action sequences conditioned on
the first state is

    P(path | s_0) = exp(sum_t r(s_t)) * prod_t P(s_{t+1} | s_t, a_t) / Z(s_0)

with state reward ``r = F @ theta``. Paths of equal total reward and equal
transition probability get equal probability, and the weight grows
exponentially with reward. The backward pass computes the log-partition
``V_t(s)`` of every suffix in log space; the implied step distributions are

    pi_t(a | s)           = exp(Q_t(s, a) - V_t(s))
    P~_t(s' | s, a)       = P(s' | s, a) exp(V_{t+1}(s') - W_t(s, a))

where ``W_t(s, a) = log sum_{s'} P(s' | s, a) exp(V_{t+1}(s'))`` and
``Q_t = r + W_t``. For deterministic transitions ``P~_t`` equals ``P``. The
forward pass pushes the start distribution through ``pi_t`` and ``P~_t``, so
the visitation counts ``D`` are the exact path expectations and
``f_tilde - F.T @ D`` is exactly the gradient of the mean log-likelihood
when the start distribution equals the demonstrations' first-state
frequencies.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import (
    DimensionMismatch,
    DivergenceDetected,
    EmptyTrajectories,
    NonFiniteTheta,
    NonStochasticPolicy,
    UnequalLengths,
)
from .mdp import MdpModel
from .trajectories import Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Optimizer settings.

    ``method="gradient"`` is constant-step ascent ``theta += learning_rate *
    grad``. ``method="lbfgs"`` minimizes the negative mean log-likelihood
    with L-BFGS using the same gradient and stopping rule; it copes with the
    ill-conditioning of long horizons, where a fixed step either crawls or
    oscillates.
    """

    method: str = "gradient"
    learning_rate: float = 0.05
    max_iterations: int = 2000
    gradient_tolerance: float = 1e-4
    horizon: int | None = None
    theta_init: tuple[float, ...] | None = None
    divergence_bound: float = 1e3

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta_init"] = None if self.theta_init is None else list(self.theta_init)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        if d.get("theta_init") is not None:
            d["theta_init"] = tuple(float(x) for x in d["theta_init"])
        return cls(**d)


@dataclass(frozen=True)
class FeatureExpectations:
    f_tilde: np.ndarray
    m: int
    horizon: int


def _stack(trajectories: Sequence[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    if not trajectories:
        raise EmptyTrajectories("no trajectories")
    lengths = {len(t) for t in trajectories}
    if len(lengths) != 1:
        raise UnequalLengths(f"trajectory lengths differ: {sorted(lengths)}")
    if 0 in lengths:
        raise EmptyTrajectories("trajectories have no steps")
    states = np.array([t.states for t in trajectories], dtype=int)
    actions = np.array([t.actions for t in trajectories], dtype=int)
    return states, actions


def empirical_feature_expectations(trajectories: Sequence[Trajectory],
                                   feature_matrix: np.ndarray) -> FeatureExpectations:
    """Mean over trajectories of the summed state features along each one."""
    states, _ = _stack(trajectories)
    F = np.asarray(feature_matrix, dtype=float)
    f_tilde = F[states].sum(axis=1).mean(axis=0)
    return FeatureExpectations(f_tilde, states.shape[0], states.shape[1])


@dataclass(frozen=True)
class MaxEntPolicy:
    """Result of the backward pass: per-step log policies and log-partitions."""

    log_policy: np.ndarray  # [t, s, a]
    log_partition: np.ndarray  # [t, s], t = 0..T with V_T = 0
    log_successor: np.ndarray  # W_t(s, a), [t, s, a]
    rewards: np.ndarray
    log_transitions: np.ndarray

    @property
    def horizon(self) -> int:
        return self.log_policy.shape[0]

    @property
    def policy(self) -> np.ndarray:
        """Full-horizon local action distribution ``pi_0(a | s)``."""
        return np.exp(self.log_policy[0])

    def step_policy(self, t: int) -> np.ndarray:
        return np.exp(self.log_policy[t])

    def next_state_kernel(self, t: int) -> np.ndarray:
        """``P~_t(s' | s, a)`` for ``t < T - 1``."""
        logk = (self.log_transitions + self.log_partition[t + 1][None, None, :]
                - self.log_successor[t][:, :, None])
        return np.exp(logk)


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def _check_theta(theta, n_features: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n_features,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({n_features},)")
    if not np.all(np.isfinite(theta)):
        raise NonFiniteTheta(f"theta is not finite: {theta}")
    return theta


def backward_pass(mdp: MdpModel, theta, horizon: int) -> MaxEntPolicy:
    """Log-space backward recursion over ``horizon`` steps."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    theta = _check_theta(theta, mdp.feature_matrix.shape[1])
    r = mdp.feature_matrix @ theta
    logP = _log(mdp.transitions)
    S, A = mdp.num_states, mdp.num_actions
    V = np.zeros((horizon + 1, S))
    W = np.zeros((horizon, S, A))
    logpi = np.empty((horizon, S, A))
    for t in range(horizon - 1, -1, -1):
        if t < horizon - 1:
            W[t] = logsumexp(logP + V[t + 1][None, None, :], axis=2)
        Q = r[:, None] + W[t]
        V[t] = logsumexp(Q, axis=1)
        logpi[t] = Q - V[t][:, None]
    return MaxEntPolicy(logpi, V, W, r, logP)


def _check_stochastic(policy: np.ndarray, S: int, A: int) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.shape[-2:] != (S, A):
        raise DimensionMismatch(f"policy shape {policy.shape} does not end with ({S}, {A})")
    if np.any(policy < -1e-12) or np.any(np.abs(policy.sum(axis=-1) - 1) > 1e-9):
        raise NonStochasticPolicy("policy rows must be probability vectors")
    return policy


def forward_pass(mdp: MdpModel, policy, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Expected state visitation counts.

    ``policy`` is a :class:`MaxEntPolicy` (propagated through its
    reward-conditioned next-state kernel) or a plain stochastic array of
    shape ``(S, A)`` or ``(T, S, A)`` (propagated through the MDP's own
    transitions). Returns ``(D, D_by_step)`` with ``D_by_step`` of shape
    ``(horizon, S)`` and ``D = D_by_step.sum(axis=0)``.
    """
    S, A = mdp.num_states, mdp.num_actions
    Dt = np.zeros((horizon, S))
    Dt[0] = mdp.start_distribution
    if isinstance(policy, MaxEntPolicy):
        if horizon > policy.horizon:
            raise ValueError(f"horizon {horizon} exceeds the policy's {policy.horizon}")
        for t in range(horizon - 1):
            kernel = policy.step_policy(t)[:, :, None] * policy.next_state_kernel(t)
            Dt[t + 1] = Dt[t] @ kernel.sum(axis=1)
    else:
        pi = _check_stochastic(policy, S, A)
        if pi.ndim == 3 and pi.shape[0] < horizon - 1:
            raise ValueError("time-indexed policy shorter than the horizon")
        P = mdp.transitions
        for t in range(horizon - 1):
            pt = pi[t] if pi.ndim == 3 else pi
            Dt[t + 1] = np.einsum("s,sa,sap->p", Dt[t], pt, P)
    return Dt.sum(axis=0), Dt


def gradient(f_tilde, D, feature_matrix) -> np.ndarray:
    F = np.asarray(feature_matrix, dtype=float)
    f_tilde = np.asarray(f_tilde, dtype=float)
    D = np.asarray(D, dtype=float)
    if F.shape != (D.shape[0], f_tilde.shape[0]):
        raise DimensionMismatch(
            f"feature matrix {F.shape} vs D {D.shape} and f_tilde {f_tilde.shape}")
    return f_tilde - F.T @ D


def trajectory_log_probs(trajectories: Sequence[Trajectory], policy: MaxEntPolicy,
                         start_distribution: np.ndarray) -> np.ndarray:
    """Log-probability of each demonstration under the path distribution."""
    out = np.empty(len(trajectories))
    by_len: dict[int, list[int]] = {}
    for i, t in enumerate(trajectories):
        by_len.setdefault(len(t), []).append(i)
    log_start = _log(np.asarray(start_distribution, dtype=float))
    for L, idx in by_len.items():
        if L > policy.horizon:
            raise ValueError(f"trajectory length {L} exceeds horizon {policy.horizon}")
        s, a = _stack([trajectories[i] for i in idx])
        steps = np.arange(L)
        lp = log_start[s[:, 0]] + policy.log_policy[steps, s, a].sum(axis=1)
        if L > 1:
            t = steps[:-1]
            s0, a0, s1 = s[:, :-1], a[:, :-1], s[:, 1:]
            lp = lp + (policy.log_transitions[s0, a0, s1] + policy.log_partition[t + 1, s1]
                       - policy.log_successor[t, s0, a0]).sum(axis=1)
        out[idx] = lp
    return out


def log_likelihood(trajectories: Sequence[Trajectory], theta, mdp: MdpModel,
                   horizon: int) -> float:
    """Sum of demonstration log-probabilities for reward weights ``theta``."""
    policy = backward_pass(mdp, theta, horizon)
    return float(trajectory_log_probs(trajectories, policy, mdp.start_distribution).sum())


@dataclass
class IrlSolution:
    theta: np.ndarray
    state_rewards: np.ndarray
    visitation: np.ndarray
    visitation_by_step: np.ndarray
    policy: np.ndarray
    likelihood_trace: list[float] = field(default_factory=list)
    gradient_norm_trace: list[float] = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0
    horizon: int = 0
    f_tilde: np.ndarray | None = None
    # max |f_tilde - F.T @ D| at the returned theta
    feature_mismatch: float = 0.0
    config: SolverConfig = SolverConfig()

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.tolist(),
            "state_rewards": self.state_rewards.tolist(),
            "visitation": self.visitation.tolist(),
            "policy": self.policy.tolist(),
            "f_tilde": None if self.f_tilde is None else self.f_tilde.tolist(),
            "likelihood_trace": list(self.likelihood_trace),
            "gradient_norm_trace": list(self.gradient_norm_trace),
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "horizon": self.horizon,
            "feature_mismatch": self.feature_mismatch,
            "config": self.config.to_dict(),
        }


def fit(mdp: MdpModel, trajectories: Sequence[Trajectory],
        config: SolverConfig = SolverConfig()) -> IrlSolution:
    """Maximize the demonstration log-likelihood over reward weights."""
    if config.method not in ("gradient", "lbfgs"):
        raise ValueError(f"unknown solver method {config.method!r}")
    F = mdp.feature_matrix
    expectations = empirical_feature_expectations(trajectories, F)
    horizon = config.horizon or expectations.horizon
    if horizon < expectations.horizon:
        raise ValueError(f"horizon {horizon} shorter than trajectories ({expectations.horizon})")
    theta = np.zeros(F.shape[1]) if config.theta_init is None else np.array(config.theta_init,
                                                                             dtype=float)
    theta = _check_theta(theta, F.shape[1])

    cache: dict[bytes, tuple] = {}

    def evaluate(th):
        key = np.asarray(th, dtype=float).tobytes()
        if key not in cache:
            cache.clear()
            pol = backward_pass(mdp, th, horizon)
            D, Dt = forward_pass(mdp, pol, horizon)
            g = gradient(expectations.f_tilde, D, F)
            ll = float(trajectory_log_probs(trajectories, pol, mdp.start_distribution).sum())
            cache[key] = (pol, D, Dt, g, ll)
        return cache[key]

    def check_bound(th, it):
        if not np.all(np.isfinite(th)) or np.max(np.abs(th)) > config.divergence_bound:
            raise DivergenceDetected(
                f"|theta|_inf exceeded {config.divergence_bound} at iteration {it}")

    ll_trace, gn_trace = [], []

    def record(th):
        _, _, _, g, ll = evaluate(th)
        ll_trace.append(ll)
        gn_trace.append(float(np.max(np.abs(g))))
        return gn_trace[-1]

    converged = False
    if config.method == "gradient":
        for it in range(config.max_iterations):
            if record(theta) < config.gradient_tolerance:
                converged = True
                break
            theta = theta + config.learning_rate * evaluate(theta)[3]
            check_bound(theta, it + 1)
    elif config.max_iterations > 0:
        m = expectations.m

        def objective(th):
            *_, g, ll = evaluate(th)
            return -ll / m, -g

        def callback(intermediate_result):
            th = intermediate_result.x
            check_bound(th, len(gn_trace) + 1)
            if record(th) < config.gradient_tolerance:
                raise StopIteration

        record(theta)
        if gn_trace[-1] >= config.gradient_tolerance:
            res = minimize(objective, theta, jac=True, method="L-BFGS-B", callback=callback,
                           options={"maxiter": config.max_iterations - 1,
                                    "gtol": config.gradient_tolerance, "ftol": 0.0})
            theta = np.asarray(res.x, dtype=float)
            check_bound(theta, len(gn_trace))
        converged = float(np.max(np.abs(evaluate(theta)[3]))) < config.gradient_tolerance

    pol, D, Dt, g, _ = evaluate(theta)
    if not converged:
        log.info("maxent fit stopped after %d iterations, |grad|_inf=%.3g",
                 len(gn_trace), float(np.max(np.abs(g))))
    return IrlSolution(
        theta=theta,
        state_rewards=F @ theta,
        visitation=D,
        visitation_by_step=Dt,
        policy=pol.policy,
        likelihood_trace=ll_trace,
        gradient_norm_trace=gn_trace,
        converged=converged,
        iterations_used=len(gn_trace),
        horizon=horizon,
        f_tilde=expectations.f_tilde,
        feature_mismatch=float(np.max(np.abs(g))),
        config=config,
    )


def sample_trajectories(mdp: MdpModel, policy: MaxEntPolicy, n: int, rng: np.random.Generator,
                        scale_minutes: int = 0) -> list[Trajectory]:
    """Draw ``n`` paths of length ``policy.horizon`` from the path distribution."""
    S, A, T = mdp.num_states, mdp.num_actions, policy.horizon
    states = np.empty((n, T), dtype=int)
    actions = np.empty((n, T), dtype=int)
    states[:, 0] = _draw(rng, np.broadcast_to(mdp.start_distribution, (n, S)))
    for t in range(T):
        pi = policy.step_policy(t)
        actions[:, t] = _draw(rng, pi[states[:, t]])
        if t < T - 1:
            k = policy.next_state_kernel(t)
            states[:, t + 1] = _draw(rng, k[states[:, t], actions[:, t]])
    return [Trajectory.from_arrays(states[i], actions[i], scale_minutes, f"sample-{i}")
            for i in range(n)]


def _draw(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1)


def finite_difference_gradient(trajectories: Sequence[Trajectory], theta, mdp: MdpModel,
                               horizon: int, step: float = 1e-5) -> np.ndarray:
    """Central differences of the mean log-likelihood."""
    theta = np.asarray(theta, dtype=float)
    m = len(trajectories)
    out = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = step
        up = log_likelihood(trajectories, theta + e, mdp, horizon)
        down = log_likelihood(trajectories, theta - e, mdp, horizon)
        out[k] = (up - down) / (2 * step * m)
    return out


def relative_error(analytic, numeric, floor: float = 1e-4) -> np.ndarray:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)),
                                                   floor)


def gradient_check(mdp: MdpModel, trajectories: Sequence[Trajectory], theta,
                   horizon: int | None = None, step: float = 1e-5) -> float:
    """Largest componentwise relative error between analytic and numeric gradients."""
    expectations = empirical_feature_expectations(trajectories, mdp.feature_matrix)
    horizon = horizon or expectations.horizon
    pol = backward_pass(mdp, theta, horizon)
    D, _ = forward_pass(mdp, pol, horizon)
    analytic = gradient(expectations.f_tilde, D, mdp.feature_matrix)
    numeric = finite_difference_gradient(trajectories, theta, mdp, horizon, step)
    return float(relative_error(analytic, numeric).max())
