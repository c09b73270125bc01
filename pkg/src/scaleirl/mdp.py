"""Empirical per-scale MDP: transition tensor, start distribution and state features.

``gamma`` is carried in the model for completeness but the finite-horizon
MaxEnt solver does not use it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyTrajectories, InvalidStateId
from .states import StateModel, state_feature_matrix
from .trajectories import N_ACTIONS, Action, Trajectory


@dataclass(frozen=True)
class TransitionModel:
    probabilities: np.ndarray  # [state, action, next_state]
    counts: np.ndarray
    alpha: float

    @property
    def num_states(self) -> int:
        return self.probabilities.shape[0]


def estimate_transitions(trajectories: Sequence[Trajectory], num_states: int,
                         alpha: float = 0.05, num_actions: int = N_ACTIONS,
                         action_blind: bool = False) -> TransitionModel:
    """Laplace-smoothed count ratios of consecutive ``(s, a, s')`` triples.

    Rows with no observations and ``alpha == 0`` fall back to uniform. With
    ``action_blind`` the counts are pooled over actions, so every action
    shares the row ``P[s, :, :]``.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    counts = np.zeros((num_states, num_actions, num_states), dtype=np.int64)
    for traj in trajectories:
        s, a = traj.states, traj.actions
        if len(s) and (s.min() < 0 or s.max() >= num_states):
            raise InvalidStateId(f"{traj.episode_id}: state id outside [0, {num_states})")
        if len(a) and (a.min() < 0 or a.max() >= num_actions):
            raise InvalidStateId(f"{traj.episode_id}: action id outside [0, {num_actions})")
        np.add.at(counts, (s[:-1], a[:-1], s[1:]), 1)
    pooled = counts
    if action_blind:
        pooled = np.broadcast_to(counts.sum(axis=1, keepdims=True), counts.shape)
    smoothed = pooled + alpha
    totals = smoothed.sum(axis=2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(totals > 0, smoothed / np.where(totals > 0, totals, 1.0), 1.0 / num_states)
    return TransitionModel(probs, counts, float(alpha))


def estimate_start_distribution(trajectories: Sequence[Trajectory], num_states: int) -> np.ndarray:
    firsts = [t.steps[0][0] for t in trajectories if len(t)]
    if not firsts:
        raise EmptyTrajectories("no trajectories to estimate a start distribution from")
    if min(firsts) < 0 or max(firsts) >= num_states:
        raise InvalidStateId(f"start state outside [0, {num_states})")
    return np.bincount(firsts, minlength=num_states) / len(firsts)


@dataclass(frozen=True)
class MdpModel:
    transitions: np.ndarray  # [state, action, next_state]
    feature_matrix: np.ndarray  # [state, feature]
    start_distribution: np.ndarray
    gamma: float = 1.0
    alpha: float = 0.0

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(Action(a) for a in range(self.num_actions))

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "num_features": self.feature_matrix.shape[1],
            "alpha": self.alpha,
            "gamma": self.gamma,
            "transitions": self.transitions.tolist(),
            "feature_matrix": self.feature_matrix.tolist(),
            "start_distribution": self.start_distribution.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MdpModel":
        return assemble_mdp(np.asarray(d["feature_matrix"], dtype=float),
                            np.asarray(d["transitions"], dtype=float),
                            np.asarray(d["start_distribution"], dtype=float),
                            gamma=float(d["gamma"]), alpha=float(d.get("alpha", 0.0)))


def assemble_mdp(state_model: StateModel | np.ndarray,
                 transition_model: TransitionModel | np.ndarray,
                 start_distribution: np.ndarray, gamma: float = 1.0,
                 alpha: float | None = None) -> MdpModel:
    """Validate dimensions and bundle an immutable :class:`MdpModel`."""
    if isinstance(state_model, StateModel):
        features = state_feature_matrix(state_model)
    else:
        features = np.asarray(state_model, dtype=float)
    if isinstance(transition_model, TransitionModel):
        P = transition_model.probabilities
        alpha = transition_model.alpha if alpha is None else alpha
    else:
        P = np.asarray(transition_model, dtype=float)
    start = np.asarray(start_distribution, dtype=float)

    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        raise DimensionMismatch(f"transition tensor must be S x A x S, got {P.shape}")
    n = P.shape[0]
    if features.ndim != 2 or features.shape[0] != n:
        raise DimensionMismatch(f"feature matrix has {features.shape[0]} rows for {n} states")
    if start.shape != (n,):
        raise DimensionMismatch(f"start distribution has shape {start.shape}, expected ({n},)")
    if not 0 < gamma <= 1:
        raise DimensionMismatch(f"gamma must lie in (0, 1], got {gamma}")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1) > 1e-12):
        raise DimensionMismatch("transition rows must be probability vectors")
    if np.any(start < 0) or abs(start.sum() - 1) > 1e-12:
        raise DimensionMismatch("start distribution must sum to 1")

    def frozen(a):
        a = np.array(a, dtype=float)
        a.setflags(write=False)
        return a

    return MdpModel(frozen(P), frozen(features), frozen(start), float(gamma),
                    float(alpha or 0.0))
