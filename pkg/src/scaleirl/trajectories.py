"""Per-session (state, action) trajectories.

An episode is one trading session of one symbol. The action of step ``t``
labels period ``t`` itself from the sign of its average price return, so
the transition model reads ``(s_t, a_t, s_{t+1})``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import AlignmentMismatch, NonFiniteReturn
from .ticks import PeriodAggregate


class Action(enum.IntEnum):
    BUY = 0
    SELL = 1
    NEUTRAL = 2


N_ACTIONS = len(Action)


def label_action(avg_price_return: float, epsilon: float = 0.0) -> Action:
    if not math.isfinite(avg_price_return):
        raise NonFiniteReturn(f"return {avg_price_return!r} is not finite")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if avg_price_return > epsilon:
        return Action.BUY
    if avg_price_return < -epsilon:
        return Action.SELL
    return Action.NEUTRAL


@dataclass(frozen=True)
class Trajectory:
    scale_minutes: int
    episode_id: str
    steps: tuple[tuple[int, Action], ...]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def states(self) -> np.ndarray:
        return np.array([s for s, _ in self.steps], dtype=int)

    @property
    def actions(self) -> np.ndarray:
        return np.array([int(a) for _, a in self.steps], dtype=int)

    def to_dict(self) -> dict:
        return {"scale_minutes": self.scale_minutes, "episode_id": self.episode_id,
                "steps": [[int(s), int(a)] for s, a in self.steps]}

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(int(d["scale_minutes"]), str(d["episode_id"]),
                   tuple((int(s), Action(int(a))) for s, a in d["steps"]))

    @classmethod
    def from_arrays(cls, states, actions, scale_minutes: int = 0,
                    episode_id: str = "") -> "Trajectory":
        return cls(scale_minutes, episode_id,
                   tuple((int(s), Action(int(a))) for s, a in zip(states, actions)))


def build_trajectories(assignments: Sequence[int], aggregates: Sequence[PeriodAggregate],
                       epsilon: float = 0.0) -> list[Trajectory]:
    """One trajectory per (symbol, session), steps in chronological order."""
    if len(assignments) != len(aggregates):
        raise AlignmentMismatch(
            f"{len(assignments)} state assignments vs {len(aggregates)} aggregates")
    grouped: dict[tuple[str, str], list[tuple[int, int, Action]]] = {}
    for state, agg in zip(assignments, aggregates):
        step = (agg.period_start, int(state), label_action(agg.avg_price_return, epsilon))
        grouped.setdefault((agg.symbol, agg.session), []).append(step)
    out = []
    for (symbol, session), steps in sorted(grouped.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        steps.sort(key=lambda s: s[0])
        scale = aggregates[0].scale_minutes
        out.append(Trajectory(scale, f"{symbol}:{session}", tuple((s, a) for _, s, a in steps)))
    return out


def write_trajectories_jsonl(trajectories: Iterable[Trajectory], stream: TextIO) -> None:
    for t in trajectories:
        stream.write(json.dumps(t.to_dict(), separators=(",", ":")) + "\n")


def read_trajectories_jsonl(lines: Iterable[str]) -> list[Trajectory]:
    return [Trajectory.from_dict(json.loads(line)) for line in lines if line.strip()]
