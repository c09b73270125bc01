"""Cross-scale comparison of state rewards.

Rewards are z-scored within each scale, the signatures of every scale are
pooled and clustered by feature similarity, and the normalized rewards are
summed per (cluster, scale). Because z-scores sum to zero, the net rewards
of one scale across all clusters also sum to zero.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import IoError, MissingReward, TooFewStates
from .features import FEATURE_NAMES
from .maxent import IrlSolution
from .states import StateModel, cluster_states

SPREAD, IMBALANCE = FEATURE_NAMES.index("spread"), FEATURE_NAMES.index("imbalance")


def normalize_rewards(state_rewards) -> np.ndarray:
    r = np.asarray(state_rewards, dtype=float)
    if r.size == 0:
        raise ValueError("empty reward vector")
    std = r.std()
    if np.ptp(r) == 0 or std == 0:
        return np.zeros_like(r)
    return (r - r.mean()) / std


@dataclass
class ScaleRunResult:
    scale_minutes: int
    state_model: StateModel
    solution: IrlSolution
    normalized_rewards: np.ndarray = None

    def __post_init__(self):
        if self.normalized_rewards is None:
            self.normalized_rewards = normalize_rewards(self.solution.state_rewards)


@dataclass(frozen=True)
class ScaleStates:
    scale_minutes: int
    centroids: tuple[tuple[float, ...], ...]
    rewards: tuple[float, ...]
    normalized_rewards: tuple[float, ...]


@dataclass(frozen=True)
class ClusterSummary:
    cluster_id: int
    centroid: tuple[float, ...]
    members: tuple[tuple[int, int], ...]
    net_reward: dict = field(default_factory=dict)
    member_count: dict = field(default_factory=dict)

    @property
    def position(self) -> tuple[float, float]:
        """(spread, imbalance) components of the centroid."""
        return self.centroid[SPREAD], self.centroid[IMBALANCE]


@dataclass(frozen=True)
class CrossScaleReport:
    cluster_count: int
    scales: tuple[int, ...]
    clusters: tuple[ClusterSummary, ...]
    scale_states: tuple[ScaleStates, ...]
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "cluster_count": self.cluster_count,
            "seed": self.seed,
            "scales": list(self.scales),
            "clusters": [
                {
                    "cluster_id": c.cluster_id,
                    "centroid": list(c.centroid),
                    "position": {"spread": c.position[0], "imbalance": c.position[1]},
                    "members": [list(m) for m in c.members],
                    "net_reward": {str(k): v for k, v in sorted(c.net_reward.items())},
                    "member_count": {str(k): v for k, v in sorted(c.member_count.items())},
                }
                for c in self.clusters
            ],
            "scale_states": [
                {
                    "scale_minutes": s.scale_minutes,
                    "centroids": [list(c) for c in s.centroids],
                    "rewards": list(s.rewards),
                    "normalized_rewards": list(s.normalized_rewards),
                }
                for s in self.scale_states
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CrossScaleReport":
        clusters = tuple(
            ClusterSummary(
                int(c["cluster_id"]),
                tuple(float(x) for x in c["centroid"]),
                tuple((int(a), int(b)) for a, b in c["members"]),
                {int(k): float(v) for k, v in c["net_reward"].items()},
                {int(k): int(v) for k, v in c["member_count"].items()},
            )
            for c in d["clusters"]
        )
        states = tuple(
            ScaleStates(
                int(s["scale_minutes"]),
                tuple(tuple(float(x) for x in c) for c in s["centroids"]),
                tuple(float(x) for x in s["rewards"]),
                tuple(float(x) for x in s["normalized_rewards"]),
            )
            for s in d["scale_states"]
        )
        return cls(int(d["cluster_count"]), tuple(int(s) for s in d["scales"]), clusters,
                   states, int(d.get("seed", 0)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def cluster_across_scales(results: Sequence[ScaleRunResult], cluster_count: int = 6,
                          seed: int = 0, restarts: int = 10) -> CrossScaleReport:
    """Pool every scale's signatures and group them by K-means."""
    members, rows = [], []
    for res in results:
        for sig in res.state_model.signatures:
            members.append((res.scale_minutes, sig.state_id))
            rows.append(sig.centroid)
    if len(rows) < cluster_count:
        raise TooFewStates(f"{len(rows)} pooled states for {cluster_count} clusters")
    model, labels = cluster_states(np.array(rows, dtype=float), cluster_count, seed=seed,
                                   restarts=restarts)
    clusters = tuple(
        ClusterSummary(j, model.signatures[j].centroid,
                       tuple(m for m, lab in zip(members, labels) if lab == j))
        for j in range(cluster_count)
    )
    states = tuple(
        ScaleStates(res.scale_minutes,
                    tuple(tuple(float(x) for x in sig.centroid) for sig in res.state_model.signatures),
                    tuple(float(x) for x in res.solution.state_rewards),
                    tuple(float(x) for x in res.normalized_rewards))
        for res in results
    )
    return CrossScaleReport(cluster_count, tuple(r.scale_minutes for r in results), clusters,
                            states, seed)


def aggregate_cluster_rewards(report: CrossScaleReport,
                              results: Sequence[ScaleRunResult] | None = None) -> CrossScaleReport:
    """Sum normalized rewards per (cluster, scale); absent scales get no entry."""
    if results is not None:
        lookup = {r.scale_minutes: np.asarray(r.normalized_rewards) for r in results}
    else:
        lookup = {s.scale_minutes: np.asarray(s.normalized_rewards) for s in report.scale_states}
    clusters = []
    for c in report.clusters:
        net: dict[int, float] = {}
        count: dict[int, int] = {}
        for scale, state in c.members:
            rewards = lookup.get(scale)
            if rewards is None or not 0 <= state < len(rewards):
                raise MissingReward(f"no normalized reward for scale {scale}, state {state}")
            net[scale] = net.get(scale, 0.0) + float(rewards[state])
            count[scale] = count.get(scale, 0) + 1
        clusters.append(replace(c, net_reward=dict(sorted(net.items())),
                                member_count=dict(sorted(count.items()))))
    return replace(report, clusters=tuple(clusters))


# --------------------------------------------------------------------------
# output


def emit_report(report: CrossScaleReport, out_dir: str) -> list[str]:
    """Write report.json, cluster_rewards.csv and the SVG figures."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        path = os.path.join(out_dir, "report.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.to_json())
        written.append(path)

        path = os.path.join(out_dir, "cluster_rewards.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("cluster_id", "scale_minutes", "net_reward", "member_count"))
            for c in report.clusters:
                for scale, net in sorted(c.net_reward.items()):
                    writer.writerow((c.cluster_id, scale, repr(net), c.member_count[scale]))
        written.append(path)

        for states in report.scale_states:
            path = os.path.join(out_dir, f"fig2_scale_{states.scale_minutes}.svg")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(scale_figure_svg(states))
            written.append(path)

        path = os.path.join(out_dir, "fig3_crossscale.svg")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(crossscale_figure_svg(report))
        written.append(path)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return written


FEATURE_COLOURS = ("#1f77b4", "#ff7f0e", "#9467bd", "#8c564b")
NEG_RGB, POS_RGB = (214, 39, 40), (44, 160, 44)


def _f(x: float) -> str:
    return f"{x:.2f}"


def reward_colour(value: float, lo: float, hi: float) -> str:
    """Linear red-to-green map of ``value`` over ``[lo, hi]``."""
    w = 0.5 if hi <= lo else min(1.0, max(0.0, (value - lo) / (hi - lo)))
    rgb = [round(a + w * (b - a)) for a, b in zip(NEG_RGB, POS_RGB)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def scale_figure_svg(states: ScaleStates, width: int = 720, height: int = 360) -> str:
    """Per-state feature dots and reward bars for one scale."""
    n = len(states.centroids)
    values = [v for c in states.centroids for v in c] + list(states.rewards) + [0.0]
    lo, hi = min(values), max(values)
    if hi == lo:
        hi, lo = hi + 1.0, lo - 1.0
    top, bottom, left, right = 40, height - 40, 50, width - 20
    slot = (right - left) / max(n, 1)

    def y(v):
        return bottom - (v - lo) / (hi - lo) * (bottom - top)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<title>States at {states.scale_minutes}-min scale</title>',
        f'<text x="{left}" y="20" font-size="14">Feature vectors (dots) and estimated '
        f'reward (bars), {states.scale_minutes}-min scale</text>',
        f'<line x1="{left}" y1="{_f(y(0.0))}" x2="{right}" y2="{_f(y(0.0))}" stroke="#888"/>',
    ]
    for s in range(n):
        x0 = left + s * slot
        r = states.rewards[s]
        y0, y1 = sorted((y(0.0), y(r)))
        out.append(f'<rect class="reward" x="{_f(x0 + slot * 0.2)}" y="{_f(y0)}" '
                   f'width="{_f(slot * 0.6)}" height="{_f(y1 - y0)}" fill="#bbbbbb"/>')
        for k, v in enumerate(states.centroids[s]):
            cx = x0 + slot * (0.2 + 0.6 * (k + 0.5) / len(states.centroids[s]))
            out.append(f'<circle class="feature" cx="{_f(cx)}" cy="{_f(y(v))}" r="4" '
                       f'fill="{FEATURE_COLOURS[k % len(FEATURE_COLOURS)]}"/>')
        out.append(f'<text x="{_f(x0 + slot / 2)}" y="{height - 20}" font-size="11" '
                   f'text-anchor="middle">S{s}</text>')
    for k, name in enumerate(FEATURE_NAMES):
        out.append(f'<text x="{left + 90 * k}" y="{height - 5}" font-size="11" '
                   f'fill="{FEATURE_COLOURS[k]}">{name}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def crossscale_figure_svg(report: CrossScaleReport, width: int = 720, height: int = 540) -> str:
    """Clusters placed by centroid (spread, imbalance); one node per (cluster, scale).

    Node radius grows with the rank of the scale; colour runs red to green
    over the range of net rewards in the report.
    """
    rank = {s: i + 1 for i, s in enumerate(sorted(report.scales))}
    nets = [v for c in report.clusters for v in c.net_reward.values()]
    lo, hi = (min(nets), max(nets)) if nets else (0.0, 0.0)
    xs = [c.position[0] for c in report.clusters]
    ys = [c.position[1] for c in report.clusters]
    margin = 90

    def scale_axis(v, vals, a, b):
        vmin, vmax = min(vals), max(vals)
        if vmax == vmin:
            return (a + b) / 2
        return a + (v - vmin) / (vmax - vmin) * (b - a)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        "<title>Net normalized reward per scale, grouped by feature similarity</title>",
        f'<text x="20" y="20" font-size="14">x: centroid spread change, y: centroid imbalance '
        f'change; radius: scale rank; colour: net reward {_f(lo)} (red) to {_f(hi)} (green)</text>',
    ]
    n_scales = len(report.scales)
    for c in report.clusters:
        cx = scale_axis(c.position[0], xs, margin, width - margin)
        cy = scale_axis(c.position[1], ys, height - margin, margin)
        out.append(f'<g class="cluster" id="cluster-{c.cluster_id}">')
        out.append(f'<text x="{_f(cx)}" y="{_f(cy - 48)}" font-size="12" '
                   f'text-anchor="middle">Cluster {c.cluster_id + 1}</text>')
        for scale in sorted(c.net_reward):
            angle = 2 * np.pi * sorted(report.scales).index(scale) / max(n_scales, 1)
            nx, ny = cx + 26 * np.cos(angle), cy + 26 * np.sin(angle)
            out.append(
                f'<circle class="node" data-scale="{scale}" data-net-reward="{c.net_reward[scale]!r}" '
                f'cx="{_f(nx)}" cy="{_f(ny)}" r="{_f(3 + 3 * rank[scale])}" '
                f'fill="{reward_colour(c.net_reward[scale], lo, hi)}" stroke="#333"/>')
        out.append("</g>")
    out.append("</svg>\n")
    return "\n".join(out)
