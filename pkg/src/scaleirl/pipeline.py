"""Configuration and end-to-end orchestration.

Stage order per scale: resample, features, states, trajectories, MDP, IRL.
The cross-scale report runs once every scale has finished. Every random
stage draws its seed from ``derive_seed(config.seed, stage_name)`` so a run
is a deterministic function of the input bytes and the configuration.
"""

from __future__ import annotations

import collections
import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import crossscale, features, maxent, mdp, states, ticks, trajectories
from .errors import EmptyInput, InvalidConfig, IoError, ScaleIrlError
from .maxent import SolverConfig
from .ticks import RegimeConfig, Session, TickRecord

log = logging.getLogger(__name__)

DEFAULT_SCALES = (5, 15, 30, 60)


def derive_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


@dataclass(frozen=True)
class PipelineConfig:
    input_csv: str | None = None
    synthetic: dict = field(default_factory=dict)
    symbols: tuple[str, ...] | None = None
    session_open: str = "09:00"
    session_close: str = "17:00"
    scales: tuple[int, ...] = DEFAULT_SCALES
    states_per_scale: int = 8
    cluster_count: int = 6
    epsilon: float = 0.0
    alpha: float = 0.05
    gamma: float = 1.0
    solver: SolverConfig = SolverConfig(method="lbfgs")
    seed: int = 0
    restarts: int = 10
    kmeans_max_iter: int = 300
    raw_irl_features: bool = False
    action_blind_transitions: bool = False
    on_unsorted: str = "reject"
    intermediates: bool = True
    workers: int = 1
    out: str = "out"

    @property
    def session(self) -> Session:
        return Session.from_strings(self.session_open, self.session_close)

    def regime_config(self) -> RegimeConfig:
        """Synthetic generator settings; the seed derives from the run seed unless given."""
        d = dict(self.synthetic)
        if "transition" in d:
            d["transition"] = tuple(tuple(float(x) for x in row) for row in d["transition"])
        for key in ("drift", "spread_change", "volume_change", "imbalance_change", "symbols"):
            if key in d:
                d[key] = tuple(d[key])
        d.setdefault("seed", derive_seed(self.seed, "generate"))
        d["session"] = self.session
        try:
            return RegimeConfig(**d)
        except TypeError as exc:
            raise InvalidConfig(f"synthetic: {exc}") from None

    def validate(self) -> None:
        session = self.session
        if not self.scales:
            raise InvalidConfig("at least one scale is required")
        for s in self.scales:
            ticks.check_scale(s, session)
        if self.states_per_scale < 1 or self.cluster_count < 1:
            raise InvalidConfig("states_per_scale and cluster_count must be >= 1")
        if self.epsilon < 0 or self.alpha < 0:
            raise InvalidConfig("epsilon and alpha must be >= 0")
        if not 0 < self.gamma <= 1:
            raise InvalidConfig("gamma must lie in (0, 1]")
        sc = self.solver
        if sc.learning_rate <= 0 or sc.gradient_tolerance <= 0 or sc.max_iterations < 0:
            raise InvalidConfig("solver learning_rate and gradient_tolerance must be > 0")
        if self.on_unsorted not in ("reject", "sort"):
            raise InvalidConfig("on_unsorted must be 'reject' or 'sort'")
        if self.input_csv is None:
            self.regime_config().validate()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["solver"] = self.solver.to_dict()
        d["scales"] = list(self.scales)
        d["symbols"] = None if self.symbols is None else list(self.symbols)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        try:
            if "solver" in d:
                d["solver"] = SolverConfig.from_dict(d["solver"])
            if "scales" in d:
                d["scales"] = tuple(int(s) for s in d["scales"])
            if d.get("symbols") is not None:
                d["symbols"] = tuple(d["symbols"])
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None

    @classmethod
    def load(cls, path: str) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from None

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@contextmanager
def stage(name: str):
    t0 = time.perf_counter()
    try:
        yield
    except ScaleIrlError as exc:
        if not getattr(exc, "stage", None):
            exc.stage = name
        raise
    log.info("%-24s %.3fs", name, time.perf_counter() - t0)


@dataclass
class ScaleArtifacts:
    scale_minutes: int
    aggregates: list
    features: list
    standardizer: features.Standardizer
    state_model: states.StateModel
    assignments: np.ndarray
    trajectories: list
    mdp: mdp.MdpModel
    solution: maxent.IrlSolution

    def run_result(self) -> crossscale.ScaleRunResult:
        return crossscale.ScaleRunResult(self.scale_minutes, self.state_model, self.solution)


def load_ticks(config: PipelineConfig) -> list[TickRecord]:
    with stage("load"):
        if config.input_csv is not None:
            try:
                with open(config.input_csv, encoding="utf-8", newline="") as fh:
                    data = ticks.parse_tick_csv(fh, on_unsorted=config.on_unsorted)
            except OSError as exc:
                raise IoError(str(exc)) from None
        else:
            data = ticks.generate_synthetic_ticks(config.regime_config())
        if config.symbols is not None:
            wanted = set(config.symbols)
            data = [t for t in data if t.symbol in wanted]
        if not data:
            raise EmptyInput("no ticks after symbol filtering")
    return data


def irl_trajectories(trajs: Sequence[trajectories.Trajectory],
                     full_length: int) -> list[trajectories.Trajectory]:
    """Episodes fed to the solver: full-session ones, else the most common length."""
    lengths = collections.Counter(len(t) for t in trajs)
    target = full_length if full_length in lengths else lengths.most_common(1)[0][0]
    kept = [t for t in trajs if len(t) == target]
    if len(kept) < len(trajs):
        log.warning("dropping %d of %d episodes whose length differs from %d",
                    len(trajs) - len(kept), len(trajs), target)
    return kept


def run_scale(scale: int, by_symbol: dict[str, list[TickRecord]],
              config: PipelineConfig) -> ScaleArtifacts:
    session = config.session
    tag = f"{scale}min"
    with stage(f"resample/{tag}"):
        aggs = []
        for sym_ticks in by_symbol.values():
            aggs.extend(ticks.resample(sym_ticks, scale, session))
    with stage(f"features/{tag}"):
        feats, kept = [], []
        for symbol in by_symbol:
            sym_aggs = [a for a in aggs if a.symbol == symbol]
            f, k = features.compute_period_features(sym_aggs)
            feats.extend(f)
            kept.extend(k)
        std = features.fit_standardizer(feats)
        z = std.transform(features.as_array(feats))
    with stage(f"states/{tag}"):
        model, labels = states.cluster_states(
            z, config.states_per_scale, seed=derive_seed(config.seed, f"states/{scale}"),
            restarts=config.restarts, max_iter=config.kmeans_max_iter, scale_minutes=scale)
    with stage(f"trajectories/{tag}"):
        trajs = trajectories.build_trajectories(labels, kept, config.epsilon)
        trajs = irl_trajectories(trajs, session.periods(scale) - 1)
    with stage(f"mdp/{tag}"):
        feature_matrix = states.state_feature_matrix(model)
        if config.raw_irl_features:
            feature_matrix = std.inverse_transform(feature_matrix)
        tm = mdp.estimate_transitions(trajs, model.K, config.alpha,
                                      action_blind=config.action_blind_transitions)
        start = mdp.estimate_start_distribution(trajs, model.K)
        m = mdp.assemble_mdp(feature_matrix, tm, start, config.gamma)
    with stage(f"irl/{tag}"):
        sol = maxent.fit(m, trajs, config.solver)
        log.info("irl/%s converged=%s iterations=%d |grad|=%.2e", tag, sol.converged,
                 sol.iterations_used, sol.feature_mismatch)
    return ScaleArtifacts(scale, aggs, feats, std, model, labels, trajs, m, sol)


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_scale_artifacts(art: ScaleArtifacts, out_dir: str, intermediates: bool = True) -> None:
    d = os.path.join(out_dir, f"scale_{art.scale_minutes}")
    os.makedirs(d, exist_ok=True)
    if intermediates:
        with open(os.path.join(d, "aggregates.csv"), "w", encoding="utf-8", newline="") as fh:
            ticks.write_aggregates_csv(art.aggregates, fh)
        with open(os.path.join(d, "features.csv"), "w", encoding="utf-8", newline="") as fh:
            features.write_features_csv(art.features, fh)
        _write(os.path.join(d, "standardizer.json"), dump_json(art.standardizer.to_dict()))
        with open(os.path.join(d, "trajectories.jsonl"), "w", encoding="utf-8", newline="\n") as fh:
            trajectories.write_trajectories_jsonl(art.trajectories, fh)
        _write(os.path.join(d, "mdp.json"), dump_json(art.mdp.to_dict()))
    _write(os.path.join(d, "states.json"), dump_json(art.state_model.to_dict()))
    _write(os.path.join(d, "irl.json"), dump_json(art.solution.to_dict()))


def build_report(results: Sequence[crossscale.ScaleRunResult],
                 config: PipelineConfig) -> crossscale.CrossScaleReport:
    with stage("crossscale"):
        skeleton = crossscale.cluster_across_scales(
            results, config.cluster_count, seed=derive_seed(config.seed, "crossscale"),
            restarts=config.restarts)
        return crossscale.aggregate_cluster_rewards(skeleton, results)


def write_manifest(out_dir: str, config: PipelineConfig) -> dict:
    artifacts = {}
    for root, _, files in os.walk(out_dir):
        for name in files:
            path = os.path.join(root, name)
            rel = os.path.relpath(path, out_dir).replace(os.sep, "/")
            if rel == "manifest.json":
                continue
            with open(path, "rb") as fh:
                artifacts[rel] = hashlib.sha256(fh.read()).hexdigest()
    manifest = {"config_sha256": config.digest(), "seed": config.seed,
                "artifacts": dict(sorted(artifacts.items()))}
    _write(os.path.join(out_dir, "manifest.json"), dump_json(manifest))
    return manifest


@dataclass
class RunResult:
    scales: list[ScaleArtifacts]
    report: crossscale.CrossScaleReport
    manifest: dict


def run(config: PipelineConfig, out_dir: str | None = None) -> RunResult:
    """Run every stage for every scale, then the cross-scale report."""
    config.validate()
    out_dir = out_dir or config.out
    data = load_ticks(config)
    by_symbol = ticks.split_by_symbol(data)
    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        arts = list(pool.map(lambda s: run_scale(s, by_symbol, config), config.scales))
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "config.json"), dump_json(config.to_dict()))
    for art in arts:
        write_scale_artifacts(art, out_dir, config.intermediates)
    report = build_report([a.run_result() for a in arts], config)
    with stage("emit"):
        crossscale.emit_report(report, out_dir)
    manifest = write_manifest(out_dir, config)
    return RunResult(arts, report, manifest)


def load_scale_results(out_dir: str, scales: Sequence[int]) -> list[crossscale.ScaleRunResult]:
    """Rebuild per-scale results from persisted ``states.json`` and ``irl.json``."""
    results = []
    for scale in scales:
        d = os.path.join(out_dir, f"scale_{scale}")
        try:
            with open(os.path.join(d, "states.json"), encoding="utf-8") as fh:
                model = states.StateModel.from_dict(json.load(fh))
            with open(os.path.join(d, "irl.json"), encoding="utf-8") as fh:
                sol = solution_from_dict(json.load(fh))
        except OSError as exc:
            raise IoError(str(exc)) from None
        results.append(crossscale.ScaleRunResult(scale, model, sol))
    return results


def solution_from_dict(d: dict) -> maxent.IrlSolution:
    arr = np.asarray
    return maxent.IrlSolution(
        theta=arr(d["theta"], dtype=float),
        state_rewards=arr(d["state_rewards"], dtype=float),
        visitation=arr(d["visitation"], dtype=float),
        visitation_by_step=np.empty((0, len(d["visitation"]))),
        policy=arr(d["policy"], dtype=float),
        likelihood_trace=list(d["likelihood_trace"]),
        gradient_norm_trace=list(d["gradient_norm_trace"]),
        converged=bool(d["converged"]),
        iterations_used=int(d["iterations_used"]),
        horizon=int(d["horizon"]),
        f_tilde=None if d.get("f_tilde") is None else arr(d["f_tilde"], dtype=float),
        feature_mismatch=float(d.get("feature_mismatch", 0.0)),
        config=SolverConfig.from_dict(d["config"]),
    )
