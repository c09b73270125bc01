"""Command-line entry points: ``generate``, ``run``, ``irl`` and ``report``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver error.
Logs go to standard error; data goes to files.
"""

from __future__ import annotations

import argparse
import collections
import dataclasses
import json
import logging
import os
import sys

from . import crossscale, maxent, pipeline, ticks
from .errors import ConfigError, InvalidConfig, IoError, ScaleIrlError
from .mdp import MdpModel
from .pipeline import PipelineConfig
from .regression import regression_instance
from .trajectories import read_trajectories_jsonl

log = logging.getLogger("scaleirl")

GRADIENT_CHECK_TOLERANCE = 1e-5


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scaleirl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage timings")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")

    gen = sub.add_parser("generate", parents=[common], help="write a synthetic tick CSV")
    gen.add_argument("--sessions", type=int, help="number of trading sessions")

    run = sub.add_parser("run", parents=[common], help="run the full pipeline")
    run.add_argument("--input", help="tick CSV (default: synthetic data)")
    run.add_argument("--scales", type=_int_list, help="e.g. 5,15,30,60")
    run.add_argument("--states-per-scale", type=int)
    run.add_argument("--clusters", type=int)
    run.add_argument("--epsilon", type=float)
    run.add_argument("--alpha", type=float)
    run.add_argument("--workers", type=int)
    run.add_argument("--no-intermediates", action="store_true")

    irl = sub.add_parser("irl", parents=[common], help="fit MaxEnt IRL on persisted artifacts")
    irl.add_argument("--mdp", help="mdp.json written by run")
    irl.add_argument("--trajectories", help="trajectories.jsonl written by run")
    irl.add_argument("--method", choices=("gradient", "lbfgs"))
    irl.add_argument("--learning-rate", type=float)
    irl.add_argument("--max-iterations", type=int)
    irl.add_argument("--tolerance", type=float)
    irl.add_argument("--horizon", type=int)
    irl.add_argument("--gradient-check", action="store_true",
                     help="compare analytic and finite-difference gradients and exit")

    rep = sub.add_parser("report", parents=[common],
                         help="rebuild the cross-scale report from a run directory")
    rep.add_argument("--clusters", type=int)
    rep.add_argument("--scales", type=_int_list)
    return parser


def load_config(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {}
    mapping = {"seed": "seed", "out": "out", "input": "input_csv", "scales": "scales",
               "states_per_scale": "states_per_scale", "clusters": "cluster_count",
               "epsilon": "epsilon", "alpha": "alpha", "workers": "workers"}
    for arg, key in mapping.items():
        value = getattr(args, arg, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "no_intermediates", False):
        overrides["intermediates"] = False
    if getattr(args, "sessions", None) is not None:
        overrides["synthetic"] = {**config.synthetic, "sessions": args.sessions}
    solver = {}
    for arg, key in (("method", "method"), ("learning_rate", "learning_rate"),
                     ("max_iterations", "max_iterations"), ("tolerance", "gradient_tolerance"),
                     ("horizon", "horizon")):
        value = getattr(args, arg, None)
        if value is not None:
            solver[key] = value
    if solver:
        overrides["solver"] = dataclasses.replace(config.solver, **solver)
    try:
        return dataclasses.replace(config, **overrides)
    except TypeError as exc:
        raise InvalidConfig(str(exc)) from None


def cmd_generate(config: PipelineConfig) -> int:
    regime = config.regime_config()
    market = ticks.generate_synthetic_market(regime)
    os.makedirs(config.out, exist_ok=True)
    tick_path = os.path.join(config.out, "ticks.csv")
    label_path = os.path.join(config.out, "ticks.labels.csv")
    try:
        with open(tick_path, "w", encoding="utf-8", newline="") as fh:
            ticks.write_tick_csv(market.ticks, fh)
        with open(label_path, "w", encoding="utf-8", newline="") as fh:
            ticks.write_labels_csv(market.labels, fh)
    except OSError as exc:
        raise IoError(str(exc)) from None
    occupancy = collections.Counter(lab.regime for lab in market.labels)
    print(f"wrote {len(market.ticks)} ticks to {tick_path}")
    print(f"planted labels ({regime.base_minutes}-min periods) in {label_path}")
    for k in range(regime.regime_count):
        share = occupancy[k] / max(len(market.labels), 1)
        print(f"  regime {k}: {occupancy[k]} periods ({share:.1%}), drift {regime.drift[k]:+g}")
    return 0


def cmd_run(config: PipelineConfig) -> int:
    result = pipeline.run(config)
    print(f"wrote {len(result.manifest['artifacts'])} artifacts to {config.out}")
    for art in result.scales:
        sol = art.solution
        print(f"  {art.scale_minutes:>3}-min: {art.state_model.K} states, "
              f"{len(art.trajectories)} episodes, converged={sol.converged}, "
              f"|grad|={sol.feature_mismatch:.2e}")
    return 0


def cmd_irl(config: PipelineConfig, args) -> int:
    if args.gradient_check:
        if args.mdp and args.trajectories:
            mdp, trajs = _load_irl_inputs(args.mdp, args.trajectories)
            theta = maxent.fit(mdp, trajs, config.solver).theta
        else:
            mdp, trajs, theta = regression_instance()
        err = maxent.gradient_check(mdp, trajs, theta, config.solver.horizon)
        print(f"max relative analytic-vs-finite-difference error: {err:.3e}")
        return 0 if err < GRADIENT_CHECK_TOLERANCE else 4
    if not (args.mdp and args.trajectories):
        raise ConfigError("irl needs --mdp and --trajectories (or --gradient-check)")
    mdp, trajs = _load_irl_inputs(args.mdp, args.trajectories)
    sol = maxent.fit(mdp, trajs, config.solver)
    out = args.out or "irl.json"
    if os.path.isdir(out):
        out = os.path.join(out, "irl.json")
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(pipeline.dump_json(sol.to_dict()))
    except OSError as exc:
        raise IoError(str(exc)) from None
    print(json.dumps({"theta": sol.theta.tolist(), "converged": sol.converged,
                      "iterations": sol.iterations_used}))
    return 0


def _load_irl_inputs(mdp_path: str, traj_path: str):
    try:
        with open(mdp_path, encoding="utf-8") as fh:
            mdp = MdpModel.from_dict(json.load(fh))
        with open(traj_path, encoding="utf-8") as fh:
            trajs = read_trajectories_jsonl(fh)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise IoError(f"cannot read IRL inputs: {exc}") from None
    return mdp, trajs


def cmd_report(config: PipelineConfig, args) -> int:
    results = pipeline.load_scale_results(config.out, config.scales)
    report = pipeline.build_report(results, config)
    written = crossscale.emit_report(report, config.out)
    print(f"wrote {len(written)} report files to {config.out}")
    return 0


def _report_config(args) -> PipelineConfig:
    # default to the configuration the run directory was produced with
    if not args.config and args.out and os.path.exists(os.path.join(args.out, "config.json")):
        args.config = os.path.join(args.out, "config.json")
    return load_config(args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            config = _report_config(args)
        else:
            config = load_config(args)
        config.validate()
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "irl":
            return cmd_irl(config, args)
        return cmd_report(config, args)
    except ScaleIrlError as exc:
        where = getattr(exc, "stage", None)
        prefix = f"[{where}] " if where else ""
        print(f"error: {prefix}{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
