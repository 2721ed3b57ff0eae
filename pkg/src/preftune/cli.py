"""Command-line front door: automated runs, replay, benchmarks, service.

Artifacts all land under one output directory per invocation. history.csv
contains only deterministic columns so identical command plus seed gives
byte-identical files; wall-clock timing lives in summary.json.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .benchmarks import BENCHMARKS, benchmark_by_name
from .core import BoundsError, ParamSpace
from .engine import GlispConfig, RunResult, run_automated, run_glis_automated
from .scenarios import ExperimentOutcome, scenario_by_kind, trajectory_to_csv


class _UsageError(ValueError):
    """User-supplied value rejected after argparse (still exit code 2)."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _sanitize(obj):
    """Replace non-finite floats with None for strict JSON."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    raw = os.environ.get("PREF_TUNE_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise _UsageError(f"PREF_TUNE_SEED must be an integer, got {raw!r}")


def _build_config(args, seed: int) -> GlispConfig:
    cfg = GlispConfig(seed=seed)
    if args.n_init is not None:
        cfg.n_init = args.n_init
    if args.n_max is not None:
        cfg.n_max = args.n_max
    if args.delta is not None:
        cfg.delta = args.delta
    try:
        cfg.validate()
    except ValueError as exc:
        raise _UsageError(str(exc))
    return cfg


def _resolve_target(name: str):
    """Map a scenario name to (space, runner, oracle, scenario-or-None)."""
    if name in ("cstr", "driving"):
        sc = scenario_by_kind(name)
        return sc.space(), sc.run, sc.score, sc
    if name.startswith("bench:"):
        try:
            bench = benchmark_by_name(name.split(":", 1)[1])
        except KeyError as exc:
            raise _UsageError(str(exc.args[0]))
        return bench.space, lambda th: th, bench, None
    raise _UsageError(f"unknown scenario {name!r} "
                      "(expected cstr, driving, or bench:<fn>)")


def _out_dir(args, default_leaf: str) -> Path:
    root = Path(args.output) if args.output else Path("preftune_runs") / default_leaf
    root.mkdir(parents=True, exist_ok=True)
    return root


def _write_history(path: Path, names, history):
    lines = ["iter," + ",".join(names) + ",score,incumbent_score"]
    for rec in history:
        cells = [str(rec.index), *(_fmt(v) for v in rec.theta),
                 _fmt(rec.value), _fmt(rec.incumbent_value)]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def _write_run_artifacts(out: Path, command: str, scenario_name: str,
                         cfg: GlispConfig, space: ParamSpace, res: RunResult,
                         sc, wall: float):
    _write_history(out / "history.csv", space.names, res.history)
    experiments = []
    if sc is not None:
        exp_dir = out / "experiments"
        exp_dir.mkdir(exist_ok=True)
        for rec in res.history:
            outcome = res.outcomes.get(rec.index) or sc.run(rec.theta)
            (exp_dir / f"exp_{rec.index:03d}.csv").write_text(
                trajectory_to_csv(outcome.trajectory, sc.state_names,
                                  sc.input_names, sc.output_names))
            experiments.append({"index": rec.index, "status": outcome.status,
                                "score": rec.value,
                                "metrics": outcome.metrics})
    summary = {
        "command": command,
        "scenario": scenario_name,
        "seed": cfg.seed,
        "n_init": cfg.n_init,
        "n_max": cfg.n_max,
        "delta": cfg.delta,
        "best_index": res.best_index,
        "best_theta": dict(zip(space.names, res.best_theta.tolist())),
        "best_score": res.best_value,
        "wall_time_s": wall,
        "experiments": experiments,
    }
    (out / "summary.json").write_text(
        json.dumps(_sanitize(summary), indent=2, sort_keys=True) + "\n")


def _cmd_run(args, glis: bool) -> int:
    seed = _resolve_seed(args)
    cfg = _build_config(args, seed)
    space, runner, oracle, sc = _resolve_target(args.scenario)
    command = "run-glis" if glis else "run-auto"
    leaf = f"{command}_{args.scenario.replace(':', '_')}_seed{seed}"
    out = _out_dir(args, leaf)
    t0 = time.perf_counter()
    if glis:
        res = run_glis_automated(space, cfg, runner, oracle)
    else:
        res = run_automated(space, cfg, runner, oracle)
    wall = time.perf_counter() - t0
    _write_run_artifacts(out, command, args.scenario, cfg, space, res, sc, wall)
    theta_txt = ", ".join(f"{n}={v:.6g}" for n, v in
                          zip(space.names, res.best_theta))
    print(f"{command} {args.scenario} seed {seed}: best score "
          f"{res.best_value:.6g} at ({theta_txt}) after {len(res.history)} "
          f"experiments -> {out}")
    return 0


def _cmd_replay(args) -> int:
    if args.scenario not in ("cstr", "driving"):
        raise _UsageError(f"replay needs a simulated scenario, got {args.scenario!r}")
    sc = scenario_by_kind(args.scenario)
    try:
        theta = np.array([float(v) for v in args.theta.split(",")])
    except ValueError:
        raise _UsageError(f"--theta must be comma-separated numbers, got {args.theta!r}")
    try:
        theta = sc.space().validate(theta)
    except BoundsError as exc:
        raise _UsageError(str(exc))
    out = _out_dir(args, f"replay_{args.scenario}")
    t0 = time.perf_counter()
    outcome = sc.run(theta)
    wall = time.perf_counter() - t0
    score = sc.score(outcome)
    (out / "trajectory.csv").write_text(
        trajectory_to_csv(outcome.trajectory, sc.state_names, sc.input_names,
                          sc.output_names))
    doc = {
        "scenario": args.scenario,
        "theta": dict(zip(sc.space().names, outcome.theta.tolist())),
        "status": outcome.status,
        "metrics": outcome.metrics,
        "score": score,
        "wall_time_s": wall,
    }
    (out / "metrics.json").write_text(
        json.dumps(_sanitize(doc), indent=2, sort_keys=True) + "\n")
    print(f"replay {args.scenario}: status {outcome.status}, score "
          f"{score:.6g} -> {out}")
    return 0


def _cmd_bench(args) -> int:
    args.scenario = f"bench:{args.fn}"
    return _cmd_run(args, glis=False)


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    port = args.port if args.port is not None else int(
        os.environ.get("PREF_TUNE_PORT", "8080"))
    app = create_app(data_dir=args.data)
    uvicorn.run(app, host=args.host, port=port, log_level="info")
    return 0


def _add_run_flags(p):
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: PREF_TUNE_SEED env or 0)")
    p.add_argument("--n-init", type=int, default=None, dest="n_init")
    p.add_argument("--n-max", type=int, default=None, dest="n_max")
    p.add_argument("--delta", type=float, default=None,
                   help="exploration weight")
    p.add_argument("--output", default=None,
                   help="artifact directory (default: ./preftune_runs/<run>)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="preftune",
        description="Preference-based controller calibration toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_auto = sub.add_parser("run-auto", help="automated preference run")
    run_auto.add_argument("--scenario", required=True,
                          help="cstr, driving, or bench:<fn>")
    _add_run_flags(run_auto)
    run_auto.set_defaults(func=lambda a: _cmd_run(a, glis=False))

    run_glis = sub.add_parser("run-glis", help="value-based baseline run")
    run_glis.add_argument("--scenario", required=True)
    _add_run_flags(run_glis)
    run_glis.set_defaults(func=lambda a: _cmd_run(a, glis=True))

    replay = sub.add_parser("replay", help="run one tuning vector")
    replay.add_argument("--scenario", required=True, help="cstr or driving")
    replay.add_argument("--theta", required=True,
                        help="comma-separated values in space order")
    replay.add_argument("--output", default=None)
    replay.set_defaults(func=_cmd_replay)

    bench = sub.add_parser("bench", help="run an analytic benchmark")
    bench.add_argument("--fn", required=True,
                       choices=sorted(BENCHMARKS))
    bench.add_argument("--dim", type=int, default=2, choices=[2],
                       help="benchmark dimensionality (2-D suite)")
    _add_run_flags(bench)
    bench.set_defaults(func=_cmd_bench)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--port", type=int, default=None,
                       help="default: PREF_TUNE_PORT env or 8080")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data", default=None,
                       help="session directory (default: PREF_TUNE_DATA env)")
    serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"preftune {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        print(f"preftune {args.command}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
