"""Command line entry points.

Subcommands: run, sweep, aggregate, rank-questions, fit-proportions,
stats, render. The SOCSIM_BACKEND_URL environment variable overrides the
backend endpoint for run and sweep. Exit codes: 0 success, 1 usage or
run error, 2 sweep finished with some failed runs.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import harness
from .config import RunConfig, load_config
from .engine import run_simulation
from .errors import BackendError, InvalidInputError, InvalidSpecError, ProtocolError
from .mixing import MixProblem, OpinionMatrix, PopulationMix, solve_mix
from .render import render_trajectories
from .stats import cohens_d, eta_squared, welch_t
from .surveys import load_default_target, load_question_bank, rank_questions

ENV_BACKEND_URL = "SOCSIM_BACKEND_URL"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with code 1 on usage errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None


def _backend_url(explicit: str | None) -> str | None:
    if explicit:
        return explicit
    return os.environ.get(ENV_BACKEND_URL) or None


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    url = _backend_url(args.backend_url)
    if url is not None:
        config = replace(config, backend_url=url)
    artifacts = run_simulation(config, out_dir=args.out, keep_events=args.keep_events)
    summary = artifacts.report.scalar_summary()
    print(f"run {artifacts.run_id}: {len(artifacts.snapshots)} snapshots "
          f"in {artifacts.duration_seconds:.2f}s")
    for key in ("consensus_first", "consensus_final", "net_consensus_change"):
        value = summary.get(key)
        print(f"  {key} = {'-' if value is None else f'{value:.4f}'}")
    if args.out:
        print(f"  artifacts in {Path(args.out)}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    space = harness.load_space(args.space)
    configs = harness.random_sweep(space, args.n, args.seed, mode=args.mode)
    results = harness.execute(configs, args.out, parallelism=args.parallel,
                              backend_url=_backend_url(args.backend_url))
    ok = sum(1 for r in results if r["ok"])
    skipped = sum(1 for r in results if r.get("skipped"))
    failed = [r for r in results if not r["ok"]]
    print(f"sweep: {ok} ok ({skipped} resumed), {len(failed)} failed, out={args.out}")
    for r in failed:
        print(f"  FAILED {r['run_id']}: {r['error']}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_aggregate(args: argparse.Namespace) -> int:
    paths = harness.aggregate(args.runs, args.out)
    rows = harness.collect_runs(args.runs)
    print(f"aggregated {len(rows)} runs into {args.out}")
    for name in sorted(paths):
        print(f"  {paths[name]}")
    return EXIT_OK


def cmd_rank_questions(args: argparse.Namespace) -> int:
    bank = load_question_bank(args.bank)
    if args.target:
        target = OpinionMatrix.from_csv(args.target)
    else:
        target = load_default_target()
    matrices = {"population": target}
    mix = PopulationMix(weights={"population": 1.0})
    ranked = rank_questions(bank, matrices, mix)
    limit = args.top if args.top and args.top > 0 else len(ranked)
    print("rank,question_id,entropy_bits,text")
    for i, (question, entropy) in enumerate(ranked[:limit], start=1):
        print(f"{i},{question.question_id},{entropy:.6f},{question.text}")
    return EXIT_OK


def cmd_fit_proportions(args: argparse.Namespace) -> int:
    target = OpinionMatrix.from_csv(args.target)
    models = {}
    for path in args.models:
        name = Path(path).stem
        if name in models:
            raise InvalidInputError(f"duplicate model name {name!r} (file stems must be unique)")
        models[name] = OpinionMatrix.from_csv(path)
    problem = MixProblem(target=target, models=models, variant=args.variant)
    result = solve_mix(problem)
    payload = {
        "variant": args.variant,
        "weights": {k: result.mix.weights[k] for k in sorted(result.mix.weights)},
        "objective": result.objective,
        "iterations": result.iterations,
        "converged": result.converged,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out} (objective {result.objective:.6g})")
    else:
        print(text)
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    rows = harness.read_runs_csv(args.input)
    if not rows:
        raise InvalidInputError(f"no rows in {args.input}")
    if args.metric not in rows[0]:
        raise InvalidInputError(f"metric column {args.metric!r} not in {args.input}")
    if args.factor not in rows[0]:
        raise InvalidInputError(f"factor column {args.factor!r} not in {args.input}")
    groups = harness._group_values(rows, args.factor, args.metric)
    if not groups:
        raise InvalidInputError(f"no non-null values for {args.metric!r}")
    print(f"{args.metric} by {args.factor}")
    for level, values in groups.items():
        mean, std = harness._mean_std(values)
        std_s = "-" if std is None else f"{std:.6f}"
        print(f"  level={level!r:20} n={len(values):4d} mean={mean:.6f} std={std_s}")
    levels = list(groups)
    for a, b in itertools.combinations(levels, 2):
        test = welch_t(groups[a], groups[b])
        d = cohens_d(groups[a], groups[b])
        d_s = "-" if d is None else f"{d:.4f}"
        flag = " (degenerate)" if test.degenerate else ""
        print(f"  {a!r} vs {b!r}: t={test.t:.4f} p={test.p:.3g} d={d_s}{flag}")
    if len(groups) >= 2:
        eta = eta_squared(list(groups.values()))
        print(f"  eta_squared={'-' if eta is None else f'{eta:.6f}'}")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    root = Path(args.runs)
    run_dirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    out = render_trajectories(run_dirs, args.out)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="socsim", description="Social simulation runner and sweep harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one simulation from a config file")
    p.add_argument("--config", required=True, help="path to a run config JSON file")
    p.add_argument("--out", default=None, help="directory for run artifacts")
    p.add_argument("--backend-url", default=None, help="remote backend endpoint override")
    p.add_argument("--keep-events", action="store_true", help="retain the event list in memory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="plan and execute a randomized sweep")
    p.add_argument("--space", default=None, help="sweep space JSON (default: bundled grid)")
    p.add_argument("--n", type=int, required=True, help="number of runs to draw")
    p.add_argument("--seed", type=int, required=True, help="master seed for the sweep")
    p.add_argument("--parallel", type=int, default=1, help="max concurrent runs")
    p.add_argument("--mode", choices=("uniform", "quota"), default="uniform")
    p.add_argument("--out", required=True, help="root directory for run subdirectories")
    p.add_argument("--backend-url", default=None, help="remote backend endpoint override")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("aggregate", help="aggregate completed runs into tables")
    p.add_argument("--runs", required=True, help="sweep output root")
    p.add_argument("--out", required=True, help="directory for CSV/markdown tables")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("rank-questions", help="rank survey questions by population answer entropy")
    p.add_argument("--bank", default=None, help="question bank JSON (default: bundled)")
    p.add_argument("--target", default=None, help="opinion matrix CSV (default: bundled target)")
    p.add_argument("--top", type=int, default=0, help="print only the first N questions")
    p.set_defaults(func=cmd_rank_questions)

    p = sub.add_parser("fit-proportions", help="fit population mix weights to a target matrix")
    p.add_argument("--target", required=True, help="target opinion matrix CSV")
    p.add_argument("--models", required=True, nargs="+", help="per-model opinion matrix CSVs")
    p.add_argument("--variant", choices=("distribution", "average"), default="distribution")
    p.add_argument("--out", default=None, help="write weights JSON here instead of stdout")
    p.set_defaults(func=cmd_fit_proportions)

    p = sub.add_parser("stats", help="group means and tests for one metric column")
    p.add_argument("--metric", required=True, help="metric column name")
    p.add_argument("--factor", required=True, help="factor column name")
    p.add_argument("--input", required=True, help="runs.csv produced by aggregate")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("render", help="plot consensus trajectories for a sweep directory")
    p.add_argument("--runs", required=True, help="sweep output root")
    p.add_argument("--out", default="trajectories.svg", help="output SVG path")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InvalidInputError, InvalidSpecError, ProtocolError, BackendError,
            FileNotFoundError, NotADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
