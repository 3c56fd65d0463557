"""Sweep planning, parallel execution, and cross-run aggregation.

A sweep draws run configurations from a factor grid, executes each one in
its own output directory, and aggregates the per-run metric summaries into
factor-level tables: group means, pairwise Welch tests, variance decomposition
(eta squared) with dominant/secondary factor per metric, per-model crosstabs,
and 2x2 interaction contrasts for selected factor pairs.

Execution is resumable: a run directory containing a DONE marker is skipped
on re-execution, so a crashed sweep can be restarted with the same arguments.
Failures are recorded per run and never abort the sweep. Aggregation reads
only the run directories it is given.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .config import RunConfig, load_config
from .engine import run_simulation
from .errors import InvalidInputError, InvalidSpecError
from .stats import cohens_d, eta_squared, interaction_contrast, welch_t

FACTOR_COLUMNS = (
    "backend_id",
    "num_agents",
    "graph_type",
    "homophily",
    "survey_in_context",
    "news_agents",
    "proportions",
)

# Scalar metric columns pulled from each run's metrics.json summary.
METRIC_COLUMNS = (
    "consensus_first",
    "consensus_final",
    "net_consensus_change",
    "mean_opinion_shift_rate",
    "mean_majority_follow_rate",
    "mean_neighbor_alignment_shift_rate",
    "assortativity_first",
    "assortativity_final",
    "assortativity_change",
    "mean_local_agreement",
    "local_agreement_final",
    "mean_cross_cutting",
    "cross_cutting_final",
)

# Factor pairs reported as 2x2 interaction contrasts. All are binary factors,
# so the contrast needs no level selection.
INTERACTION_PAIRS = (
    ("survey_in_context", "news_agents"),
    ("homophily", "survey_in_context"),
    ("homophily", "news_agents"),
)

SIGNIFICANCE_LEVEL = 1e-3

DONE_MARKER = "DONE"
FAILED_MARKER = "FAILED"


# ---------------------------------------------------------------------------
# sweep planning


def load_space(path: str | Path | None = None) -> dict[str, Any]:
    """Load a sweep space description, falling back to the bundled grid.

    The space is a dict with "factors" (name -> list of levels),
    "question_ids" (sampled independently of the factor grid), and optional
    "base" overrides applied to every run config.
    """
    if path is None:
        text = resources.files("socsim.data").joinpath("default_grid.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    space = json.loads(text)
    if not isinstance(space, dict):
        raise InvalidInputError("sweep space must be a JSON object")
    factors = space.get("factors")
    if not isinstance(factors, dict) or not factors:
        raise InvalidInputError("sweep space needs a non-empty 'factors' object")
    for name, levels in factors.items():
        if not isinstance(levels, list) or not levels:
            raise InvalidInputError(f"factor {name!r} needs a non-empty level list")
        if len(set(map(repr, levels))) != len(levels):
            raise InvalidInputError(f"factor {name!r} has duplicate levels")
    questions = space.get("question_ids", ["q28"])
    if not isinstance(questions, list) or not questions:
        raise InvalidInputError("'question_ids' must be a non-empty list")
    space.setdefault("question_ids", questions)
    space.setdefault("base", {})
    if not isinstance(space["base"], dict):
        raise InvalidInputError("'base' must be an object of config overrides")
    return space


def design_combinations(space: Mapping[str, Any]) -> int:
    """Number of cells in the factor grid (question_ids are not a factor)."""
    n = 1
    for levels in space["factors"].values():
        n *= len(levels)
    return n


def _factor_items(space: Mapping[str, Any]) -> list[tuple[str, list[Any]]]:
    return sorted((str(k), list(v)) for k, v in space["factors"].items())


def random_sweep(
    space: Mapping[str, Any],
    n_runs: int,
    master_seed: int,
    mode: str = "uniform",
) -> list[RunConfig]:
    """Draw run configurations from the sweep space.

    "uniform" samples every factor level independently per run. "quota"
    walks a seeded shuffle of the full factor grid in cycles, so any prefix
    of the returned list covers the grid as evenly as possible. In both
    modes the question id is drawn uniformly and each run gets its own seed
    derived from the master seed.
    """
    if n_runs < 0:
        raise InvalidInputError("n_runs must be >= 0")
    if mode not in ("uniform", "quota"):
        raise InvalidInputError(f"unknown sweep mode {mode!r}")
    rng = np.random.default_rng(master_seed)
    items = _factor_items(space)
    questions = list(space["question_ids"])
    base = dict(space.get("base", {}))

    assignments: list[dict[str, Any]] = []
    if mode == "uniform":
        for _ in range(n_runs):
            assignments.append({name: levels[int(rng.integers(len(levels)))] for name, levels in items})
    else:
        cells = list(itertools.product(*(levels for _, levels in items)))
        order = rng.permutation(len(cells))
        names = [name for name, _ in items]
        for i in range(n_runs):
            cell = cells[int(order[i % len(cells)])]
            if i % len(cells) == len(cells) - 1 and i + 1 < n_runs:
                order = rng.permutation(len(cells))
            assignments.append(dict(zip(names, cell)))

    configs = []
    for i, factor_values in enumerate(assignments):
        payload = dict(base)
        payload.update(factor_values)
        payload["question_id"] = str(questions[int(rng.integers(len(questions)))])
        payload["seed"] = int(rng.integers(0, 2**31 - 1))
        payload["run_id"] = f"r{i:04d}"
        config = RunConfig.from_dict(payload)
        config.validate()
        configs.append(config)
    return configs


# ---------------------------------------------------------------------------
# execution


def _execute_one(payload: dict[str, Any]) -> dict[str, Any]:
    """Run one configuration in its own directory. Module level so it pickles."""
    config = RunConfig.from_dict(payload["config"])
    out_dir = Path(payload["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    failed = out_dir / FAILED_MARKER
    try:
        artifacts = run_simulation(config, out_dir=out_dir)
    except Exception as exc:  # noqa: BLE001 - sweep survives any single run
        message = f"{type(exc).__name__}: {exc}"
        failed.write_text(message + "\n", encoding="utf-8")
        return {"run_id": config.run_id, "ok": False, "skipped": False, "error": message}
    if failed.exists():
        failed.unlink()
    (out_dir / DONE_MARKER).write_text(f"{artifacts.run_id}\n", encoding="utf-8")
    return {
        "run_id": config.run_id,
        "ok": True,
        "skipped": False,
        "error": None,
        "duration_seconds": artifacts.duration_seconds,
    }


def execute(
    configs: Sequence[RunConfig],
    out_root: str | Path,
    parallelism: int = 1,
    backend_url: str | None = None,
) -> list[dict[str, Any]]:
    """Execute configs under out_root, at most `parallelism` at a time.

    Each run writes to out_root/<run_id>. Runs whose directory already has a
    DONE marker are skipped, which makes an interrupted sweep resumable.
    Per-run failures are reported in the returned list, not raised.
    """
    if parallelism < 1:
        raise InvalidInputError("parallelism must be >= 1")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    seen: set[str] = set()
    results: list[dict[str, Any]] = []
    pending: list[dict[str, Any]] = []
    for i, config in enumerate(configs):
        run_id = config.run_id or f"r{i:04d}"
        if run_id in seen:
            raise InvalidInputError(f"duplicate run_id {run_id!r} in sweep")
        seen.add(run_id)
        if config.run_id != run_id:
            config = replace(config, run_id=run_id)
        if backend_url is not None:
            config = replace(config, backend_url=backend_url)
        run_dir = out_root / run_id
        if (run_dir / DONE_MARKER).exists():
            results.append({"run_id": run_id, "ok": True, "skipped": True, "error": None})
            continue
        pending.append({"config": config.to_dict(), "out_dir": str(run_dir)})

    if parallelism == 1 or len(pending) <= 1:
        results.extend(_execute_one(p) for p in pending)
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results.extend(pool.map(_execute_one, pending))
    results.sort(key=lambda r: r["run_id"])
    return results


# ---------------------------------------------------------------------------
# collection and aggregation


def collect_runs(run_root: str | Path) -> list[dict[str, Any]]:
    """Gather one flat row per completed run directory under run_root."""
    run_root = Path(run_root)
    rows = []
    for run_dir in sorted(p for p in run_root.iterdir() if p.is_dir()):
        if not (run_dir / DONE_MARKER).exists():
            continue
        config = load_config(run_dir / "config.json")
        metrics = json.loads((run_dir / "metrics.json").read_text("utf-8"))
        summary = metrics["summary"]
        row: dict[str, Any] = {"run_id": config.run_id or run_dir.name}
        for name in FACTOR_COLUMNS:
            row[name] = getattr(config, name)
        row["question_id"] = config.question_id
        row["seed"] = config.seed
        for name in METRIC_COLUMNS:
            row[name] = summary.get(name)
        rows.append(row)
    return rows


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str | Path, fieldnames: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row.get(name)) for name in fieldnames])


def _parse_cell(text: str) -> Any:
    if text == "":
        return None
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_runs_csv(path: str | Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse_cell(v) for k, v in row.items()} for row in reader]


def _level_key(value: Any) -> tuple:
    if isinstance(value, bool):
        return (0, int(value), "")
    if isinstance(value, (int, float)):
        return (0, value, "")
    return (1, 0, str(value))


def _group_values(rows: Sequence[Mapping[str, Any]], factor: str, metric: str) -> dict[Any, list[float]]:
    groups: dict[Any, list[float]] = {}
    for row in rows:
        value = row.get(metric)
        if value is None:
            continue
        groups.setdefault(row.get(factor), []).append(float(value))
    return dict(sorted(groups.items(), key=lambda kv: _level_key(kv[0])))


def _mean_std(values: Sequence[float]) -> tuple[float, float | None]:
    mean = math.fsum(values) / len(values)
    if len(values) < 2:
        return mean, None
    var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


def factor_level_table(rows: Sequence[Mapping[str, Any]], factors: Sequence[str] = FACTOR_COLUMNS,
                       metrics: Sequence[str] = METRIC_COLUMNS) -> list[dict[str, Any]]:
    out = []
    for metric in metrics:
        for factor in factors:
            for level, values in _group_values(rows, factor, metric).items():
                mean, std = _mean_std(values)
                out.append({
                    "metric": metric, "factor": factor, "level": level,
                    "n": len(values), "mean": mean, "std": std,
                })
    return out


def factor_test_table(rows: Sequence[Mapping[str, Any]], factors: Sequence[str] = FACTOR_COLUMNS,
                      metrics: Sequence[str] = METRIC_COLUMNS) -> list[dict[str, Any]]:
    out = []
    for metric in metrics:
        for factor in factors:
            groups = _group_values(rows, factor, metric)
            levels = list(groups)
            for a, b in itertools.combinations(levels, 2):
                xs, ys = groups[a], groups[b]
                if len(xs) < 2 or len(ys) < 2:
                    continue
                test = welch_t(xs, ys)
                out.append({
                    "metric": metric, "factor": factor,
                    "level_a": a, "level_b": b,
                    "n_a": len(xs), "n_b": len(ys),
                    "mean_a": _mean_std(xs)[0], "mean_b": _mean_std(ys)[0],
                    "t": test.t, "p": test.p,
                    "cohens_d": cohens_d(xs, ys),
                    "degenerate": test.degenerate,
                    "significant": (not test.degenerate) and test.p <= SIGNIFICANCE_LEVEL,
                })
    return out


def eta_squared_table(rows: Sequence[Mapping[str, Any]], factors: Sequence[str] = FACTOR_COLUMNS,
                      metrics: Sequence[str] = METRIC_COLUMNS) -> list[dict[str, Any]]:
    out = []
    for metric in metrics:
        for factor in factors:
            groups = _group_values(rows, factor, metric)
            if len(groups) < 2:
                continue
            value = eta_squared(list(groups.values()))
            out.append({
                "metric": metric, "factor": factor, "eta_squared": value,
                "n_groups": len(groups),
                "n_runs": sum(len(v) for v in groups.values()),
            })
    return out


def eta_summary_table(eta_rows: Sequence[Mapping[str, Any]]) -> list[dict[str, Any]]:
    """Dominant and secondary factor per metric, ranked by eta squared."""
    by_metric: dict[str, list[Mapping[str, Any]]] = {}
    for row in eta_rows:
        if row["eta_squared"] is not None:
            by_metric.setdefault(row["metric"], []).append(row)
    out = []
    for metric, entries in by_metric.items():
        ranked = sorted(entries, key=lambda r: (-r["eta_squared"], r["factor"]))
        summary = {"metric": metric,
                   "dominant_factor": ranked[0]["factor"],
                   "dominant_eta_squared": ranked[0]["eta_squared"],
                   "secondary_factor": None, "secondary_eta_squared": None}
        if len(ranked) > 1:
            summary["secondary_factor"] = ranked[1]["factor"]
            summary["secondary_eta_squared"] = ranked[1]["eta_squared"]
        out.append(summary)
    out.sort(key=lambda r: METRIC_COLUMNS.index(r["metric"]) if r["metric"] in METRIC_COLUMNS else len(METRIC_COLUMNS))
    return out


def crosstab_table(rows: Sequence[Mapping[str, Any]], model_factor: str = "backend_id",
                   factors: Sequence[str] = FACTOR_COLUMNS,
                   metrics: Sequence[str] = METRIC_COLUMNS) -> list[dict[str, Any]]:
    """Per-model group means for every other factor level."""
    models = sorted({row[model_factor] for row in rows}, key=_level_key)
    out = []
    for metric in metrics:
        for model in models:
            subset = [row for row in rows if row[model_factor] == model]
            for factor in factors:
                if factor == model_factor:
                    continue
                for level, values in _group_values(subset, factor, metric).items():
                    mean, std = _mean_std(values)
                    out.append({
                        "metric": metric, model_factor: model,
                        "factor": factor, "level": level,
                        "n": len(values), "mean": mean, "std": std,
                    })
    return out


def interaction_table(rows: Sequence[Mapping[str, Any]],
                      pairs: Sequence[tuple[str, str]] = INTERACTION_PAIRS,
                      metrics: Sequence[str] = METRIC_COLUMNS) -> list[dict[str, Any]]:
    """2x2 interaction contrasts on cell means for binary factor pairs."""
    out = []
    for metric in metrics:
        for fa, fb in pairs:
            levels_a = sorted({row[fa] for row in rows}, key=_level_key)
            levels_b = sorted({row[fb] for row in rows}, key=_level_key)
            if len(levels_a) != 2 or len(levels_b) != 2:
                continue
            cells: dict[tuple[int, int], list[float]] = {}
            for row in rows:
                value = row.get(metric)
                if value is None:
                    continue
                key = (levels_a.index(row[fa]), levels_b.index(row[fb]))
                cells.setdefault(key, []).append(float(value))
            if any((i, j) not in cells for i in (0, 1) for j in (0, 1)):
                continue
            means = {k: _mean_std(v)[0] for k, v in cells.items()}
            ic = interaction_contrast(means[0, 0], means[0, 1], means[1, 0], means[1, 1])
            se_parts = []
            degenerate = False
            for k in ((0, 0), (0, 1), (1, 0), (1, 1)):
                vs = cells[k]
                if len(vs) < 2:
                    degenerate = True
                    break
                _, std = _mean_std(vs)
                se_parts.append((std or 0.0) ** 2 / len(vs))
            se = None if degenerate else math.sqrt(math.fsum(se_parts))
            out.append({
                "metric": metric, "factor_a": fa, "factor_b": fb,
                "level_a0": levels_a[0], "level_a1": levels_a[1],
                "level_b0": levels_b[0], "level_b1": levels_b[1],
                "mean_00": means[0, 0], "mean_01": means[0, 1],
                "mean_10": means[1, 0], "mean_11": means[1, 1],
                "n_00": len(cells[0, 0]), "n_01": len(cells[0, 1]),
                "n_10": len(cells[1, 0]), "n_11": len(cells[1, 1]),
                "contrast": ic, "se": se,
            })
    return out


def _md_num(value: Any, digits: int = 4) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def render_tables_markdown(level_rows: Sequence[Mapping[str, Any]],
                           test_rows: Sequence[Mapping[str, Any]],
                           crosstab_rows: Sequence[Mapping[str, Any]],
                           eta_summary: Sequence[Mapping[str, Any]]) -> str:
    lines: list[str] = ["# Sweep summary", ""]

    lines += ["## Net consensus change by model", "",
              "| model | n | mean | std |", "|---|---|---|---|"]
    for row in level_rows:
        if row["metric"] == "net_consensus_change" and row["factor"] == "backend_id":
            lines.append(f"| {row['level']} | {row['n']} | {_md_num(row['mean'])} | {_md_num(row['std'])} |")
    lines.append("")

    lines += ["## Survey-context effect on majority follow rate, by model", "",
              "| model | context off | context on | delta |", "|---|---|---|---|"]
    by_model: dict[Any, dict[Any, float]] = {}
    for row in crosstab_rows:
        if row["metric"] == "mean_majority_follow_rate" and row["factor"] == "survey_in_context":
            by_model.setdefault(row["backend_id"], {})[row["level"]] = row["mean"]
    for model in sorted(by_model, key=_level_key):
        cells = by_model[model]
        off, on = cells.get(False), cells.get(True)
        delta = None if off is None or on is None else on - off
        lines.append(f"| {model} | {_md_num(off)} | {_md_num(on)} | {_md_num(delta)} |")
    lines.append("")

    lines += ["## Variance decomposition (dominant factors per metric)", "",
              "| metric | dominant factor | eta^2 | secondary factor | eta^2 |",
              "|---|---|---|---|---|"]
    for row in eta_summary:
        lines.append(
            f"| {row['metric']} | {row['dominant_factor']} | {_md_num(row['dominant_eta_squared'])} "
            f"| {_md_num(row['secondary_factor'])} | {_md_num(row['secondary_eta_squared'])} |")
    lines.append("")

    significant = [r for r in test_rows if r.get("significant")]
    lines += ["## Pairwise Welch tests",
              "",
              f"{len(significant)} of {len(test_rows)} level pairs significant at p <= {SIGNIFICANCE_LEVEL:g}.",
              ""]
    return "\n".join(lines)


def aggregate(run_root: str | Path, out_dir: str | Path,
              rows: Sequence[Mapping[str, Any]] | None = None) -> dict[str, Path]:
    """Aggregate completed runs into CSV tables plus a markdown summary.

    Reads nothing outside run_root. Pass `rows` to aggregate an already
    collected (or synthetic) run table instead of scanning directories.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if rows is None:
        rows = collect_runs(run_root)
    if not rows:
        raise InvalidInputError(f"no completed runs found under {run_root}")

    level_rows = factor_level_table(rows)
    test_rows = factor_test_table(rows)
    eta_rows = eta_squared_table(rows)
    eta_summary = eta_summary_table(eta_rows)
    crosstab_rows = crosstab_table(rows)
    interaction_rows = interaction_table(rows)

    paths = {}
    run_fields = ["run_id", *FACTOR_COLUMNS, "question_id", "seed", *METRIC_COLUMNS]
    specs = [
        ("runs", run_fields, rows),
        ("factor_levels", ["metric", "factor", "level", "n", "mean", "std"], level_rows),
        ("factor_tests", ["metric", "factor", "level_a", "level_b", "n_a", "n_b", "mean_a",
                          "mean_b", "t", "p", "cohens_d", "degenerate", "significant"], test_rows),
        ("eta_squared", ["metric", "factor", "eta_squared", "n_groups", "n_runs"], eta_rows),
        ("eta_summary", ["metric", "dominant_factor", "dominant_eta_squared",
                         "secondary_factor", "secondary_eta_squared"], eta_summary),
        ("crosstabs", ["metric", "backend_id", "factor", "level", "n", "mean", "std"], crosstab_rows),
        ("interactions", ["metric", "factor_a", "factor_b", "level_a0", "level_a1", "level_b0",
                          "level_b1", "mean_00", "mean_01", "mean_10", "mean_11",
                          "n_00", "n_01", "n_10", "n_11", "contrast", "se"], interaction_rows),
    ]
    for name, fields, data in specs:
        path = out_dir / f"{name}.csv"
        write_csv(path, fields, data)
        paths[name] = path

    md_path = out_dir / "tables.md"
    md_path.write_text(render_tables_markdown(level_rows, test_rows, crosstab_rows, eta_summary),
                       encoding="utf-8")
    paths["tables"] = md_path
    return paths
