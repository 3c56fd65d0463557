import json
import math
from collections import Counter

import numpy as np
import pytest

from socsim.errors import InvalidInputError
from socsim.harness import (
    FACTOR_COLUMNS,
    METRIC_COLUMNS,
    aggregate,
    collect_runs,
    design_combinations,
    eta_squared_table,
    eta_summary_table,
    execute,
    factor_test_table,
    interaction_table,
    load_space,
    random_sweep,
    read_runs_csv,
    write_csv,
)

SMALL_SPACE = {
    "factors": {
        "homophily": [False, True],
        "news_agents": [0, 1],
        "graph_type": ["random", "powerlaw_cluster"],
    },
    "question_ids": ["q25", "q28"],
    "base": {"num_agents": 64, "backend_id": "stub-m2",
             "steps": 20, "survey_interval": 5},
}


def base_row(run_id, **overrides):
    row = {
        "run_id": run_id,
        "backend_id": "stub-m1",
        "num_agents": 64,
        "graph_type": "random",
        "homophily": False,
        "survey_in_context": False,
        "news_agents": 0,
        "proportions": "uniform",
        "question_id": "q28",
        "seed": 0,
    }
    for name in METRIC_COLUMNS:
        row[name] = None
    row.update(overrides)
    return row


def planted_rows(rng, ratio=0.25, n_per_level=40,
                 metric="net_consensus_change"):
    """Synthetic run rows where backend_id explains exactly `ratio` of the
    variance in one metric and every other factor is assigned at random."""
    backends = ["stub-m0", "stub-m1", "stub-m2", "stub-m3"]
    effects = np.array([-1.5, -0.5, 0.5, 1.5])
    noise = rng.normal(size=(4, n_per_level))
    noise -= noise.mean(axis=1, keepdims=True)
    ss_between = n_per_level * float(np.sum(effects**2))
    noise *= math.sqrt(ss_between * (1 - ratio) / ratio / float(np.sum(noise**2)))
    rows = []
    for g, backend in enumerate(backends):
        for j in range(n_per_level):
            rows.append(base_row(
                f"s{g}{j:03d}",
                backend_id=backend,
                num_agents=int(rng.choice([64, 256, 1024, 4096])),
                graph_type=str(rng.choice(["random", "powerlaw_cluster"])),
                homophily=bool(rng.integers(2)),
                survey_in_context=bool(rng.integers(2)),
                news_agents=int(rng.integers(2)),
                proportions=str(rng.choice(["uniform", "blueprint"])),
                seed=g * 1000 + j,
                **{metric: float(effects[g] + noise[g, j])},
            ))
    return rows


def additive_rows(rng, n_per_cell=30, metric="mean_majority_follow_rate"):
    """Cell means exactly additive in (survey_in_context, news_agents):
    noise is recentred per cell, so the interaction contrast must vanish."""
    rows = []
    base = {(False, 0): 0.25, (False, 1): 0.5, (True, 0): 0.75, (True, 1): 1.0}
    for (x, y), level in base.items():
        noise = rng.normal(0, 0.05, size=n_per_cell)
        noise -= noise.mean()
        for j in range(n_per_cell):
            rows.append(base_row(
                f"a{int(x)}{y}{j:03d}",
                survey_in_context=x, news_agents=y,
                **{metric: level + float(noise[j])},
            ))
    return rows


class TestLoadSpace:
    def test_bundled_grid_matches_design(self):
        space = load_space()
        assert set(space["factors"]) == set(FACTOR_COLUMNS)
        assert design_combinations(space) == 1024
        assert space["question_ids"] == ["q25", "q28", "q29"]
        assert space["base"]["steps"] == 2500
        assert space["base"]["survey_interval"] == 250

    def test_custom_space_file(self, tmp_path):
        path = tmp_path / "space.json"
        path.write_text(json.dumps(SMALL_SPACE), encoding="utf-8")
        space = load_space(path)
        assert design_combinations(space) == 8

    @pytest.mark.parametrize("broken", [
        [1, 2],
        {"factors": {}},
        {"factors": {"homophily": []}},
        {"factors": {"homophily": [True, True]}},
        {"factors": {"homophily": [True, False]}, "question_ids": []},
        {"factors": {"homophily": [True, False]}, "base": [1]},
    ])
    def test_rejects_malformed_space(self, tmp_path, broken):
        path = tmp_path / "space.json"
        path.write_text(json.dumps(broken), encoding="utf-8")
        with pytest.raises(InvalidInputError):
            load_space(path)


class TestRandomSweep:
    def test_singleton_grid_varies_only_seed(self):
        space = {
            "factors": {"homophily": [True]},
            "question_ids": ["q28"],
            "base": {"num_agents": 64, "backend_id": "stub-m1",
                     "steps": 10, "survey_interval": 5},
        }
        configs = random_sweep(space, 6, master_seed=1)
        assert len(configs) == 6
        assert len({c.seed for c in configs}) == 6
        stripped = {
            tuple((f, getattr(c, f)) for f in FACTOR_COLUMNS) for c in configs
        }
        assert len(stripped) == 1
        assert [c.run_id for c in configs] == [f"r{i:04d}" for i in range(6)]

    def test_uniform_binary_factor_frequencies(self):
        space = {
            "factors": {"homophily": [False, True]},
            "question_ids": ["q28"],
            "base": {"num_agents": 64, "backend_id": "stub-m1",
                     "steps": 10, "survey_interval": 5},
        }
        configs = random_sweep(space, 10**4, master_seed=3)
        share = sum(c.homophily for c in configs) / len(configs)
        assert 0.48 <= share <= 0.52

    def test_quota_prefix_covers_grid(self):
        configs = random_sweep(SMALL_SPACE, 8, master_seed=5, mode="quota")
        cells = {(c.homophily, c.news_agents, c.graph_type) for c in configs}
        assert len(cells) == 8

    def test_quota_cycles_stay_balanced(self):
        configs = random_sweep(SMALL_SPACE, 20, master_seed=5, mode="quota")
        counts = Counter((c.homophily, c.news_agents, c.graph_type)
                         for c in configs)
        assert len(counts) == 8
        assert all(2 <= v <= 3 for v in counts.values())

    def test_quota_reshuffles_between_cycles(self):
        configs = random_sweep(SMALL_SPACE, 16, master_seed=5, mode="quota")
        first = [(c.homophily, c.news_agents, c.graph_type)
                 for c in configs[:8]]
        second = [(c.homophily, c.news_agents, c.graph_type)
                  for c in configs[8:]]
        assert sorted(map(repr, first)) == sorted(map(repr, second))
        assert first != second

    def test_reproducible_and_seed_sensitive(self):
        a = random_sweep(SMALL_SPACE, 10, master_seed=7)
        b = random_sweep(SMALL_SPACE, 10, master_seed=7)
        c = random_sweep(SMALL_SPACE, 10, master_seed=8)
        assert a == b
        assert a != c

    def test_question_ids_sampled_outside_grid(self):
        configs = random_sweep(SMALL_SPACE, 60, master_seed=2)
        seen = {c.question_id for c in configs}
        assert seen == {"q25", "q28"}

    def test_rejects_bad_arguments(self):
        with pytest.raises(InvalidInputError):
            random_sweep(SMALL_SPACE, -1, master_seed=0)
        with pytest.raises(InvalidInputError):
            random_sweep(SMALL_SPACE, 1, master_seed=0, mode="latin")


class TestExecute:
    def test_runs_complete_with_artifacts(self, tmp_path):
        configs = random_sweep(SMALL_SPACE, 3, master_seed=11)
        results = execute(configs, tmp_path, parallelism=1)
        assert [r["run_id"] for r in results] == ["r0000", "r0001", "r0002"]
        assert all(r["ok"] and not r["skipped"] for r in results)
        for run_id in ("r0000", "r0001", "r0002"):
            run_dir = tmp_path / run_id
            assert (run_dir / "DONE").exists()
            for name in ("config.json", "surveys.jsonl", "metrics.json",
                         "events.jsonl", "meta.json"):
                assert (run_dir / name).exists()

    def test_resume_skips_done_runs(self, tmp_path):
        configs = random_sweep(SMALL_SPACE, 3, master_seed=11)
        execute(configs, tmp_path, parallelism=1)
        results = execute(configs, tmp_path, parallelism=1)
        assert all(r["ok"] and r["skipped"] for r in results)

    def test_incomplete_runs_are_redone(self, tmp_path):
        configs = random_sweep(SMALL_SPACE, 2, master_seed=11)
        execute(configs[:1], tmp_path, parallelism=1)
        # fake a run that died mid-write: directory exists, no DONE marker
        stale = tmp_path / "r0001"
        stale.mkdir()
        (stale / "surveys.jsonl").write_text("{broken", encoding="utf-8")
        results = execute(configs, tmp_path, parallelism=1)
        assert results[0]["skipped"] is True
        assert results[1]["skipped"] is False and results[1]["ok"] is True
        assert (stale / "DONE").exists()

    def test_failed_run_recorded_and_sweep_survives(self, tmp_path):
        import dataclasses

        configs = random_sweep(SMALL_SPACE, 2, master_seed=11)
        configs[0] = dataclasses.replace(configs[0], question_id="q999")
        results = execute(configs, tmp_path, parallelism=1)
        assert results[0]["ok"] is False
        assert "q999" in results[0]["error"]
        assert (tmp_path / "r0000" / "FAILED").exists()
        assert not (tmp_path / "r0000" / "DONE").exists()
        assert results[1]["ok"] is True

    def test_duplicate_run_ids_rejected(self, tmp_path):
        configs = random_sweep(SMALL_SPACE, 2, master_seed=11)
        import dataclasses

        clash = [configs[0], dataclasses.replace(configs[1], run_id="r0000")]
        with pytest.raises(InvalidInputError, match="duplicate run_id"):
            execute(clash, tmp_path)

    def test_parallel_matches_serial(self, tmp_path):
        configs = random_sweep(SMALL_SPACE, 4, master_seed=13)
        execute(configs, tmp_path / "serial", parallelism=1)
        execute(configs, tmp_path / "parallel", parallelism=2)
        for run_id in ("r0000", "r0001", "r0002", "r0003"):
            for name in ("surveys.jsonl", "events.jsonl", "metrics.json"):
                assert (tmp_path / "serial" / run_id / name).read_bytes() == \
                    (tmp_path / "parallel" / run_id / name).read_bytes()


class TestCsvRoundTrip:
    def test_values_survive_write_and_read(self, tmp_path):
        rows = [
            {"a": 0.1, "b": True, "c": None, "d": 7, "e": "powerlaw_cluster"},
            {"a": -1e-300, "b": False, "c": 1 / 3, "d": -2, "e": "x y"},
        ]
        path = tmp_path / "t.csv"
        write_csv(path, ["a", "b", "c", "d", "e"], rows)
        assert read_runs_csv(path) == rows

    def test_collected_rows_round_trip(self, tmp_path):
        configs = random_sweep(SMALL_SPACE, 3, master_seed=17)
        execute(configs, tmp_path / "runs", parallelism=1)
        rows = collect_runs(tmp_path / "runs")
        paths = aggregate(tmp_path / "runs", tmp_path / "tables")
        assert read_runs_csv(paths["runs"]) == rows

    def test_collect_ignores_incomplete_directories(self, tmp_path):
        configs = random_sweep(SMALL_SPACE, 2, master_seed=17)
        execute(configs, tmp_path, parallelism=1)
        junk = tmp_path / "not-a-run"
        junk.mkdir()
        (junk / "readme.txt").write_text("scratch", encoding="utf-8")
        (tmp_path / "stray.log").write_text("", encoding="utf-8")
        rows = collect_runs(tmp_path)
        assert [r["run_id"] for r in rows] == ["r0000", "r0001"]


class TestAggregation:
    def test_identical_runs_all_degenerate(self):
        # One config repeated: every between-level comparison has zero
        # variance on both sides, so every test must be flagged.
        rows = []
        for i, homophily in enumerate([False, True] * 4):
            rows.append(base_row(f"r{i:04d}", homophily=homophily,
                                 net_consensus_change=0.125,
                                 mean_opinion_shift_rate=0.5))
        tests = factor_test_table(rows)
        assert tests
        assert all(t["degenerate"] for t in tests)
        assert all(not t["significant"] for t in tests)

    def test_planted_factor_dominates_eta_table(self):
        rows = planted_rows(np.random.default_rng(23))
        eta_rows = eta_squared_table(rows)
        summary = eta_summary_table(eta_rows)
        entry = next(r for r in summary
                     if r["metric"] == "net_consensus_change")
        assert entry["dominant_factor"] == "backend_id"
        assert abs(entry["dominant_eta_squared"] - 0.25) < 0.05
        assert entry["secondary_eta_squared"] < 0.1

    def test_planted_factor_survives_full_aggregate(self, tmp_path):
        rows = planted_rows(np.random.default_rng(29))
        paths = aggregate(tmp_path / "ignored", tmp_path / "out", rows=rows)
        summary = read_runs_csv(paths["eta_summary"])
        assert summary[0]["metric"] == "net_consensus_change"
        assert summary[0]["dominant_factor"] == "backend_id"

    def test_additive_synthetic_has_null_interaction(self):
        rows = additive_rows(np.random.default_rng(31))
        table = interaction_table(rows)
        entry = next(r for r in table
                     if (r["factor_a"], r["factor_b"]) ==
                     ("survey_in_context", "news_agents"))
        assert entry["se"] > 0
        assert abs(entry["contrast"]) < 2 * entry["se"]
        assert abs(entry["contrast"]) < 1e-12

    def test_interaction_skips_non_binary_or_missing_cells(self):
        rows = additive_rows(np.random.default_rng(31))
        # homophily never varies in this synthetic set
        table = interaction_table(rows)
        pairs = {(r["factor_a"], r["factor_b"]) for r in table}
        assert pairs == {("survey_in_context", "news_agents")}

    def test_aggregate_emits_all_tables(self, tmp_path):
        configs = random_sweep(SMALL_SPACE, 4, master_seed=19)
        execute(configs, tmp_path / "runs", parallelism=1)
        paths = aggregate(tmp_path / "runs", tmp_path / "tables")
        expected = {"runs", "factor_levels", "factor_tests", "eta_squared",
                    "eta_summary", "crosstabs", "interactions", "tables"}
        assert set(paths) == expected
        assert all(p.exists() for p in paths.values())
        text = paths["tables"].read_text(encoding="utf-8")
        assert "## Net consensus change by model" in text
        assert "## Survey-context effect on majority follow rate" in text
        assert "## Variance decomposition" in text

    def test_aggregate_requires_rows(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        with pytest.raises(InvalidInputError, match="no completed runs"):
            aggregate(empty, tmp_path / "out")

    def test_sweep_pipeline_reproducible(self, tmp_path):
        for name in ("one", "two"):
            configs = random_sweep(SMALL_SPACE, 5, master_seed=37,
                                   mode="quota")
            execute(configs, tmp_path / name / "runs", parallelism=1)
            aggregate(tmp_path / name / "runs", tmp_path / name / "tables")
        names = [p.name for p in sorted((tmp_path / "one" / "tables").iterdir())]
        assert names
        for name in names:
            assert (tmp_path / "one" / "tables" / name).read_bytes() == \
                (tmp_path / "two" / "tables" / name).read_bytes(), name
