import re
from pathlib import Path

from socsim.config import RunConfig
from socsim.engine import run_simulation
from socsim.render import PALETTE, render_svg, render_trajectories, trajectory

from conftest import make_snapshot

GOLDEN = Path(__file__).parent / "data" / "golden_trajectories.svg"


def polylines(svg):
    return re.findall(r'<polyline points="([^"]*)"', svg)


class TestTrajectory:
    def test_consensus_per_snapshot(self):
        snaps = [
            make_snapshot({"a": 0, "b": 0, "c": 1}, step=0),
            make_snapshot({"a": 1, "b": 1, "c": 1}, step=10),
        ]
        assert trajectory(snaps) == [(0, 2 / 3), (10, 1.0)]

    def test_all_abstain_snapshots_skipped(self):
        snaps = [
            make_snapshot({"a": 0, "b": 1}, step=0),
            make_snapshot({"a": None, "b": None}, step=5),
            make_snapshot({"a": 1, "b": 1}, step=10),
        ]
        assert [p[0] for p in trajectory(snaps)] == [0, 10]


class TestRenderSvg:
    def test_eleven_snapshots_make_eleven_vertex_polyline(self):
        points = [(step, 0.5 + 0.01 * i)
                  for i, step in enumerate(range(0, 2501, 250))]
        svg = render_svg([("run", points)])
        lines = polylines(svg)
        assert len(lines) == 1
        assert len(lines[0].split()) == 11

    def test_single_point_becomes_circle(self):
        svg = render_svg([("run", [(0, 0.75)])])
        assert not polylines(svg)
        assert svg.count("<circle") == 1

    def test_empty_input_renders_axes_only(self):
        svg = render_svg([])
        assert svg.startswith('<?xml version="1.0"')
        assert "<svg " in svg and "</svg>" in svg
        assert not polylines(svg)
        assert "<circle" not in svg
        assert ">consensus</text>" in svg

    def test_full_range_maps_to_plot_box(self):
        svg = render_svg([("run", [(0, 0.0), (100, 1.0)])])
        coords = polylines(svg)[0].split()
        assert coords[0] == "52.00,360.00"
        assert coords[1] == "624.00,20.00"

    def test_identical_input_identical_bytes(self):
        series = [("a", [(0, 0.5), (50, 0.6)]), ("b", [(0, 0.4), (50, 0.3)])]
        assert render_svg(series) == render_svg(series)

    def test_palette_cycles(self):
        series = [(f"run{i}", [(0, 0.1), (10, 0.2)]) for i in range(11)]
        svg = render_svg(series)
        assert svg.count(f'stroke="{PALETTE[0]}"') >= 2


class TestRenderTrajectories:
    def test_skips_dirs_without_surveys(self, tmp_path):
        good = tmp_path / "good"
        good.mkdir()
        (good / "surveys.jsonl").write_text(
            '{"step": 0, "question_id": "q", "answers": {"a": 1, "b": 1}}\n',
            encoding="utf-8")
        empty = tmp_path / "empty"
        empty.mkdir()
        out = render_trajectories([empty, good], tmp_path / "plot.svg")
        svg = out.read_text(encoding="utf-8")
        assert svg.count("<title>good</title>") == 1
        assert "<title>empty</title>" not in svg

    def test_no_runs_still_writes_document(self, tmp_path):
        out = render_trajectories([], tmp_path / "plot.svg")
        assert out.exists()
        assert "</svg>" in out.read_text(encoding="utf-8")

    def test_golden_fixture_run(self, tmp_path):
        run_dir = tmp_path / "fixture"
        config = RunConfig(num_agents=64, backend_id="stub-m2", steps=50,
                           survey_interval=10, seed=9, question_id="q25")
        run_simulation(config, out_dir=run_dir)
        out = render_trajectories([run_dir], tmp_path / "plot.svg")
        assert out.read_bytes() == GOLDEN.read_bytes()
