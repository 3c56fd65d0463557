"""Consensus trajectory plots as hand-assembled SVG.

One polyline per run, consensus share on the y axis against simulation step
on the x axis. The SVG is built from formatted strings only, so identical
inputs produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .engine import read_snapshots
from .metrics import SurveySnapshot, consensus

WIDTH = 640.0
HEIGHT = 400.0
MARGIN_LEFT = 52.0
MARGIN_RIGHT = 16.0
MARGIN_TOP = 20.0
MARGIN_BOTTOM = 40.0

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def trajectory(snapshots: Sequence[SurveySnapshot]) -> list[tuple[int, float]]:
    """(step, consensus) pairs for one run, skipping all-abstain snapshots."""
    points = []
    for snap in snapshots:
        value = consensus(snap)
        if value is not None:
            points.append((snap.step, value))
    return points


def _axes(max_step: int) -> list[str]:
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP
    parts = [
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y0)}" stroke="#333" stroke-width="1"/>',
        f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x0)}" y2="{_fmt(y1)}" stroke="#333" stroke-width="1"/>',
    ]
    for i in range(5):
        frac = i / 4.0
        y = y0 + (y1 - y0) * frac
        parts.append(f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(y)}" x2="{_fmt(x0)}" y2="{_fmt(y)}" stroke="#333" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(x0 - 8)}" y="{_fmt(y + 4)}" text-anchor="end" font-size="11" font-family="sans-serif">{frac:.2f}</text>')
        x = x0 + (x1 - x0) * frac
        step_label = int(round(max_step * frac))
        parts.append(f'<line x1="{_fmt(x)}" y1="{_fmt(y0)}" x2="{_fmt(x)}" y2="{_fmt(y0 + 4)}" stroke="#333" stroke-width="1"/>')
        parts.append(f'<text x="{_fmt(x)}" y="{_fmt(y0 + 18)}" text-anchor="middle" font-size="11" font-family="sans-serif">{step_label}</text>')
    parts.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(HEIGHT - 6)}" text-anchor="middle" font-size="12" font-family="sans-serif">step</text>')
    parts.append(f'<text x="14" y="{_fmt((y0 + y1) / 2)}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 14 {_fmt((y0 + y1) / 2)})">consensus</text>')
    return parts


def render_svg(series: Sequence[tuple[str, Sequence[tuple[int, float]]]]) -> str:
    """Render labelled (step, consensus) series to an SVG document string.

    Empty input still yields a complete document with axes.
    """
    max_step = max((p[0] for _, pts in series for p in pts), default=0)
    span = float(max_step) if max_step > 0 else 1.0
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP

    body = _axes(max_step)
    for idx, (label, points) in enumerate(series):
        if not points:
            continue
        color = PALETTE[idx % len(PALETTE)]
        coords = " ".join(
            f"{_fmt(x0 + (x1 - x0) * (step / span))},{_fmt(y0 + (y1 - y0) * value)}"
            for step, value in points
        )
        if len(points) == 1:
            step, value = points[0]
            cx = _fmt(x0 + (x1 - x0) * (step / span))
            cy = _fmt(y0 + (y1 - y0) * value)
            body.append(f'<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"><title>{label}</title></circle>')
        else:
            body.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"><title>{label}</title></polyline>')

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0f}" height="{HEIGHT:.0f}" viewBox="0 0 {WIDTH:.0f} {HEIGHT:.0f}">',
        f'<rect x="0" y="0" width="{WIDTH:.0f}" height="{HEIGHT:.0f}" fill="#ffffff"/>',
        *body,
        "</svg>",
        "",
    ]
    return "\n".join(lines)


def render_trajectories(run_dirs: Sequence[str | Path], out_path: str | Path) -> Path:
    """Plot every run's consensus trajectory into one SVG file."""
    series = []
    for run_dir in sorted(Path(d) for d in run_dirs):
        surveys = run_dir / "surveys.jsonl"
        if not surveys.exists():
            continue
        series.append((run_dir.name, trajectory(read_snapshots(surveys))))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(render_svg(series), encoding="utf-8")
    return out_path
