"""Run configuration: the experiment design space plus engine knobs.

Config files are JSON with a schema_version field. Unknown keys are
rejected rather than ignored so a typo in a sweep definition fails loudly
instead of silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InvalidSpecError
from .netgen import GraphSpec

SCHEMA_VERSION = 1

GRAPH_TYPES = ("random", "powerlaw_cluster")
PROPORTIONS = ("uniform", "blueprint", "distribution", "average")
NUM_AGENTS_CHOICES = (64, 256, 1024, 4096)

# Named rng streams derived from the run seed. Order is part of the scheme:
# reordering would silently change every seeded run.
_SEED_STREAMS = ("graph", "layout", "placement", "activation", "engine", "stubs")


@dataclass(frozen=True)
class RunConfig:
    # design factors
    num_agents: int = 64
    backend_id: str = "stub-m1"
    graph_type: str = "random"
    homophily: bool = False
    survey_in_context: bool = False
    news_agents: int = 0
    proportions: str = "uniform"
    question_id: str = "q28"
    # schedule
    steps: int = 2500
    survey_interval: int = 250
    normalize_cadence: bool = False
    seed: int = 0
    # engine knobs (defaults are design decisions, all overridable)
    recent_window: int = 20
    context_depth: int = 5
    context_capacity: int = 10
    zipf_exponent: float = 1.0
    news_interval: int = 25
    num_clusters: int = 25
    # graph knobs
    er_edge_prob: float | None = None
    pc_new_edges: int = 2
    pc_triangle_prob: float = 0.3
    # backend plumbing
    backend_url: str | None = None
    backend_timeout: float = 30.0
    backend_retries: int = 2
    backend_backoff: float = 0.25
    survey_workers: int = 1
    # optional file overrides (None = bundled data)
    blueprint_frequencies: str | None = None
    news_corpus: str | None = None
    run_id: str | None = None
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "RunConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidSpecError(
                f"schema_version {self.schema_version} unsupported (expected {SCHEMA_VERSION})"
            )
        if self.num_agents not in NUM_AGENTS_CHOICES:
            raise InvalidSpecError(
                f"num_agents must be one of {NUM_AGENTS_CHOICES}, got {self.num_agents}"
            )
        if self.graph_type not in GRAPH_TYPES:
            raise InvalidSpecError(f"graph_type must be one of {GRAPH_TYPES}")
        if self.news_agents not in (0, 1):
            raise InvalidSpecError(f"news_agents must be 0 or 1, got {self.news_agents}")
        if self.proportions not in PROPORTIONS:
            raise InvalidSpecError(f"proportions must be one of {PROPORTIONS}")
        if not self.question_id:
            raise InvalidSpecError("question_id must be non-empty")
        if self.steps < 0:
            raise InvalidSpecError(f"steps must be >= 0, got {self.steps}")
        if self.survey_interval < 1:
            raise InvalidSpecError(f"survey_interval must be >= 1, got {self.survey_interval}")
        for name in (
            "recent_window",
            "context_depth",
            "context_capacity",
            "news_interval",
            "num_clusters",
            "survey_workers",
        ):
            if getattr(self, name) < 1:
                raise InvalidSpecError(f"{name} must be >= 1")
        if self.zipf_exponent <= 0:
            raise InvalidSpecError("zipf_exponent must be positive")
        if self.er_edge_prob is not None and not 0.0 <= self.er_edge_prob <= 1.0:
            raise InvalidSpecError("er_edge_prob must lie in [0, 1]")
        if self.backend_retries < 0 or self.backend_backoff < 0 or self.backend_timeout <= 0:
            raise InvalidSpecError("backend retry/backoff/timeout values out of range")
        return self

    def effective_survey_interval(self) -> int:
        """Survey cadence. Fixed by default, which means larger populations
        get proportionally less posting between surveys; normalize_cadence
        scales the interval with population size (relative to n=64)."""
        if not self.normalize_cadence:
            return self.survey_interval
        return max(1, round(self.survey_interval * self.num_agents / NUM_AGENTS_CHOICES[0]))

    def graph_spec(self, seed: int) -> GraphSpec:
        if self.graph_type == "random":
            # density-matched to the powerlaw generator's ~2m edges per node
            p = self.er_edge_prob
            if p is None:
                p = min(1.0, 2.0 * self.pc_new_edges / max(1, self.num_agents - 1))
            return GraphSpec(
                kind="random_er", num_nodes=self.num_agents, er_edge_prob=p, seed=seed
            )
        return GraphSpec(
            kind="powerlaw_cluster",
            num_nodes=self.num_agents,
            pc_new_edges=self.pc_new_edges,
            pc_triangle_prob=self.pc_triangle_prob,
            seed=seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidSpecError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(raw)).validate()


def derive_seeds(seed: int) -> dict[str, int]:
    """Independent named integer seeds for each random stream of a run."""
    state = np.random.SeedSequence(seed).generate_state(len(_SEED_STREAMS), dtype=np.uint64)
    return {name: int(value) for name, value in zip(_SEED_STREAMS, state)}


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidSpecError(f"{path}: config must be a JSON object")
    return RunConfig.from_dict(raw)


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def with_run_id(config: RunConfig, run_id: str) -> RunConfig:
    return replace(config, run_id=run_id)
