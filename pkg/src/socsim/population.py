"""Population assembly: cluster personas, proportions, and backend binding.

A population is num_agents agents split across persona clusters. Every
(backend model, cluster, question) triple hashes to a stable stance in
[0.05, 0.95], which stands in for what a fine-tuned persona adapter would
believe: reproducible, spread out, and uncorrelated across questions.

The stub model zoo varies only in persuasion rate, from inert (never moves)
to highly conformist, so the backend choice is the deliberately dominant
factor in stub sweeps.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .agents import AgentProfile, RemoteBackend, StubBackend, StubOpinionAgent
from .config import RunConfig
from .errors import InvalidInputError, InvalidSpecError
from .mixing import (
    MixProblem,
    MixResult,
    OpinionMatrix,
    PopulationMix,
    allocate_population,
    solve_mix,
)
from .netgen import NEWS_AGENT_ID
from .surveys import Question, load_default_target, probe_opinion_matrix

STUB_MODELS: dict[str, float] = {
    "stub-m0": 0.0,  # frozen: never changes opinion
    "stub-m1": 0.15,
    "stub-m2": 0.45,
    "stub-m3": 0.9,  # near-total conformist
}


def cluster_stance(model_id: str, cluster_id: int, question_id: str) -> float:
    """Deterministic stance (probability of option 1) for a persona cluster."""
    digest = hashlib.sha256(f"{model_id}|{cluster_id}|{question_id}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    return 0.05 + 0.9 * u


def persona_text(cluster_id: int) -> str:
    return (
        f"You are a regular user of a social platform, part of persona group "
        f"{cluster_id:02d}. You post casually and hold consistent views."
    )


def cluster_matrices(
    model_id: str, bank: Mapping[str, Question], num_clusters: int
) -> dict[int, OpinionMatrix]:
    """Analytic per-cluster answer matrices for a stub model."""
    qids = tuple(bank.keys())
    out: dict[int, OpinionMatrix] = {}
    for cluster in range(num_clusters):
        rows = []
        for qid in qids:
            if len(bank[qid].options) != 2:
                raise InvalidInputError(f"{qid}: stub stances only cover binary questions")
            p = cluster_stance(model_id, cluster, qid)
            rows.append((1.0 - p, p))
        out[cluster] = OpinionMatrix(question_ids=qids, values=np.array(rows))
    return out


def load_blueprint_frequencies(path: str | Path | None, num_clusters: int) -> list[float]:
    """Per-cluster frequency counts from JSON (bundled synthetic file by default)."""
    if path is None:
        raw = json.loads(
            resources.files("socsim")
            .joinpath("data/blueprint_frequencies.json")
            .read_text(encoding="utf-8")
        )
    else:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list) or not all(isinstance(x, (int, float)) for x in raw):
        raise InvalidInputError("frequencies file must be a JSON list of numbers")
    if len(raw) != num_clusters:
        raise InvalidInputError(
            f"frequencies file has {len(raw)} entries for {num_clusters} clusters"
        )
    if any(x < 0 for x in raw) or sum(raw) <= 0:
        raise InvalidInputError("frequencies must be non-negative with a positive sum")
    return [float(x) for x in raw]


def resolve_weights(
    config: RunConfig,
    bank: Mapping[str, Question],
    backend=None,
) -> tuple[PopulationMix, MixResult | None]:
    """Cluster weights for the configured proportions mode.

    distribution/average fit weights against the bundled target matrix:
    analytically for stub models, via live probing for a remote backend.
    """
    k = config.num_clusters
    if config.proportions == "uniform":
        return PopulationMix({c: 1.0 / k for c in range(k)}), None
    if config.proportions == "blueprint":
        freqs = load_blueprint_frequencies(config.blueprint_frequencies, k)
        total = math.fsum(freqs)
        return PopulationMix({c: f / total for c, f in enumerate(freqs)}), None
    target = load_default_target()
    if config.backend_id in STUB_MODELS:
        models = cluster_matrices(config.backend_id, bank, k)
    else:
        if backend is None:
            raise InvalidInputError(
                "distribution/average proportions for a remote backend need a live backend"
            )
        models = {
            c: probe_opinion_matrix(
                backend,
                list(bank.values()),
                agent_id=f"probe-c{c:02d}",
                cluster_id=c,
                persona=persona_text(c),
            )
            for c in range(k)
        }
    problem = MixProblem(target=target, models=models, variant=config.proportions)
    result = solve_mix(problem)
    return result.mix, result


def build_profiles(
    config: RunConfig, bank: Mapping[str, Question], mix: PopulationMix
) -> list[AgentProfile]:
    """The agent roster, cluster-by-cluster in ascending cluster order."""
    if config.question_id not in bank:
        raise InvalidSpecError(f"question_id {config.question_id!r} is not in the bank")
    counts = allocate_population(mix, config.num_agents)
    profiles: list[AgentProfile] = []
    idx = 0
    for cluster in sorted(counts):
        if counts[cluster] == 0:
            continue
        p1 = cluster_stance(config.backend_id, cluster, config.question_id)
        persona = persona_text(cluster)
        for _ in range(counts[cluster]):
            profiles.append(
                AgentProfile(
                    agent_id=f"a{idx:04d}",
                    cluster_id=int(cluster),
                    model_id=config.backend_id,
                    persona=persona,
                    display_name=f"user_{idx:04d}",
                    baseline_opinions={config.question_id: (1.0 - p1, p1)},
                )
            )
            idx += 1
    return profiles


def news_profile() -> AgentProfile:
    return AgentProfile(
        agent_id=NEWS_AGENT_ID,
        cluster_id=0,
        model_id="news-corpus",
        persona="You are a news outlet account posting editorial takes.",
        display_name="Daily Signal",
        is_news=True,
    )


def build_stub_backend(
    config: RunConfig,
    profiles: Sequence[AgentProfile],
    bank: Mapping[str, Question],
    stub_seed: int,
) -> StubBackend:
    if config.backend_id not in STUB_MODELS:
        raise InvalidSpecError(f"{config.backend_id!r} is not a stub model")
    lam = STUB_MODELS[config.backend_id]
    per_cluster: dict[int, dict[str, float]] = {}
    agents: dict[str, StubOpinionAgent] = {}
    for profile in profiles:
        if profile.is_news:
            continue
        stances = per_cluster.get(profile.cluster_id)
        if stances is None:
            stances = {
                qid: cluster_stance(config.backend_id, profile.cluster_id, qid)
                for qid in bank
            }
            per_cluster[profile.cluster_id] = stances
        agents[profile.agent_id] = StubOpinionAgent(
            agent_id=profile.agent_id,
            stances=dict(stances),
            persuasion=lam,
            rng=random.Random(f"{stub_seed}:{profile.agent_id}"),
        )
    return StubBackend(
        model_id=config.backend_id,
        focal_question_id=config.question_id,
        agents=agents,
        question_text_ids={q.text: q.question_id for q in bank.values()},
        question_options={q.question_id: q.options for q in bank.values()},
    )


def build_backend(
    config: RunConfig,
    profiles: Sequence[AgentProfile],
    bank: Mapping[str, Question],
    stub_seed: int,
    backend_url: str | None = None,
):
    url = backend_url or config.backend_url
    if url:
        return RemoteBackend(
            url,
            timeout=config.backend_timeout,
            retries=config.backend_retries,
            backoff=config.backend_backoff,
        )
    if config.backend_id in STUB_MODELS:
        return build_stub_backend(config, profiles, bank, stub_seed)
    raise InvalidSpecError(
        f"backend_id {config.backend_id!r} is not a stub model and no backend_url is set"
    )


def load_news_corpus(path: str | Path | None) -> list[dict]:
    if path is None:
        text = (
            resources.files("socsim")
            .joinpath("data/news_corpus.jsonl")
            .read_text(encoding="utf-8")
        )
        source = "bundled news corpus"
    else:
        text = Path(path).read_text(encoding="utf-8")
        source = str(path)
    items = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{source}:{i + 1}: not valid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "text" not in obj or "stance" not in obj:
            raise InvalidInputError(f"{source}:{i + 1}: needs 'text' and 'stance' fields")
        items.append({"text": str(obj["text"]), "stance": int(obj["stance"])})
    if not items:
        raise InvalidInputError(f"{source}: corpus is empty")
    return items
