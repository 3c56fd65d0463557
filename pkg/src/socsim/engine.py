"""The discrete-step simulation loop.

Each step: 10 agents are drawn by Zipfian activation weights without
replacement (news node excluded). The first 9 observe a recent thread
authored at least partly by someone they follow; the 10th acts, creating a
new thread with probability 1/3 and otherwise replying to a thread chosen
by the same followee-recency rule. A news agent, when present, starts a
thread from its corpus on a fixed cadence. The full population is surveyed
at step 0, every survey_interval steps, and at the final step.

A run is strictly sequential and fully deterministic given (config, seed,
deterministic backend); the only concurrency allowed is the survey fan-out,
which is safe because surveys never mutate backend state. The engine rng
draw order is load-bearing for reproducibility: per step, one exponential
block for activation, then one draw per observer with candidates, then the
act coin, then at most one thread draw.
"""

from __future__ import annotations

import hashlib
import json
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import __version__ as _pkg_version
from .agents import (
    ActRequest,
    AgentProfile,
    Backend,
    ContextItem,
    parse_stance_tag,
    survey_request_for,
)
from .config import RunConfig, derive_seeds, save_config
from .errors import BackendError, InvalidInputError, ProtocolError
from .metrics import RunReport, SurveySnapshot, compute_run_report
from .netgen import (
    FollowGraph,
    generate_graph,
    place_agents_homophily,
    place_agents_random,
    place_news_agent,
)
from .population import (
    build_backend,
    build_profiles,
    load_news_corpus,
    news_profile,
    resolve_weights,
)
from .surveys import Question, load_question_bank, select_answer

ACT_CREATE_PROB = 1.0 / 3.0
AGENTS_PER_STEP = 10


@dataclass(frozen=True)
class Post:
    post_id: str
    thread_id: str
    author_agent_id: str
    step: int
    text: str
    stance_tag: int | None = None


class ThreadStore:
    """Append-only store of threads and their posts, in creation order."""

    def __init__(self) -> None:
        self.threads: list[str] = []
        self.posts: list[Post] = []
        self._by_thread: dict[str, list[Post]] = {}
        self._authors: dict[str, set[str]] = {}

    def next_thread_id(self) -> str:
        return f"t{len(self.threads):05d}"

    def next_post_id(self) -> str:
        return f"p{len(self.posts):06d}"

    def create_thread(self, post: Post) -> None:
        if post.thread_id in self._by_thread:
            raise InvalidInputError(f"thread {post.thread_id} already exists")
        self.threads.append(post.thread_id)
        self._by_thread[post.thread_id] = [post]
        self._authors[post.thread_id] = {post.author_agent_id}
        self.posts.append(post)

    def add_reply(self, post: Post) -> None:
        if post.thread_id not in self._by_thread:
            raise InvalidInputError(f"no thread {post.thread_id} to reply to")
        self._by_thread[post.thread_id].append(post)
        self._authors[post.thread_id].add(post.author_agent_id)
        self.posts.append(post)

    def recent(self, window: int) -> list[str]:
        """The most recently created threads, oldest first."""
        return self.threads[-window:] if window > 0 else []

    def last_posts(self, thread_id: str, count: int) -> list[Post]:
        return self._by_thread[thread_id][-count:]

    def authors(self, thread_id: str) -> set[str]:
        return self._authors[thread_id]

    def posts_in(self, thread_id: str) -> list[Post]:
        return list(self._by_thread[thread_id])


@dataclass(frozen=True)
class ActivationSchedule:
    """Per-agent activation weights, Zipfian over a seeded rank permutation."""

    agent_ids: tuple[str, ...]  # rank order: index 0 = most active
    weights: np.ndarray  # aligned with agent_ids, sums to 1
    exponent: float


def build_activation(
    agent_ids: Sequence[str], exponent: float, seed: int
) -> ActivationSchedule:
    if not agent_ids:
        raise InvalidInputError("cannot build an activation schedule for nobody")
    if exponent <= 0:
        raise InvalidInputError(f"zipf exponent must be positive, got {exponent}")
    order = np.random.default_rng(seed).permutation(len(agent_ids))
    ranked = tuple(agent_ids[i] for i in order)
    raw = np.arange(1, len(ranked) + 1, dtype=float) ** (-exponent)
    return ActivationSchedule(
        agent_ids=ranked, weights=raw / raw.sum(), exponent=exponent
    )


@dataclass
class SimParams:
    """Engine knobs, decoupled from RunConfig so tests can compose custom
    graphs and populations directly."""

    recent_window: int = 20
    context_depth: int = 5
    context_capacity: int = 10
    survey_in_context: bool = False
    news_interval: int = 25
    survey_workers: int = 1

    @classmethod
    def from_config(cls, config: RunConfig) -> "SimParams":
        return cls(
            recent_window=config.recent_window,
            context_depth=config.context_depth,
            context_capacity=config.context_capacity,
            survey_in_context=config.survey_in_context,
            news_interval=config.news_interval,
            survey_workers=config.survey_workers,
        )


@dataclass
class RunState:
    graph: FollowGraph
    profiles: dict[str, AgentProfile]  # assigned agents only, news included
    schedule: ActivationSchedule
    store: ThreadStore
    agent_contexts: dict[str, deque]
    rng: np.random.Generator
    step: int = 0
    survey_log: list[SurveySnapshot] = field(default_factory=list)
    news_cursor: int = 0
    followee_agents: dict[str, frozenset[str]] = field(default_factory=dict)

    def news_agent_id(self) -> str | None:
        for node in self.graph.news_nodes:
            return self.graph.node_assignment[node]
        return None


def build_state(
    graph: FollowGraph,
    profiles: Sequence[AgentProfile],
    engine_seed: int,
    activation_seed: int,
    zipf_exponent: float = 1.0,
    context_capacity: int = 10,
) -> RunState:
    """Initial run state over an already-placed graph.

    The roster is whatever agents the graph assignment names; a profile
    whose agent was evicted by news placement drops out here.
    """
    assigned = set(graph.node_assignment.values())
    by_id = {p.agent_id: p for p in profiles}
    missing = assigned - set(by_id)
    if missing:
        raise InvalidInputError(f"graph names unknown agents: {sorted(missing)[:5]}")
    roster = {aid: by_id[aid] for aid in sorted(assigned)}
    active = [aid for aid in roster if not roster[aid].is_news]
    if not active:
        raise InvalidInputError("population has no active (non-news) agents")

    followee_idx = graph.followee_index()
    agent_node = {agent: node for node, agent in graph.node_assignment.items()}
    followee_agents = {
        aid: frozenset(
            graph.node_assignment[v]
            for v in followee_idx.get(agent_node[aid], ())
            if v in graph.node_assignment
        )
        for aid in roster
    }
    return RunState(
        graph=graph,
        profiles=roster,
        schedule=build_activation(active, zipf_exponent, activation_seed),
        store=ThreadStore(),
        agent_contexts={aid: deque(maxlen=context_capacity) for aid in roster},
        rng=np.random.default_rng(engine_seed),
        followee_agents=followee_agents,
    )


def _sample_active_agents(state: RunState, count: int) -> list[str]:
    """Weighted sampling without replacement via the exponential race:
    the k smallest exp(1)/weight keys, in key order, match sequential
    probability-proportional draws."""
    n = len(state.schedule.agent_ids)
    keys = state.rng.exponential(size=n) / state.schedule.weights
    k = min(count, n)
    order = np.argsort(keys, kind="stable")[:k]
    return [state.schedule.agent_ids[i] for i in order]


def _followee_recent_threads(state: RunState, agent_id: str, window: int) -> list[str]:
    followees = state.followee_agents.get(agent_id, frozenset())
    if not followees:
        return []
    return [
        tid for tid in state.store.recent(window) if state.store.authors(tid) & followees
    ]


def _observe(state: RunState, agent_id: str, params: SimParams) -> dict:
    candidates = _followee_recent_threads(state, agent_id, params.recent_window)
    event = {
        "step": state.step,
        "kind": "observe",
        "agent": agent_id,
        "thread": None,
        "post": None,
        "text": None,
    }
    if not candidates:
        return event
    tid = candidates[int(state.rng.integers(len(candidates)))]
    context = state.agent_contexts[agent_id]
    for post in state.store.last_posts(tid, params.context_depth):
        context.append(ContextItem(author=post.author_agent_id, text=post.text))
    event["thread"] = tid
    return event


def _act(state: RunState, agent_id: str, backend: Backend, params: SimParams) -> dict:
    # fallback marks the one case where the 1/3 coin is overridden (reply
    # drawn but the store is empty); a reply that lands on a non-followee
    # thread still honors the coin and is tagged followee_thread=False.
    create = state.rng.random() < ACT_CREATE_PROB
    target: str | None = None
    fallback = False
    followee_thread = False
    if not create:
        candidates = _followee_recent_threads(state, agent_id, params.recent_window)
        if candidates:
            target = candidates[int(state.rng.integers(len(candidates)))]
            followee_thread = True
        else:
            recent = state.store.recent(params.recent_window)
            if recent:
                target = recent[int(state.rng.integers(len(recent)))]
            else:
                fallback = True
                create = True

    profile = state.profiles[agent_id]
    request = ActRequest(
        agent_id=agent_id,
        cluster_id=profile.cluster_id,
        persona=profile.persona,
        context=tuple(state.agent_contexts[agent_id]),
    )
    try:
        response = backend.act(request)
    except (BackendError, ProtocolError) as exc:
        return {
            "step": state.step,
            "kind": "backend_error",
            "agent": agent_id,
            "thread": None,
            "post": None,
            "text": str(exc),
        }
    text = response.text
    post = Post(
        post_id=state.store.next_post_id(),
        thread_id=state.store.next_thread_id() if create else target,
        author_agent_id=agent_id,
        step=state.step,
        text=text,
        stance_tag=parse_stance_tag(text),
    )
    if create:
        state.store.create_thread(post)
    else:
        state.store.add_reply(post)
    return {
        "step": state.step,
        "kind": "act_new" if create else "act_reply",
        "agent": agent_id,
        "thread": post.thread_id,
        "post": post.post_id,
        "text": text,
        "fallback": fallback,
        "followee_thread": followee_thread,
    }


def _news_post(state: RunState, corpus: Sequence[Mapping], params: SimParams) -> dict | None:
    news_id = state.news_agent_id()
    if news_id is None or not corpus:
        return None
    if state.step % params.news_interval != 0:
        return None
    item = corpus[state.news_cursor % len(corpus)]
    state.news_cursor += 1
    text = f"{item['text']} (stance:{item['stance']})"
    post = Post(
        post_id=state.store.next_post_id(),
        thread_id=state.store.next_thread_id(),
        author_agent_id=news_id,
        step=state.step,
        text=text,
        stance_tag=int(item["stance"]),
    )
    state.store.create_thread(post)
    return {
        "step": state.step,
        "kind": "news",
        "agent": news_id,
        "thread": post.thread_id,
        "post": post.post_id,
        "text": text,
    }


def run_step(
    state: RunState,
    backend: Backend,
    params: SimParams,
    corpus: Sequence[Mapping] = (),
) -> list[dict]:
    """One simulation step; returns the events it produced."""
    selected = _sample_active_agents(state, AGENTS_PER_STEP)
    events = [_observe(state, aid, params) for aid in selected[:-1]]
    events.append(_act(state, selected[-1], backend, params))
    news_event = _news_post(state, corpus, params)
    if news_event is not None:
        events.append(news_event)
    state.step += 1
    return events


def survey_population(
    state: RunState,
    question: Question,
    backend: Backend,
    params: SimParams,
) -> SurveySnapshot:
    """Ask every non-news agent the question; failures become abstentions.

    With survey_workers > 1 the backend calls fan out on threads, which is
    sound because surveys are read-only; answers are re-ordered by agent id
    before the snapshot is sealed, so the result is identical either way.
    """
    agent_ids = sorted(
        aid for aid, profile in state.profiles.items() if not profile.is_news
    )
    requests = [
        survey_request_for(
            state.profiles[aid], question, context=tuple(state.agent_contexts[aid])
        )
        for aid in agent_ids
    ]

    def ask(request) -> int | None:
        try:
            response = backend.survey(request)
        except (BackendError, ProtocolError):
            return None
        return select_answer(response.log_scores)

    if params.survey_workers > 1 and len(requests) > 1:
        with ThreadPoolExecutor(max_workers=params.survey_workers) as pool:
            results = list(pool.map(ask, requests))
    else:
        results = [ask(r) for r in requests]

    answers: dict[str, int | None] = dict(zip(agent_ids, results))
    if params.survey_in_context:
        for aid in agent_ids:
            idx = answers[aid]
            if idx is None:
                continue
            state.agent_contexts[aid].append(
                ContextItem(
                    author="survey",
                    text=f"Q: {question.text} A: {question.options[idx]}",
                )
            )
    snapshot = SurveySnapshot(
        step=state.step, question_id=question.question_id, answers=answers
    )
    state.survey_log.append(snapshot)
    return snapshot


def simulate(
    state: RunState,
    backend: Backend,
    question: Question,
    steps: int,
    survey_interval: int,
    params: SimParams,
    corpus: Sequence[Mapping] = (),
    on_event: Callable[[dict], None] | None = None,
) -> list[SurveySnapshot]:
    """Run `steps` steps with surveys at step 0, every interval, and the end."""
    if steps < 0 or survey_interval < 1:
        raise InvalidInputError("steps must be >= 0 and survey_interval >= 1")
    for s in range(steps):
        if s % survey_interval == 0:
            survey_population(state, question, backend, params)
        for event in run_step(state, backend, params, corpus):
            if on_event is not None:
                on_event(event)
    survey_population(state, question, backend, params)
    return list(state.survey_log)


@dataclass
class RunArtifacts:
    run_id: str
    config: RunConfig
    out_dir: Path | None
    snapshots: list[SurveySnapshot]
    report: RunReport
    events: list[dict] | None
    duration_seconds: float
    paths: dict[str, Path] = field(default_factory=dict)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def snapshot_row(snapshot: SurveySnapshot) -> dict:
    answers = {
        aid: ("abstain" if idx is None else idx) for aid, idx in snapshot.answers.items()
    }
    return {"step": snapshot.step, "question_id": snapshot.question_id, "answers": answers}


def parse_snapshot_row(row: Mapping) -> SurveySnapshot:
    answers = {
        str(aid): (None if value == "abstain" else int(value))
        for aid, value in row["answers"].items()
    }
    return SurveySnapshot(
        step=int(row["step"]), question_id=str(row["question_id"]), answers=answers
    )


def read_snapshots(path: str | Path) -> list[SurveySnapshot]:
    """Load the snapshots persisted by a run (one JSON object per line)."""
    snapshots = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                snapshots.append(parse_snapshot_row(json.loads(line)))
    return snapshots


def default_run_id(config: RunConfig) -> str:
    digest = hashlib.sha256(_dumps(config.to_dict()).encode()).hexdigest()[:8]
    return f"{config.backend_id}-s{config.seed}-{digest}"


def run_simulation(
    config: RunConfig,
    backend: Backend | None = None,
    out_dir: str | Path | None = None,
    keep_events: bool = False,
) -> RunArtifacts:
    """Build everything a run needs from config, execute it, persist artifacts.

    Passing `backend` skips backend construction but changes nothing else,
    so a loopback-served stub reproduces the in-process run byte for byte.
    """
    config.validate()
    started = time.perf_counter()
    seeds = derive_seeds(config.seed)
    bank = load_question_bank()
    if config.question_id not in bank:
        raise InvalidInputError(f"unknown question_id {config.question_id!r}")
    question = bank[config.question_id]

    mix, _ = resolve_weights(config, bank, backend)
    profiles = build_profiles(config, bank, mix)
    if backend is None:
        backend = build_backend(config, profiles, bank, seeds["stubs"])

    graph = generate_graph(config.graph_spec(seeds["graph"]))
    if config.homophily:
        graph = place_agents_homophily(graph, profiles, question, seed=seeds["layout"])
    else:
        graph = place_agents_random(graph, profiles, seeds["placement"])

    corpus: list[dict] = []
    roster: list[AgentProfile] = list(profiles)
    if config.news_agents:
        graph = place_news_agent(graph)
        roster.append(news_profile())
        corpus = load_news_corpus(config.news_corpus)

    params = SimParams.from_config(config)
    state = build_state(
        graph,
        roster,
        engine_seed=seeds["engine"],
        activation_seed=seeds["activation"],
        zipf_exponent=config.zipf_exponent,
        context_capacity=config.context_capacity,
    )

    run_id = config.run_id or default_run_id(config)
    paths: dict[str, Path] = {}
    events_memory: list[dict] | None = [] if (keep_events or out_dir is None) else None
    events_file = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "events": out / "events.jsonl",
            "surveys": out / "surveys.jsonl",
            "metrics": out / "metrics.json",
            "config": out / "config.json",
            "meta": out / "meta.json",
        }
        events_file = open(paths["events"], "w", encoding="utf-8")

    def on_event(event: dict) -> None:
        if events_memory is not None:
            events_memory.append(event)
        if events_file is not None:
            events_file.write(_dumps(event) + "\n")

    try:
        snapshots = simulate(
            state,
            backend,
            question,
            steps=config.steps,
            survey_interval=config.effective_survey_interval(),
            params=params,
            corpus=corpus,
            on_event=on_event,
        )
    finally:
        if events_file is not None:
            events_file.close()

    report = compute_run_report(snapshots, state.graph)
    duration = time.perf_counter() - started

    if out_dir is not None:
        with open(paths["surveys"], "w", encoding="utf-8") as fh:
            for snapshot in snapshots:
                fh.write(_dumps(snapshot_row(snapshot)) + "\n")
        paths["metrics"].write_text(_dumps(report.to_dict()) + "\n", encoding="utf-8")
        save_config(config, paths["config"])
        meta = {
            "run_id": run_id,
            "package_version": _pkg_version,
            "duration_seconds": duration,
            "num_events": sum(1 for _ in open(paths["events"], encoding="utf-8")),
            "num_snapshots": len(snapshots),
            "num_posts": len(state.store.posts),
        }
        paths["meta"].write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    return RunArtifacts(
        run_id=run_id,
        config=config,
        out_dir=Path(out_dir) if out_dir is not None else None,
        snapshots=snapshots,
        report=report,
        events=events_memory,
        duration_seconds=duration,
        paths=paths,
    )
