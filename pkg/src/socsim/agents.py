"""Agent profiles, the backend wire contract, and the built-in stub backend.

A backend is anything with act/survey/health. The engine talks to it through
three request/response shapes that serialize 1:1 to the HTTP protocol:

    POST /v1/act     {agent_id, cluster_id, persona, context: [{author, text}]}
                     -> {text}
    POST /v1/survey  {agent_id, cluster_id, persona, question, options}
                     -> {log_scores}
    GET  /v1/health  -> {model, adapters}

Stub agents carry one stance value per question (probability of the second
option) plus a persuasion rate. Their state only ever changes inside act():
the posts an agent has seen travel in the act context, and each post's
stance rides inside its text as a "(stance:N)" marker, so a stub behind
HTTP behaves identically to one called in process. Surveys are pure reads,
which also makes them safe to fan out concurrently.
"""

from __future__ import annotations

import math
import random
import re
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import requests

from .errors import BackendError, InvalidInputError, ProtocolError
from .surveys import Question

STANCE_TAG_RE = re.compile(r"\(stance:(\d+)\)")
LOG_EPS = 1e-9


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str
    cluster_id: int
    model_id: str
    persona: str
    display_name: str = ""
    baseline_opinions: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    is_news: bool = False

    def __post_init__(self) -> None:
        for qid, vec in self.baseline_opinions.items():
            if abs(sum(vec) - 1.0) > 1e-9:
                raise InvalidInputError(
                    f"{self.agent_id}: baseline for {qid} sums to {sum(vec)}"
                )


@dataclass(frozen=True)
class ContextItem:
    author: str
    text: str


@dataclass(frozen=True)
class ActRequest:
    agent_id: str
    cluster_id: int
    persona: str
    context: tuple[ContextItem, ...]

    def to_payload(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "cluster_id": self.cluster_id,
            "persona": self.persona,
            "context": [{"author": c.author, "text": c.text} for c in self.context],
        }


@dataclass(frozen=True)
class SurveyRequest:
    agent_id: str
    cluster_id: int
    persona: str
    question: str
    options: tuple[str, ...]
    context: tuple[ContextItem, ...] = ()

    def to_payload(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "cluster_id": self.cluster_id,
            "persona": self.persona,
            "context": [{"author": c.author, "text": c.text} for c in self.context],
            "question": self.question,
            "options": list(self.options),
        }


@dataclass(frozen=True)
class ActResponse:
    text: str

    def to_payload(self) -> dict:
        return {"text": self.text}


@dataclass(frozen=True)
class SurveyResponse:
    log_scores: tuple[float, ...]

    def to_payload(self) -> dict:
        return {"log_scores": list(self.log_scores)}


def _require(payload: Mapping, key: str, kind: type | tuple) -> object:
    if not isinstance(payload, Mapping) or key not in payload:
        raise ProtocolError(f"missing field {key!r}")
    value = payload[key]
    if not isinstance(value, kind):
        raise ProtocolError(f"field {key!r} has type {type(value).__name__}")
    return value


def parse_act_request(payload: Mapping) -> ActRequest:
    return ActRequest(
        agent_id=str(_require(payload, "agent_id", str)),
        cluster_id=int(_require(payload, "cluster_id", int)),
        persona=str(_require(payload, "persona", str)),
        context=_parse_context(payload),
    )


def _parse_context(payload: Mapping) -> tuple[ContextItem, ...]:
    context = _require(payload, "context", list)
    return tuple(
        ContextItem(
            author=str(_require(entry, "author", str)),
            text=str(_require(entry, "text", str)),
        )
        for entry in context
    )


def parse_survey_request(payload: Mapping) -> SurveyRequest:
    options = _require(payload, "options", list)
    if len(options) < 2 or not all(isinstance(o, str) for o in options):
        raise ProtocolError("options must be a list of at least two strings")
    return SurveyRequest(
        agent_id=str(_require(payload, "agent_id", str)),
        cluster_id=int(_require(payload, "cluster_id", int)),
        persona=str(_require(payload, "persona", str)),
        question=str(_require(payload, "question", str)),
        options=tuple(options),
        context=_parse_context(payload),
    )


def parse_act_response(payload: Mapping) -> ActResponse:
    return ActResponse(text=str(_require(payload, "text", str)))


def parse_survey_response(payload: Mapping, n_options: int) -> SurveyResponse:
    scores = _require(payload, "log_scores", list)
    if len(scores) != n_options or not all(isinstance(s, (int, float)) for s in scores):
        raise ProtocolError(f"log_scores must be {n_options} numbers")
    if not all(math.isfinite(s) for s in scores):
        raise ProtocolError("log_scores must all be finite")
    return SurveyResponse(log_scores=tuple(float(s) for s in scores))


class Backend(Protocol):
    def act(self, request: ActRequest) -> ActResponse: ...

    def survey(self, request: SurveyRequest) -> SurveyResponse: ...

    def health(self) -> dict: ...


def parse_stance_tag(text: str) -> int | None:
    """Stance marker embedded in post text, or None if absent."""
    m = STANCE_TAG_RE.search(text)
    return int(m.group(1)) if m else None


def stance_update(p: float, persuasion: float, observed: Sequence[int]) -> float:
    """Pull the stance toward the mean of observed stance tags."""
    if not observed:
        return p
    mean = sum(observed) / len(observed)
    return min(1.0, max(0.0, p + persuasion * (mean - p)))


def stub_survey_scores(p: float, n_options: int) -> tuple[float, ...]:
    """Log scores for a two-option question from a stance probability."""
    if n_options != 2:
        return tuple(math.log(1.0 / n_options) for _ in range(n_options))
    return (math.log(1.0 - p + LOG_EPS), math.log(p + LOG_EPS))


_POST_TEMPLATES = (
    "Been thinking about this a lot lately. I land on side {n}. (stance:{n})",
    "Everything I read pushes me toward side {n} here. (stance:{n})",
    "My take: side {n} has the stronger case. (stance:{n})",
    "Talked it over with friends and I'm sticking with side {n}. (stance:{n})",
)


@dataclass
class StubOpinionAgent:
    """Deterministic scripted agent with per-question stances.

    `stances[qid]` is the probability mass on option index 1. Posting draws
    a side from that stance; seeing tagged posts moves the stance by the
    persuasion rate. All randomness comes from the agent's own generator.
    """

    agent_id: str
    stances: dict[str, float]
    persuasion: float
    rng: random.Random

    def absorb(self, question_id: str, observed: Sequence[int]) -> None:
        if question_id in self.stances:
            self.stances[question_id] = stance_update(
                self.stances[question_id], self.persuasion, observed
            )

    def compose_post(self, question_id: str) -> str:
        p = self.stances.get(question_id, 0.5)
        side = 1 if self.rng.random() < p else 0
        template = _POST_TEMPLATES[self.rng.randrange(len(_POST_TEMPLATES))]
        return template.format(n=side)

    def survey_scores(self, question_id: str | None, n_options: int) -> tuple[float, ...]:
        if question_id is None or question_id not in self.stances:
            return tuple(math.log(1.0 / n_options) for _ in range(n_options))
        return stub_survey_scores(self.stances[question_id], n_options)


def _stance_tags(observed: Iterable) -> list[int]:
    tags: list[int] = []
    for item in observed:
        if isinstance(item, int):
            tags.append(item)
        elif isinstance(item, str):
            tag = parse_stance_tag(item)
            if tag is not None:
                tags.append(tag)
        else:
            tag = getattr(item, "stance_tag", None)
            if tag is not None:
                tags.append(int(tag))
    return tags


def stub_observe(agent: StubOpinionAgent, observed: Iterable, question_id: str) -> StubOpinionAgent:
    """Apply the stance update from observed posts (tags, texts, or posts
    with a stance_tag attribute); untagged posts are ignored."""
    agent.absorb(question_id, _stance_tags(observed))
    return agent


def stub_act(
    agent: StubOpinionAgent, question_id: str, rng: random.Random | None = None
) -> str:
    """Templated post text with an embedded Bernoulli(stance) tag."""
    if rng is not None:
        agent = StubOpinionAgent(
            agent_id=agent.agent_id,
            stances=agent.stances,
            persuasion=agent.persuasion,
            rng=rng,
        )
    return agent.compose_post(question_id)


def stub_survey(agent: StubOpinionAgent, question_id: str, n_options: int = 2) -> tuple[float, ...]:
    return agent.survey_scores(question_id, n_options)


class StubBackend:
    """In-process backend over a population of stub agents.

    The topic every post is about is the run's focal question. Incoming
    survey questions are matched to bank ids by their text; when the
    question's canonical option list is known, options are scored by their
    content (so reordered or duplicated option strings score consistently,
    the way a model reading the text would). Unknown question text gets
    uniform scores instead of an error, mirroring a model that has no
    opinion either way.
    """

    def __init__(
        self,
        model_id: str,
        focal_question_id: str,
        agents: Mapping[str, StubOpinionAgent],
        question_text_ids: Mapping[str, str],
        question_options: Mapping[str, Sequence[str]] | None = None,
    ) -> None:
        self.model_id = model_id
        self.focal_question_id = focal_question_id
        self.agents = dict(agents)
        self.question_text_ids = dict(question_text_ids)
        self.question_options = {
            qid: tuple(options) for qid, options in (question_options or {}).items()
        }
        self.calls = {"act": 0, "survey": 0}

    def _agent(self, agent_id: str) -> StubOpinionAgent:
        agent = self.agents.get(agent_id)
        if agent is None:
            raise BackendError(f"unknown agent {agent_id!r}")
        return agent

    def act(self, request: ActRequest) -> ActResponse:
        self.calls["act"] += 1
        agent = self._agent(request.agent_id)
        observed = [
            tag
            for item in request.context
            if (tag := parse_stance_tag(item.text)) is not None
        ]
        agent.absorb(self.focal_question_id, observed)
        return ActResponse(text=agent.compose_post(self.focal_question_id))

    def survey(self, request: SurveyRequest) -> SurveyResponse:
        self.calls["survey"] += 1
        agent = self._agent(request.agent_id)
        qid = self.question_text_ids.get(request.question)
        canonical = self.question_options.get(qid) if qid is not None else None
        if canonical:
            if all(option in canonical for option in request.options):
                base = agent.survey_scores(qid, len(canonical))
                scores = tuple(base[canonical.index(option)] for option in request.options)
            else:
                # recognized question, unrecognized phrasing of the options
                scores = tuple(
                    math.log(1.0 / len(request.options)) for _ in request.options
                )
        else:
            scores = agent.survey_scores(qid, len(request.options))
        return SurveyResponse(log_scores=scores)

    def health(self) -> dict:
        return {"model": self.model_id, "adapters": [f"stub:{self.focal_question_id}"]}


class FlakyBackend:
    """Wrapper that fails selected survey calls, for abstention paths."""

    def __init__(self, inner: Backend, fail_agent_ids: Iterable[str]) -> None:
        self.inner = inner
        self.fail_agent_ids = set(fail_agent_ids)

    def act(self, request: ActRequest) -> ActResponse:
        return self.inner.act(request)

    def survey(self, request: SurveyRequest) -> SurveyResponse:
        if request.agent_id in self.fail_agent_ids:
            raise BackendError(f"induced failure for {request.agent_id}")
        return self.inner.survey(request)

    def health(self) -> dict:
        return self.inner.health()


class RemoteBackend:
    """HTTP client for the backend protocol.

    4xx responses are application errors and surface immediately as
    BackendError. 5xx and transport failures retry with exponential
    backoff; responses that do not match the contract raise ProtocolError.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.25,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.session = session or requests.Session()
        self.session.trust_env = False
        self.stats = {"requests": 0, "retries": 0}

    def _call(self, method: str, path: str, payload: dict | None) -> dict:
        url = f"{self.base_url}{path}"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self.stats["retries"] += 1
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            self.stats["requests"] += 1
            try:
                if method == "GET":
                    resp = self.session.get(url, timeout=self.timeout)
                else:
                    resp = self.session.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if 400 <= resp.status_code < 500:
                detail = ""
                try:
                    detail = str(resp.json().get("error", ""))
                except (ValueError, AttributeError):
                    pass
                raise BackendError(f"{path}: status {resp.status_code}: {detail}")
            if resp.status_code >= 500:
                last_error = BackendError(f"{path}: status {resp.status_code}")
                continue
            try:
                body = resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{path}: response is not JSON") from exc
            if not isinstance(body, dict):
                raise ProtocolError(f"{path}: response is not an object")
            return body
        raise BackendError(f"{path}: gave up after {self.retries + 1} attempts: {last_error}")

    def act(self, request: ActRequest) -> ActResponse:
        return parse_act_response(self._call("POST", "/v1/act", request.to_payload()))

    def survey(self, request: SurveyRequest) -> SurveyResponse:
        body = self._call("POST", "/v1/survey", request.to_payload())
        return parse_survey_response(body, len(request.options))

    def health(self) -> dict:
        body = self._call("GET", "/v1/health", None)
        if "model" not in body or "adapters" not in body:
            raise ProtocolError("/v1/health: missing model/adapters")
        return body


def survey_request_for(
    profile: AgentProfile, question: Question, context: tuple[ContextItem, ...] = ()
) -> SurveyRequest:
    return SurveyRequest(
        agent_id=profile.agent_id,
        cluster_id=profile.cluster_id,
        persona=profile.persona,
        question=question.text,
        options=question.options,
        context=context,
    )
