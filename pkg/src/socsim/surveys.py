"""Survey questions: the bundled bank, entropy ranking, and answer probing.

Questions are forced-choice with the allowed options quoted in the final
sentence of the text. Ranking scores each question by the Shannon entropy of
the population-level answer distribution, i.e. the mixture of per-model
answer rows weighted by the population proportions.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInputError
from .mixing import MixKey, OpinionMatrix, PopulationMix

_SWAP_SUFFIX = "-swapped"


@dataclass(frozen=True)
class Question:
    question_id: str
    text: str
    options: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "options", tuple(self.options))
        if len(self.options) < 2:
            raise InvalidInputError(f"{self.question_id}: need at least 2 options")
        if len(set(self.options)) != len(self.options):
            raise InvalidInputError(f"{self.question_id}: duplicate options")


def load_question_bank(path: str | Path | None = None) -> dict[str, Question]:
    """Bundled 42-question bank (or a JSON file with the same layout)."""
    if path is None:
        ref = importlib.resources.files("socsim").joinpath("data/question_bank.json")
        raw = json.loads(ref.read_text(encoding="utf-8"))
    else:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    bank: dict[str, Question] = {}
    for item in raw:
        q = Question(
            question_id=item["question_id"],
            text=item["text"],
            options=tuple(item["options"]),
        )
        if q.question_id in bank:
            raise InvalidInputError(f"duplicate question id {q.question_id!r}")
        bank[q.question_id] = q
    return bank


def load_default_target() -> OpinionMatrix:
    """Bundled target answer matrix matching the question bank order."""
    ref = importlib.resources.files("socsim").joinpath("data/default_target.csv")
    with importlib.resources.as_file(ref) as p:
        return OpinionMatrix.from_csv(p)


def swap_options(question: Question) -> Question:
    """Reverse a two-option question, rewriting the quoted answer clause.

    Applying it twice returns the original question (the id gains or loses
    a '-swapped' suffix).
    """
    if len(question.options) != 2:
        raise InvalidInputError("can only swap two-option questions")
    a, b = question.options
    pattern = f"'{a}' or '{b}'"
    if pattern not in question.text:
        raise InvalidInputError(
            f"{question.question_id}: text does not contain the answer clause {pattern}"
        )
    new_id = (
        question.question_id.removesuffix(_SWAP_SUFFIX)
        if question.question_id.endswith(_SWAP_SUFFIX)
        else question.question_id + _SWAP_SUFFIX
    )
    return replace(
        question,
        question_id=new_id,
        text=question.text.replace(pattern, f"'{b}' or '{a}'"),
        options=(b, a),
    )


def softmax(log_scores: Sequence[float]) -> np.ndarray:
    x = np.asarray(log_scores, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise InvalidInputError("log scores must be a non-empty 1-d sequence")
    x = x - x.max()
    e = np.exp(x)
    return e / e.sum()


def select_answer(log_scores: Sequence[float]) -> int:
    """Index of the highest score; ties go to the lowest index."""
    if len(log_scores) == 0:
        raise InvalidInputError("no scores to select from")
    return max(range(len(log_scores)), key=lambda i: (log_scores[i], -i))


def question_entropy(answer_probs: Sequence[float], tol: float = 1e-6) -> float:
    """Shannon entropy in bits; zero-probability options contribute zero."""
    v = np.asarray(answer_probs, dtype=float)
    if np.any(v < -tol) or abs(float(v.sum()) - 1.0) > max(tol, 1e-6):
        raise InvalidInputError(f"not a probability vector: {v.tolist()}")
    return -math.fsum(p * math.log2(p) for p in v if p > 0.0)


def population_answer_vector(
    question_id: str,
    matrices: Mapping[MixKey, OpinionMatrix],
    mix: PopulationMix,
) -> np.ndarray:
    """Mixture answer distribution sum_l w_l * M_l[question], renormalized.

    With weights on the simplex and valid rows the renormalization is a
    no-op up to rounding; it guards against slightly off-simplex inputs.
    """
    missing = set(mix.weights) - set(matrices)
    if missing:
        raise InvalidInputError(f"no opinion matrix for {sorted(map(str, missing))}")
    rows = [w * matrices[k].row(question_id) for k, w in mix.weights.items()]
    v = np.sum(rows, axis=0)
    total = float(v.sum())
    if total <= 0:
        raise InvalidInputError(f"{question_id}: mixture row sums to {total}")
    return v / total


def rank_questions(
    bank: Sequence[Question] | Mapping[str, Question],
    matrices: Mapping[MixKey, OpinionMatrix],
    mix: PopulationMix,
) -> list[tuple[Question, float]]:
    """Bank sorted by descending mixture entropy; ties by question id."""
    questions = bank.values() if isinstance(bank, Mapping) else bank
    scored = [
        (q, question_entropy(population_answer_vector(q.question_id, matrices, mix)))
        for q in questions
    ]
    scored.sort(key=lambda item: (-item[1], item[0].question_id))
    return scored


def probe_opinion_matrix(
    backend,
    bank: Sequence[Question] | Mapping[str, Question],
    agent_id: str = "probe",
    cluster_id: int = 0,
    persona: str = "",
) -> OpinionMatrix:
    """One answer-distribution row per question from a live backend.

    Each row is the softmax of the survey log scores the backend returns
    for a single representative agent. Backend and protocol errors
    propagate; a probe is a diagnostic, not a run.
    """
    from .agents import SurveyRequest  # deferred: agents imports this module

    questions = list(bank.values()) if isinstance(bank, Mapping) else list(bank)
    if not questions:
        raise InvalidInputError("need at least one question to probe")
    rows = []
    for q in questions:
        request = SurveyRequest(
            agent_id=agent_id,
            cluster_id=cluster_id,
            persona=persona,
            question=q.text,
            options=q.options,
            context=(),
        )
        response = backend.survey(request)
        if len(response.log_scores) != len(q.options):
            raise InvalidInputError(
                f"{q.question_id}: got {len(response.log_scores)} scores "
                f"for {len(q.options)} options"
            )
        rows.append(softmax(response.log_scores))
    return OpinionMatrix(
        question_ids=tuple(q.question_id for q in questions),
        values=np.stack(rows),
    )
