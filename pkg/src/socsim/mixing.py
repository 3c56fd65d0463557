"""Population-proportion optimization.

Given a target opinion matrix and a set of per-model opinion matrices, finds
simplex-constrained weights minimizing the Frobenius distance between the
target and the weighted model mixture. The `average` variant first collapses
each target row to a one-hot at its argmax.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInputError

MixKey = str | int


@dataclass(frozen=True)
class OpinionMatrix:
    """Questions x options matrix of answer probabilities."""

    question_ids: tuple[str, ...]
    values: np.ndarray  # (n_questions, n_options), rows sum to 1

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2 or vals.shape[0] != len(self.question_ids):
            raise InvalidInputError(
                f"matrix shape {vals.shape} does not match {len(self.question_ids)} questions"
            )

    def validate(self, tol: float = 1e-6) -> None:
        if np.any(self.values < -tol) or np.any(self.values > 1 + tol):
            raise InvalidInputError("matrix entries must lie in [0, 1]")
        sums = self.values.sum(axis=1)
        bad = np.where(np.abs(sums - 1.0) > tol)[0]
        if len(bad):
            raise InvalidInputError(
                f"rows do not sum to 1 (first offender: {self.question_ids[bad[0]]})"
            )

    def row(self, question_id: str) -> np.ndarray:
        try:
            i = self.question_ids.index(question_id)
        except ValueError:
            raise InvalidInputError(f"no row for question {question_id!r}") from None
        return self.values[i]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["question_id"] + [f"option_{j}" for j in range(self.values.shape[1])])
            for qid, row in zip(self.question_ids, self.values):
                writer.writerow([qid] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "OpinionMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:1] != ["question_id"]:
            raise InvalidInputError(f"{path}: expected a 'question_id' header column")
        qids = tuple(r[0] for r in rows[1:] if r)
        vals = np.array([[float(x) for x in r[1:]] for r in rows[1:] if r], dtype=float)
        return cls(question_ids=qids, values=vals)


@dataclass(frozen=True)
class PopulationMix:
    """Simplex weights over model (or persona cluster) ids."""

    weights: dict[MixKey, float]

    def validate(self, tol: float = 1e-9) -> None:
        vals = list(self.weights.values())
        if any(w < -tol for w in vals):
            raise InvalidInputError("mix weights must be non-negative")
        if abs(sum(vals) - 1.0) > tol:
            raise InvalidInputError(f"mix weights sum to {sum(vals)}, not 1")


@dataclass(frozen=True)
class MixProblem:
    target: OpinionMatrix
    models: dict[MixKey, OpinionMatrix]
    variant: str = "distribution"  # or "average"
    norm: str = "frobenius"

    def __post_init__(self) -> None:
        if self.variant not in ("distribution", "average"):
            raise InvalidInputError(f"unknown variant {self.variant!r}")
        if self.norm != "frobenius":
            raise InvalidInputError(f"unsupported norm {self.norm!r}")
        if not self.models:
            raise InvalidInputError("need at least one model matrix")
        shape = self.target.values.shape
        qids = self.target.question_ids
        for key, m in self.models.items():
            if m.values.shape != shape or m.question_ids != qids:
                raise InvalidInputError(f"model {key!r} does not match the target layout")


@dataclass
class MixResult:
    mix: PopulationMix
    objective: float  # Frobenius norm at the solution
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


def average_target(target: OpinionMatrix) -> OpinionMatrix:
    """One-hot each row at its argmax (ties to the lowest option index)."""
    vals = np.zeros_like(target.values)
    idx = np.argmax(target.values, axis=1)
    vals[np.arange(len(idx)), idx] = 1.0
    return OpinionMatrix(question_ids=target.question_ids, values=vals)


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort algorithm)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, len(v) + 1) > 0)[0][-1]
    theta = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + theta, 0.0)


def solve_mix(problem: MixProblem, tol: float = 1e-10, max_iters: int = 50_000) -> MixResult:
    """Projected gradient descent on the simplex from the uniform start.

    The step size is 1/L with monotone halving, so the recorded objective
    trajectory never increases. Convergence is declared when the squared
    objective improves by less than `tol`.
    """
    keys = list(problem.models.keys())
    t = problem.target.values if problem.variant == "distribution" else average_target(
        problem.target
    ).values
    a = np.stack([problem.models[k].values.ravel() for k in keys])  # (k, d)
    tv = t.ravel()
    gram = a @ a.T
    lin = a @ tv
    const = float(tv @ tv)

    def sq_obj(w: np.ndarray) -> float:
        return float(w @ gram @ w - 2.0 * lin @ w + const)

    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1])
    step = 1.0 / lip if lip > 0 else 1.0
    w = np.full(len(keys), 1.0 / len(keys))
    f = sq_obj(w)
    history = [f]
    converged = False
    iters = 0
    for iters in range(1, max_iters + 1):
        grad = 2.0 * (gram @ w - lin)
        s = step
        while True:
            w_new = project_to_simplex(w - s * grad)
            f_new = sq_obj(w_new)
            if f_new <= f or s < 1e-18:
                break
            s *= 0.5
        improvement = f - f_new
        w, f = w_new, min(f_new, f)
        history.append(f)
        if improvement < tol:
            converged = True
            break
    mix = PopulationMix(weights={k: float(x) for k, x in zip(keys, w)})
    return MixResult(
        mix=mix,
        objective=float(np.sqrt(max(f, 0.0))),
        iterations=iters,
        converged=converged,
        history=[float(np.sqrt(max(h, 0.0))) for h in history],
    )


def mixture_objective(
    problem: MixProblem, weights: Sequence[float] | np.ndarray | PopulationMix
) -> float:
    """Frobenius norm ||T - sum_l w_l M_l|| for explicit weights.

    Raw sequences are taken in the problem's model-key order; a
    PopulationMix is matched up by key.
    """
    keys = list(problem.models.keys())
    t = problem.target.values if problem.variant == "distribution" else average_target(
        problem.target
    ).values
    if isinstance(weights, PopulationMix):
        missing = [k for k in keys if k not in weights.weights]
        if missing:
            raise InvalidInputError(f"mix is missing weights for {missing!r}")
        weights = [weights.weights[k] for k in keys]
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(keys),):
        raise InvalidInputError(f"expected {len(keys)} weights, got shape {w.shape}")
    mixed = np.tensordot(w, np.stack([problem.models[k].values for k in keys]), axes=1)
    return float(np.linalg.norm(t - mixed))


def allocate_population(mix: PopulationMix, n: int) -> dict[MixKey, int]:
    """Largest-remainder apportionment of n agents; ties to the lowest key.

    Zero-weight clusters never receive a seat.
    """
    if n < 1:
        raise InvalidInputError(f"population size must be >= 1, got {n}")
    mix.validate(tol=1e-6)

    def order(k: MixKey) -> tuple:
        # ints before their string forms, both in natural order
        return (1, "", k) if isinstance(k, int) else (2, k, 0)

    keys = sorted(mix.weights.keys(), key=order)
    quotas = {k: mix.weights[k] * n for k in keys}
    counts = {k: int(np.floor(quotas[k])) for k in keys}
    leftover = n - sum(counts.values())
    if leftover > 0:
        eligible = [k for k in keys if mix.weights[k] > 0]
        by_remainder = sorted(eligible, key=lambda k: (-(quotas[k] - counts[k]),) + order(k))
        for k in by_remainder[:leftover]:
            counts[k] += 1
    return counts
