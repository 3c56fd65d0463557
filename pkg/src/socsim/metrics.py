"""Opinion and network metrics over survey snapshots.

Every metric reduces to integer counting followed by a single float
division (local agreement additionally uses an exact fsum), so results are
bit-reproducible and directly comparable against brute-force recounts.

Denominator conventions: abstaining agents are dropped from whatever count
they cannot contribute to, and a metric whose denominator is empty is None
rather than zero. Pairwise metrics (shift rates) consider only agents that
answered in both snapshots. Neighborhoods are followees, the agents whose
content one observes.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InvalidInputError
from .netgen import FollowGraph

Answer = int | None  # option index, or None for an abstention


@dataclass(frozen=True)
class SurveySnapshot:
    """One survey round: every agent's chosen option index (None = abstain)."""

    step: int
    question_id: str
    answers: dict[str, Answer]

    def answered(self) -> dict[str, int]:
        return {a: v for a, v in self.answers.items() if v is not None}


def _agent_nodes(graph: FollowGraph) -> dict[str, int]:
    return {agent: node for node, agent in graph.node_assignment.items()}


def _unique_mode(values: Iterable[int]) -> int | None:
    """The single most common value; None on an empty input or a tie."""
    counts = Counter(values)
    if not counts:
        return None
    best = max(counts.values())
    leaders = [v for v, c in counts.items() if c == best]
    return leaders[0] if len(leaders) == 1 else None


def consensus(snapshot: SurveySnapshot) -> float | None:
    """Share of answering agents holding the most popular opinion."""
    answered = snapshot.answered()
    if not answered:
        return None
    counts = Counter(answered.values())
    return max(counts.values()) / len(answered)


def net_consensus_change(snapshots: Sequence[SurveySnapshot]) -> float | None:
    """consensus(last) - consensus(first)."""
    if not snapshots:
        raise InvalidInputError("need at least one snapshot")
    c0, c1 = consensus(snapshots[0]), consensus(snapshots[-1])
    if c0 is None or c1 is None:
        return None
    return c1 - c0


def _paired(prev: SurveySnapshot, curr: SurveySnapshot) -> dict[str, tuple[int, int]]:
    p, c = prev.answered(), curr.answered()
    return {a: (p[a], c[a]) for a in p.keys() & c.keys()}


def opinion_shift_rate(prev: SurveySnapshot, curr: SurveySnapshot) -> float | None:
    """Fraction of agents (answering both times) whose answer changed."""
    pairs = _paired(prev, curr)
    if not pairs:
        return None
    changed = sum(1 for a, b in pairs.values() if a != b)
    return changed / len(pairs)


def majority_follow_rate(prev: SurveySnapshot, curr: SurveySnapshot) -> float | None:
    """Of the agents who changed, the share that adopted the previous
    snapshot's leading opinion. None when nobody changed or the previous
    snapshot was tied."""
    pairs = _paired(prev, curr)
    majority = _unique_mode(prev.answered().values())
    changers = [(a, b) for a, b in pairs.values() if a != b]
    if not changers or majority is None:
        return None
    followed = sum(1 for _, b in changers if b == majority)
    return followed / len(changers)


def neighbor_alignment_shift_rate(
    prev: SurveySnapshot, curr: SurveySnapshot, graph: FollowGraph
) -> float | None:
    """Fraction of the population that changed to match the leading previous
    answer among their followees. Agents with no answering followees (or
    tied followees) can never count toward the numerator; the denominator
    is everyone answering both snapshots."""
    pairs = _paired(prev, curr)
    if not pairs:
        return None
    agent_node = _agent_nodes(graph)
    node_agent = graph.node_assignment
    prev_answers = prev.answered()
    followees = graph.followee_index()
    aligned = 0
    for agent, (a, b) in pairs.items():
        if a == b or agent not in agent_node:
            continue
        nbr_answers = [
            prev_answers[node_agent[v]]
            for v in followees.get(agent_node[agent], ())
            if node_agent.get(v) in prev_answers
        ]
        target = _unique_mode(nbr_answers)
        if target is not None and b == target:
            aligned += 1
    return aligned / len(pairs)


def _edge_category_counts(
    snapshot: SurveySnapshot, graph: FollowGraph
) -> tuple[Counter, int]:
    """Directed edge counts keyed by (follower opinion, followee opinion)."""
    answered = snapshot.answered()
    agent_node = _agent_nodes(graph)
    node_answer = {agent_node[a]: v for a, v in answered.items() if a in agent_node}
    counts: Counter = Counter()
    for u, v in graph.edges:
        if u in node_answer and v in node_answer:
            counts[(node_answer[u], node_answer[v])] += 1
    return counts, sum(counts.values())


def opinion_assortativity(snapshot: SurveySnapshot, graph: FollowGraph) -> float | None:
    """Attribute assortativity of opinions over directed follow edges.

    With integer edge counts c_ij, row sums r_i and column sums s_i:
        r = (E * sum_i c_ii - sum_i r_i s_i) / (E^2 - sum_i r_i s_i)
    which equals the usual normalized-mixing-matrix form but stays in
    integers until the final division. None when undefined: no eligible
    edges, or a single opinion class holding every edge.
    """
    counts, total = _edge_category_counts(snapshot, graph)
    if total == 0:
        return None
    cats = sorted({c for pair in counts for c in pair})
    trace = sum(counts.get((c, c), 0) for c in cats)
    row = {c: sum(n for (i, _), n in counts.items() if i == c) for c in cats}
    col = {c: sum(n for (_, j), n in counts.items() if j == c) for c in cats}
    cross = sum(row[c] * col[c] for c in cats)
    denom = total * total - cross
    if denom == 0:
        return None
    return (total * trace - cross) / denom


def local_agreement(snapshot: SurveySnapshot, graph: FollowGraph) -> float | None:
    """Mean, over answering agents with at least one answering followee, of
    the share of those followees holding the agent's own opinion."""
    answered = snapshot.answered()
    agent_node = _agent_nodes(graph)
    node_answer = {agent_node[a]: v for a, v in answered.items() if a in agent_node}
    followees = graph.followee_index()
    shares: list[float] = []
    for agent, own in answered.items():
        node = agent_node.get(agent)
        if node is None:
            continue
        nbrs = [v for v in followees.get(node, ()) if v in node_answer]
        if not nbrs:
            continue
        same = sum(1 for v in nbrs if node_answer[v] == own)
        shares.append(same / len(nbrs))
    if not shares:
        return None
    return math.fsum(shares) / len(shares)


def cross_cutting_fraction(snapshot: SurveySnapshot, graph: FollowGraph) -> float | None:
    """Share of follow edges whose endpoints hold different opinions,
    among edges where both endpoints answered."""
    counts, total = _edge_category_counts(snapshot, graph)
    if total == 0:
        return None
    differing = sum(n for (i, j), n in counts.items() if i != j)
    return differing / total


@dataclass
class RunReport:
    """Per-snapshot series plus whole-run scalars."""

    steps: list[int]
    consensus: list[float | None]
    assortativity: list[float | None]
    local_agreement: list[float | None]
    cross_cutting: list[float | None]
    opinion_shift_rate: list[float | None] = field(default_factory=list)  # per transition
    majority_follow_rate: list[float | None] = field(default_factory=list)
    neighbor_alignment_shift_rate: list[float | None] = field(default_factory=list)
    net_consensus_change: float | None = None
    assortativity_change: float | None = None
    bert_accuracy: float | None = None  # supplied externally when available

    def scalar_summary(self) -> dict[str, float | None]:
        def mean_defined(xs: Sequence[float | None]) -> float | None:
            vals = [x for x in xs if x is not None]
            return math.fsum(vals) / len(vals) if vals else None

        return {
            "consensus_first": self.consensus[0] if self.consensus else None,
            "consensus_final": self.consensus[-1] if self.consensus else None,
            "net_consensus_change": self.net_consensus_change,
            "assortativity_first": self.assortativity[0] if self.assortativity else None,
            "assortativity_final": self.assortativity[-1] if self.assortativity else None,
            "assortativity_change": self.assortativity_change,
            "mean_opinion_shift_rate": mean_defined(self.opinion_shift_rate),
            "mean_majority_follow_rate": mean_defined(self.majority_follow_rate),
            "mean_neighbor_alignment_shift_rate": mean_defined(
                self.neighbor_alignment_shift_rate
            ),
            "mean_local_agreement": mean_defined(self.local_agreement),
            "local_agreement_final": self.local_agreement[-1] if self.local_agreement else None,
            "mean_cross_cutting": mean_defined(self.cross_cutting),
            "cross_cutting_final": self.cross_cutting[-1] if self.cross_cutting else None,
            "bert_accuracy": self.bert_accuracy,
        }

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "consensus": self.consensus,
            "assortativity": self.assortativity,
            "local_agreement": self.local_agreement,
            "cross_cutting": self.cross_cutting,
            "opinion_shift_rate": self.opinion_shift_rate,
            "majority_follow_rate": self.majority_follow_rate,
            "neighbor_alignment_shift_rate": self.neighbor_alignment_shift_rate,
            "summary": self.scalar_summary(),
        }


def compute_run_report(snapshots: Sequence[SurveySnapshot], graph: FollowGraph) -> RunReport:
    if not snapshots:
        raise InvalidInputError("need at least one snapshot")
    if len({s.question_id for s in snapshots}) != 1:
        raise InvalidInputError("snapshots mix different questions")
    report = RunReport(
        steps=[s.step for s in snapshots],
        consensus=[consensus(s) for s in snapshots],
        assortativity=[opinion_assortativity(s, graph) for s in snapshots],
        local_agreement=[local_agreement(s, graph) for s in snapshots],
        cross_cutting=[cross_cutting_fraction(s, graph) for s in snapshots],
    )
    for prev, curr in zip(snapshots, snapshots[1:]):
        report.opinion_shift_rate.append(opinion_shift_rate(prev, curr))
        report.majority_follow_rate.append(majority_follow_rate(prev, curr))
        report.neighbor_alignment_shift_rate.append(
            neighbor_alignment_shift_rate(prev, curr, graph)
        )
    report.net_consensus_change = net_consensus_change(snapshots)
    first_a, last_a = report.assortativity[0], report.assortativity[-1]
    if first_a is not None and last_a is not None:
        report.assortativity_change = last_a - first_a
    return report
