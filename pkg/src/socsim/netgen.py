"""Follower-graph generation and agent placement.

Graphs are directed: an edge (u, v) means the agent on node u follows the
agent on node v, i.e. u observes content authored by v. Two generators are
supported: a directed Erdos-Renyi model and a Holme-Kim powerlaw-cluster
graph symmetrized to a digraph. Placement either scatters agents uniformly
or sorts them into spatial neighborhoods by expected opinion (homophily).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import networkx as nx
import numpy as np

from .errors import InvalidInputError, InvalidSpecError, IsolationWarning

if TYPE_CHECKING:
    from .agents import AgentProfile
    from .surveys import Question

NEWS_AGENT_ID = "news"

GRAPH_KINDS = ("random_er", "powerlaw_cluster")


@dataclass(frozen=True)
class GraphSpec:
    """Parameters of a follower-graph generator.

    er_edge_prob applies to random_er only; pc_new_edges / pc_triangle_prob
    to powerlaw_cluster only.
    """

    kind: str
    num_nodes: int
    er_edge_prob: float | None = None
    pc_new_edges: int = 2
    pc_triangle_prob: float = 0.3
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in GRAPH_KINDS:
            raise InvalidSpecError(f"unknown graph kind: {self.kind!r}")
        if self.num_nodes < 2:
            raise InvalidSpecError(f"num_nodes must be >= 2, got {self.num_nodes}")
        if self.kind == "random_er":
            if self.er_edge_prob is None or not 0.0 <= self.er_edge_prob <= 1.0:
                raise InvalidSpecError(f"er_edge_prob must be in [0, 1], got {self.er_edge_prob}")
        else:
            if self.pc_new_edges < 1:
                raise InvalidSpecError(f"pc_new_edges must be >= 1, got {self.pc_new_edges}")
            if self.pc_new_edges >= self.num_nodes:
                raise InvalidSpecError("pc_new_edges must be < num_nodes")
            if not 0.0 <= self.pc_triangle_prob <= 1.0:
                raise InvalidSpecError(
                    f"pc_triangle_prob must be in [0, 1], got {self.pc_triangle_prob}"
                )


@dataclass(frozen=True)
class FollowGraph:
    """Directed follower graph with node-to-agent assignment.

    Treated as immutable: placement operations return new instances and
    never touch the edge set.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    node_assignment: dict[int, str] = field(default_factory=dict)
    news_nodes: frozenset[int] = frozenset()

    def followee_index(self) -> dict[int, tuple[int, ...]]:
        """node -> nodes it follows (whose content it observes)."""
        out: dict[int, list[int]] = {u: [] for u in range(self.num_nodes)}
        for u, v in self.edges:
            out[u].append(v)
        return {u: tuple(vs) for u, vs in out.items()}

    def in_degrees(self) -> list[int]:
        """Follower counts per node."""
        deg = [0] * self.num_nodes
        for _, v in self.edges:
            deg[v] += 1
        return deg

    def agent_node(self) -> dict[str, int]:
        return {a: n for n, a in self.node_assignment.items()}

    def with_assignment(self, assignment: dict[int, str]) -> "FollowGraph":
        return replace(self, node_assignment=dict(assignment))


def generate_graph(spec: GraphSpec) -> FollowGraph:
    """Build a follower graph; deterministic for a fixed spec.

    random_er draws every ordered pair (u, v), u != v, independently with
    er_edge_prob. powerlaw_cluster runs the Holme-Kim construction and
    converts each undirected edge into two directed ones.
    """
    spec.validate()
    n = spec.num_nodes
    if spec.kind == "random_er":
        edges = _er_edges(n, float(spec.er_edge_prob or 0.0), spec.seed)
    else:
        g = nx.powerlaw_cluster_graph(n, spec.pc_new_edges, spec.pc_triangle_prob, seed=spec.seed)
        edges = []
        for u, v in g.edges():
            edges.append((u, v))
            edges.append((v, u))
        edges.sort()
    graph = FollowGraph(num_nodes=n, edges=tuple(edges))
    if not edges:
        warnings.warn(f"generated graph on {n} nodes has no edges", IsolationWarning)
    elif _largest_weak_component(graph) < 0.9 * n:
        warnings.warn(
            f"largest weakly connected component covers < 90% of {n} nodes",
            IsolationWarning,
        )
    return graph


def _er_edges(n: int, p: float, seed: int) -> list[tuple[int, int]]:
    rng = np.random.default_rng(seed)
    if p <= 0.0:
        return []
    if p >= 1.0:
        return [(u, v) for u in range(n) for v in range(n) if u != v]
    edges: list[tuple[int, int]] = []
    block = 1024  # row blocks bound the Bernoulli matrix to ~block*n floats
    for start in range(0, n, block):
        stop = min(start + block, n)
        mask = rng.random((stop - start, n)) < p
        for i in range(stop - start):
            mask[i, start + i] = False
        for i, j in np.argwhere(mask):
            edges.append((start + int(i), int(j)))
    return edges


def _largest_weak_component(graph: FollowGraph) -> int:
    parent = list(range(graph.num_nodes))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in graph.edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    sizes: dict[int, int] = {}
    for x in range(graph.num_nodes):
        r = find(x)
        sizes[r] = sizes.get(r, 0) + 1
    return max(sizes.values(), default=0)


def fruchterman_reingold(
    num_nodes: int,
    edges: Sequence[tuple[int, int]],
    seed: int,
    iterations: int = 50,
) -> np.ndarray:
    """Force-directed 2-D layout in the unit square, seeded and vectorized.

    Repulsion is computed densely per axis in float32 (memory-bounded for a
    few thousand nodes); attraction runs over the edge list only.
    """
    rng = np.random.default_rng(seed)
    pos = rng.random((num_nodes, 2))
    if num_nodes < 2 or iterations <= 0:
        return pos
    und = sorted({(min(u, v), max(u, v)) for u, v in edges if u != v})
    e = np.asarray(und, dtype=np.int64).reshape(-1, 2)
    k = np.sqrt(1.0 / num_nodes)
    t = 0.1
    dt = t / (iterations + 1)
    for _ in range(iterations):
        x = pos[:, 0].astype(np.float32)
        y = pos[:, 1].astype(np.float32)
        dx = x[:, None] - x[None, :]
        dy = y[:, None] - y[None, :]
        d2 = dx * dx + dy * dy
        np.clip(d2, 1e-4, None, out=d2)
        rep = (k * k) / d2
        fx = (rep * dx).sum(axis=1).astype(np.float64)
        fy = (rep * dy).sum(axis=1).astype(np.float64)
        if len(e):
            du = pos[e[:, 0]] - pos[e[:, 1]]
            dist = np.sqrt((du * du).sum(axis=1))
            np.clip(dist, 1e-2, None, out=dist)
            pull = du * (dist / k)[:, None]
            np.subtract.at(fx, e[:, 0], pull[:, 0])
            np.add.at(fx, e[:, 1], pull[:, 0])
            np.subtract.at(fy, e[:, 0], pull[:, 1])
            np.add.at(fy, e[:, 1], pull[:, 1])
        length = np.sqrt(fx * fx + fy * fy)
        np.clip(length, 1e-2, None, out=length)
        step = np.minimum(length, t)
        pos[:, 0] += fx / length * step
        pos[:, 1] += fy / length * step
        t -= dt
    return pos


def expected_opinion(agent: "AgentProfile", question) -> float:
    """Score an agent by sum(i * P(option_i)) over option indices.

    `question` may be a Question or a bare question id.
    """
    question_id = getattr(question, "question_id", question)
    dist = agent.baseline_opinions.get(question_id)
    if dist is None:
        raise InvalidInputError(
            f"agent {agent.agent_id} has no baseline opinion for {question_id}"
        )
    return float(sum(i * p for i, p in enumerate(dist)))


def place_agents_homophily(
    graph: FollowGraph,
    agents: Sequence["AgentProfile"],
    question,
    seed: int = 0,
    iterations: int = 50,
) -> FollowGraph:
    """Assign similar-opinion agents to spatially adjacent graph regions.

    Lays the graph out with a seeded Fruchterman-Reingold pass, orders nodes
    by X coordinate, orders agents by expected opinion, and zips the two
    orderings together.
    """
    if len(agents) != graph.num_nodes:
        raise InvalidInputError(
            f"{len(agents)} agents cannot fill {graph.num_nodes} nodes bijectively"
        )
    pos = fruchterman_reingold(graph.num_nodes, graph.edges, seed=seed, iterations=iterations)
    nodes_by_x = sorted(range(graph.num_nodes), key=lambda v: (pos[v, 0], v))
    agents_by_score = sorted(agents, key=lambda a: (expected_opinion(a, question), a.agent_id))
    assignment = {node: agent.agent_id for node, agent in zip(nodes_by_x, agents_by_score)}
    return graph.with_assignment(assignment)


def place_agents_random(
    graph: FollowGraph, agents: Sequence["AgentProfile"], seed: int
) -> FollowGraph:
    """Uniformly random node-to-agent bijection, seeded."""
    if len(agents) != graph.num_nodes:
        raise InvalidInputError(
            f"{len(agents)} agents cannot fill {graph.num_nodes} nodes bijectively"
        )
    perm = np.random.default_rng(seed).permutation(graph.num_nodes)
    assignment = {node: agents[perm[node]].agent_id for node in range(graph.num_nodes)}
    return graph.with_assignment(assignment)


def place_news_agent(graph: FollowGraph, news_agent_id: str = NEWS_AGENT_ID) -> FollowGraph:
    """Mark the most-followed node as the news node, evicting its occupant.

    Ties break toward the lowest node id.
    """
    if graph.num_nodes < 1:
        raise InvalidInputError("cannot place a news agent on an empty graph")
    deg = graph.in_degrees()
    node = max(range(graph.num_nodes), key=lambda v: (deg[v], -v))
    assignment = dict(graph.node_assignment)
    assignment[node] = news_agent_id
    return replace(graph, node_assignment=assignment, news_nodes=frozenset({node}))


def save_edge_list(graph: FollowGraph, path: str | Path) -> None:
    """Write `#nodes=<n> news=<id|none>` then one `follower followee` per line."""
    news = min(graph.news_nodes) if graph.news_nodes else None
    lines = [f"#nodes={graph.num_nodes} news={news if news is not None else 'none'}"]
    lines.extend(f"{u} {v}" for u, v in graph.edges)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_edge_list(path: str | Path) -> FollowGraph:
    """Inverse of save_edge_list; node assignment is not part of the format."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#nodes="):
        raise InvalidInputError(f"{path}: missing '#nodes=' header")
    head = lines[0][1:].split()
    n = int(head[0].split("=", 1)[1])
    news_field = head[1].split("=", 1)[1]
    news = frozenset() if news_field == "none" else frozenset({int(news_field)})
    edges = []
    for ln in lines[1:]:
        u, v = ln.split()
        edges.append((int(u), int(v)))
    return FollowGraph(num_nodes=n, edges=tuple(edges), news_nodes=news)
