import itertools

import pytest

from socsim.netgen import FollowGraph
from socsim.metrics import SurveySnapshot
from socsim.surveys import load_question_bank


@pytest.fixture(scope="session")
def bank():
    return load_question_bank()


def make_graph(agents, edges):
    """FollowGraph over string agent ids; edges given as agent-id pairs."""
    index = {agent: i for i, agent in enumerate(agents)}
    return FollowGraph(
        num_nodes=len(agents),
        edges=tuple((index[a], index[b]) for a, b in edges),
        node_assignment={i: agent for agent, i in index.items()},
        news_nodes=frozenset(),
    )


def make_snapshot(answers, step=0, question_id="q"):
    return SurveySnapshot(step=step, question_id=question_id, answers=dict(answers))


def all_digraphs(agents):
    """Every simple digraph over the given agents, as agent-id edge lists."""
    slots = [(a, b) for a in agents for b in agents if a != b]
    for mask in range(2 ** len(slots)):
        yield [slots[i] for i in range(len(slots)) if mask >> i & 1]


def all_answer_maps(agents, values=(0, 1, None)):
    for combo in itertools.product(values, repeat=len(agents)):
        yield dict(zip(agents, combo))
