import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_graphs
from spectral_weights.graph import random_connected_graph
from spectral_weights.simnet import (
    LocalityViolation, Protocol, ProtocolError, RoundTrace, assert_uniform, run_rounds,
)


class Averaging(Protocol):
    """Plain neighbour averaging, used as a well-behaved test protocol."""

    registers = ("x",)

    def emit(self, agent, state):
        return (state["x"],)

    def step(self, agent, state, inbox, rnd):
        vals = [m[0] for m in inbox.values()]
        state["x"] = (state["x"] + sum(vals)) / (1 + len(vals))
        return state


class Spy(Protocol):
    """Tries to read a message from a fixed target agent."""

    registers = ("x",)

    def __init__(self, target):
        self.target = target

    def emit(self, agent, state):
        return (state["x"],)

    def step(self, agent, state, inbox, rnd):
        state["x"] = inbox[self.target][0]
        return state


def _init(n, seed=0):
    rng = np.random.default_rng(seed)
    return [{"x": float(v)} for v in rng.standard_normal(n)]


def test_trace_has_one_entry_per_round(g7):
    tr = run_rounds(g7, Averaging(), _init(7), 5)
    assert tr.rounds == 5 and len(tr.snapshots) == 6
    assert tr.register("x", 0) == [s["x"] for s in _init(7)]


def test_zero_rounds_returns_initial_state(g7):
    tr = run_rounds(g7, Averaging(), _init(7), 0)
    assert tr.rounds == 0
    assert tr.register("x") == [s["x"] for s in _init(7)]


def test_missing_register_rejected(g7):
    with pytest.raises(ProtocolError):
        run_rounds(g7, Averaging(), [{}] * 7, 1)
    with pytest.raises(ProtocolError):
        run_rounds(g7, Averaging(), _init(6), 1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_spy_on_non_neighbour_is_caught(seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(int(rng.integers(3, 12)), 0.3, rng)
    candidates = [(i, j) for i in range(g.n) for j in range(g.n) if i != j and j not in g.adjacency[i]]
    if not candidates:
        return
    i, target = candidates[int(rng.integers(len(candidates)))]
    # only the chosen agent spies; neighbours of the target read legally
    proto = Spy(target)
    legal = set(g.adjacency[target])

    class Partial(Spy):
        def step(self, agent, state, inbox, rnd):
            if agent == i or agent in legal:
                return super().step(agent, state, inbox, rnd)
            return state

    with pytest.raises(LocalityViolation):
        run_rounds(g, Partial(target), _init(g.n), 1)
    assert proto.target == target


def test_neighbour_reads_are_allowed(p3):
    class Left(Spy):
        def step(self, agent, state, inbox, rnd):
            return super().step(agent, state, inbox, rnd) if agent != 1 else state

    tr = run_rounds(p3, Left(1), _init(3), 1)
    assert tr.register("x")[0] == tr.register("x", 0)[1]
    assert tr.register("x")[2] == tr.register("x", 0)[1]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_agent_order_independence(seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(int(rng.integers(2, 12)), 0.3, rng)
    a = run_rounds(g, Averaging(), _init(g.n, seed % 1000), 6)
    b = run_rounds(g, Averaging(), _init(g.n, seed % 1000), 6, order=rng.permutation(g.n))
    assert a.to_csv() == b.to_csv()


def test_bad_order_rejected(p3):
    with pytest.raises(ValueError):
        run_rounds(p3, Averaging(), _init(3), 1, order=[0, 0, 1])


def test_determinism_and_csv(g7):
    a = run_rounds(g7, Averaging(), _init(7), 4).to_csv()
    b = run_rounds(g7, Averaging(), _init(7), 4).to_csv()
    assert a == b
    lines = a.splitlines()
    assert lines[0] == "round,agent,register,value"
    assert len(lines) == 1 + 5 * 7
    assert lines[1].startswith("0,0,x,")


def test_record_false_keeps_final_only(g7):
    full = run_rounds(g7, Averaging(), _init(7), 4)
    lean = run_rounds(g7, Averaging(), _init(7), 4, record=False)
    assert lean.snapshots == []
    assert lean.register("x") == full.register("x")


def test_averaging_reaches_agreement():
    for g in random_graphs(5, 9):
        tr = run_rounds(g, Averaging(), _init(g.n), 400, record=False)
        assert assert_uniform(tr, "x", 1e-8)
    with pytest.raises(ValueError):
        assert_uniform(RoundTrace(), "x")


def test_inbox_is_read_only_view(p3):
    seen = {}

    class Peek(Averaging):
        def step(self, agent, state, inbox, rnd):
            seen[agent] = sorted(inbox)
            return state

    run_rounds(p3, Peek(), _init(3), 1)
    assert seen == {0: [1], 1: [0, 2], 2: [1]}
