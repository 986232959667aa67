"""Deterministic synchronous message-passing simulator.

A round has two phases. Every agent first emits one message computed from
its own registers; the messages are then delivered, and every agent updates
its registers from its own state plus the messages of its neighbours. An
agent can only look up neighbours in its inbox: any other key raises
:class:`LocalityViolation`.
"""
from __future__ import annotations

import csv
import io
from collections.abc import Mapping
from dataclasses import dataclass, field

from .graph import Graph


class LocalityViolation(RuntimeError):
    """A protocol tried to read a message from a non-neighbour."""


class ProtocolError(RuntimeError):
    pass


class Inbox(Mapping):
    """Read-only view of the messages a single agent received this round."""

    __slots__ = ("agent", "_nbrs", "_nbrset", "_outbox")

    def __init__(self, agent, nbrs, nbrset, outbox):
        self.agent = agent
        self._nbrs = nbrs
        self._nbrset = nbrset
        self._outbox = outbox

    def __getitem__(self, sender):
        if sender not in self._nbrset:
            raise LocalityViolation(f"agent {self.agent} read a message from non-neighbour {sender}")
        msg = self._outbox[sender]
        if msg is None:
            raise KeyError(sender)
        return msg

    def __iter__(self):
        return (j for j in self._nbrs if self._outbox[j] is not None)

    def __len__(self):
        return sum(1 for _ in self)

    def values(self):
        out = self._outbox
        return [out[j] for j in self._nbrs if out[j] is not None]

    def items(self):
        out = self._outbox
        return [(j, out[j]) for j in self._nbrs if out[j] is not None]


class Protocol:
    """Base class for round-based protocols.

    Subclasses declare ``registers`` and override :meth:`emit`,
    :meth:`step` and optionally :meth:`done`. ``step`` may update ``state`` in
    place; it must return the new register dict.
    """

    registers: tuple[str, ...] = ()

    def emit(self, agent: int, state: dict):
        return None

    def step(self, agent: int, state: dict, inbox: Inbox, rnd: int) -> dict:
        return state

    def done(self, agent: int, state: dict) -> bool:
        return False


@dataclass
class RoundTrace:
    """Register snapshots, one entry per executed round (entry 0 is the initial state)."""

    snapshots: list = field(default_factory=list)
    rounds: int = 0
    final: list = field(default_factory=list)

    def __len__(self):
        return len(self.snapshots) if self.snapshots else self.rounds + 1

    def register(self, name: str, rnd: int = -1) -> list:
        states = self.final if (rnd == -1 and self.final) else self.snapshots[rnd]
        try:
            return [s[name] for s in states]
        except KeyError:
            raise KeyError(f"unknown register {name!r}") from None

    def to_csv(self, registers=None) -> str:
        """Long-format CSV with columns ``round,agent,register,value``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["round", "agent", "register", "value"])
        for rnd, states in enumerate(self.snapshots):
            for agent, s in enumerate(states):
                for name in (registers or sorted(s)):
                    writer.writerow([rnd, agent, name, repr(s[name])])
        return buf.getvalue()


def run_rounds(g: Graph, proto: Protocol, init, max_rounds: int, *,
               record: bool = True, order=None) -> RoundTrace:
    """Run ``proto`` in lockstep until every agent is done or ``max_rounds`` pass.

    ``order`` permutes the sequence in which agents are stepped within a
    round; results never depend on it. With ``record=False`` only the final
    states are retained.
    """
    n = g.n
    if len(init) != n:
        raise ProtocolError(f"initial state given for {len(init)} agents, graph has {n}")
    if max_rounds < 0:
        raise ValueError("max_rounds must be non-negative")
    states = [dict(s) for s in init]
    for i, s in enumerate(states):
        missing = [r for r in proto.registers if r not in s]
        if missing:
            raise ProtocolError(f"agent {i} lacks registers {missing}")
    nbrs = g.adjacency
    nbrsets = [frozenset(a) for a in nbrs]
    agents = list(range(n)) if order is None else [int(i) for i in order]
    if sorted(agents) != list(range(n)):
        raise ValueError("order must be a permutation of the agents")

    trace = RoundTrace()
    if record:
        trace.snapshots.append([dict(s) for s in states])
    emit, step, done = proto.emit, proto.step, proto.done
    rnd = 0
    while rnd < max_rounds and not all(done(i, states[i]) for i in range(n)):
        outbox = [emit(i, states[i]) for i in range(n)]
        new = [None] * n
        for i in agents:
            new[i] = step(i, states[i], Inbox(i, nbrs[i], nbrsets[i], outbox), rnd)
        states = new
        rnd += 1
        if record:
            trace.snapshots.append([dict(s) for s in states])
    trace.rounds = rnd
    trace.final = states
    return trace


def assert_uniform(trace: RoundTrace, register: str, tol: float = 0.0) -> bool:
    """True iff ``register`` agrees across agents within ``tol`` at the last round."""
    if not trace.final and not trace.snapshots:
        raise ValueError("empty trace")
    vals = trace.register(register)
    return max(vals) - min(vals) <= tol
