"""Primitive distributed protocols run on :mod:`spectral_weights.simnet`."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .graph import Graph, weighted_operator
from .simnet import Protocol, run_rounds

# Entries at or below this magnitude cannot be used to recover an eigenvalue.
ZERO_ENTRY = 1e-8


class ConvergenceError(RuntimeError):
    pass


class LocalOperator:
    """Agent-level view of a weighted Laplacian.

    Each agent broadcasts ``message(i, x_i)`` and recovers the ``i``-th entry
    of the matrix-vector product from its neighbours' messages. ``kind="node"``
    is ``diag(w)^½ L diag(w)^½``, ``kind="edge"`` is ``B^T diag(w) B``.
    """

    def __init__(self, g: Graph, w=None, kind: str = "node"):
        if kind not in ("node", "edge"):
            raise ValueError(f"unknown weight kind {kind!r}")
        self.g = g
        self.kind = kind
        size = g.n if kind == "node" else g.m
        w = np.ones(size) if w is None else np.asarray(w, dtype=float)
        if w.shape != (size,):
            raise ValueError(f"{kind} weights must have length {size}")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        self.w = w
        self.deg = [len(a) for a in g.adjacency]
        if kind == "node":
            self.sqrt_w = [math.sqrt(float(x)) for x in w]
        else:
            eidx = g.edge_index()
            # per agent: {neighbour: weight of the connecting edge}
            self.incident = [{j: float(w[eidx[(i, j)]]) for j in g.adjacency[i]} for i in range(g.n)]

    def message(self, i: int, x_i: float) -> float:
        return self.sqrt_w[i] * x_i if self.kind == "node" else x_i

    def apply(self, i: int, x_i: float, received) -> float:
        """``received`` is a list of ``(j, message_j)`` pairs from neighbours."""
        if self.kind == "node":
            s = self.sqrt_w[i]
            return s * (self.deg[i] * s * x_i - sum(m for _, m in received))
        inc = self.incident[i]
        return sum(inc[j] * (x_i - m) for j, m in received)

    def gershgorin(self, i: int) -> float:
        if self.kind == "node":
            return 2.0 * self.deg[i] * float(self.w[i])
        return 2.0 * sum(self.incident[i].values())

    def null_vector(self) -> np.ndarray:
        if self.kind == "node":
            return 1.0 / np.sqrt(self.w)
        return np.ones(self.g.n)

    def dense(self) -> np.ndarray:
        return weighted_operator(self.g, self.w, self.kind)


# -- max-consensus -----------------------------------------------------------

class MaxConsensus(Protocol):
    """``p_i <- max(p_i, p_j for j in N_i)``; ``p`` may be a float or a tuple.

    With ``quiescent=True`` agents report done once a round changes nothing
    anywhere, which for flooding means the maximum has settled.
    """

    registers = ("p", "changed", "stable_at")

    def __init__(self, quiescent: bool = False):
        self.quiescent = quiescent

    def emit(self, agent, state):
        return (state["p"],)

    def step(self, agent, state, inbox, rnd):
        best = state["p"]
        for (p,) in inbox.values():
            if p > best:
                best = p
        changed = best != state["p"]
        state["p"] = best
        state["changed"] = changed
        if changed:
            state["stable_at"] = rnd + 1
        return state

    def done(self, agent, state):
        return self.quiescent and not state["changed"]


def _max_init(values):
    return [{"p": v, "changed": True, "stable_at": 0} for v in values]


def max_consensus(g: Graph, p0, rounds: int) -> list:
    """Run exactly ``rounds`` rounds of max-consensus and return every agent's register."""
    trace = run_rounds(g, MaxConsensus(), _max_init(list(p0)), rounds, record=False)
    return trace.register("p")


@dataclass(frozen=True)
class DiameterEstimate:
    value: int
    rounds_used: int
    eccentricity: int


def estimate_diameter(g: Graph) -> DiameterEstimate:
    """Certified diameter upper bound ``2 * ecc(argmax id)`` from two max floods.

    Phase 1 floods the largest id; each agent notes the round at which its
    register last changed, which is its distance to that agent. Phase 2 floods
    the largest of those distances. Both phases stop on global quiescence.
    """
    first = run_rounds(g, MaxConsensus(quiescent=True), _max_init(range(g.n)),
                       max_rounds=2 * g.n + 2, record=False)
    dists = [s["stable_at"] for s in first.final]
    second = run_rounds(g, MaxConsensus(quiescent=True), _max_init(dists),
                        max_rounds=2 * g.n + 2, record=False)
    ecc = int(second.register("p")[0])
    return DiameterEstimate(value=2 * ecc, rounds_used=first.rounds + second.rounds, eccentricity=ecc)


# -- l2 normalisation --------------------------------------------------------

class SquareAverage(Protocol):
    """Average consensus on squared entries with step ``1/beta``."""

    registers = ("xt", "delta")

    def __init__(self, beta: float, tol: float):
        self.inv_beta = 1.0 / beta
        self.tol = tol

    def emit(self, agent, state):
        return (state["xt"],)

    def step(self, agent, state, inbox, rnd):
        xt = state["xt"]
        acc = 0.0
        for (xj,) in inbox.values():
            acc += xt - xj
        new = xt - self.inv_beta * acc
        state["delta"] = abs(new - xt)
        state["xt"] = new
        return state

    def done(self, agent, state):
        return state["delta"] <= self.tol


class NormalizeResult(NamedTuple):
    vector: np.ndarray   # v_i / ||v||_2 as estimated by agent i
    norms: np.ndarray    # agent i's estimate of ||v||_2
    rounds: int


def l2_normalize(g: Graph, v, lam2: float, lamN: float, tol: float = 1e-4,
                 max_rounds: int = 100_000, record: bool = False):
    """Scale ``v`` to unit Euclidean norm by average consensus on ``v_i**2``.

    ``lam2``/``lamN`` are the extreme eigenvalues of the unweighted Laplacian;
    the step ``1/beta`` uses ``beta = (lamN + lam2) / 2``. Agents are assumed
    to know ``n``. With ``record=True`` the simulator trace is returned too.
    """
    v = [float(x) for x in v]
    if not any(v):
        raise ValueError("cannot normalise the zero vector")
    beta = 0.5 * (lamN + lam2)
    init = [{"xt": x * x, "delta": math.inf} for x in v]
    trace = run_rounds(g, SquareAverage(beta, tol), init, max_rounds, record=record)
    if not all(s["delta"] <= tol for s in trace.final):
        raise ConvergenceError(f"l2 normalisation did not converge in {max_rounds} rounds")
    norms = np.array([math.sqrt(g.n * max(s["xt"], 0.0)) for s in trace.final])
    out = NormalizeResult(np.array(v) / norms, norms, trace.rounds)
    return (out, trace) if record else out


# -- eigenvalue recovery -----------------------------------------------------

class EigenvalueFlood(Protocol):
    """One product round, then ``d_bound`` rounds of lexicographic max-flooding.

    The flooded key is ``(|x_i|, -i, ratio_i, sign_i)``: every agent ends up
    with the ratio computed at the largest-magnitude entry (lowest index on
    ties) together with that entry's sign.
    """

    registers = ("x", "key", "phase")

    def __init__(self, op: LocalOperator, d_bound: int):
        self.op = op
        self.d_bound = d_bound

    def emit(self, agent, state):
        if state["phase"] == 0:
            return (self.op.message(agent, state["x"]),)
        return (state["key"],)

    def step(self, agent, state, inbox, rnd):
        if state["phase"] == 0:
            x = state["x"]
            if abs(x) > ZERO_ENTRY:
                prod = self.op.apply(agent, x, [(j, m[0]) for j, m in inbox.items()])
                state["key"] = (abs(x), -agent, prod / x, 1.0 if x > 0 else -1.0)
            else:
                state["key"] = (-1.0, -agent, 0.0, 1.0)
        else:
            best = state["key"]
            for (k,) in inbox.values():
                if k > best:
                    best = k
            state["key"] = best
        state["phase"] += 1
        return state

    def done(self, agent, state):
        return state["phase"] > self.d_bound


def eigen_flood(op: LocalOperator, x, d_bound: int):
    """Return ``(values, signs, rounds)`` agreed on by all agents."""
    init = [{"x": float(xi), "key": None, "phase": 0} for xi in x]
    trace = run_rounds(op.g, EigenvalueFlood(op, d_bound), init, d_bound + 1, record=False)
    keys = [s["key"] for s in trace.final]
    if any(k[0] < 0 for k in keys):
        raise ValueError("invalid eigenvector: every entry is numerically zero")
    return np.array([k[2] for k in keys]), np.array([k[3] for k in keys]), trace.rounds


def local_eigenvalue(g: Graph, w, x, d_bound: int | None = None, kind: str = "node") -> np.ndarray:
    """Each agent's eigenvalue estimate for the (approximate) eigenvector ``x``."""
    if d_bound is None:
        d_bound = estimate_diameter(g).value
    values, _, _ = eigen_flood(LocalOperator(g, w, kind), x, d_bound)
    return values
