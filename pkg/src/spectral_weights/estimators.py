"""Distributed estimation of the extreme eigenpairs of a weighted Laplacian.

All iterations run on the simulator. Normalisation uses max-consensus on
``|x_i|`` over ``d_bound`` rounds, so one power step costs ``d_bound + 2``
rounds: a product round, the flood, and a scaling round. The global change of
the iterate is flooded together with the norm, so every agent reaches the
stopping decision in the same round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .protocols import (
    ConvergenceError,
    LocalOperator,
    eigen_flood,
    l2_normalize,
    max_consensus,
)
from .simnet import Protocol, RoundTrace, run_rounds

STALL_NORM = 1e-14
MAX_RESEEDS = 3
OVERFLOW = 1e150
DEFAULT_SEED = 20240
ALPHA_PAD = 0.05
# log of the tolerated growth of roundoff in the null direction between deflations
LEAK_BUDGET = math.log(1e13)


class StallError(ConvergenceError):
    """The start vector stayed orthogonal to the target after every reseed."""


@dataclass
class EigEstimate:
    vector: np.ndarray   # unit 2-norm, largest entry positive
    value: float
    rounds: int
    reseeds: int = 0
    trace: RoundTrace | None = None
    values: np.ndarray | None = None   # every agent's copy of the eigenvalue


@dataclass(frozen=True)
class FiedlerConfig:
    alpha: float
    p: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("deflation period must be at least 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def _reseed(n: int, seed: int, attempt: int) -> list[float]:
    # every agent draws from its own stream, seeded by (seed, attempt, id)
    return [float(np.random.default_rng([seed, attempt, i]).uniform(-1.0, 1.0)) for i in range(n)]


def dist_matvec(g: Graph, w, x, kind: str = "node") -> np.ndarray:
    """One exchange round computing ``L_hat @ x`` entrywise at the agents."""
    op = LocalOperator(g, w, kind)

    class _Matvec(Protocol):
        registers = ("x", "y")

        def emit(self, agent, state):
            return (op.message(agent, state["x"]),)

        def step(self, agent, state, inbox, rnd):
            state["y"] = op.apply(agent, state["x"], [(j, m[0]) for j, m in inbox.items()])
            return state

    init = [{"x": float(v), "y": 0.0} for v in x]
    trace = run_rounds(g, _Matvec(), init, 1, record=False)
    return np.array(trace.register("y"))


class PowerCycle(Protocol):
    """Power iteration with exact max-consensus normalisation.

    ``alpha=None`` iterates ``L_hat``. Otherwise the shifted operator
    ``I - L_hat / alpha`` is used, except on macro steps divisible by ``p``,
    which multiply by ``L_hat`` to purge the null direction.
    """

    registers = ("x", "y", "m", "c", "gc", "phase", "macro", "status")

    def __init__(self, op: LocalOperator, d_bound: int, tol: float,
                 alpha: float | None = None, p: int = 1, max_cycles: int | None = None):
        self.op = op
        self.d_bound = d_bound
        self.tol = tol
        self.inv_alpha = None if alpha is None else 1.0 / alpha
        self.p = p
        self.max_cycles = max_cycles

    def emit(self, agent, state):
        phase = state["phase"]
        if phase == 0:
            return (self.op.message(agent, state["x"]),)
        if phase <= self.d_bound:
            return (state["m"], state["gc"])
        return None

    def step(self, agent, state, inbox, rnd):
        phase = state["phase"]
        if phase == 0:
            x = state["x"]
            lx = self.op.apply(agent, x, [(j, m[0]) for j, m in inbox.items()])
            if self.inv_alpha is None or state["macro"] % self.p == 0:
                y = lx
            else:
                y = x - self.inv_alpha * lx
            state["y"] = y
            state["m"] = abs(y)
            state["gc"] = state["c"]
            state["phase"] = 1 if self.d_bound > 0 else self.d_bound + 1
            return state
        if phase <= self.d_bound:
            m, gc = state["m"], state["gc"]
            for mj, cj in inbox.values():
                if mj > m:
                    m = mj
                if cj > gc:
                    gc = cj
            state["m"], state["gc"] = m, gc
            state["phase"] = phase + 1
            return state
        # scaling round
        m = state["m"]
        state["phase"] = 0
        if m < STALL_NORM:
            shifted = self.inv_alpha is not None and state["macro"] % self.p != 0
            # a nonzero iterate wiped out by the shift is an eigenvector for alpha
            state["status"] = "annihilated" if shifted and state["macro"] > 0 else "stall"
            return state
        x_new = state["y"] / m
        state["c"] = abs(x_new - state["x"])
        state["x"] = x_new
        state["macro"] += 1
        if state["gc"] <= self.tol:
            state["status"] = "done"
        elif self.max_cycles is not None and state["macro"] >= self.max_cycles:
            state["status"] = "capped"
        return state

    def done(self, agent, state):
        return state["status"] != "run"


def _run_power(op: LocalOperator, x0, d_bound: int, tol: float, *, alpha=None, p=1,
               max_rounds: int = 200_000, seed: int = DEFAULT_SEED, record: bool = False,
               max_cycles: int | None = None):
    """Iterate to convergence, reseeding on stalls. Returns ``(x, rounds, reseeds, trace)``.

    With ``max_cycles`` the iteration also stops (status ``"capped"``) after
    that many power steps and the current iterate is returned.
    """
    proto = PowerCycle(op, d_bound, tol, alpha, p, max_cycles)
    x0 = [float(v) for v in x0]
    rounds = 0
    for attempt in range(MAX_RESEEDS + 1):
        init = [{"x": v, "y": 0.0, "m": 0.0, "c": math.inf, "gc": math.inf,
                 "phase": 0, "macro": 0, "status": "run"} for v in x0]
        trace = run_rounds(op.g, proto, init, max_rounds - rounds, record=record)
        rounds += trace.rounds
        status = trace.final[0]["status"]
        if status in ("done", "capped") or (status == "annihilated" and attempt > 0):
            # after a random reseed, annihilation means the whole complement of
            # the null direction is one eigenspace, so any iterate will do
            return np.array(trace.register("x")), rounds, attempt, trace
        if status == "run":
            raise ConvergenceError(f"power iteration did not converge within {max_rounds} rounds")
        x0 = _reseed(op.g.n, seed, attempt + 1)
    raise StallError(f"power iteration stalled after {MAX_RESEEDS} reseeds")


def unit_extremes(g: Graph, d_bound: int, tol: float = 5e-6, seed: int = DEFAULT_SEED):
    """Distributed ``(lambda_2, lambda_N)`` of the unweighted Laplacian (no 2-norm step)."""
    op = LocalOperator(g, None, "node")
    x0 = _reseed(g.n, seed, 0)
    x, r1, _, _ = _run_power(op, x0, d_bound, tol, seed=seed)
    lamN = float(eigen_flood(op, x, d_bound)[0][0])
    cfg = fiedler_config(g, None, lamN, d_bound, first=True, pad=0.0)
    y, r2, _, _ = _run_power(op, x0, d_bound, tol, alpha=cfg.alpha, p=cfg.p, seed=seed)
    lam2 = float(eigen_flood(op, y, d_bound)[0][0])
    if 0 < lam2 < lamN and leak_cap(lamN / lam2) < cfg.p:
        # nearly flat spectrum: refine with a shorter deflation period
        cfg = FiedlerConfig(cfg.alpha, leak_cap(lamN / lam2))
        y, _, _, _ = _run_power(op, y, d_bound, tol, alpha=cfg.alpha, p=cfg.p, seed=seed)
        lam2 = float(eigen_flood(op, y, d_bound)[0][0])
    return lam2, lamN


def _finish(op: LocalOperator, x, rounds, reseeds, d_bound, unit, tol_xt, trace) -> EigEstimate:
    values, signs, r_flood = eigen_flood(op, x, d_bound)
    x = np.asarray(x) * signs
    if unit is None:
        unit = unit_extremes(op.g, d_bound)
    res = l2_normalize(op.g, x, unit[0], unit[1], tol_xt)
    return EigEstimate(res.vector, float(values[0]), rounds + r_flood + res.rounds, reseeds, trace, values)


def largest_eigpair(g: Graph, w, x0, d_bound: int, tol: float = 5e-6, *, kind: str = "node",
                    unit=None, tol_xt: float = 1e-4, seed: int = DEFAULT_SEED,
                    max_rounds: int = 200_000, record: bool = False,
                    max_cycles: int | None = None) -> EigEstimate:
    """Largest eigenpair of the weighted Laplacian by distributed power iteration.

    ``unit`` is ``(lambda_2, lambda_N)`` of the unweighted Laplacian, used for
    the 2-norm step; it is estimated on the fly when omitted.
    """
    op = LocalOperator(g, w, kind)
    x, rounds, reseeds, trace = _run_power(op, x0, d_bound, tol, seed=seed, max_rounds=max_rounds,
                                           record=record, max_cycles=max_cycles)
    return _finish(op, x, rounds, reseeds, d_bound, unit, tol_xt, trace if record else None)


def fiedler_config(g: Graph, w, lamN_hat: float | None, d_bound: int, *, kind: str = "node",
                   kappa_hat: float | None = None, first: bool = True,
                   pad: float = ALPHA_PAD) -> FiedlerConfig:
    """Shift ``alpha`` and deflation period ``p`` for the Fiedler estimator.

    Without an estimate of ``lambda_N`` the shift falls back to the largest
    Gershgorin radius bound, agreed on by max-consensus. On later outer steps
    ``p`` follows the current condition number estimate.
    """
    op = LocalOperator(g, w, kind)
    if lamN_hat is None:
        alpha = float(max_consensus(g, [op.gershgorin(i) for i in range(g.n)], d_bound)[0])
    else:
        # pad so the shift stays above lambda_N when the estimate falls short
        alpha = (1.0 + pad) * float(lamN_hat)
    if first or kappa_hat is None:
        d = max(d_bound, 1)
        p = math.ceil(alpha * (d + 1) / (4 * d)) + 50
    else:
        p = math.ceil(kappa_hat) + 50
    if kappa_hat is not None:
        p = min(p, leak_cap(kappa_hat, pad))
    return FiedlerConfig(alpha, p)


def leak_cap(kappa_hat: float, pad: float = 0.0) -> int:
    """Largest period keeping null-direction growth between deflations within LEAK_BUDGET.

    Each shifted step grows the null component relative to the Fiedler one by
    ``alpha / (alpha - lambda_2) = c kappa / (c kappa - 1)`` with ``c = 1 + pad``.
    """
    ck = (1.0 + pad) * max(float(kappa_hat), 1.0)
    if ck <= 1.0:
        return 1
    return 1 + int(LEAK_BUDGET / math.log(ck / (ck - 1.0)))


def fiedler_eigpair(g: Graph, w, cfg: FiedlerConfig, y0, d_bound: int, tol: float = 5e-6, *,
                    kind: str = "node", unit=None, tol_xt: float = 1e-4, seed: int = DEFAULT_SEED,
                    max_rounds: int = 400_000, record: bool = False,
                    max_cycles: int | None = None) -> EigEstimate:
    """Fiedler eigenpair by power iteration on ``I - L_hat/alpha`` with periodic deflation."""
    op = LocalOperator(g, w, kind)
    y, rounds, reseeds, trace = _run_power(op, y0, d_bound, tol, alpha=cfg.alpha, p=cfg.p, seed=seed,
                                           max_rounds=max_rounds, record=record, max_cycles=max_cycles)
    return _finish(op, y, rounds, reseeds, d_bound, unit, tol_xt, trace if record else None)


class DeltaPower(Protocol):
    """Power iteration with a pipelined norm estimate.

    A product is taken every round. Every ``d_bound + 1`` rounds each agent
    samples ``|x_i|`` and floods it; when the flood completes, the agreed
    maximum ``delta`` divides the current iterate once. Agents stop when two
    consecutive deltas agree within ``switch_tol`` (relative), or on a zero
    delta (stall).
    """

    registers = ("x", "xh", "delta", "T", "status")

    def __init__(self, op: LocalOperator, d_bound: int, switch_tol: float):
        self.op = op
        self.period = d_bound + 1
        self.switch_tol = switch_tol

    def emit(self, agent, state):
        return (self.op.message(agent, state["x"]), state["xh"])

    def step(self, agent, state, inbox, rnd):
        T, x = state["T"], state["x"]
        msgs = inbox.items()
        y = self.op.apply(agent, x, [(j, m[0]) for j, m in msgs])
        phase = T % self.period
        if phase == 1 or self.period == 1:
            xh = abs(x)
        else:
            xh = state["xh"]
            for _, m in msgs:
                if m[1] > xh:
                    xh = m[1]
        state["xh"] = xh
        if phase == 0 and T > 0:
            delta = xh
            if delta < STALL_NORM:
                state["status"] = "stall"
            else:
                y /= delta
                prev = state["delta"]
                if prev is not None and abs(delta - prev) <= self.switch_tol * delta:
                    state["status"] = "switch"
                state["delta"] = delta
        state["x"] = y
        state["T"] = T + 1
        return state

    def done(self, agent, state):
        return state["status"] != "run"


def interleaved_power(g: Graph, w, x0, d_bound: int, tol: float = 5e-6, switch_tol: float = 1e-3, *,
                      kind: str = "node", unit=None, tol_xt: float = 1e-4, seed: int = DEFAULT_SEED,
                      max_rounds: int = 200_000) -> EigEstimate:
    """Largest eigenpair: pipelined-delta phase, then the exact scheme to finish."""
    op = LocalOperator(g, w, kind)
    proto = DeltaPower(op, d_bound, switch_tol)
    chunk = 50 * (d_bound + 1)
    x = [float(v) for v in x0]
    rounds = 0
    reseeds = 0
    states = None
    while True:
        if states is None:
            states = [{"x": v, "xh": abs(v), "delta": None, "T": 0, "status": "run"} for v in x]
        if rounds >= max_rounds:
            raise ConvergenceError(f"interleaved power iteration did not switch within {max_rounds} rounds")
        trace = run_rounds(g, proto, states, min(chunk, max_rounds - rounds), record=False)
        rounds += trace.rounds
        states = trace.final
        status = states[0]["status"]
        if status == "stall":
            if reseeds == MAX_RESEEDS:
                raise StallError(f"power iteration stalled after {MAX_RESEEDS} reseeds")
            x = _reseed(g.n, seed, reseeds + 1)
            reseeds += 1
            states = None
            continue
        if status == "switch":
            break
        # overflow guard between chunks: rescale by the last agreed delta
        if max(abs(s["x"]) for s in states) > OVERFLOW:
            delta = states[0]["delta"] or max(abs(s["x"]) for s in states)
            for s in states:
                s["x"] /= delta
    x = [s["x"] for s in states]
    xv, r2, more, _ = _run_power(op, x, d_bound, tol, seed=seed, max_rounds=max_rounds - rounds)
    est = _finish(op, xv, rounds + r2, reseeds + more, d_bound, unit, tol_xt, None)
    return est
