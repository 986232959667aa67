"""Augmented-Lagrangian outer loop with projected gradient steps on the weights.

The problem is ``min lambda_N(w)  s.t.  lambda_2(w) >= 1, w >= 0`` with the
penalty ``L_rho = lambda_N + rho/2 * max(0, 1 - lambda_2 + sigma/rho)**2``.
Each multiplier value defines a subproblem solved by projected gradient
descent; the multiplier is then updated and the loop repeats until it settles.

Two engines produce the eigenpairs: ``"oracle"`` uses the dense solver and
``"distributed"`` runs the estimators on the simulator, with every agent
holding only its own weight, multiplier and eigenvector entries.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimators as est
from .eig import REPEAT_TOL, sym_eig
from .graph import Graph, adjacency_matrix, weighted_operator
from .protocols import estimate_diameter, max_consensus
from .simnet import Protocol, run_rounds

# Weights below this are lifted to it when evaluating gradients.
W_FLOOR = 1e-9


@dataclass(frozen=True)
class AugLagParams:
    rho: float = 20.0
    gamma: float = 1e-3
    sigma0: float = 0.0
    w0: float = 1.0          # initial weights are w0 * ones
    t_max: int = 750         # descent steps per multiplier value
    k_max: int = 100         # multiplier updates
    eps_w: float = 5e-2
    eps_sigma: float = 1e-1
    eps_lamN: float = 1e-3
    eps_x: float = 5e-6
    eps_xt: float = 1e-4
    inner_cycles: int | None = 100   # power steps per inner estimate (distributed engine)
    seed: int = est.DEFAULT_SEED

    def __post_init__(self):
        if self.rho <= 0 or self.gamma <= 0:
            raise ValueError("rho and gamma must be positive")
        if self.sigma0 < 0:
            raise ValueError("sigma0 must be non-negative")
        if self.w0 <= 0:
            raise ValueError("initial weights must be strictly positive")
        if self.t_max < 1 or self.k_max < 1:
            raise ValueError("t_max and k_max must be at least 1")


@dataclass
class RunTrace:
    """One row per outer step ``t`` (row 0 is the starting point)."""

    mode: str
    engine: str
    w: list = field(default_factory=list)
    lam2: list = field(default_factory=list)
    lamN: list = field(default_factory=list)
    sigma: list = field(default_factory=list)
    rounds: list = field(default_factory=list)
    updates: list = field(default_factory=list)   # (sigma^k, t) after each multiplier update
    status: str = "running"

    def record(self, w, lam2, lamN, sigma, rounds=0):
        self.w.append(np.array(w, dtype=float))
        self.lam2.append(float(lam2))
        self.lamN.append(float(lamN))
        self.sigma.append(float(sigma))
        self.rounds.append(int(rounds))

    @property
    def kappa(self) -> np.ndarray:
        return np.array(self.lamN) / np.array(self.lam2)

    @property
    def steps(self) -> int:
        return len(self.w) - 1

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def summary(self) -> dict:
        return {
            "status": self.status,
            "kappa": float(self.kappa[-1]),
            "lambda_2": self.lam2[-1],
            "lambda_N": self.lamN[-1],
            "sigma": self.updates[-1][0] if self.updates else self.sigma[-1],
            "iterations": self.steps,
            "multiplier_updates": len(self.updates),
            "inner_rounds": int(sum(self.rounds)),
            "weights": [float(x) for x in self.w[-1]],
        }


# -- formulas ----------------------------------------------------------------

def aug_lagrangian_value(lamN: float, lam2: float, sigma: float, rho: float) -> float:
    return lamN + 0.5 * rho * max(0.0, 1.0 - lam2 + sigma / rho) ** 2


def _penalty_coef(lam2, sigma, rho):
    return rho * max(0.0, 1.0 - lam2 + sigma / rho)


def node_gradient(g: Graph, w, vbar, vund, lam2: float, sigma: float, rho: float) -> np.ndarray:
    """Per-agent partial derivatives of the augmented Lagrangian in the node weights."""
    w = np.maximum(np.asarray(w, dtype=float), W_FLOOR)
    A = adjacency_matrix(g)
    s = np.sqrt(w)
    deg = A.sum(axis=1)

    def term(v):
        v = np.asarray(v, dtype=float)
        # sum_j [v_i - sqrt(w_j / w_i) v_j]
        return v * (deg * v - (A @ (s * v)) / s)

    return term(vbar) - _penalty_coef(lam2, sigma, rho) * term(vund)


def subgradient_node(g: Graph, w, vbar, vund, lam2: float, sigma: float, rho: float) -> np.ndarray:
    """Gradient formula on arbitrary unit eigenspace members: a subgradient element."""
    return node_gradient(g, w, vbar, vund, lam2, sigma, rho)


def edge_gradient(g: Graph, w_edges, vbar, vund, lam2: float, sigma: float, rho: float) -> np.ndarray:
    vbar = np.asarray(vbar, dtype=float)
    vund = np.asarray(vund, dtype=float)
    i = np.array([e[0] for e in g.edges])
    j = np.array([e[1] for e in g.edges])
    return (vbar[i] - vbar[j]) ** 2 - _penalty_coef(lam2, sigma, rho) * (vund[i] - vund[j]) ** 2


def projected_step(w, grad, gamma: float) -> np.ndarray:
    return np.maximum(np.asarray(w, dtype=float) - gamma * np.asarray(grad, dtype=float), 0.0)


def multiplier_update(sigma: float, rho: float, lam2: float) -> float:
    return max(sigma + rho * (1.0 - lam2), 0.0)


# -- eigenpair engines ---------------------------------------------------------

def _operator(g, w, mode):
    if mode == "node":
        w = np.maximum(w, W_FLOOR)
    return weighted_operator(g, w, mode)


class OracleEngine:
    """Dense eigenpairs; on repeated eigenvalues the gradient is averaged over
    an orthonormal eigenspace basis (a convex combination of subgradients)."""

    def __init__(self, g: Graph, mode: str, params: AugLagParams):
        self.g, self.mode, self.params = g, mode, params

    def eig(self, w):
        spec = sym_eig(_operator(self.g, w, self.mode))
        self._bar = spec.eigenspace(-1, REPEAT_TOL)
        self._und = spec.eigenspace(1, REPEAT_TOL)
        return float(spec.values[1]), float(spec.values[-1]), 0

    def gradient(self, w, lam2, sigma):
        p = self.params
        fn = node_gradient if self.mode == "node" else edge_gradient
        grads = []
        for vb in self._bar.T:
            for vu in self._und.T:
                grads.append(fn(self.g, w, vb, vu, lam2, sigma, p.rho))
        return np.mean(grads, axis=0), 0

    def max_change(self, w_old, w_new):
        return float(np.max(np.abs(w_new - w_old))), 0

    def update_multiplier(self, sigma, lam2):
        return multiplier_update(sigma, self.params.rho, lam2)


class _GradientExchange(Protocol):
    """One round: every agent sends its weight and eigenvector entries."""

    registers = ("w", "vb", "vu", "grad")

    def __init__(self, mode, coef):
        self.mode = mode
        self.coef = coef

    def emit(self, agent, state):
        return (state["w"], state["vb"], state["vu"])

    def step(self, agent, state, inbox, rnd):
        vb, vu = state["vb"], state["vu"]
        if self.mode == "node":
            wi = max(state["w"], W_FLOOR)
            sb = su = 0.0
            for wj, vbj, vuj in inbox.values():
                r = math.sqrt(max(wj, W_FLOOR) / wi)
                sb += vb - r * vbj
                su += vu - r * vuj
            state["grad"] = vb * sb - self.coef * vu * su
        else:
            # one entry per incident edge, keyed by the neighbour
            state["grad"] = {j: (vb - vbj) ** 2 - self.coef * (vu - vuj) ** 2
                             for j, (_, vbj, vuj) in inbox.items()}
        return state


class _MultiplierUpdate(Protocol):
    """Local multiplier update from the agent's own Fiedler value estimate."""

    registers = ("sigma", "lam2", "updated")

    def __init__(self, rho):
        self.rho = rho

    def step(self, agent, state, inbox, rnd):
        state["sigma"] = multiplier_update(state["sigma"], self.rho, state["lam2"])
        state["updated"] = True
        return state

    def done(self, agent, state):
        return state["updated"]


class DistributedEngine:
    """Eigenpairs from the simulator, warm-started from the previous outer step."""

    def __init__(self, g: Graph, mode: str, params: AugLagParams):
        self.g, self.mode, self.params = g, mode, params
        diam = estimate_diameter(g)
        self.d_bound = diam.value
        self.setup_rounds = diam.rounds_used
        self.unit = est.unit_extremes(g, self.d_bound, params.eps_x, params.seed)
        start = est._reseed(g.n, params.seed, 0)
        self.xbar = start
        self.xund = start
        self.kappa_hat = None
        self.sigma_agents = None
        self.sigma_trace = None
        self.lam2_agents = None
        self.eidx = g.edge_index()

    def eig(self, w):
        p, g = self.params, self.g
        opts = dict(kind=self.mode, unit=self.unit, tol_xt=p.eps_xt, seed=p.seed,
                    max_cycles=p.inner_cycles)
        top = est.largest_eigpair(g, w, self.xbar, self.d_bound, p.eps_x, **opts)
        # before any weighted estimate exists, the unweighted ratio stands in for kappa
        kappa_hat = self.kappa_hat if self.kappa_hat is not None else self.unit[1] / self.unit[0]
        cfg = est.fiedler_config(g, w, top.value, self.d_bound, kind=self.mode,
                                 kappa_hat=kappa_hat, first=self.kappa_hat is None)
        low = est.fiedler_eigpair(g, w, cfg, self.xund, self.d_bound, p.eps_x, **opts)
        self.xbar, self.xund = top.vector, low.vector
        self.lam2_agents = low.values
        self.kappa_hat = top.value / low.value if low.value > 0 else self.kappa_hat
        return low.value, top.value, top.rounds + low.rounds

    def gradient(self, w, lam2, sigma):
        coef = _penalty_coef(lam2, sigma, self.params.rho)
        g = self.g
        if self.mode == "node":
            init = [{"w": float(w[i]), "vb": float(self.xbar[i]), "vu": float(self.xund[i]), "grad": 0.0}
                    for i in range(g.n)]
            trace = run_rounds(g, _GradientExchange("node", coef), init, 1, record=False)
            return np.array(trace.register("grad")), trace.rounds
        init = [{"w": 0.0, "vb": float(self.xbar[i]), "vu": float(self.xund[i]), "grad": None}
                for i in range(g.n)]
        trace = run_rounds(g, _GradientExchange("edge", coef), init, 1, record=False)
        local = trace.register("grad")
        out = np.empty(g.m)
        for k, (i, j) in enumerate(g.edges):
            gi, gj = local[i][j], local[j][i]
            if gi != gj:
                raise AssertionError(f"edge {k}: endpoint gradients disagree ({gi!r} vs {gj!r})")
            out[k] = gi
        return out, trace.rounds

    def max_change(self, w_old, w_new):
        g = self.g
        dw = np.abs(np.asarray(w_new) - np.asarray(w_old))
        if self.mode == "node":
            local = list(dw)
        else:
            local = [max((dw[self.eidx[(i, j)]] for j in g.adjacency[i]), default=0.0) for i in range(g.n)]
        agreed = max_consensus(g, local, self.d_bound)
        if max(agreed) != min(agreed):
            raise AssertionError("max-consensus on weight changes did not agree")
        return float(agreed[0]), self.d_bound

    def update_multiplier(self, sigma, lam2):
        if self.sigma_agents is None:
            self.sigma_agents = [sigma] * self.g.n
        init = [{"sigma": s, "lam2": float(l), "updated": False}
                for s, l in zip(self.sigma_agents, self.lam2_agents)]
        self.sigma_trace = run_rounds(self.g, _MultiplierUpdate(self.params.rho), init, 1)
        self.sigma_agents = self.sigma_trace.register("sigma")
        return float(self.sigma_agents[0])


ENGINES = {"oracle": OracleEngine, "distributed": DistributedEngine}


def outer_solve(g: Graph, params: AugLagParams | None = None, mode: str = "node",
                engine: str = "oracle", w0=None) -> RunTrace:
    """Run the augmented-Lagrangian method and return the full trace.

    A subproblem ends when ``max|dw|/gamma <= eps_w`` for four consecutive
    steps, when ``|d lambda_N|/gamma <= eps_lamN``, or after ``t_max`` steps.
    The run converges once a converged subproblem moves the multiplier by at
    most ``eps_sigma``; ``status`` is ``"k_max"`` if that never happens.
    """
    params = params or AugLagParams()
    if mode not in ("node", "edge"):
        raise ValueError(f"unknown mode {mode!r}")
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    eng = ENGINES[engine](g, mode, params)
    size = g.n if mode == "node" else g.m
    w = params.w0 * np.ones(size) if w0 is None else np.array(w0, dtype=float)
    if w.shape != (size,) or np.any(w <= 0):
        raise ValueError("initial weights must be strictly positive with one entry per " + mode)

    trace = RunTrace(mode, engine)
    sigma = params.sigma0
    gamma = params.gamma
    lam2, lamN, r = eng.eig(w)
    trace.record(w, lam2, lamN, sigma, r + getattr(eng, "setup_rounds", 0))
    t = 0
    for _ in range(params.k_max):
        streak = 0
        sub_converged = False
        for _ in range(params.t_max):
            grad, r_grad = eng.gradient(w, lam2, sigma)
            w_new = projected_step(w, grad, gamma)
            lam2_new, lamN_new, r_eig = eng.eig(w_new)
            dw, r_dw = eng.max_change(w, w_new)
            streak = streak + 1 if dw / gamma <= params.eps_w else 0
            d_lamN = abs(lamN_new - lamN)
            w, lam2, lamN = w_new, lam2_new, lamN_new
            t += 1
            trace.record(w, lam2, lamN, sigma, r_grad + r_eig + r_dw)
            if streak >= 4 or d_lamN / gamma <= params.eps_lamN:
                sub_converged = True
                break
        new_sigma = eng.update_multiplier(sigma, lam2)
        trace.updates.append((new_sigma, t))
        settled = abs(new_sigma - sigma) <= params.eps_sigma
        sigma = new_sigma
        if sub_converged and settled:
            trace.status = "converged"
            return trace
    trace.status = "k_max"
    return trace


# -- CSV export --------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def write_csvs(trace: RunTrace, out_dir) -> list[Path]:
    """Write ``nodeWeight.csv``, ``nodeWeightEigen.csv`` and ``nodeWeightMu.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "nodeWeight.csv", out / "nodeWeightEigen.csv", out / "nodeWeightMu.csv"]
    size = len(trace.w[0])
    with paths[0].open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t"] + [f"w{i + 1}" for i in range(size)])
        for t, w in enumerate(trace.w):
            wr.writerow([t] + [_fmt(x) for x in w])
    with paths[1].open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "lambda_N", "lambda_2"])
        for t, (lN, l2) in enumerate(zip(trace.lamN, trace.lam2)):
            wr.writerow([t, _fmt(lN), _fmt(l2)])
    with paths[2].open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["sigma", "t"])
        for s, t in trace.updates:
            wr.writerow([_fmt(s), t])
    return paths
