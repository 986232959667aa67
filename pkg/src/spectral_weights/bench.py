"""Centralised reference solver and the two motivating demos.

* ``central_solve``: dense-eigensolver optimisation plus an eigenvalue-bound
  certificate of the terminal weights.
* Average consensus ``x(k+1) = x(k) - L x(k) / r`` and its optimal step.
* A network of identical discrete-time plants under dynamic output feedback
  driven by the Laplacian coupling of their outputs, using fixed gain
  matrices.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .eig import lmi_feasible
from .graph import Graph, laplacian, node_weighted_laplacian
from .optimizer import AugLagParams, RunTrace, outer_solve

# Node weights reported for the optimised 7-node benchmark.
PAPER7_W_STAR = np.array([0.9269, 0.2822, 0.4194, 0.2442, 0.9346, 0.2442, 0.6192])


# -- centralised optimum -----------------------------------------------------

@dataclass
class CentralResult:
    trace: RunTrace
    weights: np.ndarray      # rescaled so that lambda_2 = 1
    kappa: float
    certified: bool
    message: str = ""


def central_solve(g: Graph, params: AugLagParams | None = None, mode: str = "node") -> CentralResult:
    trace = outer_solve(g, params, mode, engine="oracle")
    w = trace.w[-1] / trace.lam2[-1]
    kappa = float(trace.kappa[-1])
    ok = lmi_feasible(g, w, kappa + 1e-6, kind=mode)
    msg = "" if ok else f"terminal weights fail the bound check at kappa = {kappa:.6f}"
    return CentralResult(trace, w, kappa, ok, msg)


# -- average consensus -------------------------------------------------------

def optimal_consensus_step(lam2: float, lamN: float) -> tuple[float, float]:
    """``(r*, rho*)``: the step minimising the spectral radius and that radius."""
    if lam2 <= 0:
        raise ValueError("lambda_2 must be positive")
    if lamN < lam2:
        raise ValueError("expected lambda_2 <= lambda_N")
    return 0.5 * (lamN + lam2), (lamN - lam2) / (lamN + lam2)


def _as_laplacian(g_or_L) -> np.ndarray:
    return laplacian(g_or_L) if isinstance(g_or_L, Graph) else np.asarray(g_or_L, dtype=float)


def consensus_value(L, x0) -> np.ndarray:
    """Limit of the iteration: the left null vector average of ``x0`` on every entry."""
    L = _as_laplacian(L)
    vals, vecs = np.linalg.eig(L.T)
    pi = np.real(vecs[:, np.argmin(np.abs(vals))])
    pi = pi / pi.sum()
    return np.full(L.shape[0], float(pi @ np.asarray(x0, dtype=float)))


def simulate_avg_consensus(g_or_L, r: float, x0, steps: int) -> np.ndarray:
    """Trajectory ``(steps + 1, n)`` of ``x(k+1) = x(k) - L x(k) / r``."""
    if r <= 0:
        raise ValueError("step parameter r must be positive")
    L = _as_laplacian(g_or_L)
    x = np.array(x0, dtype=float)
    out = np.empty((steps + 1, x.size))
    out[0] = x
    for k in range(steps):
        x = x - (L @ x) / r
        out[k + 1] = x
    return out


def decay_rate(traj: np.ndarray, limit, floor: float = 1e-11) -> float:
    """Asymptotic per-step contraction from a log-linear fit of ``||x(k) - limit||``.

    Only points above ``floor`` times the initial error enter the fit, and
    the first half of those is discarded as transient.
    """
    err = np.linalg.norm(traj - np.asarray(limit)[None, :], axis=1)
    keep = np.flatnonzero(err > floor * max(err[0], 1e-300))
    if keep.size < 4:
        raise ValueError("trajectory too short to estimate a rate")
    keep = keep[keep.size // 2:]
    slope = np.polyfit(keep, np.log(err[keep]), 1)[0]
    return float(np.exp(slope))


def consensus_radius(L, r: float) -> float:
    """Spectral radius of ``I - L/r`` on the disagreement subspace."""
    L = _as_laplacian(L)
    vals = np.linalg.eigvals(np.eye(L.shape[0]) - L / r)
    # drop the eigenvalue 1 carried by the consensus direction
    rest = np.delete(vals, np.argmin(np.abs(vals - 1.0)))
    return float(np.max(np.abs(rest))) if rest.size else 0.0


def grid_search_step(L, lo: float = 0.5, hi: float = 10.0, step: float = 0.01):
    """Brute-force minimiser of the consensus radius over a grid of ``r``."""
    grid = np.round(np.arange(lo, hi + step / 2, step), 10)
    radii = np.array([consensus_radius(L, r) for r in grid])
    return float(grid[np.argmin(radii)]), grid, radii


# -- output-feedback network ---------------------------------------------------

@dataclass(frozen=True)
class LtiPlant:
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        n = self.A.shape[0]
        shapes = {"A": (n, n), "B1": (n, 1), "B2": (n, 1), "C1": (1, n), "C2": (1, n), "D": (1, 1)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {getattr(self, name).shape}")


@dataclass(frozen=True)
class DofController:
    Ac: np.ndarray
    Bc: np.ndarray
    Cc: np.ndarray
    Dc: np.ndarray
    gamma: float = float("nan")   # certified l2 gain reported with the gains


def _m(rows):
    return np.array(rows, dtype=float)


PLANT = LtiPlant(
    A=_m([[0.9232, 0.4460], [-0.4460, 0.9232]]),
    B1=_m([[0.1125], [0.4893]]),
    B2=_m([[0.4893], [-0.1125]]),
    C1=_m([[1.0, 1.0]]),
    C2=_m([[0.0, 1.0]]),
    D=_m([[0.0]]),
)

GAINS = {
    "unweighted": DofController(
        Ac=_m([[0.8346, 0.1906], [-0.8331, -0.1892]]),
        Bc=_m([[-0.1413], [0.1413]]),
        Cc=_m([[-0.7914, -2.2738]]),
        Dc=_m([[-0.3995]]),
        gamma=1.1547,
    ),
    "optimized": DofController(
        Ac=_m([[0.8341, 0.1901], [-0.8340, -0.1901]]),
        Bc=_m([[-0.6734], [0.6734]]),
        Cc=_m([[-0.7931, -2.2754]]),
        Dc=_m([[-0.5415]]),
        gamma=0.6957,
    ),
}


def matching_laplacian(g: Graph, gains: str) -> np.ndarray:
    """Coupling matrix each gain fixture was designed for."""
    if gains == "unweighted":
        return laplacian(g)
    if gains == "optimized":
        return node_weighted_laplacian(g, PAPER7_W_STAR)
    raise ValueError(f"unknown gain fixture {gains!r}")


def closed_loop_matrix(plant: LtiPlant, ctrl: DofController, lam: float) -> np.ndarray:
    """Closed-loop dynamics of the Laplacian mode with eigenvalue ``lam``."""
    return np.block([
        [plant.A + lam * plant.B2 @ ctrl.Dc @ plant.C2, plant.B2 @ ctrl.Cc],
        [lam * ctrl.Bc @ plant.C2, ctrl.Ac],
    ])


def closed_loop_radius(plant: LtiPlant, ctrl: DofController, lams) -> np.ndarray:
    """Spectral radius of the modal closed loop for each Laplacian eigenvalue."""
    return np.array([np.max(np.abs(np.linalg.eigvals(closed_loop_matrix(plant, ctrl, lam))))
                     for lam in lams])


@dataclass
class DofRun:
    x: np.ndarray      # (steps+1, N, nx) plant states
    xc: np.ndarray     # (steps+1, N, nx) controller states
    eps: np.ndarray    # (steps+1, N, nx) disagreement x_i - mean(x)
    z: np.ndarray      # (steps+1, N) performance output C1 eps_i
    xi: np.ndarray     # (steps, N) disturbance
    seed: int | None

    def energy_ratio(self) -> float:
        return float(np.linalg.norm(self.z) / np.linalg.norm(self.xi))

    def disagreement(self) -> np.ndarray:
        """``max_i ||eps_i(k)||_inf`` per step."""
        return np.abs(self.eps).max(axis=(1, 2))


def decaying_noise(n_agents: int, steps: int, seed: int, decay: float = 0.1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((steps, n_agents)) * np.exp(-decay * np.arange(steps))[:, None]


def simulate_dof_closedloop(g_or_L, plant: LtiPlant, ctrl: DofController, x0, steps: int,
                            noise_seed: int | None = None, xi=None) -> DofRun:
    """Simulate every agent with its controller fed by ``sum_j (y_i - y_j)``.

    ``g_or_L`` is a graph or a (possibly node-weighted) Laplacian. Noise is
    either given as ``xi`` with shape ``(steps, N)``, drawn from ``noise_seed``,
    or absent.
    """
    L = _as_laplacian(g_or_L)
    n = L.shape[0]
    nx = plant.A.shape[0]
    x = np.array(x0, dtype=float).reshape(n, nx)
    if ctrl.Ac.shape != (nx, nx) or ctrl.Bc.shape != (nx, 1) or ctrl.Cc.shape != (1, nx) \
            or ctrl.Dc.shape != (1, 1):
        raise ValueError("controller dimensions do not match the plant")
    if xi is None:
        xi = decaying_noise(n, steps, noise_seed) if noise_seed is not None else np.zeros((steps, n))
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (steps, n):
        raise ValueError(f"noise must have shape {(steps, n)}")
    xc = np.zeros((n, nx))
    # coupling weights -L_ij, so that s_i = sum_j c_ij (y_i - y_j) vanishes exactly at agreement
    C = -(L - np.diag(np.diag(L)))
    X = np.empty((steps + 1, n, nx))
    XC = np.empty((steps + 1, n, nx))
    X[0], XC[0] = x, xc
    for k in range(steps):
        y = x @ plant.C2.T[:, 0] + plant.D[0, 0] * xi[k]
        s = (C * (y[:, None] - y[None, :])).sum(axis=1)
        u = xc @ ctrl.Cc[0] + ctrl.Dc[0, 0] * s
        x = x @ plant.A.T + np.outer(xi[k], plant.B1[:, 0]) + np.outer(u, plant.B2[:, 0])
        xc = xc @ ctrl.Ac.T + np.outer(s, ctrl.Bc[:, 0])
        X[k + 1], XC[k + 1] = x, xc
    eps = X - X.mean(axis=1, keepdims=True)
    z = eps @ plant.C1[0]
    return DofRun(X, XC, eps, z, xi, noise_seed)


def write_dof_csvs(run: DofRun, out_dir, prefix: str) -> list[Path]:
    """``{prefix}_sim.csv`` (states) and ``{prefix}_inout.csv`` (z and xi)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    steps, n, nx = run.x.shape[0] - 1, run.x.shape[1], run.x.shape[2]
    sim, inout = out / f"{prefix}_sim.csv", out / f"{prefix}_inout.csv"
    with sim.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["k"] + [f"x{i + 1}_{c + 1}" for i in range(n) for c in range(nx)])
        for k in range(steps + 1):
            wr.writerow([k] + [repr(float(v)) for v in run.x[k].ravel()])
    with inout.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["k"] + [f"z{i + 1}" for i in range(n)] + [f"xi{i + 1}" for i in range(n)])
        for k in range(steps):
            wr.writerow([k] + [repr(float(v)) for v in run.z[k]] + [repr(float(v)) for v in run.xi[k]])
    return [sim, inout]
