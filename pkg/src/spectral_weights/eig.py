"""Dense symmetric eigen-solvers used as ground truth.

``sym_eig`` is the oracle every distributed estimate is compared against.
Two backends are provided: LAPACK (via numpy, the default) and a cyclic
Jacobi solver that serves as an independent cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, laplacian, weighted_operator

SYM_TOL = 1e-12
# Eigenvalues closer than this (relative to max(1, lambda_N)) are treated as repeated.
REPEAT_TOL = 1e-6


class NotSymmetricError(ValueError):
    pass


class DisconnectedError(ValueError):
    """Raised when a weighted Laplacian has a (numerically) zero Fiedler value."""


@dataclass(frozen=True)
class EigPair:
    value: float
    vector: np.ndarray


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray   # ascending
    vectors: np.ndarray  # columns, orthonormal

    def pair(self, k: int) -> EigPair:
        return EigPair(float(self.values[k]), self.vectors[:, k])

    @property
    def fiedler(self) -> EigPair:
        return self.pair(1)

    @property
    def largest(self) -> EigPair:
        return self.pair(-1)

    def multiplicity(self, k: int, tol: float = REPEAT_TOL) -> int:
        scale = max(1.0, abs(float(self.values[-1])))
        return int(np.sum(np.abs(self.values - self.values[k]) <= tol * scale))

    def eigenspace(self, k: int, tol: float = REPEAT_TOL) -> np.ndarray:
        """Orthonormal basis (columns) of the eigenspace containing eigenvalue ``k``."""
        scale = max(1.0, abs(float(self.values[-1])))
        mask = np.abs(self.values - self.values[k]) <= tol * scale
        return self.vectors[:, mask]


def fix_sign(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip ``v`` so its largest-magnitude entry is positive (ties: lowest index)."""
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    top = a.max()
    if top == 0.0:
        return v.copy()
    k = int(np.flatnonzero(a >= top * (1.0 - tol))[0])
    return -v if v[k] < 0 else v.copy()


def _check_symmetric(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetricError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.abs(A).max(initial=0.0), 1.0)
    if np.abs(A - A.T).max(initial=0.0) > SYM_TOL * scale:
        raise NotSymmetricError("matrix is not symmetric")
    return 0.5 * (A + A.T)


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi rotations until the off-diagonal mass is below ``tol``."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    vals = np.diag(A).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], V[:, order]


def sym_eig(A, method: str = "lapack") -> Spectrum:
    """Full spectrum of a symmetric matrix, ascending, with sign-normalised vectors."""
    A = _check_symmetric(A)
    if method == "lapack":
        vals, vecs = np.linalg.eigh(A)
    elif method == "jacobi":
        vals, vecs = jacobi_eigh(A)
    else:
        raise ValueError(f"unknown method {method!r}")
    vecs = np.column_stack([fix_sign(vecs[:, k]) for k in range(vecs.shape[1])])
    return Spectrum(vals, vecs)


def extremes(g: Graph, w=None, kind: str = "node") -> tuple[float, float]:
    """``(lambda_2, lambda_N)`` of the weighted Laplacian."""
    vals = np.linalg.eigvalsh(weighted_operator(g, w, kind))
    return float(vals[1]), float(vals[-1])


def condition_number(g: Graph, w=None, kind: str = "node") -> float:
    """Finite condition number ``lambda_N / lambda_2``; ``w=None`` means unit weights."""
    if w is not None and np.any(np.asarray(w) <= 0):
        raise ValueError("weights must be strictly positive")
    lam2, lamN = extremes(g, w, kind)
    if lam2 <= 1e-10:
        raise DisconnectedError(f"lambda_2 = {lam2:.3e}: numerically disconnected")
    return lamN / lam2


def reduced_factor(L) -> np.ndarray:
    """``C`` (n x n-1) with ``C @ C.T == L`` for a connected-graph Laplacian."""
    spec = sym_eig(L)
    scale = max(1.0, abs(spec.values[-1]))
    if spec.values[1] <= 1e-10 * scale:
        raise DisconnectedError("Laplacian has rank below n - 1")
    vals = np.clip(spec.values[1:], 0.0, None)
    return spec.vectors[:, 1:] * np.sqrt(vals)[None, :]


def lmi_feasible(g: Graph, w, kappa: float, kind: str = "node", slack: float = 1e-9) -> bool:
    """Check ``kappa I >= C^T diag(w) C >= I`` through its extreme eigenvalues.

    For edge weights the equivalent test is on ``B^T diag(w) B`` restricted to
    the complement of the all-ones vector.
    """
    w = np.asarray(w, dtype=float)
    if kind == "node":
        C = reduced_factor(laplacian(g))
        M = C.T @ (w[:, None] * C)
        vals = np.linalg.eigvalsh(0.5 * (M + M.T))
        lo, hi = vals[0], vals[-1]
    else:
        vals = np.linalg.eigvalsh(weighted_operator(g, w, "edge"))
        lo, hi = vals[1], vals[-1]
    return bool(lo >= 1.0 - slack and hi <= kappa + slack)
