"""First eigenpairs of -a Delta_g + V and the Li-Yau Dirichlet eigenvalue bound."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import EllipticOperator
from .geometry import MetricField, ScalarField

NEGATIVE, ZERO, POSITIVE = "negative", "zero", "positive"


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralResult:
    eigenvalue: float
    eigenfunction: ScalarField
    residual: float
    sign: str
    iterations: int = 0

    def as_dict(self) -> dict:
        return {"eigenvalue": self.eigenvalue, "residual": self.residual,
                "sign": self.sign, "iterations": self.iterations}


@dataclass(frozen=True)
class LiYauInput:
    n: int
    K: float
    r_inj: float
    h_g: float

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if self.r_inj <= 0:
            raise ValueError("r_inj must be positive")
        if self.n < 2:
            raise ValueError("n must be at least 2")


def classify_sign(value: float, tol: float) -> str:
    if tol <= 0:
        raise ValueError("tol must be positive")
    if abs(value) <= tol:
        return ZERO
    return NEGATIVE if value < 0 else POSITIVE


def default_zero_tol(op: EllipticOperator) -> float:
    return 1e-8 * max(float(np.abs(op.V).max()), 1.0)


def rayleigh_quotient(op: EllipticOperator, v) -> float:
    """<A v, v> / <M v, v> restricted to the free nodes."""
    vals = v.values if isinstance(v, ScalarField) else np.asarray(v, float)
    x = vals[op.free]
    den = float(np.sum(op.mass[op.free] * x * x))
    if den == 0.0:
        raise ValueError("zero field has no Rayleigh quotient")
    return float(x @ (op.matrix @ x)) / den


def _target(A, M, eta, tol):
    # relative tolerance, floored at (a small multiple of) the round-off level of M^{-1} A
    floor = 100 * np.finfo(float).eps * float(np.max(A.diagonal() / M))
    return max(tol * max(abs(eta), 1.0), floor)


def _inverse_iteration(A, M, sigma, tol, max_iter):
    lu = spla.splu((A + sp.diags(sigma * M)).tocsc())
    x = np.ones(A.shape[0])
    x /= math.sqrt(float(np.sum(M * x * x)))
    res, eta = np.inf, 0.0
    for it in range(1, max_iter + 1):
        y = lu.solve(M * x)
        x = y / math.sqrt(float(np.sum(M * y * y)))
        Ax = A @ x
        eta = float(x @ Ax)
        r = Ax / M - eta * x
        res = math.sqrt(float(np.sum(M * r * r)))
        if res <= _target(A, M, eta, tol):
            return eta, x, res, it
    raise EigenSolverError(f"inverse iteration did not converge (residual {res:.3e})")


def _lobpcg(A, M, sigma, tol, max_iter):
    As = (A + sp.diags(sigma * M)).tocsr()
    B = sp.diags(M)
    P = sp.diags(1.0 / As.diagonal())
    x = np.ones((A.shape[0], 1))
    inner = 1e-10
    total = 0
    for _ in range(6):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w, v, hist = spla.lobpcg(As, x, B=B, M=P, largest=False, tol=inner,
                                     maxiter=max_iter, retResidualNormsHistory=True)
        total += len(hist)
        x = v
        v = v[:, 0] / math.sqrt(float(np.sum(M * v[:, 0] ** 2)))
        Av = A @ v
        eta = float(v @ Av)
        r = Av / M - eta * v
        res = math.sqrt(float(np.sum(M * r * r)))
        if res <= _target(A, M, eta, tol):
            return eta, v, res, total
        inner *= 1e-2
    raise EigenSolverError(f"LOBPCG did not converge (residual {res:.3e})")


def first_eigenpair(op: EllipticOperator, metric: MetricField | None = None, tol: float = 1e-11,
                    max_iter: int = 2000, zero_tol: float | None = None) -> SpectralResult:
    """Smallest eigenvalue of A phi = eta M phi.

    A shift sigma = max(0, -min V) + delta makes A + sigma M positive definite
    (the Rayleigh quotient is bounded below by min V); sigma is removed from the
    reported value.  Small or radial problems use inverse iteration on a sparse
    LU factor; periodic 3D grids, where LU fill-in is prohibitive, use
    Jacobi-preconditioned LOBPCG.  The eigenfunction is normalized in L2(dVol_g)
    and made positive.
    """
    if metric is not None and metric.grid != op.grid:
        raise ValueError("metric and operator live on different grids")
    free = op.free
    A = op.matrix
    M = op.mass[free]
    vscale = max(float(np.abs(op.V).max()), 1.0)
    sigma = max(0.0, -float(op.V.min())) + 1e-2 * vscale
    if op.grid.periodic and A.shape[0] > 5000:
        eta, x, res, it = _lobpcg(A, M, sigma, tol, max_iter)
    else:
        eta, x, res, it = _inverse_iteration(A, M, sigma, tol, max_iter)
    if x.sum() < 0:
        x = -x
    if x.min() < -1e-8 * np.abs(x).max():
        raise EigenSolverError("first eigenfunction changes sign; operator or grid is inconsistent")
    x = np.maximum(x, 0.0)
    phi = np.zeros(op.grid.size)
    phi[free] = x
    zt = default_zero_tol(op) if zero_tol is None else zero_tol
    return SpectralResult(eta, ScalarField(op.grid, phi), res, classify_sign(eta, zt), it)


def li_yau_lower_bound(inp: LiYauInput) -> tuple[float, float]:
    """gamma = max(exp(1 + sqrt(1 - 4(n-1)^2 r^2 K)), exp(-2(n-1) h r)) and the bound
    (1/gamma) [ (log gamma)^2 / (4 (n-1) r^2) - (n-1) K ]."""
    n, K, r, hg = inp.n, inp.K, inp.r_inj, inp.h_g
    disc = 1.0 - 4.0 * (n - 1) ** 2 * r * r * K
    if disc < 0:
        raise ValueError(f"1 - 4(n-1)^2 r^2 K = {disc:.3g} < 0: square root is not real")
    log_g = max(1.0 + math.sqrt(disc), -2.0 * (n - 1) * hg * r)
    gamma = math.exp(log_g)
    bound = (log_g * log_g / (4.0 * (n - 1) * r * r) - (n - 1) * K) / gamma
    return gamma, bound
