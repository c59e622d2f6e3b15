"""Monotone iteration between a sub- and a super-solution, plus a Newton oracle.

The semilinear problem is  -a Delta_g u + f(x, u) = 0  with
f(x, u) = h(x) u - H(x) u^m  (h plays S_g or S_g + beta, H plays lambda).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..elliptic import EllipticOperator, assemble, pcg, spd_solver
from ..geometry import MetricField, ScalarField
from .trace import Certificate, GateError, IterationError, IterationTrace


def _vals(x, size: int) -> np.ndarray:
    if isinstance(x, ScalarField):
        return x.values
    return np.broadcast_to(np.asarray(x, float), (size,)).astype(float)


def power(u: np.ndarray, m: float) -> np.ndarray:
    """Sign-preserving clamp: max(u, 0)^m."""
    return np.maximum(u, 0.0) ** m


@dataclass(eq=False)
class MonotoneProblem:
    metric: MetricField
    a: float
    h: np.ndarray
    H: np.ndarray
    m: float
    u_minus: np.ndarray
    u_plus: np.ndarray
    mask: np.ndarray | None = None
    boundary: float = 0.0

    def __post_init__(self):
        N = self.metric.grid.size
        self.h = _vals(self.h, N).copy()
        self.H = _vals(self.H, N).copy()
        self.u_minus = _vals(self.u_minus, N).copy()
        self.u_plus = _vals(self.u_plus, N).copy()
        if self.m <= 1:
            raise ValueError("exponent m must exceed 1")
        if np.any(self.u_minus < 0):
            raise GateError("u_minus must be nonnegative")
        if not np.any(self.u_minus > 0):
            raise GateError("u_minus must not vanish identically")
        if np.any(self.u_minus > self.u_plus):
            k = int(np.argmax(self.u_minus - self.u_plus))
            raise GateError(f"u_minus exceeds u_plus at node {k} "
                            f"({self.u_minus[k]!r} > {self.u_plus[k]!r})")

    @property
    def k(self) -> float:
        return lipschitz_shift(self.h, self.H, self.m, self.u_minus, self.u_plus)

    def operator(self, V) -> EllipticOperator:
        return assemble(self.metric, self.a, V, mask=self.mask)

    def nonlinearity(self, u: np.ndarray) -> np.ndarray:
        return self.h * u - self.H * power(u, self.m)


def lipschitz_shift(h, H, m, lo, hi, floor: float = 1e-8) -> float:
    """sup over nodes and u in [lo, hi] of d/du (h u - H u^m) = h - m H u^(m-1).

    For u > 0 the derivative is monotone in u, so the supremum over the
    interval sits at an endpoint; there is no interior critical point.
    """
    def g(u):
        return h - m * H * np.maximum(u, 0.0) ** (m - 1)
    return max(floor, float(np.max(np.maximum(g(lo), g(hi)))))


def pde_residual(metric: MetricField, a: float, h, H, m: float, u, mask=None) -> float:
    """Volume-weighted L2 norm of -a Delta u + h u - H u^m over the free nodes."""
    op = assemble(metric, a, h, mask=mask)
    uu = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
    r = op.strong(uu) - _vals(H, uu.size) * power(uu, m)
    f = op.free
    return float(np.sqrt(np.sum(op.mass[f] * r[f] ** 2)))


def monotone_iteration(prob: MonotoneProblem, tol: float = 1e-8, max_iter: int = 20000,
                       mono_tol: float = 1e-10, stall: int | None = None) -> tuple[ScalarField, IterationTrace]:
    """u_0 = u_plus;  (-a Delta + k) u_{j+1} = k u_j - f(x, u_j).

    Each iterate is checked against u_minus - mono_tol <= u_{j+1} <= u_j + mono_tol.
    """
    grid = prob.metric.grid
    k = prob.k
    op = prob.operator(k)
    free = op.free
    A = op.matrix
    direct = not grid.periodic or A.shape[0] <= 6000
    solve = spd_solver(A, tol=1e-14, direct=direct, label="monotone iteration")
    c = prob.boundary
    bc_rhs = op.apply(np.full(grid.size, c))[free] if c != 0.0 else 0.0
    u = prob.u_plus.copy()
    if np.any(op.fixed):
        u[op.fixed] = c
    trace = IterationTrace(extra={"k": k})
    res = pde_residual(prob.metric, prob.a, prob.h, prob.H, prob.m, u, prob.mask)
    trace.record(res, u)
    best = res
    since_best = 0
    for j in range(max_iter):
        rhs = op.mass * (k * u - prob.nonlinearity(u))
        w = solve(rhs[free] - bc_rhs)
        new = np.full(grid.size, c)
        new[free] = c + w if c != 0.0 else w
        up = float(np.max(new - u))
        down = float(np.max(prob.u_minus - new))
        ok = up <= mono_tol and down <= mono_tol
        u = new
        res = pde_residual(prob.metric, prob.a, prob.h, prob.H, prob.m, u, prob.mask)
        trace.record(res, u, ok)
        if not ok:
            raise IterationError(f"monotonicity violated at step {j + 1}: "
                                 f"increase {up:.3e}, drop below u_minus {down:.3e}", trace, "monotone")
        if res <= tol:
            break
        if res < best * (1 - 1e-6):
            best, since_best = res, 0
        else:
            since_best += 1
            if stall is not None and since_best >= stall:
                raise IterationError(f"residual stalled at {res:.3e}", trace, "monotone")
    else:
        raise IterationError(f"no convergence in {max_iter} steps (residual {res:.3e})", trace, "monotone")
    trace.extra["steps"] = trace.steps - 1
    return ScalarField(grid, u), trace


def newton_solve(metric: MetricField, a: float, h, H, m: float, u0, tol: float = 1e-10,
                 max_iter: int = 60, mask=None, boundary: float = 0.0,
                 lower: float | None = 0.0) -> tuple[ScalarField, IterationTrace]:
    """Damped Newton for -a Delta u + h u - H u^m = 0 (independent oracle).

    The Jacobian may be indefinite; radial and small systems use sparse LU,
    large periodic systems use MINRES with a Jacobi preconditioner.
    """
    grid = metric.grid
    op = assemble(metric, a, h, mask=mask)
    free = op.free
    Hn = _vals(H, grid.size)
    u = (u0.values if isinstance(u0, ScalarField) else np.asarray(u0, float)).copy()
    if np.any(op.fixed):
        u[op.fixed] = boundary
    trace = IterationTrace()

    def F(x):
        return (op.apply(x) - op.mass * Hn * power(x, m))[free]

    def res_of(x):
        r = F(x) / op.mass[free]
        return float(np.sqrt(np.sum(op.mass[free] * r * r)))

    res = res_of(u)
    trace.record(res, u)
    A = op.matrix
    Mf = op.mass[free]
    big = grid.periodic and A.shape[0] > 6000
    for _ in range(max_iter):
        if res <= tol:
            break
        J = (A - sp.diags(Mf * Hn[free] * m * power(u[free], m - 1))).tocsr()
        rhs = -F(u)
        if big:
            d = np.abs(J.diagonal())
            P = sp.diags(1.0 / d)
            step, info = spla.minres(J, rhs, M=P, rtol=1e-13, maxiter=20000)
            if info != 0:
                step, info = spla.gmres(J, rhs, M=P, rtol=1e-13, maxiter=2000, restart=200)
        else:
            step = spla.spsolve(J.tocsc(), rhs)
        t = 1.0
        while t > 1e-6:
            trial = u.copy()
            trial[free] += t * step
            if lower is not None and np.any(trial[free] < lower):
                t *= 0.5
                continue
            r_new = res_of(trial)
            if r_new < res * (1 - 1e-4 * t) or r_new <= tol:
                break
            t *= 0.5
        else:
            raise IterationError(f"line search failed at residual {res:.3e}", trace, "newton")
        u = trial
        res = r_new
        trace.record(res, u)
    else:
        if res > tol:
            raise IterationError(f"Newton did not converge (residual {res:.3e})", trace, "newton")
    return ScalarField(grid, u), trace


def _certify(kind: str, metric: MetricField, a: float, h, H, m: float, u, mask=None,
             rtol: float = 1e-8, atol: float = 0.0, regions: dict | None = None) -> Certificate:
    op = assemble(metric, a, h, mask=mask)
    uu = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
    Hn = _vals(H, uu.size)
    lin = op.strong(uu)
    nl = Hn * power(uu, m)
    # lin = -a Delta u + h u, so slack >= 0 means the inequality holds
    slack = (nl - lin) if kind == "sub" else (lin - nl)
    scale = max(float(np.max(np.abs(lin))), float(np.max(np.abs(nl))),
                float(np.max(np.abs(_vals(h, uu.size) * uu))), 1e-300)
    tol = rtol * scale + atol
    free = op.free
    s = np.where(free, slack, np.inf)
    k = int(np.argmin(s))
    margin = float(s[k])
    region_report = {}
    for name, msk in (regions or {}).items():
        sel = np.asarray(msk, bool) & free
        if np.any(sel):
            region_report[name] = float(np.min(slack[sel]))
    return Certificate(kind, margin >= -tol, margin, tol, k if margin < 0 else None, region_report)


def verify_subsolution(u, metric: MetricField, a: float, h, H, m: float, mask=None,
                       rtol: float = 1e-8, atol: float = 0.0, regions=None) -> Certificate:
    """Nodewise -a Delta u + h u <= H u^m on the free nodes.

    The discrete operator row at a node is the weak form tested against the
    node's hat function, so kinks across an interface are covered by the same
    check (a flux jump of the right sign lowers -Delta u there).
    """
    return _certify("sub", metric, a, h, H, m, u, mask, rtol, atol, regions)


def verify_supersolution(u, metric: MetricField, a: float, h, H, m: float, mask=None,
                         rtol: float = 1e-8, atol: float = 0.0, regions=None) -> Certificate:
    return _certify("super", metric, a, h, H, m, u, mask, rtol, atol, regions)
