"""Local Dirichlet problems on balls: double iteration and the variational u3."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..constants import conformal_exponents, sobolev_T
from ..elliptic import assemble, solve, spd_solver
from ..geometry import MetricField, ScalarField
from ..quotient import MountainLevel, minimize_quotient
from .monotone import newton_solve, pde_residual, power
from .trace import GateError, IterationError, IterationTrace

SAFETY = 0.9


def select_lambda_negative_scalar(C_Mn: float, infNegS: float, p: float, safety: float = SAFETY) -> float:
    """lambda = -safety * inf(-S) / C^(p-2), so |lambda| C^(p-2) < inf(-S)."""
    if infNegS <= 0:
        raise GateError("inf(-S) must be positive: this selector is for S < 0 on the ball")
    if C_Mn <= 0:
        raise ValueError("C_Mn must be positive")
    return -safety * infNegS / C_Mn ** (p - 2.0)


def select_lambda_positive_scalar(c: float, a: float, p: float) -> float:
    """Midpoint of the band a/4 <= |lambda| c^(p-2) <= a/2 with lambda < 0."""
    if c <= 0:
        raise ValueError("c must be positive")
    return -(3.0 * a / 8.0) / c ** (p - 2.0)


@dataclass(eq=False)
class LocalProblem:
    """Dirichlet problem -a Delta u + (S + beta) u = lambda u^(p-1), u = c on the boundary.

    On a radial grid the boundary is the last node; on a periodic grid ``mask``
    marks the fixed nodes (everything outside the embedded ball).
    """
    metric: MetricField
    a: float
    p: float
    lam: float
    beta: float
    c: float
    f0: ScalarField
    S: np.ndarray | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.c < 0:
            raise GateError("boundary value c must be nonnegative")
        if self.beta > 0:
            raise GateError("beta must be <= 0")
        N = self.metric.grid.size
        self.S = (self.metric.scalar_curv.copy() if self.S is None
                  else np.broadcast_to(np.asarray(self.S, float), (N,)).copy())

    @property
    def h(self) -> np.ndarray:
        return self.S + self.beta

    def operator(self, V):
        return assemble(self.metric, self.a, V, mask=self.mask)

    def residual(self, u) -> float:
        return pde_residual(self.metric, self.a, self.h, self.lam, self.p - 1.0, u, self.mask)


def interior_mask(prob: LocalProblem) -> np.ndarray:
    return ~prob.operator(0.0).fixed


def prop31_seed(metric: MetricField, a: float, c: float, mask=None, bump: float = 0.5) -> ScalarField:
    """f0 = a c (1 + bump profile) with inf f0 = a c, so that inf u0 = c."""
    grid = metric.grid
    if grid.periodic:
        x = grid.centered_coords()
        free = ~np.asarray(mask, bool) if mask is not None else np.ones(grid.size, bool)
        center = x[free].mean(axis=0) if np.any(free) else np.zeros(grid.n)
        r2 = np.sum((x - center) ** 2, axis=1)
        R2 = np.max(r2[free]) if np.any(free) else 1.0
        prof = np.where(free, np.clip(1.0 - r2 / R2, 0.0, None), 0.0)
    else:
        s = grid.axis()
        prof = 1.0 - (s / grid.extent) ** 2
    return ScalarField(grid, a * c * (1.0 + bump * prof))


def double_iteration_local(prob: LocalProblem, tol: float = 1e-8, max_iter: int = 500,
                           case: str | None = None) -> tuple[ScalarField, IterationTrace]:
    """a u_0 - a Delta u_0 = f_0;  a u_k - a Delta u_k = a u_{k-1} - (S+beta) u_{k-1} + lambda u_{k-1}^(p-1).

    ``case`` is 'negative' (S < 0 on the ball) or 'positive' (0 < S <= a/2);
    it is inferred from S on the free nodes when omitted.
    """
    op = prob.operator(prob.a)
    free = op.free
    h = prob.h
    Sf = prob.S[free]
    if case is None:
        if np.all(Sf < 0):
            case = "negative"
        elif np.all(Sf > 0):
            case = "positive"
        else:
            raise GateError("S changes sign on the ball: neither local case applies")
    if case == "negative":
        if not np.all(Sf < 0):
            raise GateError("negative case needs S < 0 on the ball")
    elif case == "positive":
        if not np.all((Sf > 0) & (Sf <= prob.a / 2.0)):
            raise GateError("positive case needs 0 < S <= a/2 on the ball")
        if prob.lam >= 0:
            raise GateError("positive case needs lambda < 0")
    else:
        raise ValueError(f"unknown case {case!r}")
    grid = prob.metric.grid
    m = prob.p - 1.0
    lu = spd_solver(op.matrix, tol=1e-14, label="double iteration")
    c = prob.c
    lift = op.apply(np.full(grid.size, c))[free] if c != 0.0 else 0.0

    def step(rhs_strong):
        w = lu((op.mass * rhs_strong)[free] - lift)
        out = np.full(grid.size, c)
        out[free] = c + w if c != 0.0 else w
        return out

    u = step(prob.f0.values)
    trace = IterationTrace(C_Mn=float(u.max()), extra={"case": case, "lambda": prob.lam})
    in_band = True
    for k in range(max_iter + 1):
        res = prob.residual(u)
        ok = True
        if np.any(u[free] < -1e-12):
            trace.record(res, u, False)
            raise IterationError(f"negative iterate at step {k}: maximum principle violated", trace, "local")
        if case == "positive":
            ok = bool(u.max() <= c + 1e-10 and u.min() >= -1e-10)
            in_band = in_band and ok
        trace.record(res, u, ok)
        if res <= tol:
            break
        if k == max_iter:
            raise IterationError(f"double iteration did not converge (residual {res:.3e})", trace, "local")
        u = step(prob.a * u - h * u + prob.lam * power(u, m))
    trace.extra["in_band"] = in_band
    if case == "negative":
        trace.extra["min_at_boundary"] = bool(u.min() >= c - 1e-10)
    return ScalarField(grid, u), trace


# ---------------------------------------------------------------- variational local solution

@dataclass
class LocalVariational:
    u3: ScalarField
    quotient: float
    level: MountainLevel
    residual: float
    trace: IterationTrace


def solve_local_variational(metric: MetricField, a: float, S, beta: float, mu: float, mask=None,
                            tol: float = 1e-10, iters: int = 2000) -> LocalVariational:
    """Positive Dirichlet solution of -a Delta u + (S+beta) u = mu u^(p-1), u = 0 on the boundary.

    The local quotient <A u,u>/||u||_p^2 is minimized by a preconditioned
    descent, the minimizer is scaled onto the equation, then polished by
    Newton.  The mountain-pass level of the result must lie below K0.
    """
    if mu <= 0:
        raise GateError("the coefficient of u^(p-1) must be positive")
    n = metric.grid.n
    _, p = conformal_exponents(n)
    N = metric.grid.size
    Sv = np.broadcast_to(np.asarray(S.values if isinstance(S, ScalarField) else S, float), (N,))
    h = Sv + beta
    op = assemble(metric, a, h, mask=mask)
    free = op.free
    # the local operator must be positive definite for a mountain-pass solution
    try:
        from ..elliptic import pcg
        probe = np.ones(free.sum())
        pcg(op.matrix, op.mass[free] * probe, 1e-6, label="local Dirichlet operator")
    except np.linalg.LinAlgError as exc:
        raise GateError(f"local operator -a Delta + (S + beta) is not positive on the ball: {exc}")
    start = np.zeros(N)
    if metric.grid.periodic:
        x = metric.grid.coords()
        ctr = x[free].mean(axis=0)
        start[free] = np.exp(-np.sum((x[free] - ctr) ** 2, axis=1) / (2 * (0.3 * np.ptp(x[free][:, 0]) + 1e-12) ** 2))
    else:
        s = metric.grid.axis()
        start = np.cos(0.5 * np.pi * s / metric.grid.extent)
        start[~free] = 0.0
    res = minimize_quotient(op, p, start, iters=iters, rtol=1e-15)
    R = res.value
    x = res.field.values
    Nrm = float(np.sum(op.mass * np.abs(x) ** p))
    t = (R * Nrm ** (2.0 / p - 1.0) / mu) ** (1.0 / (p - 2.0))
    u = t * x
    u3, ntrace = newton_solve(metric, a, h, mu, p - 1.0, u, tol=tol, mask=mask, boundary=0.0)
    if np.any(u3.values[free] <= 0):
        raise IterationError("local solution is not positive inside the ball", ntrace, "local-variational")
    V1 = a * float(u3.values @ (op.stiffness @ u3.values))
    V2 = float(np.sum(op.mass * (-h) * u3.values ** 2))
    W = float(np.sum(op.mass * mu * u3.values ** p)) ** (1.0 / p)
    level = MountainLevel.from_values(V1, V2, W, n, mu, a, sobolev_T(n))
    if not level.below:
        raise GateError(f"mountain-pass level {level.level:.4g} is not below K0 = {level.K0:.4g}")
    ntrace.extra.update({"quotient": R, "descent_steps": len(res.trace)})
    return LocalVariational(u3, R, level, ntrace.final_residual, ntrace)
