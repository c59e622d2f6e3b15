"""Yamabe-type quotients, Aubin test functions and the epsilon-scan of Q_eps.

Grid quotients use the same flux stencil as the elliptic module.  The epsilon
scan works directly with radial integrals (adaptive quadrature), so its
output is free of grid discretization error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate as sint

from .constants import conformal_exponents, constants_for, sobolev_T, sphere_area
from .elliptic import assemble, spd_solver
from .geometry import CurvatureSpec, GridSpec, MetricField, ScalarField

COSINE = "cosine"
PLATEAU = "plateau-bump"


class NormalizationError(ValueError):
    """The n = 3 scan requires S0/8 + pi^2/4 = 0."""


class QuotientDescentError(RuntimeError):
    pass


# ---------------------------------------------------------------- grid quotients

def _pieces(u: ScalarField, metric: MetricField, a: float, S=None):
    if u.grid != metric.grid:
        raise ValueError("field and metric live on different grids")
    op = assemble(metric, a, 0.0, bc="natural")
    x = u.values
    grad = float(x @ (op.stiffness @ x))
    Sv = metric.scalar_curv if S is None else (S.values if isinstance(S, ScalarField) else
                                                np.broadcast_to(np.asarray(S, float), x.shape))
    return op.mass, grad, Sv


def yamabe_quotient(u: ScalarField, metric: MetricField, a: float, S=None) -> float:
    """(int a|grad u|^2 + S u^2) / ||u||_p^2 with S defaulting to the metric's S_g."""
    return perturbed_quotient(u, metric, a, S, 0.0)


def perturbed_quotient(u: ScalarField, metric: MetricField, a: float, S=None, beta: float = 0.0) -> float:
    n = metric.grid.n
    _, p = conformal_exponents(n)
    mass, grad, Sv = _pieces(u, metric, a, S)
    x = u.values
    den = float(np.sum(mass * np.abs(x) ** p)) ** (2.0 / p)
    if den == 0.0:
        raise ZeroDivisionError("quotient of the zero field")
    num = a * grad + float(np.sum(mass * (Sv + beta) * x * x))
    return num / den


# ---------------------------------------------------------------- test functions

@dataclass(frozen=True)
class TestFunctionSpec:
    n: int
    r: float
    epsilon: float
    cutoff: str = ""

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.r <= 0:
            raise ValueError("r must be positive")
        kind = self.cutoff or (COSINE if self.n == 3 else PLATEAU)
        if self.n == 3 and (kind != COSINE or self.r != 1.0):
            raise ValueError("n = 3 uses the cosine cutoff on the unit ball")
        if self.n >= 4 and kind != PLATEAU:
            raise ValueError("n >= 4 uses a plateau bump equal to 1 on B(r/2)")
        object.__setattr__(self, "cutoff", kind)


def _smooth_step(t):
    """f(1-t)/(f(1-t)+f(t)) with f(x) = exp(-1/x): 1 for t <= 0, 0 for t >= 1."""
    t = np.clip(np.asarray(t, float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f1 = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
        f0 = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
    return f1 / (f1 + f0)


def _smooth_step_deriv(t):
    t = np.asarray(t, float)
    inside = (t > 0.0) & (t < 1.0)
    tt = np.where(inside, t, 0.5)
    f1 = np.exp(-1.0 / (1.0 - tt))
    f0 = np.exp(-1.0 / tt)
    d = -f0 * f1 * (1.0 / (1.0 - tt) ** 2 + 1.0 / tt ** 2) / (f0 + f1) ** 2
    return np.where(inside, d, 0.0)


def cutoff_profile(kind: str, s, r: float):
    """Cutoff value and radial derivative."""
    s = np.asarray(s, float)
    if kind == COSINE:
        return np.cos(0.5 * math.pi * s / r), -0.5 * math.pi / r * np.sin(0.5 * math.pi * s / r)
    t = (s - 0.5 * r) / (0.5 * r)
    return _smooth_step(t), _smooth_step_deriv(t) / (0.5 * r)


def aubin_profile(spec: TestFunctionSpec, s):
    """u = phi(s) / (eps + s^2)^((n-2)/2) and its radial derivative."""
    k = 0.5 * (spec.n - 2)
    phi, dphi = cutoff_profile(spec.cutoff, s, spec.r)
    q = spec.epsilon + np.asarray(s, float) ** 2
    u = phi * q ** (-k)
    du = dphi * q ** (-k) - phi * 2.0 * k * np.asarray(s, float) * q ** (-k - 1)
    return u, du


def aubin_test_field(spec: TestFunctionSpec, grid: GridSpec) -> ScalarField:
    if grid.periodic:
        raise ValueError("Aubin test fields live on radial grids")
    if grid.n != spec.n or not math.isclose(grid.extent, spec.r, rel_tol=1e-14):
        raise ValueError("grid does not match the test-function ball")
    u, _ = aubin_profile(spec, grid.axis())
    u[-1] = 0.0
    return ScalarField(grid, u)


# ---------------------------------------------------------------- epsilon scan

@dataclass(frozen=True)
class QuotientPieces:
    gradient: float
    potential: float
    denominator: float

    def quotient(self, p: float) -> float:
        return (self.gradient + self.potential) / self.denominator ** (2.0 / p)


@dataclass
class QuotientReport:
    n: int
    r: float
    beta: float
    S0: float
    epsilons: list[float]
    Q: list[float]
    T: float
    pieces: list[QuotientPieces] = field(default_factory=list)
    volume_correction: bool = True
    slope: dict = field(default_factory=dict)

    @property
    def gaps(self) -> list[float]:
        return [self.T - q for q in self.Q]

    @property
    def margin(self) -> float:
        return min(self.gaps)

    @property
    def below_T(self) -> bool:
        return all(g > 0 for g in self.gaps)

    @property
    def passed(self) -> bool:
        return self.below_T and bool(self.slope.get("ok", False))

    def rows(self) -> list[tuple[float, float, float, float]]:
        return [(e, q, self.T, self.T - q) for e, q in zip(self.epsilons, self.Q)]

    def summary(self) -> dict:
        return {"n": self.n, "r": self.r, "beta": self.beta, "S0": self.S0, "T": self.T,
                "margin": self.margin, "below_T": self.below_T, "slope": self.slope,
                "volume_correction": self.volume_correction, "passed": self.passed}


def _segments(eps: float, r: float, extra: Sequence[float] = ()) -> list[float]:
    se = math.sqrt(eps)
    pts = {0.0, r, *[x for x in extra if 0 < x < r]}
    for k in (0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0):
        if k * se < r:
            pts.add(k * se)
    return sorted(pts)


def _quad(fn, edges) -> float:
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = sint.quad(fn, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    return total


def quotient_pieces(spec: TestFunctionSpec, S0: float, beta: float,
                    volume_correction: bool = True) -> QuotientPieces:
    """Raw radial integrals of the scan quotient, with the gradient term normalized by a.

    Weight: omega_n s^(n-1) (1 - S0 s^2/(6n)) when the volume correction is on.
    """
    n = spec.n
    a, p = conformal_exponents(n)
    w = sphere_area(n)
    c = S0 / (6.0 * n) if volume_correction else 0.0

    def dens(s):
        return w * s ** (n - 1) * (1.0 - c * s * s)

    def grad(s):
        return aubin_profile(spec, s)[1] ** 2 * dens(s)

    def pot(s):
        return (S0 + beta) / a * aubin_profile(spec, s)[0] ** 2 * dens(s)

    def den(s):
        return np.abs(aubin_profile(spec, s)[0]) ** p * dens(s)

    extra = [0.5 * spec.r] if spec.cutoff == PLATEAU else []
    edges = _segments(spec.epsilon, spec.r, extra)
    return QuotientPieces(_quad(grad, edges), _quad(pot, edges), _quad(den, edges))


def expected_coefficient(n: int, beta: float) -> float:
    """Reference coefficient of (T - Q) in the leading small-epsilon regime."""
    tab = constants_for(n)
    if n >= 5:
        return (n - 2) * abs(beta) * tab.K3_closed / (4.0 * (n - 1) * tab.K2_closed)
    if n == 4:
        return abs(beta) * tab.omega_n / (2.0 * tab.a * tab.K2_closed)
    # n = 3: (|beta|/8) omega_3 int_0^1 cos^2(pi s / 2) ds / K2
    return abs(beta) / 8.0 * tab.omega_n * 0.5 / tab.K2_closed


def fit_slope(n: int, eps: Sequence[float], gaps: Sequence[float], beta: float) -> dict:
    """Fit the small-epsilon signature of T - Q for each dimension regime."""
    e = np.asarray(eps, float)
    d = np.asarray(gaps, float)
    order = np.argsort(e)[:3]
    e3, d3 = e[order], d[order]
    ref = float(expected_coefficient(n, beta))
    if n >= 5:
        c = float(np.sum(e3 * d3) / np.sum(e3 * e3))
        rel = float(abs(c - ref) / ref)
        return {"basis": "eps", "coefficient": c, "expected": ref, "rel_error": rel,
                "ok": bool(rel <= 0.25)}
    if n == 4:
        X = np.column_stack([e * np.abs(np.log(e)), e])
    else:
        X = np.column_stack([np.sqrt(e), e])
    coef, *_ = np.linalg.lstsq(X, d, rcond=None)
    c1 = float(coef[0])
    return {"basis": "eps|log eps|" if n == 4 else "eps^1/2", "coefficient": c1,
            "secondary": float(coef[1]), "expected": ref, "ok": bool(c1 > 0)}


def quotient_scan(n: int, r: float, beta: float, curv: CurvatureSpec, eps_list: Sequence[float],
                  volume_correction: bool = True) -> QuotientReport:
    """Evaluate Q_eps for the Aubin family on B(r) against T.

    ``volume_correction=False`` drops the sqrt(det g) factor (diagnostic only).
    """
    if beta >= 0:
        raise ValueError("the scan is stated for beta < 0")
    if curv.n != n:
        raise ValueError("curvature data has the wrong dimension")
    if curv.S0 >= 0:
        raise ValueError("the scan needs S_g(0) < 0")
    if n == 3:
        resid = curv.S0 / 8.0 + math.pi ** 2 / 4.0
        if abs(resid) > 1e-9 * math.pi ** 2:
            raise NormalizationError(
                f"n = 3 requires the normalization S0/8 + pi^2/4 = 0 (got residual {resid:.3e}); "
                "use S0 = -2 pi^2")
        r = 1.0
    eps = [float(e) for e in eps_list]
    if len(eps) < 3:
        raise ValueError("need at least three epsilon values")
    if any(e <= 0 for e in eps):
        raise ValueError("epsilon values must be positive")
    _, p = conformal_exponents(n)
    pieces, Q = [], []
    for e in eps:
        pc = quotient_pieces(TestFunctionSpec(n, r, e), curv.S0, beta, volume_correction)
        pieces.append(pc)
        Q.append(pc.quotient(p))
    T = sobolev_T(n)
    rep = QuotientReport(n, r, beta, curv.S0, eps, Q, T, pieces, volume_correction)
    rep.slope = fit_slope(n, eps, rep.gaps, beta)
    return rep


# ---------------------------------------------------------------- mountain-pass level

@dataclass(frozen=True)
class MountainLevel:
    V1: float
    V2: float
    W: float
    t0: float
    level: float
    K0: float

    @property
    def below(self) -> bool:
        return self.level < self.K0

    @classmethod
    def from_values(cls, V1: float, V2: float, W: float, n: int, lam: float, a: float | None = None,
                    T: float | None = None) -> "MountainLevel":
        if W <= 0:
            raise ValueError("W must be positive")
        if lam <= 0:
            raise ValueError("lambda must be positive")
        a0, p = conformal_exponents(n)
        a = a0 if a is None else a
        T = sobolev_T(n) if T is None else T
        K0 = (1.0 / n) * lam ** ((2.0 - n) / 2.0) * a ** (n / 2.0) * T ** (n / 2.0)
        gap = V1 - V2
        if gap <= 0:
            return cls(V1, V2, W, 0.0, 0.0, K0)
        t0 = (gap / W ** p) ** (1.0 / (p - 2.0))
        level = (1.0 / n) * (gap / (W * W)) ** (n / 2.0)
        return cls(V1, V2, W, t0, level, K0)

    def J_star(self, t: float, p: float) -> float:
        return 0.5 * t * t * (self.V1 - self.V2) - t ** p / p * self.W ** p


def mountain_level(u: ScalarField, metric: MetricField, a: float, S=None, beta: float = 0.0,
                   lam: float = 1.0) -> MountainLevel:
    """V1 = int a|grad u|^2, V2 = int (-S - beta) u^2, W = (int lam u^p)^(1/p)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if np.any(u.values < 0) or not np.any(u.values > 0):
        raise ValueError("u must be nonnegative and not identically zero")
    n = metric.grid.n
    _, p = conformal_exponents(n)
    mass, grad, Sv = _pieces(u, metric, a, S)
    x = u.values
    V1 = a * grad
    V2 = float(np.sum(mass * (-Sv - beta) * x * x))
    W = float(np.sum(mass * lam * x ** p)) ** (1.0 / p)
    return MountainLevel.from_values(V1, V2, W, n, lam, a)


def scan_mountain_level(spec: TestFunctionSpec, S0: float, beta: float, lam: float = 1.0) -> MountainLevel:
    """Mountain-pass level of the radial Aubin field from exact quadrature."""
    a, p = conformal_exponents(spec.n)
    pc = quotient_pieces(spec, S0, beta)
    V1 = a * pc.gradient
    V2 = -a * pc.potential
    W = (lam * pc.denominator) ** (1.0 / p)
    return MountainLevel.from_values(V1, V2, W, spec.n, lam, a)


# ---------------------------------------------------------------- lambda_beta

@dataclass
class QuotientMinimum:
    value: float
    field: ScalarField
    trace: list[float]
    halvings: int

    @property
    def monotone(self) -> bool:
        return all(b <= a + 1e-12 * max(abs(a), 1.0) for a, b in zip(self.trace, self.trace[1:]))


def minimize_quotient(op, p: float, start: np.ndarray, iters: int = 500, rtol: float = 1e-13,
                      weight: np.ndarray | None = None) -> QuotientMinimum:
    """Minimize R(u) = <A u, u> / (sum M w |u|^p)^(2/p) over the free nodes of op.

    Each step solves (A + sigma M) v = sigma M u + R N^(2/p - 1) M w |u|^(p-2) u,
    takes u + t (v - u) with t halved until R decreases, then projects to |u|.
    Fixed nodes are held at zero.
    """
    free = op.free
    A = op.matrix
    M = op.mass[free]
    w = np.ones(free.sum()) if weight is None else np.asarray(weight, float)[free]
    V = op.V[free]
    sigma = max(0.0, -float(V.min())) + 1.0
    solver = spd_solver((A + A.T) * 0.5 + _diag(sigma * M), tol=1e-12)

    def R_of(x):
        N = float(np.sum(M * w * np.abs(x) ** p))
        return float(x @ (A @ x)) / N ** (2.0 / p), N

    x = np.abs(np.asarray(start, float)[free])
    if not np.any(x > 0):
        raise ValueError("start field vanishes on the free nodes")
    R, N = R_of(x)
    trace = [R]
    halvings = 0
    for _ in range(iters):
        rhs = sigma * M * x + R * N ** (2.0 / p - 1.0) * M * w * np.abs(x) ** (p - 2.0) * x
        d = solver(rhs) - x
        t = 1.0
        improved = False
        for _h in range(40):
            y = np.abs(x + t * d)
            if np.any(y > 0):
                Ry, Ny = R_of(y)
                if Ry <= R:
                    improved = True
                    break
            t *= 0.5
            halvings += 1
        if not improved:
            break
        drop = R - Ry
        # rescale to keep the denominator of order one
        y = y / Ny ** (1.0 / p)
        x, (R, N) = y, R_of(y)
        trace.append(R)
        if drop <= rtol * max(abs(R), 1.0):
            break
    full = np.zeros(op.grid.size)
    full[free] = x
    return QuotientMinimum(R, ScalarField(op.grid, full), trace, halvings)


def _diag(v):
    import scipy.sparse as sp
    return sp.diags(v)


def minimize_perturbed_quotient(metric: MetricField, beta: float, iters: int = 500, S=None,
                                a: float | None = None, rtol: float = 1e-13) -> QuotientMinimum:
    """Discrete lambda_beta = inf Q_beta, started from the constant and the S-weighted fields."""
    if beta > 0:
        raise ValueError("beta must be <= 0")
    n = metric.grid.n
    a0, p = conformal_exponents(n)
    a = a0 if a is None else a
    Sv = metric.scalar_curv if S is None else (S.values if isinstance(S, ScalarField) else
                                                np.broadcast_to(np.asarray(S, float), (metric.grid.size,)))
    op = assemble(metric, a, Sv + beta, bc="natural" if not metric.grid.periodic else None)
    starts = [np.ones(metric.grid.size)]
    spread = float(Sv.max() - Sv.min())
    if spread > 0:
        # more mass where S is low
        starts.append(1.0 + (Sv.max() - Sv) / spread)
    best = None
    for s0 in starts:
        res = minimize_quotient(op, p, s0, iters=iters, rtol=rtol)
        if best is None or res.value < best.value:
            best = res
    return best


def estimate_lambda_beta(metric: MetricField, beta: float, iters: int = 500, S=None,
                         a: float | None = None) -> float:
    return minimize_perturbed_quotient(metric, beta, iters, S, a).value


def lambda_beta_lower_bound(lambda_M: float, beta: float, volume: float, n: int) -> float:
    """lambda(M) + beta Vol^((p-2)/p)."""
    _, p = conformal_exponents(n)
    return lambda_M + beta * volume ** ((p - 2.0) / p)
