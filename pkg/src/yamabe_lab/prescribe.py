"""Conformal factors whose scalar curvature changes sign at a chosen point.

A bump f of height C on a small ball is balanced by a constant so that
F = f + eps has zero mean; u = u' + C/4 with -a Delta u' = F then gives the
curvature H = u^(1-p)(-a Delta u + S u), whose sign at the bump center is
the sign of the bump.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .constants import conformal_exponents
from .elliptic import assemble, solve
from .geometry import GridSpec, MetricField, ScalarField, integrate

NEGATIVE = "negative"
POSITIVE = "positive"


class PrescribeError(ValueError):
    """A hypothesis of the construction fails, or shrinking r did not help."""


@dataclass(frozen=True)
class BumpSpec:
    center: tuple[float, ...]
    radius: float
    depth: float
    sign: str = NEGATIVE

    def __post_init__(self):
        if self.sign not in (NEGATIVE, POSITIVE):
            raise ValueError(f"sign must be {NEGATIVE!r} or {POSITIVE!r}")
        if self.depth <= 1:
            raise ValueError("bump depth C must exceed 1")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def signed_depth(self) -> float:
        return -self.depth if self.sign == NEGATIVE else self.depth

    def shrunk(self, factor: float = 0.5) -> "BumpSpec":
        return replace(self, radius=self.radius * factor)

    def as_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius, "depth": self.depth, "sign": self.sign}


def _snap_center(grid: GridSpec, center) -> tuple[int, np.ndarray]:
    x = grid.coords()
    k = int(np.argmin(np.sum((x - np.asarray(center, float)) ** 2, axis=1)))
    return k, x[k]


def bump_profile(grid: GridSpec, spec: BumpSpec) -> tuple[np.ndarray, int]:
    """f = +-C exp(1 - 1/(1 - rho^2)) with rho = |x - q|/r, zero outside the ball; q snapped to a node."""
    if not grid.periodic:
        raise ValueError("bumps live on periodic grids")
    k, q = _snap_center(grid, spec.center)
    L = grid.extent
    if np.any(q - spec.radius <= 0) or np.any(q + spec.radius >= L):
        raise PrescribeError(f"ball of radius {spec.radius} at {tuple(q)} does not fit inside the box")
    rho2 = np.sum((grid.coords() - q) ** 2, axis=1) / spec.radius ** 2
    inside = rho2 < 1
    f = np.zeros(grid.size)
    f[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
    return spec.signed_depth * f, k


def build_balanced_bump(grid: GridSpec, metric: MetricField, spec: BumpSpec) -> tuple[ScalarField, float]:
    """F = f + eps with eps = -(1/Vol) int f, so int F dVol = 0 in the discrete quadrature."""
    if metric.grid != grid:
        raise ValueError("metric lives on a different grid")
    f, _ = bump_profile(grid, spec)
    mass = grid.control_volumes() * metric.vol_density
    eps = -float(np.sum(mass * f)) / float(np.sum(mass))
    if abs(eps) >= spec.depth / 2:
        raise PrescribeError(f"balancing constant {abs(eps):.4g} >= C/2 = {spec.depth / 2:.4g}; use a smaller radius")
    F = f + eps
    # remove the last rounding so the discrete integral vanishes to machine precision
    F -= float(np.sum(mass * F)) / float(np.sum(mass))
    return ScalarField(grid, F), eps


def conformal_from_source(metric: MetricField, F: ScalarField, shift: float,
                          tol: float = 1e-12) -> tuple[ScalarField, ScalarField]:
    """u' with -a Delta u' = F and zero mean, and u = u' + shift."""
    a, _ = conformal_exponents(metric.grid.n)
    op = assemble(metric, a, 0.0)
    up, _ = solve(op, F, tol=tol)
    return up + shift, up


def prescribed_curvature(metric: MetricField, u: ScalarField) -> ScalarField:
    """H = u^(1-p) (-a Delta u + S u) from the discrete operator."""
    if np.any(u.values <= 0):
        raise PrescribeError("conformal factor must be positive")
    a, p = conformal_exponents(metric.grid.n)
    op = assemble(metric, a, metric.scalar_curv)
    return ScalarField(metric.grid, u.values ** (1.0 - p) * op.strong(u.values))


@dataclass
class PrescribeResult:
    u: ScalarField
    H: ScalarField
    F: ScalarField
    eps: float
    spec: BumpSpec
    halvings: int
    u_prime_sup: float
    center_node: int
    integral_F: float
    info: dict = field(default_factory=dict)

    @property
    def H_q(self) -> float:
        return float(self.H.values[self.center_node])

    @property
    def band_ok(self) -> bool:
        """u inside [C/8, 3C/8]."""
        C = self.spec.depth
        return bool(self.u.min() >= C / 8 and self.u.max() <= 3 * C / 8)

    @property
    def flipped(self) -> bool:
        return self.H_q < 0 if self.spec.sign == NEGATIVE else self.H_q > 0

    def summary(self) -> dict:
        return {"H_q": self.H_q, "sign": self.spec.sign, "flipped": self.flipped, "band_ok": self.band_ok,
                "u_min": self.u.min(), "u_max": self.u.max(), "u_prime_sup": self.u_prime_sup,
                "eps": self.eps, "integral_F": self.integral_F, "radius": self.spec.radius,
                "halvings": self.halvings, "bump": self.spec.as_dict(), **self.info}


def flip_curvature(metric: MetricField, spec: BumpSpec, max_halvings: int = 5) -> PrescribeResult:
    """Build u and H, halving r until sup|u'| < C/8 (at most ``max_halvings`` times).

    Stopping with C/8 <= sup|u'| < C/4 still leaves u > 0; the band flag then
    reports False.  sup|u'| >= C/4 after the last halving is an error.
    """
    grid = metric.grid
    C = spec.depth
    cur = spec
    for k in range(max_halvings + 1):
        try:
            F, eps = build_balanced_bump(grid, metric, cur)
        except PrescribeError:
            if k == max_halvings:
                raise
            cur = cur.shrunk()
            continue
        u, up = conformal_from_source(metric, F, C / 4)
        sup = float(np.max(np.abs(up.values)))
        if sup < C / 8 or k == max_halvings:
            break
        cur = cur.shrunk()
    if sup >= C / 4:
        raise PrescribeError(f"sup |u'| = {sup:.4g} >= C/4 after {max_halvings} halvings of r")
    H = prescribed_curvature(metric, u)
    node, _ = _snap_center(grid, cur.center)
    return PrescribeResult(u, H, F, eps, cur, k, sup, node, integrate(F, metric))


def flip_curvature_negative(metric: MetricField, spec: BumpSpec, max_halvings: int = 5) -> PrescribeResult:
    """S >= 0 with sup S <= 1: returns u > 0 whose curvature H is negative at the bump center."""
    S = metric.scalar_curv
    if np.any(S < 0):
        raise PrescribeError("needs S >= 0 everywhere")
    if S.max() > 1:
        raise PrescribeError("rescale the metric so that sup S <= 1")
    if spec.sign != NEGATIVE:
        raise PrescribeError("negative flip needs a negative bump")
    return flip_curvature(metric, spec, max_halvings)


def flip_curvature_positive(metric: MetricField, spec: BumpSpec, max_halvings: int = 5) -> PrescribeResult:
    """S <= 0 with inf S >= -1: returns u > 0 whose curvature H' is positive at the bump center."""
    S = metric.scalar_curv
    if np.any(S > 0):
        raise PrescribeError("needs S <= 0 everywhere")
    if S.min() < -1:
        raise PrescribeError("rescale the metric so that inf S >= -1")
    if spec.sign != POSITIVE:
        raise PrescribeError("positive flip needs a positive bump")
    return flip_curvature(metric, spec, max_halvings)


def spectral_laplacian(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Flat periodic Laplacian by FFT (independent of the finite-volume stencil)."""
    if not grid.periodic:
        raise ValueError("spectral Laplacian needs a periodic grid")
    U = np.fft.fftn(values.reshape(grid.shape))
    k = 2 * np.pi * np.fft.fftfreq(grid.m, d=grid.h)
    K2 = sum(np.meshgrid(*([k ** 2] * grid.n), indexing="ij"))
    return np.real(np.fft.ifftn(-K2 * U)).reshape(-1)
