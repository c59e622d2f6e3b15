"""Grids, sampled Riemannian data and integration against the volume density.

Two substrates are supported:

* periodic boxes [0, L)^n with m points per axis (flat tori), and
* radial balls B_0(r) reduced to the radial variable s in [0, r].

On radial grids only rotation-invariant data is kept: the radial component of
the inverse metric (identically 1 in normal coordinates), the spherical mean of
sqrt(det g) and the spherical mean of the scalar curvature.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .constants import conformal_exponents, sphere_area

PERIODIC = "periodic-box"
RADIAL = "radial-ball"

DEFAULT_NODE_BUDGET = 4_000_000
DENSITY_FLOOR = 0.5


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    kind: str
    n: int
    extent: float
    m: int

    def __post_init__(self):
        if self.kind not in (PERIODIC, RADIAL):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.n < 3:
            raise ValueError(f"dimension n must be >= 3, got {self.n}")
        if self.m < 4:
            raise ValueError(f"resolution must be >= 4, got {self.m}")
        if not self.extent > 0:
            raise ValueError("extent must be positive")

    @property
    def periodic(self) -> bool:
        return self.kind == PERIODIC

    @property
    def h(self) -> float:
        if self.periodic:
            return self.extent / self.m
        return self.extent / (self.m - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.n if self.periodic else (self.m,)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self) -> np.ndarray:
        return np.arange(self.m) * self.h

    def coords(self) -> np.ndarray:
        """Node coordinates: (N, n) for periodic grids, (m,) radii for radial grids."""
        if not self.periodic:
            return self.axis()
        mesh = np.meshgrid(*([self.axis()] * self.n), indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)

    def centered_coords(self) -> np.ndarray:
        """Periodic coordinates shifted so the box center is the origin."""
        if not self.periodic:
            return self.axis()
        return self.coords() - 0.5 * self.extent

    def quadrature_weights(self) -> np.ndarray:
        """Trapezoid weights: h^n per node (periodic) or omega_n s^(n-1) h (radial)."""
        if self.periodic:
            return np.full(self.size, self.h ** self.n)
        s = self.axis()
        w = sphere_area(self.n) * s ** (self.n - 1) * self.h
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def control_volumes(self) -> np.ndarray:
        """Finite-volume cells; radial cells are spherical shells [s-h/2, s+h/2] cut to [0, r]."""
        if self.periodic:
            return np.full(self.size, self.h ** self.n)
        s = self.axis()
        lo = np.clip(s - 0.5 * self.h, 0.0, None)
        hi = np.clip(s + 0.5 * self.h, None, self.extent)
        return sphere_area(self.n) / self.n * (hi ** self.n - lo ** self.n)

    def boundary_mask(self) -> np.ndarray:
        """Dirichlet boundary of a radial grid (last node); periodic grids have none."""
        mask = np.zeros(self.size, dtype=bool)
        if not self.periodic:
            mask[-1] = True
        return mask

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "extent": self.extent, "m": self.m}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(kind=d["kind"], n=int(d["n"]), extent=float(d["extent"]), m=int(d["m"]))


def build_periodic_grid(n: int, L: float, m: int, budget: int = DEFAULT_NODE_BUDGET) -> GridSpec:
    if n < 3:
        raise ValueError(f"dimension n must be >= 3, got {n}")
    if m < 4:
        raise ValueError(f"need at least 4 points per axis, got {m}")
    nodes = m ** n
    if nodes > budget:
        raise MemoryError(f"{m}^{n} = {nodes} nodes exceeds the node budget of {budget}")
    return GridSpec(PERIODIC, n, float(L), m)


def build_radial_grid(n: int, r: float, m: int) -> GridSpec:
    if n < 3:
        raise ValueError(f"dimension n must be >= 3, got {n}")
    if m < 16:
        raise ValueError(f"radial grids need at least 16 nodes, got {m}")
    return GridSpec(RADIAL, n, float(r), m)


@dataclass(frozen=True)
class CurvatureSpec:
    """Curvature data at the center of a normal chart.

    ``first_order`` optionally holds d[i, j, k] = d_k R_ij(0), symmetric in (i, j).
    """
    S0: float
    ricci_diag: tuple[float, ...]
    first_order: np.ndarray | None = None

    def __post_init__(self):
        rd = tuple(float(x) for x in self.ricci_diag)
        object.__setattr__(self, "ricci_diag", rd)
        if abs(sum(rd) - self.S0) > 1e-12 * max(1.0, abs(self.S0)):
            raise ValueError(f"ricci_diag sums to {sum(rd)!r}, not S0 = {self.S0!r}")
        if self.first_order is not None:
            d = np.asarray(self.first_order, dtype=float)
            k = len(rd)
            if d.shape != (k, k, k):
                raise ValueError(f"first_order must have shape {(k, k, k)}")
            if not np.allclose(d, d.transpose(1, 0, 2)):
                raise ValueError("first_order must be symmetric in its first two indices")
            object.__setattr__(self, "first_order", d)

    @property
    def n(self) -> int:
        return len(self.ricci_diag)

    @classmethod
    def isotropic(cls, n: int, S0: float) -> "CurvatureSpec":
        return cls(float(S0), (S0 / n,) * n)

    @classmethod
    def zero(cls, n: int) -> "CurvatureSpec":
        return cls(0.0, (0.0,) * n)

    def riemann(self) -> np.ndarray:
        """Curvature tensor with vanishing Weyl part built from the diagonal Ricci data.

        R_ijkl = P_ik d_jl + P_jl d_ik - P_il d_jk - P_jk d_il with Schouten tensor
        P = (Ric - S/(2(n-1)) I)/(n-2); contracting i with k returns Ric.
        """
        n = self.n
        eye = np.eye(n)
        P = (np.diag(self.ricci_diag) - self.S0 / (2.0 * (n - 1)) * eye) / (n - 2)
        return (np.einsum("ik,jl->ijkl", P, eye) + np.einsum("jl,ik->ijkl", P, eye)
                - np.einsum("il,jk->ijkl", P, eye) - np.einsum("jk,il->ijkl", P, eye))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise GridMismatchError(f"{v.size} values for a grid with {self.grid.size} nodes")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(grid.coords()), (grid.size,)).copy())

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.size, float(c)))

    def like(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.like(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.like(self.values - self._other(other))

    def __rsub__(self, other):
        return self.like(self._other(other) - self.values)

    def __mul__(self, other):
        return self.like(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.like(self.values / self._other(other))

    def __neg__(self):
        return self.like(-self.values)

    def __pow__(self, q):
        return self.like(self.values ** q)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Sampled inverse metric, sqrt(det g) and scalar curvature.

    ``inv_metric`` has shape (N, n, n) on periodic grids and (m,) on radial
    grids, where it stores the radial component g^{ss}.
    """
    grid: GridSpec
    inv_metric: np.ndarray
    vol_density: np.ndarray
    scalar_curv: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        N = self.grid.size
        rho = np.asarray(self.vol_density, dtype=float).reshape(-1)
        S = np.asarray(self.scalar_curv, dtype=float).reshape(-1)
        if rho.size != N or S.size != N:
            raise GridMismatchError("metric samples do not match the grid")
        if not np.all(rho > 0):
            raise ValueError("vol_density must be positive at every node")
        g = np.asarray(self.inv_metric, dtype=float)
        expected = (N, self.grid.n, self.grid.n) if self.grid.periodic else (N,)
        if g.shape != expected:
            raise GridMismatchError(f"inv_metric has shape {g.shape}, expected {expected}")
        object.__setattr__(self, "vol_density", rho)
        object.__setattr__(self, "scalar_curv", S)
        object.__setattr__(self, "inv_metric", g)

    @classmethod
    def flat(cls, grid: GridSpec) -> "MetricField":
        N = grid.size
        g = np.broadcast_to(np.eye(grid.n), (N, grid.n, grid.n)).copy() if grid.periodic else np.ones(N)
        return cls(grid, g, np.ones(N), np.zeros(N))

    def with_scalar_curvature(self, S) -> "MetricField":
        vals = S.values if isinstance(S, ScalarField) else np.broadcast_to(np.asarray(S, float), (self.grid.size,))
        return replace(self, scalar_curv=np.array(vals, dtype=float))

    def scalar_field(self) -> ScalarField:
        return ScalarField(self.grid, self.scalar_curv.copy())

    def volume(self) -> float:
        return float(np.sum(self.grid.quadrature_weights() * self.vol_density))

    def is_flat(self) -> bool:
        if self.grid.periodic:
            eye_ok = np.array_equal(self.inv_metric, np.broadcast_to(np.eye(self.grid.n), self.inv_metric.shape))
        else:
            eye_ok = np.array_equal(self.inv_metric, np.ones(self.grid.size))
        return bool(eye_ok and np.all(self.vol_density == 1.0))

    def diagonal_coefficients(self) -> np.ndarray:
        """sqrt(g) g^{ii} per node and axis, shape (N, n); radial grids give (m, 1)."""
        if self.grid.periodic:
            d = np.einsum("kii->ki", self.inv_metric)
            return d * self.vol_density[:, None]
        return (self.inv_metric * self.vol_density)[:, None]


def synthesize_normal_metric(grid: GridSpec, curv: CurvatureSpec,
                             density_floor: float = DENSITY_FLOOR) -> MetricField:
    """Quadratic normal-coordinate expansion of g^{ij}, sqrt(det g) and S_g.

    g^{ij}      = delta^{ij} + (1/3) R_{ikjl} x_k x_l
    sqrt(det g) = 1 - (1/6) Ric_0(x, x) - (1/6) d_k R_ij(0) x_k x_i x_j
    S_g(x)      = S0 + d_k R_ii(0) x_k
    Radial grids keep the spherical means: 1 - S0 s^2/(6n) and S0.
    """
    if curv.n != grid.n:
        raise ValueError(f"curvature data is {curv.n}-dimensional, grid is {grid.n}-dimensional")
    n = grid.n
    N = grid.size
    if grid.periodic:
        x = grid.centered_coords()
        R = curv.riemann()
        ginv = np.eye(n)[None] + np.einsum("ikjl,qk,ql->qij", R, x, x) / 3.0
        ric = np.asarray(curv.ricci_diag)
        rho = 1.0 - np.einsum("i,qi->q", ric, x * x) / 6.0
        S = np.full(N, curv.S0)
        if curv.first_order is not None:
            d = curv.first_order
            rho -= np.einsum("ijk,qk,qi,qj->q", d, x, x, x) / 6.0
            S += x @ np.einsum("iik->k", d)
        lam_min = np.linalg.eigvalsh(ginv).min()
        if lam_min <= 0:
            raise ValueError("expansion produced a non-positive inverse metric")
    else:
        s = grid.axis()
        ginv = np.ones(N)
        rho = 1.0 - curv.S0 * s * s / (6.0 * n)
        S = np.full(N, curv.S0)
    if rho.min() <= density_floor:
        raise ValueError(f"vol_density drops to {rho.min():.3g} <= {density_floor}; "
                         "the ball is too large for the quadratic expansion")
    return MetricField(grid, ginv, rho, S, meta={"S0": curv.S0})


def integrate(f: ScalarField, metric: MetricField) -> float:
    if f.grid != metric.grid:
        raise GridMismatchError("field and metric live on different grids")
    return float(np.sum(f.grid.quadrature_weights() * metric.vol_density * f.values))


def lp_norm(f: ScalarField, metric: MetricField, q: float) -> float:
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if f.grid != metric.grid:
        raise GridMismatchError("field and metric live on different grids")
    w = f.grid.quadrature_weights() * metric.vol_density
    return float(np.sum(w * np.abs(f.values) ** q) ** (1.0 / q))


def laplace_beltrami(metric: MetricField, u: ScalarField) -> ScalarField:
    """Discrete Delta_g u from the flux-form operator (natural closure on radial boundaries)."""
    from .elliptic import assemble
    op = assemble(metric, 1.0, 0.0, bc="natural")
    return u.like(-op.strong(u.values))


def conformal_metric(base: MetricField, u: ScalarField) -> MetricField:
    """Data of g~ = u^(p-2) g with S~ = u^(1-p)(-a Delta_g u + S_g u)."""
    if u.grid != base.grid:
        raise GridMismatchError("conformal factor lives on a different grid")
    if np.any(u.values <= 0):
        bad = int(np.argmin(u.values))
        raise ValueError(f"conformal factor must be positive; node {bad} has {u.values[bad]!r}")
    n = base.grid.n
    a, p = conformal_exponents(n)
    uu = u.values
    if np.all(uu == 1.0):
        return replace(base)
    lap = laplace_beltrami(base, u).values
    S_new = uu ** (1 - p) * (-a * lap + base.scalar_curv * uu)
    rho = uu ** ((p - 2) * n / 2.0) * base.vol_density
    scale = uu ** (-(p - 2))
    ginv = base.inv_metric * (scale[:, None, None] if base.grid.periodic else scale)
    return MetricField(base.grid, ginv, rho, S_new, meta=dict(base.meta))


def grid_refinements(make: Callable[[int], float], ms: Sequence[int], hs: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(h)."""
    errs = np.array([make(m) for m in ms])
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
