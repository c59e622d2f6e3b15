"""Partition-of-unity super-solution gluing a local solution u3 to a scaled eigenfunction.

Inside the ball the two fields are compared through d = u3 - phi.  Near the
crossing set {d = 0} the glued field is phi + gamma; on the side where u3
wins it blends into u3, on the other side into phi.  The blend weights solve
linear PDEs chosen so that the commutator of the Laplacian with the weight
vanishes (exactly, in the discrete sense) on the transition shells.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage
from scipy.optimize import brentq

from ..constants import conformal_exponents
from ..elliptic import assemble
from ..geometry import MetricField, ScalarField
from .builders import beta_prime
from .monotone import verify_supersolution
from .trace import Certificate, GateError

DOMINANCE = "dominance"
PARTITION = "partition"

REGIONS = ("omega1_only", "omega2_only", "omega3_only", "omega1_omega3", "omega2_omega3")


@dataclass
class PartitionSpec:
    """gamma: gap constant; delta: collar width; moll_eps: mollifier radius.

    Unset entries are chosen automatically.  ``slack`` is the absolute
    certificate allowance for mollification error.
    """
    gamma: float | None = None
    delta: float | None = None
    moll_eps: float | None = None
    beta_prime: float | None = None
    slack: float = 1e-6
    gamma_shave: float = 0.9

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PartitionResult:
    field: ScalarField
    branch: str
    certificate: Certificate
    spec: PartitionSpec
    chi: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    dist: np.ndarray | None = None
    info: dict = field(default_factory=dict)


def gamma_constraints(gamma: float, mu: float, phi: np.ndarray, sup_abs_S: float, beta: float,
                      p: float, bp: float) -> tuple[float, float]:
    """Slack of the two gap inequalities (positive means satisfied).

    20 mu gamma + 2 gamma (sup|S| + |beta|) < beta'/2 and
    31 mu sup (phi + gamma)^(p-2) gamma < beta'/2.
    """
    c1 = bp / 2 - (20 * mu * gamma + 2 * gamma * (sup_abs_S + abs(beta)))
    c2 = bp / 2 - 31 * mu * float(np.max((phi + gamma) ** (p - 2.0))) * gamma
    return c1, c2


def choose_gamma(mu: float, phi: np.ndarray, sup_abs_S: float, beta: float, p: float, bp: float,
                 shave: float = 0.9) -> float:
    def worst(g):
        return min(gamma_constraints(g, mu, phi, sup_abs_S, beta, p, bp))
    hi = bp / (40 * mu + 4 * (sup_abs_S + abs(beta)))
    while worst(hi) > 0:
        hi *= 2
    return shave * brentq(worst, 0.0, hi, xtol=1e-15 * max(hi, 1.0))


def _interface_distance(grid, d: np.ndarray, inside: np.ndarray) -> np.ndarray:
    """Distance from each node to the crossing set {d = 0} inside the ball."""
    if not grid.periodic:
        s = grid.axis()
        pos = d > 0
        cross = []
        for k in np.nonzero(inside[:-1] & inside[1:] & (pos[:-1] != pos[1:]))[0]:
            t = d[k] / (d[k] - d[k + 1])
            cross.append(s[k] + t * (s[k + 1] - s[k]))
        if not cross:
            return np.full(grid.size, np.inf)
        return np.min(np.abs(s[:, None] - np.asarray(cross)[None, :]), axis=1)
    shape = grid.shape
    D = d.reshape(shape)
    ins = inside.reshape(shape)
    iface = np.zeros(shape, bool)
    for ax in range(grid.n):
        nb = np.roll(D, -1, axis=ax)
        nb_in = np.roll(ins, -1, axis=ax)
        flip = ins & nb_in & ((D > 0) != (nb > 0))
        # mark the node of the pair nearer to the zero crossing
        near_self = np.abs(D) <= np.abs(nb)
        iface |= flip & near_self
        iface |= np.roll(flip & ~near_self, 1, axis=ax)
    if not iface.any():
        return np.full(grid.size, np.inf)
    return ndimage.distance_transform_edt(~iface, sampling=grid.h).reshape(-1)


def choose_delta(dist: np.ndarray, d: np.ndarray, inside: np.ndarray, gamma: float) -> float:
    """Largest delta with sup |u3 - phi| < gamma over {dist < delta} (nodes inside the ball)."""
    sel = inside & np.isfinite(dist)
    order = np.argsort(dist[sel])
    ds = dist[sel][order]
    run = np.maximum.accumulate(np.abs(d[sel][order]))
    bad = np.nonzero(run >= gamma)[0]
    if bad.size == 0:
        return float(ds[-1])
    return float(ds[bad[0]])


def _product_rule_solve(K: sp.csr_matrix, w: np.ndarray, unknown: np.ndarray, fixed_vals: np.ndarray) -> np.ndarray:
    """Solve sum_j (-K_ij) w_j (v_i - v_j) = 0 on ``unknown`` nodes.

    This is the discrete statement that w v and v commute with the stiffness
    matrix: K(v w) = v K w row by row.  With w of one sign it is an M-matrix
    system, so 0 <= v <= 1 when the fixed values lie in [0, 1].
    """
    C = (-K).tolil()
    C.setdiag(0.0)
    C = C.tocsr()
    W = C @ sp.diags(np.abs(w))
    L = (sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()
    v = fixed_vals.copy()
    U = np.nonzero(unknown)[0]
    if U.size == 0:
        return v
    F = np.nonzero(~unknown)[0]
    rhs = -(L[U][:, F] @ v[F])
    v[U] = spla.spsolve(L[U][:, U].tocsc(), rhs)
    return v


def _kernel_1d(eps: float, h: float) -> np.ndarray:
    r = int(np.floor(eps / h))
    x = np.arange(-r, r + 1) * h / eps
    k = np.where(np.abs(x) < 1, np.exp(-1.0 / np.maximum(1 - x ** 2, 1e-300)), 0.0)
    return k / k.sum()


def mollify(grid, values: np.ndarray, eps: float) -> np.ndarray:
    """Convolution with the normalized standard mollifier of radius eps.

    Periodic grids use the n-dimensional radial kernel with wrap-around;
    radial grids convolve in the radius (mirror at the center).
    """
    h = grid.h
    if eps < h:
        return values.copy()
    if not grid.periodic:
        return ndimage.convolve1d(values, _kernel_1d(eps, h), mode="mirror")
    r = int(np.floor(eps / h))
    ax = np.arange(-r, r + 1) * h
    mesh = np.meshgrid(*([ax] * grid.n), indexing="ij")
    rho = np.sqrt(sum(m ** 2 for m in mesh)) / eps
    k = np.where(rho < 1, np.exp(-1.0 / np.maximum(1 - rho ** 2, 1e-300)), 0.0)
    k /= k.sum()
    return ndimage.convolve(values.reshape(grid.shape), k, mode="wrap").reshape(-1)


def build_super_partition(u3, phi_scaled, spec: PartitionSpec | None, metric: MetricField, *,
                          beta: float, mu: float, eta1: float, inside=None) -> PartitionResult:
    """Super-solution of -a Delta u + (S + beta) u >= mu u^(p-1) from u3 and phi.

    ``inside`` marks the ball carrying u3 (u3 = 0 outside); by default the
    nodes where u3 > 0.  Returns phi itself when it dominates u3.
    """
    spec = spec or PartitionSpec()
    grid = metric.grid
    n = grid.n
    a, p = conformal_exponents(n)
    m = p - 1.0
    S = metric.scalar_curv
    h = S + beta
    u = u3.values if isinstance(u3, ScalarField) else np.asarray(u3, float)
    phi = phi_scaled.values if isinstance(phi_scaled, ScalarField) else np.asarray(phi_scaled, float)
    inside = (u > 0) if inside is None else np.asarray(inside, bool)
    cert_mask = None if grid.periodic else np.zeros(grid.size, bool)
    d = np.where(inside, u - phi, -phi)
    if np.all(d <= 0):
        cert = verify_supersolution(phi, metric, a, h, mu, m, mask=cert_mask, atol=spec.slack)
        return PartitionResult(ScalarField(grid, phi.copy()), DOMINANCE, cert, spec,
                               info={"min_gap": float(np.min(-d[inside])) if inside.any() else float("inf")})

    bp = beta_prime(ScalarField(grid, phi), eta1, beta, mu, p) if spec.beta_prime is None else spec.beta_prime
    if bp <= 0:
        raise GateError(f"beta' = {bp:.4g} is not positive")
    supS = float(np.max(np.abs(S)))
    gamma = spec.gamma if spec.gamma is not None else choose_gamma(mu, phi, supS, beta, p, bp, spec.gamma_shave)
    c1, c2 = gamma_constraints(gamma, mu, phi, supS, beta, p, bp)
    if gamma <= 0 or c1 <= 0 or c2 <= 0:
        raise GateError(f"gamma = {gamma:.4g} violates the gap inequalities (slacks {c1:.3g}, {c2:.3g})")

    dist = _interface_distance(grid, d, inside)
    delta = spec.delta if spec.delta is not None else choose_delta(dist, d, inside, gamma)
    collar = dist < delta
    if not np.any(collar & inside):
        raise GateError("the collar around the crossing set contains no grid nodes")
    if np.any(collar & ~inside):
        raise GateError("the collar around the crossing set reaches the boundary of the ball")
    if np.max(np.abs(d[collar])) >= gamma:
        raise GateError(f"sup |u3 - phi| over the collar exceeds gamma = {gamma:.4g}")
    eps = spec.moll_eps if spec.moll_eps is not None else delta / 8
    if not eps < delta / 4:
        raise GateError(f"mollifier radius {eps:.4g} must be below delta/4 = {delta / 4:.4g}")
    if delta / 2 - 2 * eps < 2 * grid.h:
        raise GateError(f"collar width {delta:.4g} is under-resolved by grid spacing {grid.h:.4g}")

    V = inside & (d > 0)
    Vp = ~V  # includes the exterior of the ball, where u3 = 0 < phi
    K = assemble(metric, 1.0, 0.0, mask=cert_mask if not grid.periodic else None).stiffness.tocsr()
    lo, hi = delta / 2 + eps, delta - eps

    # chi_1: u3 side, weights w = u3 - phi - gamma (< 0 on the collar)
    F1 = V & (dist > lo) & (dist < hi)
    fix1 = np.where(V & (dist >= hi), 1.0, 0.0)
    v1 = np.clip(_product_rule_solve(K, u - phi - gamma, F1, fix1), 0.0, 1.0)
    v1[~V] = 0.0
    # chi_2: phi side, plain Laplace
    F2 = Vp & (dist > lo) & (dist < hi)
    fix2 = np.where(Vp & (dist >= hi), 1.0, 0.0)
    v2 = np.clip(_product_rule_solve(K, np.ones(grid.size), F2, fix2), 0.0, 1.0)
    v2[V] = 0.0

    chi1 = mollify(grid, v1, eps)
    chi2 = mollify(grid, v2, eps)
    chi3 = 1.0 - chi1 - chi2
    tol = 1e-12
    for name, c in (("chi1", chi1), ("chi2", chi2), ("chi3", chi3)):
        if c.min() < -tol or c.max() > 1 + tol:
            raise GateError(f"{name} leaves [0, 1] after mollification ({c.min():.3g}, {c.max():.3g})")
    chi1, chi2, chi3 = (np.clip(c, 0.0, 1.0) for c in (chi1, chi2, chi3))
    ubar = chi1 * u + chi2 * phi + chi3 * (phi + gamma)
    if np.any(ubar < u - 1e-12):
        raise GateError("glued field drops below u3")

    one = 1.0 - 1e-12
    regions = {
        "omega1_only": chi1 >= one,
        "omega2_only": chi2 >= one,
        "omega3_only": chi3 >= one,
        "omega1_omega3": (chi1 < one) & (chi3 < one) & (chi1 > 1e-12),
        "omega2_omega3": (chi2 < one) & (chi3 < one) & (chi2 > 1e-12),
    }
    cert = verify_supersolution(ubar, metric, a, h, mu, m, mask=cert_mask, atol=spec.slack, regions=regions)
    used = PartitionSpec(gamma, delta, eps, bp, spec.slack, spec.gamma_shave)
    info = {"gamma": gamma, "delta": delta, "moll_eps": eps, "beta_prime": bp,
            "gamma_slacks": (c1, c2), "collar_nodes": int(collar.sum())}
    return PartitionResult(ScalarField(grid, ubar), PARTITION, cert, used, (chi1, chi2, chi3), dist, info)
