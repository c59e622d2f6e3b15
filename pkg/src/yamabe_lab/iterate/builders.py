"""Sub- and super-solution constructors for the global monotone iteration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import GridSpec, MetricField, ScalarField
from .trace import GateError


# ---------------------------------------------------------------- embedding

@dataclass(frozen=True)
class BallEmbedding:
    """Geodesic ball B(center, radius) placed strictly inside a periodic box."""
    grid: GridSpec
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.grid.periodic:
            raise ValueError("embedding needs a periodic ambient grid")
        c = np.asarray(self.center, float)
        if c.shape != (self.grid.n,):
            raise ValueError("center has the wrong dimension")
        L = self.grid.extent
        if np.any(c - self.radius <= 0) or np.any(c + self.radius >= L):
            raise GateError(f"ball of radius {self.radius} at {tuple(c)} does not fit inside the box [0, {L})^n")

    def distance(self) -> np.ndarray:
        return np.sqrt(np.sum((self.grid.coords() - np.asarray(self.center)) ** 2, axis=1))

    def inside(self) -> np.ndarray:
        return self.distance() < self.radius

    def outside_mask(self) -> np.ndarray:
        """Fixed (Dirichlet) nodes for a local problem posed on the ball."""
        return ~self.inside()


def _ambient_values(u_local, c: float, embed: BallEmbedding | None) -> np.ndarray:
    if isinstance(u_local, ScalarField) and u_local.grid.periodic:
        if embed is not None and u_local.grid != embed.grid:
            raise ValueError("local field and embedding use different grids")
        out = u_local.values.copy()
        if embed is not None:
            out[~embed.inside()] = c
        return out
    if embed is None:
        raise ValueError("a radial local field needs an embedding into the ambient grid")
    if isinstance(u_local, ScalarField):
        if u_local.grid.extent > embed.radius * (1 + 1e-12):
            raise GateError("radial ball is larger than the embedded ball")
        s = u_local.grid.axis()
        vals = u_local.values
    else:
        raise TypeError("u_local must be a ScalarField")
    d = embed.distance()
    out = np.full(embed.grid.size, float(c))
    ins = d < s[-1]
    out[ins] = np.interp(d[ins], s, vals)
    return out


def build_sub_by_extension(u_local: ScalarField, c: float, embed: BallEmbedding | None = None) -> ScalarField:
    """u_- = u_1 on the ball and c outside, i.e. max(u_1, c) when u_1 >= c."""
    vals = _ambient_values(u_local, c, embed)
    grid = embed.grid if embed is not None else u_local.grid
    return ScalarField(grid, np.maximum(vals, c))


def build_super_by_extension(u_local: ScalarField, c: float, embed: BallEmbedding | None = None) -> ScalarField:
    """u_+ = u_2 on the ball and c outside, i.e. min(u_2, c) when u_2 <= c."""
    vals = _ambient_values(u_local, c, embed)
    grid = embed.grid if embed is not None else u_local.grid
    out = np.minimum(vals, c)
    if np.any(out <= 0):
        raise GateError("super-solution must stay positive")
    return ScalarField(grid, out)


def build_super_constant(lam: float, S, u_minus, p: float) -> float:
    """C = max((inf S / lambda)^(1/(p-2)), sup u_-), so S C >= lambda C^(p-1) at every node."""
    if lam >= 0:
        raise GateError("constant super-solution needs lambda < 0")
    Sv = np.asarray(S.values if isinstance(S, ScalarField) else S, float)
    um = np.asarray(u_minus.values if isinstance(u_minus, ScalarField) else u_minus, float)
    ratio = float(np.min(Sv)) / lam
    if ratio <= 0:
        raise GateError("inf S / lambda must be positive (S must be negative somewhere)")
    return max(ratio ** (1.0 / (p - 2.0)), float(np.max(um)))


def build_sub_eigen(phi: ScalarField, eta1: float, lam: float, u_plus, p: float) -> ScalarField:
    """u_- = delta phi with sup(delta phi) <= min(inf u_+, 1).

    The chain  eta1 (delta phi) <= lam (delta phi) <= lam (delta phi)^(p-1)
    needs eta1 <= lam <= 0 and delta phi <= 1.
    """
    if lam < eta1:
        raise GateError(f"lambda = {lam:.6g} is below eta1 = {eta1:.6g}; the sub-solution chain fails")
    if lam > 0:
        raise GateError("lambda must be <= 0")
    if np.any(phi.values < 0) or not np.any(phi.values > 0):
        raise GateError("eigenfunction must be positive")
    up = np.asarray(u_plus.values if isinstance(u_plus, ScalarField) else u_plus, float)
    cap = min(float(np.min(up)), 1.0)
    delta = cap / float(np.max(phi.values))
    return phi * delta


def scale_eigen_theta(phi: ScalarField, eta1: float, beta: float, lambda_beta: float, kappa: float,
                      p: float, shave: float = 0.9) -> tuple[float, ScalarField]:
    """theta with (eta1+beta) inf(theta phi) > 2^(p-2) (lambda_beta - kappa) sup(theta phi)^(p-1).

    theta^(p-2) < (eta1+beta) inf phi / (2^(p-2) (lambda_beta-kappa) sup phi^(p-1)); the bound on
    theta is shaved by 10%.  The strict inequality is rechecked with a 5% margin.
    """
    if eta1 + beta <= 0:
        raise GateError("eta1 + beta must be positive")
    mu = lambda_beta - kappa
    if mu <= 0:
        raise GateError("lambda_beta - kappa must be positive")
    lo = float(np.min(phi.values))
    hi = float(np.max(phi.values))
    if lo <= 0:
        raise GateError("eigenfunction must be strictly positive")
    bound = ((eta1 + beta) * lo / (2.0 ** (p - 2.0) * mu * hi ** (p - 1.0))) ** (1.0 / (p - 2.0))
    theta = shave * bound
    lhs = (eta1 + beta) * theta * lo
    rhs = 2.0 ** (p - 2.0) * mu * (theta * hi) ** (p - 1.0)
    if not lhs >= 1.05 * rhs:
        raise GateError(f"scaled eigenfunction misses the 5% margin ({lhs:.4g} vs {rhs:.4g})")
    return theta, phi * theta


def beta_prime(phi_scaled: ScalarField, eta1: float, beta: float, mu: float, p: float) -> float:
    """(eta1+beta) sup phi - 2^(p-2) mu inf phi^(p-1)."""
    v = phi_scaled.values
    return (eta1 + beta) * float(v.max()) - 2.0 ** (p - 2.0) * mu * float(v.min()) ** (p - 1.0)
