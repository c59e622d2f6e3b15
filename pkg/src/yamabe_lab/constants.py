"""Sobolev-type constants of R^n and the Gamma/Beta identities tied to them.

All radial integrals are of the form  int_0^inf s^(n-1) f(s) ds  and are
evaluated twice: once in closed form through Beta functions and once by
adaptive quadrature after the substitution s = tan(theta).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Callable

import numpy as np
from scipy import integrate, special


class DivergentIntegralError(ValueError):
    """Raised when a radial integrand does not decay fast enough at infinity."""


class QuadratureError(RuntimeError):
    pass


def conformal_exponents(n: int) -> tuple[float, float]:
    """Return (a, p) = (4(n-1)/(n-2), 2n/(n-2))."""
    if n < 3:
        raise ValueError(f"dimension must be >= 3, got {n}")
    return 4.0 * (n - 1) / (n - 2), 2.0 * n / (n - 2)


def sphere_area(n: int) -> float:
    """Area of the unit (n-1)-sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def sphere_area_recursive(n: int) -> float:
    # omega_1 = 2, omega_2 = 2 pi, omega_{n+2} = 2 pi omega_n / n
    w = {1: 2.0, 2: 2.0 * math.pi}
    for k in range(3, n + 1):
        w[k] = 2.0 * math.pi * w[k - 2] / (k - 2)
    return w[n]


def sobolev_T(n: int) -> float:
    """Best constant T = pi n (n-2) (Gamma(n/2)/Gamma(n))^(2/n)."""
    return math.pi * n * (n - 2) * (math.gamma(n / 2) / math.gamma(n)) ** (2.0 / n)


def radial_beta(n: int, power: float, decay: float) -> float:
    """Closed form of int_{R^n} |y|^power (1+|y|^2)^(-decay) dy."""
    x = (n + power) / 2.0
    y = decay - x
    if x <= 0 or y <= 0:
        raise DivergentIntegralError(
            f"int |y|^{power} (1+|y|^2)^-{decay} diverges in dimension {n}")
    return sphere_area(n) * 0.5 * special.beta(x, y)


def improper_radial_quadrature(f: Callable[[np.ndarray], np.ndarray], n: int,
                               rtol: float = 1e-10, with_area: bool = False) -> float:
    """int_0^inf s^(n-1) f(s) ds via s = tan(theta) and adaptive Gauss-Kronrod.

    The integrand must decay faster than s^-1 relative to ds; the decay rate is
    probed at large s and a DivergentIntegralError is raised otherwise.
    """
    s_big = np.array([1e6, 1e7])
    tail = s_big ** (n - 1) * np.abs(f(s_big))
    if tail[0] > 0:
        if tail[1] == 0 or not np.isfinite(tail[1]):
            rate = np.inf if tail[1] == 0 else 0.0
        else:
            rate = -np.log10(tail[1] / tail[0])
        if rate <= 1.0 + 1e-3:
            raise DivergentIntegralError(
                f"radial integrand decays like s^-{rate:.3f}; not integrable at infinity")

    def g(theta):
        s = math.tan(theta)
        c = math.cos(theta)
        return s ** (n - 1) * float(f(np.array(s))) / (c * c)

    prev = None
    limit = 100
    for _ in range(6):
        val, _err = integrate.quad(g, 0.0, math.pi / 2, limit=limit,
                                   epsabs=0.0, epsrel=rtol * 1e-2)
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            break
        prev = val
        limit *= 2
    else:
        raise QuadratureError("tangent-substitution quadrature did not settle")
    return val * sphere_area(n) if with_area else val


def _k_quadratures(n: int) -> tuple[float, float, float | None]:
    w = sphere_area(n)
    p = 2.0 * n / (n - 2)
    m2 = improper_radial_quadrature(lambda s: s * s / (1 + s * s) ** n, n) * w
    i0 = improper_radial_quadrature(lambda s: (1 + s * s) ** (-float(n)), n) * w
    k1 = (n - 2) ** 2 * m2
    k2 = i0 ** (2.0 / p)
    k3 = None
    if n >= 5:
        k3 = improper_radial_quadrature(lambda s: (1 + s * s) ** (2.0 - n), n) * w
    return k1, k2, k3


@dataclass(frozen=True)
class ConstantsTable:
    n: int
    a: float
    p: float
    T: float
    K1: float
    K2: float
    K3: float | None
    omega_n: float
    K1_closed: float
    K2_closed: float
    K3_closed: float | None

    @property
    def ratio_residual(self) -> float:
        """|T - K1/K2| / T with K1, K2 from quadrature."""
        return abs(self.T - self.K1 / self.K2) / self.T

    def as_dict(self) -> dict:
        return asdict(self)


def constants_for(n: int) -> ConstantsTable:
    a, p = conformal_exponents(n)
    w = sphere_area(n)
    k1, k2, k3 = _k_quadratures(n)
    k1c = (n - 2) ** 2 * radial_beta(n, 2, n)
    k2c = radial_beta(n, 0, n) ** (2.0 / p)
    k3c = radial_beta(n, 0, n - 2) if n >= 5 else None
    return ConstantsTable(n=n, a=a, p=p, T=sobolev_T(n), K1=k1, K2=k2, K3=k3,
                          omega_n=w, K1_closed=k1c, K2_closed=k2c, K3_closed=k3c)


def moment_ratio_check(n: int) -> float:
    """|lhs/rhs - 1| for int|y|^2(1+|y|^2)^-n = c_n int(1+|y|^2)^(2-n)."""
    if n < 5:
        raise ValueError("moment identity needs n >= 5")
    coef = moment_coefficient(n)
    lhs = improper_radial_quadrature(lambda s: s * s / (1 + s * s) ** n, n)
    rhs = improper_radial_quadrature(lambda s: (1 + s * s) ** (2.0 - n), n)
    return abs(lhs / (coef * rhs) - 1.0)


def moment_coefficient(n: int) -> float:
    return n * (n - 4) / (4.0 * (n - 1) * (n - 2))


def closure_identity_check(n: int) -> float:
    """|(n-2) - T K2^(-2/(n-2)) / n| with K2 from quadrature."""
    if n < 5:
        raise ValueError("closure identity is stated for n >= 5")
    _, k2, _ = _k_quadratures(n)
    return abs((n - 2) - sobolev_T(n) * k2 ** (-2.0 / (n - 2)) / n)


def legendre_duplication_residual(z: float) -> float:
    lhs = math.gamma(z + 0.5) * math.gamma(z)
    rhs = 2.0 ** (1 - 2 * z) * math.sqrt(math.pi) * math.gamma(2 * z)
    return abs(lhs / rhs - 1.0)


def sphere_yamabe_invariant(n: int) -> float:
    """lambda(S^n) = n(n-1) Vol(S^n)^(2/n)."""
    return n * (n - 1) * sphere_area(n + 1) ** (2.0 / n)
