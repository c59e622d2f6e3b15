"""Global pipelines: local solve, sub/super construction, monotone iteration, continuation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..constants import conformal_exponents, sobolev_T
from ..elliptic import assemble, solve
from ..geometry import MetricField, ScalarField, lp_norm
from ..quotient import minimize_perturbed_quotient
from ..spectral import SpectralResult, first_eigenpair
from .builders import (BallEmbedding, build_sub_by_extension, build_sub_eigen, build_super_by_extension,
                       build_super_constant, scale_eigen_theta)
from .local import (LocalProblem, double_iteration_local, prop31_seed, select_lambda_negative_scalar,
                    select_lambda_positive_scalar, solve_local_variational)
from .monotone import (MonotoneProblem, monotone_iteration, newton_solve, pde_residual, verify_subsolution,
                       verify_supersolution)
from .partition import PartitionSpec, build_super_partition
from .trace import Certificate, GateError, IterationError, IterationTrace


@dataclass
class PipelineConfig:
    radius: float = 0.2
    center: tuple[float, ...] | None = None
    c: float | None = None
    tol: float = 1e-8
    local_tol: float = 1e-9
    max_iter: int = 20000
    lambda_iters: int = 800
    partition: PartitionSpec | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if d.get("center") is not None:
            d["center"] = tuple(float(x) for x in d["center"])
        if isinstance(d.get("partition"), dict):
            d["partition"] = PartitionSpec(**d["partition"])
        return cls(**d)


@dataclass
class GlobalResult:
    lam: float
    u: ScalarField
    eta1: float
    path: str
    residual: float
    trace: IterationTrace
    local_trace: IterationTrace | None
    certificates: dict[str, Certificate]
    info: dict = field(default_factory=dict)

    @property
    def sign_ok(self) -> bool:
        return np.sign(self.lam) == np.sign(self.eta1)

    @property
    def certificates_ok(self) -> bool:
        return all(c.ok for c in self.certificates.values())

    def summary(self) -> dict:
        return {"lambda": self.lam, "eta1": self.eta1, "path": self.path, "residual": self.residual,
                "sign_ok": bool(self.sign_ok), "min_u": self.u.min(), "max_u": self.u.max(),
                "certificates": {k: v.as_dict() for k, v in self.certificates.items()},
                "monotone_steps": self.trace.steps - 1, **self.info}


def _S(metric: MetricField) -> np.ndarray:
    return metric.scalar_curv


def conformal_eigen(metric: MetricField, shift: float = 0.0) -> SpectralResult:
    """First eigenpair of -a Delta + S_g + shift on the closed grid."""
    a, _ = conformal_exponents(metric.grid.n)
    return first_eigenpair(assemble(metric, a, _S(metric) + shift), metric)


def _ball(metric: MetricField, cfg: PipelineConfig, pick) -> BallEmbedding:
    grid = metric.grid
    if cfg.center is not None:
        return BallEmbedding(grid, cfg.center, cfg.radius)
    S = _S(metric)
    best = S[int(pick(S))]
    x = grid.coords()
    mid = np.full(grid.n, grid.extent / 2)
    # among (near-)extremal nodes prefer the one nearest the box center, then pull the ball inside
    cand = np.nonzero(np.abs(S - best) <= 1e-12 * max(abs(best), 1.0))[0]
    k = cand[np.argmin(np.sum((x[cand] - mid) ** 2, axis=1))]
    margin = cfg.radius + grid.h
    center = np.clip(x[k], margin, grid.extent - margin)
    return BallEmbedding(grid, tuple(float(c) for c in center), cfg.radius)


def solve_global_negative(metric: MetricField, beta: float = 0.0, cfg: PipelineConfig | None = None) -> GlobalResult:
    """eta1 < 0: local double iteration, extension sub/super pair, monotone iteration.

    S + beta < 0 everywhere takes the constant super-solution route; a
    sign-changing S takes the eigenfunction sub-solution route with a local
    super-solution on a ball where S > 0.
    """
    cfg = cfg or PipelineConfig()
    if beta > 0:
        raise GateError("beta must be <= 0")
    a, p = conformal_exponents(metric.grid.n)
    m = p - 1.0
    h = _S(metric) + beta
    eig = conformal_eigen(metric)
    if eig.eigenvalue >= 0:
        raise GateError(f"[spectral] eta1 = {eig.eigenvalue:.6g} is not negative")
    certs: dict[str, Certificate] = {}
    if np.all(h < 0):
        path = "negative-scalar" if beta == 0 else "negative-scalar-beta"
        embed = _ball(metric, cfg, np.argmin)
        mask = embed.outside_mask()
        c = 1.0 if cfg.c is None else cfg.c
        f0 = prop31_seed(metric, a, c, mask)
        u0, _ = solve(assemble(metric, a, a, mask=mask), f0, c, tol=1e-13)
        C_Mn = u0.max()
        inside = embed.inside()
        lam = select_lambda_negative_scalar(C_Mn, float(np.min(-h[inside])), p)
        prob = LocalProblem(metric, a, p, lam, beta, c, f0, S=_S(metric), mask=mask)
        u1, ltrace = double_iteration_local(prob, cfg.local_tol, case="negative")
        u_minus = build_sub_by_extension(u1, c, embed)
        C = build_super_constant(lam, h, u_minus, p)
        u_plus = ScalarField.constant(metric.grid, C)
        info = {"C_Mn": C_Mn, "super_constant": C, "c": c}
    else:
        path = "sign-changing"
        embed = _ball(metric, cfg, np.argmax)
        mask = embed.outside_mask()
        inside = embed.inside()
        if np.any(h[inside] <= 0) or np.any(h[inside] > a / 2):
            raise GateError("[local] the ball must carry 0 < S + beta <= a/2")
        eig_h = first_eigenpair(assemble(metric, a, h), metric) if beta != 0 else eig
        eta = eig_h.eigenvalue
        if eta >= 0:
            raise GateError(f"[spectral] eta1 + beta = {eta:.6g} is not negative")
        # smallest c whose band midpoint lambda stays >= eta, with a 10% cushion
        c_min = ((3.0 * a / 8.0) / abs(eta)) ** (1.0 / (p - 2.0))
        c = 1.1 * c_min if cfg.c is None else cfg.c
        lam = select_lambda_positive_scalar(c, a, p)
        if np.any(h < lam * c ** (p - 2.0)):
            raise GateError("[global] S + beta >= lambda c^(p-2) fails outside the ball")
        prob = LocalProblem(metric, a, p, lam, beta, c, ScalarField.constant(metric.grid, 0.0),
                            S=_S(metric), mask=mask)
        u2, ltrace = double_iteration_local(prob, cfg.local_tol, case="positive")
        u_plus = build_super_by_extension(u2, c, embed)
        u_minus = build_sub_eigen(eig_h.eigenfunction, eta, lam, u_plus, p)
        info = {"c": c, "eta1_beta": eta}
    certs["sub"] = verify_subsolution(u_minus, metric, a, h, lam, m)
    certs["super"] = verify_supersolution(u_plus, metric, a, h, lam, m)
    if not (certs["sub"].ok and certs["super"].ok):
        bad = [k for k, v in certs.items() if not v.ok]
        raise GateError(f"[certificate] {', '.join(bad)} certificate failed: "
                        + "; ".join(f"{k} margin {certs[k].margin:.3e}" for k in bad))
    mp = MonotoneProblem(metric, a, h, lam, m, u_minus, u_plus)
    u, trace = monotone_iteration(mp, cfg.tol, cfg.max_iter)
    res = pde_residual(metric, a, h, lam, m, u)
    info.update({"ball_center": list(embed.center), "ball_radius": embed.radius})
    return GlobalResult(lam, u, eig.eigenvalue, path, res, trace, ltrace, certs, info)


SANDWICH = "sandwich"
VARIATIONAL = "variational"


def variational_solution(metric: MetricField, beta: float, mu: float, tol: float = 1e-9,
                         iters: int = 800) -> tuple[ScalarField, float, IterationTrace]:
    """Scaled minimizer of the perturbed quotient, polished by Newton.

    A minimizer w of Q_beta satisfies -a Delta w + (S + beta) w = Q N^(2/p-1) |w|^(p-2) w;
    t w with t^(p-2) = Q N^(2/p-1) / mu then solves the equation with mu u^(p-1).
    """
    a, p = conformal_exponents(metric.grid.n)
    h = _S(metric) + beta
    qm = minimize_perturbed_quotient(metric, beta, iters=iters)
    w = np.abs(qm.field.values)
    op = assemble(metric, a, h)
    N = float(np.sum(op.mass * w ** p))
    t = (qm.value * N ** (2.0 / p - 1.0) / mu) ** (1.0 / (p - 2.0))
    u, trace = newton_solve(metric, a, h, mu, p - 1.0, t * w, tol=tol)
    trace.extra.update({"lambda_beta": qm.value, "scale": t})
    return u, qm.value, trace


def solve_perturbed_positive(metric: MetricField, beta: float, kappa: float, cfg: PipelineConfig | None = None,
                             lambda_beta: float | None = None, eig: SpectralResult | None = None,
                             allow_zero_beta: bool = False, fallback: str | None = None) -> GlobalResult:
    """eta1 > 0: -a Delta u + (S + beta) u = (lambda_beta - kappa) u^(p-1).

    Sub-solution: positive local Dirichlet solution on a ball where S < 0,
    extended by zero.  Super-solution: scaled first eigenfunction, glued to
    the local solution by the partition construction when they cross.

    When the sandwich cannot be built or certified, a GateError names the
    failing stage.  With ``fallback="variational"`` the solve continues from
    the scaled quotient minimizer instead (path ``perturbed-positive-variational``);
    the failed certificates and the reason stay in the result.
    """
    cfg = cfg or PipelineConfig()
    if fallback not in (None, VARIATIONAL):
        raise ValueError(f"unknown fallback {fallback!r}")
    if beta > 0 or (beta == 0 and not allow_zero_beta):
        raise GateError("beta must be negative")
    if kappa <= 0:
        raise GateError("kappa must be positive")
    a, p = conformal_exponents(metric.grid.n)
    m = p - 1.0
    S = _S(metric)
    if not np.any(S < 0):
        raise GateError("[gate] S must be negative somewhere")
    eig = eig or conformal_eigen(metric)
    eta1 = eig.eigenvalue
    if eta1 <= 0:
        raise GateError(f"[gate] eta1 = {eta1:.6g} is not positive")
    if eta1 + beta <= 0:
        raise GateError(f"[gate] eta1 + beta = {eta1 + beta:.6g} is not positive")
    t0 = time.time()
    if lambda_beta is None:
        lambda_beta = minimize_perturbed_quotient(metric, beta, iters=cfg.lambda_iters).value
    if lambda_beta - kappa <= 0:
        raise GateError(f"[gate] lambda_beta - kappa = {lambda_beta - kappa:.6g} is not positive")
    mu = lambda_beta - kappa
    h = S + beta
    embed = _ball(metric, cfg, np.argmin)
    mask = embed.outside_mask()
    info = {"lambda_beta": lambda_beta, "kappa": kappa, "beta": beta,
            "ball_center": list(embed.center), "ball_radius": embed.radius}
    certs: dict[str, Certificate] = {}
    local_trace = None
    try:
        loc = solve_local_variational(metric, a, S, beta, mu, mask=mask, tol=min(cfg.local_tol, 1e-10))
        local_trace = loc.trace
        info.update({"local_quotient": loc.quotient, "local_level": loc.level.level, "K0": loc.level.K0,
                     "local_residual": loc.residual, "u3_max": loc.u3.max()})
        u_minus = loc.u3
        certs["sub"] = verify_subsolution(u_minus, metric, a, h, mu, m)
        theta, phi_t = scale_eigen_theta(eig.eigenfunction, eta1, beta, lambda_beta, kappa, p)
        info.update({"theta": theta, "phi_max": phi_t.max()})
        part = build_super_partition(loc.u3, phi_t, cfg.partition, metric, beta=beta, mu=mu, eta1=eta1,
                                     inside=embed.inside())
        info["partition_branch"] = part.branch
        info.update({f"partition_{k}": v for k, v in part.info.items() if np.isscalar(v)})
        certs["super"] = part.certificate
        bad = [k for k, v in certs.items() if not v.ok]
        if bad:
            detail = "; ".join(f"{k} margin {certs[k].margin:.3e}" for k in bad)
            if "super" in bad and certs["super"].regions:
                worst = min(certs["super"].regions.items(), key=lambda kv: kv[1])
                detail += f" (worst region {worst[0]}: {worst[1]:.3e})"
            raise GateError(f"[certificate] {', '.join(bad)} certificate failed: {detail}")
        mp = MonotoneProblem(metric, a, h, mu, m, u_minus, part.field)
        u, trace = monotone_iteration(mp, cfg.tol, cfg.max_iter)
        path = "perturbed-positive"
        info["method"] = SANDWICH
    except (GateError, IterationError) as exc:
        if fallback is None:
            raise
        info.update({"method": VARIATIONAL, "sandwich_failure": str(exc)})
        u, _, trace = variational_solution(metric, beta, mu, tol=min(cfg.tol, 1e-9), iters=cfg.lambda_iters)
        path = "perturbed-positive-variational"
    res = pde_residual(metric, a, h, mu, m, u)
    info["seconds"] = time.time() - t0
    return GlobalResult(mu, u, eta1, path, res, trace, local_trace, certs, info)


def geometric_schedule(beta0: float, steps: int) -> list[float]:
    """beta0, beta0/2, ..., and a final 0."""
    if beta0 >= 0:
        raise ValueError("beta0 must be negative")
    if steps < 2:
        raise ValueError("need at least two steps")
    return [beta0 / 2 ** j for j in range(steps - 1)] + [0.0]


def contraction_factor(lambda_beta: float, kappa: float, n: int, eps: float = 0.05, delta: float = 0.05) -> float:
    """(1+eps) ((lambda_beta - kappa)/aT) ((1+delta)^2/(1+2 delta))."""
    a, _ = conformal_exponents(n)
    return (1 + eps) * (lambda_beta - kappa) / (a * sobolev_T(n)) * (1 + delta) ** 2 / (1 + 2 * delta)


def rescaled_lp_norm(metric: MetricField, u: ScalarField, gamma: float) -> float:
    """||u~||_p for g -> gamma g with the solution scaled as u~ = gamma^(-1/(p-2)) u.

    Evaluated on the dilated grid (side sqrt(gamma) L); the equation for u~
    carries S/gamma and beta/gamma with the same constant on u^(p-1).
    """
    from ..geometry import GridSpec
    n = metric.grid.n
    _, p = conformal_exponents(n)
    g = metric.grid
    big = GridSpec(g.kind, n, g.extent * np.sqrt(gamma), g.m)
    met = MetricField(big, metric.inv_metric, metric.vol_density, metric.scalar_curv / gamma)
    return lp_norm(ScalarField(big, gamma ** (-1.0 / (p - 2.0)) * u.values), met, p)


@dataclass
class ContinuationStep:
    beta: float
    lambda_beta: float
    lam_used: float
    lp_norm: float
    lp_norm_rescaled: float
    h1_norm: float
    contraction: float
    residual: float
    steps: int
    method: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def beta_continuation(metric: MetricField, beta0: float, steps: int, kappa: float,
                      cfg: PipelineConfig | None = None, rescale_gamma: float = 0.5,
                      schedule: list[float] | None = None,
                      fallback: str | None = VARIATIONAL) -> tuple[float, ScalarField, list[ContinuationStep]]:
    """Solve the perturbed problem along beta_j -> 0 and monitor the uniform bounds.

    Each step records lambda_beta, ||u||_p (and the same norm after a metric
    rescale), an H1 surrogate, the contraction factor and how the step was
    solved.  A step with ||u||_p < 1 aborts the run.
    """
    cfg = cfg or PipelineConfig()
    a, p = conformal_exponents(metric.grid.n)
    betas = schedule or geometric_schedule(beta0, steps)
    eig = conformal_eigen(metric)
    diags: list[ContinuationStep] = []
    u = None
    lam = float("nan")
    for j, b in enumerate(betas):
        try:
            res = solve_perturbed_positive(metric, b, kappa, cfg, eig=eig, allow_zero_beta=(b == 0.0),
                                           fallback=fallback)
        except (GateError, IterationError) as exc:
            raise IterationError(f"continuation step {j} (beta = {b}) failed: {exc}", stage="continuation")
        u = res.u
        lam = res.lam
        lb = res.info["lambda_beta"]
        nrm = lp_norm(u, metric, p)
        op = assemble(metric, a, 0.0)
        h1 = float(np.sqrt(a * u.values @ (op.stiffness @ u.values) + np.sum(op.mass * u.values ** 2)))
        step = ContinuationStep(b, lb, lam, nrm, rescaled_lp_norm(metric, u, rescale_gamma), h1,
                                contraction_factor(lb, kappa, metric.grid.n), res.residual,
                                res.trace.steps - 1, res.info["method"])
        diags.append(step)
        if nrm < 1 - 1e-8:
            raise IterationError(f"||u_beta||_p = {nrm:.10f} < 1 at step {j}", stage="continuation")
    return lam, u, diags
