"""Command line front end: config parsing, subcommands, manifests and artifacts.

Configs are flat JSON objects with dotted keys (``grid.m``, ``curvature.kind``);
nested objects are flattened on load and a previously written ``manifest.json``
is accepted as a config.  Command-line flags override config values.

Exit status: 0 on success, 1 when a gate, certificate or acceptance check
fails, 2 on configuration errors.
"""
from __future__ import annotations

import json
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np
import scipy

from . import __version__
from .constants import closure_identity_check, conformal_exponents, constants_for, moment_ratio_check
from .elliptic import assemble
from .geometry import (PERIODIC, RADIAL, CurvatureSpec, MetricField, ScalarField, build_periodic_grid,
                       build_radial_grid, synthesize_normal_metric)
from .io import to_jsonable, write_fields, write_json, write_table
from .iterate.local import (LocalProblem, double_iteration_local, prop31_seed, select_lambda_negative_scalar,
                            select_lambda_positive_scalar)
from .iterate.pipelines import (VARIATIONAL, PipelineConfig, beta_continuation, conformal_eigen,
                                geometric_schedule, solve_global_negative, solve_perturbed_positive)
from .iterate.trace import GateError, IterationError
from .prescribe import NEGATIVE, POSITIVE, BumpSpec, PrescribeError, flip_curvature_negative, \
    flip_curvature_positive
from .quotient import NormalizationError, quotient_scan
from .spectral import first_eigenpair

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

SUBCOMMANDS = ("constants", "quotient-scan", "eigen", "local-solve", "global-solve", "continuation", "prescribe")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


# ---------------------------------------------------------------- schema

@dataclass(frozen=True)
class Key:
    kind: str                      # int | float | str | floats | ints
    default: Any = None
    choices: tuple | None = None
    positive: bool = False


_GRID = {
    "grid.kind": Key("str", PERIODIC, (PERIODIC, RADIAL)),
    "grid.n": Key("int", 3, positive=True),
    "grid.extent": Key("float", 1.0, positive=True),
    "grid.m": Key("int", 33, positive=True),
}
_CURV = {
    "curvature.kind": Key("str", "constant", ("constant", "well", "bump", "normal")),
    "curvature.value": Key("float", -1.0),
    "curvature.amplitude": Key("float", 0.0),
    "curvature.width": Key("float", 0.1, positive=True),
    "curvature.center": Key("floats"),
    "curvature.ricci": Key("floats"),
}
_PIPE = {
    "pipeline.radius": Key("float", 0.2, positive=True),
    "pipeline.center": Key("floats"),
    "pipeline.max_iter": Key("int", 20000, positive=True),
    "pipeline.lambda_iters": Key("int", 800, positive=True),
    "pipeline.fallback": Key("str", "none", ("none", VARIATIONAL)),
}
_COMMON = {"out": Key("str", "out"), "tol": Key("float", 1e-8, positive=True), "seed": Key("int", 0)}

SCHEMA: dict[str, dict[str, Key]] = {
    "constants": {**_COMMON, "n": Key("ints", [3, 4, 5, 6, 7, 8])},
    "quotient-scan": {**_COMMON, "n": Key("int", 5), "r": Key("float", 0.1, positive=True),
                      "beta": Key("float", -1.0), "S0": Key("float", -1.0),
                      "eps": Key("floats", [1e-4, 2e-4, 4e-4]),
                      "volume_correction": Key("int", 1, (0, 1))},
    "eigen": {**_COMMON, **_GRID, **_CURV, "shift": Key("float", 0.0)},
    "local-solve": {**_COMMON, **_GRID, **_CURV, "grid.kind": Key("str", RADIAL, (PERIODIC, RADIAL)),
                    "grid.extent": Key("float", 0.5, positive=True), "grid.m": Key("int", 201, positive=True),
                    "case": Key("str", "negative", ("negative", "positive")),
                    "c": Key("float", 1.0, positive=True), "beta": Key("float", 0.0), "lambda": Key("float"),
                    "max_iter": Key("int", 500, positive=True)},
    "global-solve": {**_COMMON, **_GRID, **_CURV, **_PIPE, "beta": Key("float", 0.0), "kappa": Key("float", 2.0)},
    "continuation": {**_COMMON, **_GRID, **_CURV, **_PIPE,
                     "curvature.kind": Key("str", "well", ("constant", "well", "bump", "normal")),
                     "curvature.value": Key("float", 50.0), "curvature.amplitude": Key("float", -800.0),
                     "pipeline.radius": Key("float", 0.25, positive=True),
                     "pipeline.fallback": Key("str", VARIATIONAL, ("none", VARIATIONAL)),
                     "kappa": Key("float", 2.0, positive=True),
                     "schedule.beta0": Key("float", -0.2), "schedule.steps": Key("int", 4, positive=True),
                     "schedule.rescale_gamma": Key("float", 0.5, positive=True)},
    "prescribe": {**_COMMON, **_GRID, **_CURV, "grid.m": Key("int", 32, positive=True),
                  "curvature.value": Key("float", 0.5),
                  "sign": Key("str", NEGATIVE, (NEGATIVE, POSITIVE)), "C": Key("float", 2.0),
                  "r": Key("float", 0.45, positive=True), "center": Key("floats"),
                  "max_halvings": Key("int", 5)},
}


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(name: str, key: Key, v) -> tuple[Any, str | None]:
    try:
        if v is None:
            return None, None
        if key.kind == "int":
            if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                raise TypeError
            v = int(v)
        elif key.kind == "float":
            if isinstance(v, bool):
                raise TypeError
            v = float(v)
        elif key.kind == "str":
            if not isinstance(v, str):
                raise TypeError
        elif key.kind in ("floats", "ints"):
            if not isinstance(v, (list, tuple)):
                raise TypeError
            v = [int(x) if key.kind == "ints" else float(x) for x in v]
    except (TypeError, ValueError):
        return None, f"{name}: expected {key.kind}, got {v!r}"
    if key.choices is not None and v not in key.choices:
        return None, f"{name}: {v!r} is not one of {list(key.choices)}"
    if key.positive and v <= 0:
        return None, f"{name}: must be positive, got {v!r}"
    return v, None


@dataclass
class RunConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, k):
        return self.values[k]

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, **to_jsonable(self.values)}

    @classmethod
    def build(cls, subcommand: str, *layers: dict) -> "RunConfig":
        """Merge layers (later wins), validate every key, and report all problems together."""
        if subcommand not in SCHEMA:
            raise ConfigError([f"unknown subcommand {subcommand!r}"])
        schema = SCHEMA[subcommand]
        merged: dict = {}
        for layer in layers:
            merged.update({k: v for k, v in flatten(layer).items() if v is not None})
        errors = []
        sub = merged.pop("subcommand", subcommand)
        if sub != subcommand:
            errors.append(f"subcommand: config is for {sub!r}, not {subcommand!r}")
        values = {}
        for k in sorted(set(merged) - set(schema)):
            errors.append(f"{k}: unknown key for {subcommand}")
        for k, key in schema.items():
            v, err = _coerce(k, key, merged.get(k, key.default))
            if err:
                errors.append(err)
                v = key.default     # keep checking the rest against a well-typed value
            values[k] = v
        errors.extend(_cross_checks(subcommand, values))
        if errors:
            raise ConfigError(errors)
        return cls(subcommand, values)


def _cross_checks(sub: str, v: dict) -> list[str]:
    errs = []
    if "grid.n" in v:
        n = v["grid.n"]
        if n < 3:
            errs.append(f"grid.n: dimension must be >= 3, got {n}")
        for k in ("curvature.center", "pipeline.center", "center"):
            if v.get(k) is not None and v.get("grid.kind") == PERIODIC and len(v[k]) != n:
                errs.append(f"{k}: needs {n} coordinates, got {len(v[k])}")
        if v.get("curvature.kind") == "normal":
            rc = v.get("curvature.ricci")
            if rc is None or len(rc) != n:
                errs.append(f"curvature.ricci: normal metrics need {n} diagonal Ricci entries")
        elif v.get("grid.kind") == RADIAL and v.get("curvature.kind") != "constant":
            errs.append("curvature.kind: radial grids support 'constant' and 'normal' only")
    if sub == "constants" and any(n < 3 for n in v["n"]):
        errs.append("n: dimensions must be >= 3")
    if sub == "quotient-scan":
        if v["n"] < 3:
            errs.append("n: dimension must be >= 3")
        if v["beta"] >= 0:
            errs.append("beta: the scan needs beta < 0")
        if len(v["eps"]) < 3 or any(e <= 0 for e in v["eps"]):
            errs.append("eps: need at least three positive values")
    if sub == "continuation":
        if v["schedule.beta0"] >= 0:
            errs.append("schedule.beta0: must be negative")
        if v["schedule.steps"] < 2:
            errs.append("schedule.steps: need at least two steps")
    if sub in ("continuation", "global-solve", "prescribe") and v["grid.kind"] != PERIODIC:
        errs.append(f"grid.kind: {sub} runs on periodic grids")
    if sub == "prescribe" and v["C"] <= 1:
        errs.append("C: bump depth must exceed 1")
    return errs


def load_config_file(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"])
    if not isinstance(data, dict):
        raise ConfigError(["config: top level must be an object"])
    if "config" in data and "versions" in data:
        data = data["config"]
    return data


# ---------------------------------------------------------------- problem setup

def make_metric(cfg: RunConfig) -> MetricField:
    v = cfg.values
    n, L, m = v["grid.n"], v["grid.extent"], v["grid.m"]
    grid = build_periodic_grid(n, L, m) if v["grid.kind"] == PERIODIC else build_radial_grid(n, L, m)
    kind = v["curvature.kind"]
    if kind == "normal":
        ricci = v["curvature.ricci"]
        return synthesize_normal_metric(grid, CurvatureSpec(float(sum(ricci)), tuple(ricci)))
    base = v["curvature.value"]
    if kind == "constant":
        return MetricField.flat(grid).with_scalar_curvature(base)
    x = grid.coords()
    c = np.asarray(v["curvature.center"] if v["curvature.center"] is not None else [L / 2] * n, float)
    rho2 = np.sum((x - c) ** 2, axis=1) / v["curvature.width"] ** 2
    if kind == "well":
        prof = np.exp(-rho2 / 2.0)
    else:
        prof = np.zeros(grid.size)
        inside = rho2 < 1
        prof[inside] = np.exp(1.0 - 1.0 / (1.0 - rho2[inside]))
    return MetricField.flat(grid).with_scalar_curvature(base + v["curvature.amplitude"] * prof)


def pipeline_config(cfg: RunConfig) -> PipelineConfig:
    v = cfg.values
    return PipelineConfig(radius=v["pipeline.radius"], center=v["pipeline.center"], tol=v["tol"],
                          max_iter=v["pipeline.max_iter"], lambda_iters=v["pipeline.lambda_iters"])


def _fallback(cfg: RunConfig):
    return None if cfg["pipeline.fallback"] == "none" else cfg["pipeline.fallback"]


# ---------------------------------------------------------------- runners

@dataclass
class Outcome:
    reports: dict
    failures: list[str]
    lines: list[str]


def _trace_rows(trace):
    return [(k, r, lo, hi, int(mo)) for k, (r, lo, hi, mo) in
            enumerate(zip(trace.residuals, trace.mins, trace.maxs, trace.monotone))]


TRACE_HEADER = ["step", "residual", "min", "max", "monotone"]


def run_constants(cfg: RunConfig, out: Path) -> Outcome:
    rows, lines = [], []
    for n in cfg["n"]:
        t = constants_for(n)
        ratio = t.ratio_residual
        closure = closure_identity_check(n) if n >= 5 else float("nan")
        moment = moment_ratio_check(n) if n >= 5 else float("nan")
        K3 = t.K3 if t.K3 is not None else float("nan")
        rows.append((n, t.a, t.p, t.T, t.K1, t.K2, K3, t.omega_n, ratio, closure, moment))
        lines.append(f"n={n} T={t.T!r} ratio_residual={ratio!r}")
    header = ["n", "a", "p", "T", "K1", "K2", "K3", "omega_n", "ratio_residual", "closure_residual",
              "moment_residual"]
    write_table(out / "constants.csv", header, rows)
    table = [dict(zip(header, r)) for r in rows]
    fails = [f"n={r[0]}: ratio residual {r[8]:.3e} > 1e-8" for r in rows if r[0] >= 4 and r[8] > 1e-8]
    return Outcome({"constants": table}, fails, lines)


def run_quotient_scan(cfg: RunConfig, out: Path) -> Outcome:
    n = cfg["n"]
    try:
        rep = quotient_scan(n, cfg["r"], cfg["beta"], CurvatureSpec.isotropic(n, cfg["S0"]), cfg["eps"],
                            volume_correction=bool(cfg["volume_correction"]))
    except NormalizationError as exc:
        raise GateError(str(exc))
    write_table(out / "quotient_scan.csv", ["epsilon", "Q", "T", "margin"], rep.rows())
    summ = rep.summary()
    write_json(out / "summary.json", summ)
    lines = [f"epsilon={e!r} Q={q!r} margin={g!r}" for e, q, _, g in rep.rows()]
    lines.append(f"slope={summ['slope']}")
    fails = []
    if not rep.below_T:
        fails.append(f"Q >= T for some epsilon (min margin {rep.margin:.4e})")
    if not rep.slope.get("ok", False):
        fails.append("fitted slope check failed")
    return Outcome({"quotient_scan": summ, "rows": rep.rows()}, fails, lines)


def run_eigen(cfg: RunConfig, out: Path) -> Outcome:
    metric = make_metric(cfg)
    a, _ = conformal_exponents(metric.grid.n)
    op = assemble(metric, a, metric.scalar_curv + cfg["shift"])
    res = first_eigenpair(op, metric, tol=min(cfg["tol"], 1e-10))
    write_fields(out / "eigenfunction.csv", {"phi": res.eigenfunction})
    summ = res.as_dict()
    write_json(out / "summary.json", summ)
    return Outcome({"eigen": summ}, [], [f"eta1={res.eigenvalue!r} sign={res.sign}"])


def run_local_solve(cfg: RunConfig, out: Path) -> Outcome:
    metric = make_metric(cfg)
    grid = metric.grid
    n = grid.n
    a, p = conformal_exponents(n)
    c, case = cfg["c"], cfg["case"]
    mask = None
    if grid.periodic:
        from .iterate.builders import BallEmbedding
        emb = BallEmbedding(grid, tuple([grid.extent / 2] * n), grid.extent / 4)
        mask = emb.outside_mask()
    lam = cfg["lambda"]
    if case == "negative":
        f0 = prop31_seed(metric, a, c, mask=mask)
        if lam is None:
            from .elliptic import solve
            u0, _ = solve(assemble(metric, a, a, mask=mask), f0, c, method="direct")
            inf_neg = float(np.max(-metric.scalar_curv))
            lam = select_lambda_negative_scalar(float(u0.max()), inf_neg, p)
    else:
        f0 = ScalarField.constant(grid, 0.0)
        if lam is None:
            lam = select_lambda_positive_scalar(c, a, p)
    prob = LocalProblem(metric, a, p, lam, cfg["beta"], c, f0, mask=mask)
    u, trace = double_iteration_local(prob, tol=cfg["tol"], max_iter=cfg["max_iter"], case=case)
    write_fields(out / "solution.csv", {"u": u})
    write_table(out / "trace.csv", TRACE_HEADER, _trace_rows(trace))
    summ = {"lambda": lam, "case": case, "c": c, **trace.summary(), **{k: v for k, v in trace.extra.items()}}
    write_json(out / "summary.json", summ)
    fails = []
    if trace.final_residual > cfg["tol"]:
        fails.append(f"residual {trace.final_residual:.3e} above tolerance")
    if case == "positive" and not trace.extra.get("in_band", False):
        fails.append("iterates left [0, c]")
    if case == "negative" and not trace.extra.get("min_at_boundary", False):
        fails.append("minimum is not attained on the boundary")
    return Outcome({"local": summ}, fails, [f"lambda={lam!r} residual={trace.final_residual!r} "
                                            f"min={u.min()!r} max={u.max()!r}"])


def run_global_solve(cfg: RunConfig, out: Path) -> Outcome:
    metric = make_metric(cfg)
    pc = pipeline_config(cfg)
    eig = conformal_eigen(metric)
    if eig.eigenvalue < 0:
        res = solve_global_negative(metric, cfg["beta"], pc)
    else:
        res = solve_perturbed_positive(metric, cfg["beta"], cfg["kappa"], pc, eig=eig, fallback=_fallback(cfg))
    write_fields(out / "solution.csv", {"u": res.u})
    write_table(out / "trace.csv", TRACE_HEADER, _trace_rows(res.trace))
    summ = res.summary()
    write_json(out / "summary.json", summ)
    fails = []
    if not res.sign_ok:
        fails.append("sign(lambda) differs from sign(eta1)")
    if not res.certificates:
        fails.append("no sub/super-solution certificates (sandwich not built)")
    fails.extend(f"{k} certificate failed (margin {c.margin:.3e})" for k, c in res.certificates.items() if not c.ok)
    if res.residual > 1e-7:
        fails.append(f"residual {res.residual:.3e} > 1e-7")
    if res.u.min() <= 0:
        fails.append("solution is not positive")
    lines = [f"path={res.path} lambda={res.lam!r} eta1={res.eta1!r} residual={res.residual!r}"]
    return Outcome({"global": summ}, fails, lines)


def run_continuation(cfg: RunConfig, out: Path) -> Outcome:
    metric = make_metric(cfg)
    pc = pipeline_config(cfg)
    sched = geometric_schedule(cfg["schedule.beta0"], cfg["schedule.steps"])
    lam, u, steps = beta_continuation(metric, cfg["schedule.beta0"], cfg["schedule.steps"], cfg["kappa"], pc,
                                      rescale_gamma=cfg["schedule.rescale_gamma"], schedule=sched,
                                      fallback=_fallback(cfg))
    header = list(steps[0].as_dict())
    write_table(out / "continuation.csv", header, [list(s.as_dict().values()) for s in steps])
    write_fields(out / "solution.csv", {"u": u})
    rows = [s.as_dict() for s in steps]
    lb = [s.lambda_beta for s in steps]
    fails = []
    if any(b < a_ - 1e-8 for a_, b in zip(lb, lb[1:])):
        fails.append("lambda_beta decreased along the schedule")
    if any(s.contraction >= 1 for s in steps):
        fails.append("contraction factor >= 1")
    if steps[-1].residual > 1e-7:
        fails.append(f"final residual {steps[-1].residual:.3e} > 1e-7")
    summ = {"lambda": lam, "steps": rows, "final_residual": steps[-1].residual}
    write_json(out / "summary.json", summ)
    lines = [f"beta={s.beta!r} lambda_beta={s.lambda_beta!r} contraction={s.contraction!r} "
             f"residual={s.residual!r} method={s.method}" for s in steps]
    lines.append(f"final residual={steps[-1].residual!r}")
    return Outcome({"continuation": summ}, fails, lines)


def run_prescribe(cfg: RunConfig, out: Path) -> Outcome:
    metric = make_metric(cfg)
    L, n = cfg["grid.extent"], cfg["grid.n"]
    center = tuple(cfg["center"]) if cfg["center"] is not None else (L / 2,) * n
    spec = BumpSpec(center, cfg["r"], cfg["C"], cfg["sign"])
    fn = flip_curvature_negative if spec.sign == NEGATIVE else flip_curvature_positive
    try:
        res = fn(metric, spec, cfg["max_halvings"])
    except PrescribeError as exc:
        raise GateError(str(exc))
    write_fields(out / "fields.csv", {"u": res.u, "H": res.H, "F": res.F})
    summ = res.summary()
    write_json(out / "summary.json", summ)
    fails = []
    if not res.flipped:
        fails.append(f"H(q) = {res.H_q:.4g} has the wrong sign")
    if not res.band_ok:
        fails.append("u left the band [C/8, 3C/8]")
    if abs(res.integral_F) > 1e-12:
        fails.append(f"|int F| = {abs(res.integral_F):.3e} > 1e-12")
    return Outcome({"prescribe": summ}, fails, [f"H(q)={res.H_q!r} band_ok={res.band_ok} "
                                                f"integral_F={res.integral_F!r}"])


RUNNERS: dict[str, Callable[[RunConfig, Path], Outcome]] = {
    "constants": run_constants, "quotient-scan": run_quotient_scan, "eigen": run_eigen,
    "local-solve": run_local_solve, "global-solve": run_global_solve, "continuation": run_continuation,
    "prescribe": run_prescribe,
}


def run(cfg: RunConfig, echo: Callable[[str], None] = click.echo) -> int:
    """Execute one subcommand, write artifacts and ``manifest.json``; return the exit status."""
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    np.random.seed(cfg["seed"])
    t0 = time.time()
    manifest = {"config": cfg.to_dict(),
                "versions": {"yamabe_lab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                             "python": platform.python_version()}}
    try:
        res = RUNNERS[cfg.subcommand](cfg, out)
        status = EXIT_FAIL if res.failures else EXIT_OK
        manifest.update({"reports": res.reports, "failures": res.failures})
        lines = res.lines + [f"FAIL: {f}" for f in res.failures]
    except (GateError, IterationError) as exc:
        status = EXIT_FAIL
        manifest.update({"reports": {}, "failures": [str(exc)]})
        lines = [f"FAIL: {exc}"]
    manifest["exit_status"] = status
    manifest["stdout"] = lines
    manifest["wall_clock_seconds"] = time.time() - t0
    write_json(out / "manifest.json", manifest)
    for line in lines:
        echo(line)
    return status


# ---------------------------------------------------------------- click wiring

def _parse_range(text: str | None) -> list[int] | None:
    if text is None:
        return None
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(t) for t in text.split(",")]


def _parse_floats(text: str | None) -> list[float] | None:
    return None if text is None else [float(t) for t in text.split(",")]


def _common(f):
    f = click.option("--seed", type=int, default=None, help="Seed recorded in the manifest.")(f)
    f = click.option("--tol", type=float, default=None, help="Solver tolerance.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON config with flat dotted keys (or a previous manifest.json).")(f)
    return f


def _grid_opts(f):
    f = click.option("--m", "grid_m", type=int, default=None, help="Points per axis.")(f)
    f = click.option("--n", "grid_n", type=int, default=None, help="Dimension.")(f)
    return f


def _execute(sub: str, config_path, flags: dict) -> None:
    try:
        base = load_config_file(config_path) if config_path else {}
        cfg = RunConfig.build(sub, base, flags)
    except ConfigError as exc:
        for e in exc.errors:
            click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(run(cfg))


@click.group()
@click.version_option(__version__)
def main():
    """Numerical experiments for the Yamabe problem on grids."""


@main.command("constants")
@click.option("--n", "n_range", default=None, help="Dimensions, e.g. 3..8 or 4,5,6.")
@_common
def constants_cmd(n_range, config_path, out, tol, seed):
    """Table of a, p, T, K1, K2, K3 and identity residuals."""
    _execute("constants", config_path, {"n": _parse_range(n_range), "out": out, "tol": tol, "seed": seed})


@main.command("quotient-scan")
@click.option("--n", type=int, default=None)
@click.option("--r", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--S0", "S0", type=float, default=None)
@click.option("--eps", default=None, help="Comma separated epsilon list.")
@_common
def quotient_scan_cmd(n, r, beta, S0, eps, config_path, out, tol, seed):
    """Aubin test-function quotient against T."""
    _execute("quotient-scan", config_path, {"n": n, "r": r, "beta": beta, "S0": S0, "eps": _parse_floats(eps),
                                            "out": out, "tol": tol, "seed": seed})


@main.command("eigen")
@_grid_opts
@_common
def eigen_cmd(grid_n, grid_m, config_path, out, tol, seed):
    """First eigenpair of the conformal Laplacian."""
    _execute("eigen", config_path, {"grid.n": grid_n, "grid.m": grid_m, "out": out, "tol": tol, "seed": seed})


@main.command("local-solve")
@click.option("--case", type=click.Choice(["negative", "positive"]), default=None)
@click.option("--c", type=float, default=None)
@_grid_opts
@_common
def local_solve_cmd(case, c, grid_n, grid_m, config_path, out, tol, seed):
    """Local Dirichlet double iteration."""
    _execute("local-solve", config_path, {"case": case, "c": c, "grid.n": grid_n, "grid.m": grid_m,
                                          "out": out, "tol": tol, "seed": seed})


@main.command("global-solve")
@click.option("--beta", type=float, default=None)
@click.option("--kappa", type=float, default=None)
@_grid_opts
@_common
def global_solve_cmd(beta, kappa, grid_n, grid_m, config_path, out, tol, seed):
    """Sub/super-solution pipeline on the torus."""
    _execute("global-solve", config_path, {"beta": beta, "kappa": kappa, "grid.n": grid_n, "grid.m": grid_m,
                                           "out": out, "tol": tol, "seed": seed})


@main.command("continuation")
@click.option("--beta0", type=float, default=None)
@click.option("--steps", type=int, default=None)
@click.option("--kappa", type=float, default=None)
@_grid_opts
@_common
def continuation_cmd(beta0, steps, kappa, grid_n, grid_m, config_path, out, tol, seed):
    """Perturbed solutions along beta -> 0."""
    _execute("continuation", config_path, {"schedule.beta0": beta0, "schedule.steps": steps, "kappa": kappa,
                                           "grid.n": grid_n, "grid.m": grid_m, "out": out, "tol": tol,
                                           "seed": seed})


@main.command("prescribe")
@click.option("--sign", type=click.Choice([NEGATIVE, POSITIVE]), default=None)
@click.option("--C", "C", type=float, default=None)
@click.option("--r", type=float, default=None)
@click.option("--center", default=None, help="Comma separated coordinates.")
@_grid_opts
@_common
def prescribe_cmd(sign, C, r, center, grid_n, grid_m, config_path, out, tol, seed):
    """Conformal factor flipping the curvature sign at a point."""
    _execute("prescribe", config_path, {"sign": sign, "C": C, "r": r, "center": _parse_floats(center),
                                        "grid.n": grid_n, "grid.m": grid_m, "out": out, "tol": tol,
                                        "seed": seed})


if __name__ == "__main__":
    main()
