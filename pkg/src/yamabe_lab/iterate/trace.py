"""Iteration traces and sub/super-solution certificates."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


class IterationError(RuntimeError):
    """Iteration failure carrying the trace collected so far."""

    def __init__(self, msg: str, trace: "IterationTrace | None" = None, stage: str = ""):
        super().__init__(f"[{stage}] {msg}" if stage else msg)
        self.trace = trace
        self.stage = stage


class GateError(ValueError):
    """A hypothesis of a construction is violated; the message names it."""


@dataclass
class IterationTrace:
    residuals: list[float] = field(default_factory=list)
    mins: list[float] = field(default_factory=list)
    maxs: list[float] = field(default_factory=list)
    monotone: list[bool] = field(default_factory=list)
    C_Mn: float | None = None
    extra: dict = field(default_factory=dict)

    def record(self, residual: float, u: np.ndarray, monotone: bool = True) -> None:
        self.residuals.append(float(residual))
        self.mins.append(float(np.min(u)))
        self.maxs.append(float(np.max(u)))
        self.monotone.append(bool(monotone))

    @property
    def steps(self) -> int:
        return len(self.residuals)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    @property
    def all_monotone(self) -> bool:
        return all(self.monotone)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "residual", "min", "max", "monotone"])
        for k, (r, lo, hi, mo) in enumerate(zip(self.residuals, self.mins, self.maxs, self.monotone)):
            w.writerow([k, repr(r), repr(lo), repr(hi), int(mo)])
        return buf.getvalue()

    def summary(self) -> dict:
        out = {"steps": self.steps, "final_residual": self.final_residual,
               "all_monotone": self.all_monotone}
        if self.C_Mn is not None:
            out["C_Mn"] = self.C_Mn
        out.update({k: v for k, v in self.extra.items() if np.isscalar(v) or isinstance(v, (str, bool))})
        return out


@dataclass
class Certificate:
    """Outcome of a nodewise sub/super-solution check.

    ``margin`` is the smallest signed slack over the checked nodes (positive
    means the inequality holds strictly); ``tolerance`` is the absolute slack
    allowed for round-off and solver residuals.
    """
    kind: str
    ok: bool
    margin: float
    tolerance: float
    worst_node: int | None
    regions: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok

    def as_dict(self) -> dict:
        return {"kind": self.kind, "ok": self.ok, "margin": self.margin,
                "tolerance": self.tolerance, "worst_node": self.worst_node,
                "regions": self.regions}
