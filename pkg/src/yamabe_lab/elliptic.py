"""Divergence-form discretization of -a Delta_g + V and the associated linear solves.

The operator is stored as  A = a K + diag(M V)  over all nodes, where K is the
symmetric stiffness matrix of the Dirichlet energy  int sqrt(g) g^{ij} du_i du_j
and M the lumped mass (control volume times sqrt(g)).  The strong form of the
operator is  M^{-1} A.  Dirichlet problems keep only the free rows/columns.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import GridMismatchError, GridSpec, MetricField, ScalarField

DIRICHLET = "dirichlet"
PERIODIC = "periodic"
NATURAL = "natural"


class IndefiniteOperatorError(np.linalg.LinAlgError):
    pass


class SolverDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    residual: float
    converged: bool
    method: str = "cg"

    def as_dict(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual,
                "converged": self.converged, "method": self.method}


def _periodic_shift(m: int, n: int, axis: int, step: int) -> sp.csr_matrix:
    """Permutation matrix P with (P u)[i] = u[i + step e_axis] on the periodic lattice."""
    idx = np.arange(m ** n).reshape((m,) * n)
    tgt = np.roll(idx, -step, axis=axis).ravel()
    N = m ** n
    return sp.csr_matrix((np.ones(N), (np.arange(N), tgt)), shape=(N, N))


def _periodic_stiffness(metric: MetricField) -> sp.csr_matrix:
    g = metric.grid
    m, n, h = g.m, g.n, g.h
    N = g.size
    rho = metric.vol_density
    ginv = metric.inv_metric
    K = sp.csr_matrix((N, N))
    shifts = [_periodic_shift(m, n, d, 1) for d in range(n)]
    for d in range(n):
        coef = rho * ginv[:, d, d]
        face = 0.5 * (coef + shifts[d] @ coef)
        G = shifts[d] - sp.identity(N, format="csr")
        K = K + G.T @ sp.diags(face * h ** (n - 2)) @ G
    offdiag = ginv.copy()
    offdiag[:, np.arange(n), np.arange(n)] = 0.0
    if np.any(offdiag != 0.0):
        # centered gradients for the mixed terms keep the form symmetric
        C = [(shifts[d] - shifts[d].T) * (0.5 / h) for d in range(n)]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                w = rho * offdiag[:, i, j]
                if np.any(w != 0.0):
                    K = K + C[i].T @ sp.diags(w * h ** n) @ C[j]
    return K.tocsr()


def _radial_stiffness(metric: MetricField) -> sp.csr_matrix:
    g = metric.grid
    from .constants import sphere_area
    s, h, n = g.axis(), g.h, g.n
    coef = metric.inv_metric * metric.vol_density
    face_s = s[:-1] + 0.5 * h
    c = sphere_area(n) * face_s ** (n - 1) * 0.5 * (coef[:-1] + coef[1:]) / h
    m = g.m
    main = np.zeros(m)
    main[:-1] += c
    main[1:] += c
    return sp.diags([main, -c, -c], [0, 1, -1], format="csr")


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    """Discrete -a Delta_g + V with a boundary-condition tag.

    ``full`` acts on every node; ``matrix`` is the free-node block that the
    linear solves use.  Periodic operators have no fixed nodes.
    """
    grid: GridSpec
    bc: str
    a: float
    V: np.ndarray
    stiffness: sp.csr_matrix
    mass: np.ndarray
    fixed: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def free(self) -> np.ndarray:
        return ~self.fixed

    @property
    def full(self) -> sp.csr_matrix:
        if "full" not in self._cache:
            self._cache["full"] = (self.a * self.stiffness + sp.diags(self.mass * self.V)).tocsr()
        return self._cache["full"]

    @property
    def matrix(self) -> sp.csr_matrix:
        if "matrix" not in self._cache:
            f = self.free
            self._cache["matrix"] = self.full[f][:, f].tocsr()
        return self._cache["matrix"]

    def apply(self, u) -> np.ndarray:
        """A u over all nodes (weak form, i.e. multiplied by the mass)."""
        vals = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
        return self.full @ vals

    def strong(self, u) -> np.ndarray:
        """M^{-1} A u: pointwise values of (-a Delta_g + V) u."""
        return self.apply(u) / self.mass

    def with_potential(self, V) -> "EllipticOperator":
        """Same stiffness and boundary tag with a new zeroth-order field."""
        return replace(self, V=_potential(self.grid, V), _cache={})

    def factorized(self):
        if "lu" not in self._cache:
            self._cache["lu"] = spla.splu(self.matrix.tocsc())
        return self._cache["lu"]

    def norm_estimate(self) -> float:
        return float(abs(self.full).sum(axis=1).max())

    @property
    def singular(self) -> bool:
        return not np.any(self.fixed) and np.all(self.V == 0.0)


def _potential(grid: GridSpec, V) -> np.ndarray:
    if V is None:
        return np.zeros(grid.size)
    if isinstance(V, ScalarField):
        if V.grid != grid:
            raise GridMismatchError("potential lives on a different grid")
        return V.values.copy()
    arr = np.asarray(V, dtype=float)
    return np.broadcast_to(arr, (grid.size,)).copy()


def assemble(metric: MetricField, a: float, V=None, bc: str | None = None,
             mask: np.ndarray | None = None) -> EllipticOperator:
    """Assemble -a Delta_g + V in flux form.

    ``bc`` defaults to periodic on boxes and dirichlet (last radial node fixed)
    on balls.  On a periodic grid, ``mask`` marks fixed Dirichlet nodes and turns
    the operator into a Dirichlet problem on the complement.  ``natural`` keeps
    every node free (used for strong-form evaluation only).
    """
    grid = metric.grid
    if a <= 0:
        raise ValueError("diffusion coefficient a must be positive")
    if bc is None:
        bc = DIRICHLET if (not grid.periodic or mask is not None) else PERIODIC
    if bc not in (DIRICHLET, PERIODIC, NATURAL):
        raise ValueError(f"unknown boundary condition {bc!r}")
    K = _periodic_stiffness(metric) if grid.periodic else _radial_stiffness(metric)
    mass = grid.control_volumes() * metric.vol_density
    if bc == DIRICHLET:
        if mask is not None:
            fixed = np.asarray(mask, dtype=bool).reshape(-1)
            if fixed.size != grid.size:
                raise GridMismatchError("Dirichlet mask does not match the grid")
        elif grid.periodic:
            raise ValueError("dirichlet bc on a periodic grid needs a mask of fixed nodes")
        else:
            fixed = grid.boundary_mask()
    elif bc == PERIODIC:
        if not grid.periodic:
            raise ValueError("periodic bc requires a periodic grid")
        fixed = np.zeros(grid.size, dtype=bool)
    else:
        fixed = np.zeros(grid.size, dtype=bool)
    return EllipticOperator(grid, bc, float(a), _potential(grid, V), K, mass, fixed)


def pcg(A: sp.spmatrix, b: np.ndarray, tol: float, maxiter: int | None = None,
        x0: np.ndarray | None = None, project=None, label: str = "") -> tuple[np.ndarray, LinearSolveReport]:
    """Jacobi-preconditioned CG; stops when ||b - A x|| <= tol ||b||.

    Raises IndefiniteOperatorError as soon as a search direction with
    non-positive curvature appears.
    """
    nrm_b = float(np.linalg.norm(b))
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if nrm_b == 0.0:
        return np.zeros_like(b), LinearSolveReport(0, 0.0, True, "cg")
    dinv = 1.0 / A.diagonal()
    if np.any(~np.isfinite(dinv)) or np.any(dinv <= 0):
        raise IndefiniteOperatorError(f"non-positive diagonal entry in operator {label}")
    maxiter = maxiter or 10 * b.size
    r = b - A @ x
    if project is not None:
        r = project(r)
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r)) / nrm_b
    it = 0
    while res > tol and it < maxiter:
        Ap = A @ p
        curv = float(p @ Ap)
        if curv <= 0.0:
            raise IndefiniteOperatorError(
                f"negative curvature direction (p^T A p = {curv:.3e}) in operator {label}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        if project is not None:
            r = project(r)
        res = float(np.linalg.norm(r)) / nrm_b
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, LinearSolveReport(it, res, res <= tol, "cg")


def _label(op: EllipticOperator) -> str:
    return f"-{op.a:g} Delta + V with min(V) = {op.V.min():.6g}"


def solve(op: EllipticOperator, rhs, boundary_value: float = 0.0, tol: float = 1e-10,
          method: str = "cg", maxiter: int | None = None) -> tuple[ScalarField, LinearSolveReport]:
    """Solve (-a Delta_g + V) u = rhs with u = boundary_value on fixed nodes.

    The constant lift u = c + w reduces the problem to homogeneous data:
    A_II w = M_I rhs - (A c)_I.  A singular periodic operator (V = 0) needs a
    mean-zero rhs and returns the mean-zero solution.
    """
    grid = op.grid
    f = rhs.values if isinstance(rhs, ScalarField) else np.broadcast_to(np.asarray(rhs, float), (grid.size,))
    if isinstance(rhs, ScalarField) and rhs.grid != grid:
        raise GridMismatchError("rhs lives on a different grid")
    free = op.free
    c = float(boundary_value)
    b_full = op.mass * f - (op.apply(np.full(grid.size, c)) if c != 0.0 else 0.0)
    b = b_full[free]
    project = None
    if op.singular:
        w = op.mass
        total = float(np.sum(b))
        if abs(total) > 1e-10 * float(np.sum(np.abs(b)) + 1e-300):
            raise ValueError(f"singular periodic problem needs a mean-zero rhs (integral {total:.3e})")
        b = b - w * (total / w.sum())

        def project(r, _w=w):
            return r - _w * (r.sum() / _w.sum())

    if method == "direct":
        if op.singular:
            raise ValueError("direct solves need a nonsingular operator")
        x = op.factorized().solve(b)
        res = float(np.linalg.norm(b - op.matrix @ x) / max(np.linalg.norm(b), 1e-300))
        # a factorization is exact up to round-off; tol only matters for cg
        report = LinearSolveReport(1, res, res <= max(tol, 1e-10), "direct")
    elif method == "cg":
        x, report = pcg(op.matrix, b, tol, maxiter=maxiter, project=project, label=_label(op))
    else:
        raise ValueError(f"unknown method {method!r}")
    if op.singular:
        x = x - np.sum(op.mass * x) / np.sum(op.mass)
    u = np.full(grid.size, c)
    u[free] += x
    if not report.converged:
        raise SolverDivergenceError(f"linear solve stalled at relative residual {report.residual:.3e}")
    return ScalarField(grid, u), report


def residual(op: EllipticOperator, u, rhs) -> float:
    """Volume-weighted discrete L2 norm of (op u - rhs) over the free nodes."""
    uu = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
    if isinstance(u, ScalarField) and u.grid != op.grid:
        raise GridMismatchError("field lives on a different grid")
    if isinstance(rhs, ScalarField) and rhs.grid != op.grid:
        raise GridMismatchError("rhs lives on a different grid")
    f = rhs.values if isinstance(rhs, ScalarField) else np.broadcast_to(np.asarray(rhs, float), (op.grid.size,))
    if uu.size != op.grid.size:
        raise GridMismatchError("field size does not match the operator")
    r = op.strong(uu) - f
    free = op.free
    return float(np.sqrt(np.sum(op.mass[free] * r[free] ** 2)))


@dataclass(frozen=True)
class MaxPrincipleCheck:
    ok: bool
    node: int | None
    value: float

    def __bool__(self) -> bool:
        return self.ok


def weak_maximum_check(op: EllipticOperator, u, rhs=None, boundary: float | None = None,
                       atol: float = 1e-10) -> MaxPrincipleCheck:
    """Discrete weak maximum principle: min u >= min(0, boundary minimum) - atol.

    Requires V >= 0 and rhs >= 0.  On failure the worst node is reported.
    """
    if np.any(op.V < 0):
        raise ValueError("weak maximum check needs a nonnegative zeroth-order term")
    if rhs is not None:
        f = rhs.values if isinstance(rhs, ScalarField) else np.asarray(rhs, float)
        if np.any(f < 0):
            raise ValueError("weak maximum check needs a nonnegative rhs")
    uu = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
    if boundary is None:
        boundary = float(uu[op.fixed].min()) if np.any(op.fixed) else 0.0
    floor = min(0.0, boundary) - atol
    k = int(np.argmin(uu))
    if uu[k] >= floor:
        return MaxPrincipleCheck(True, None, float(uu[k]))
    return MaxPrincipleCheck(False, k, float(uu[k]))


def is_m_matrix(op: EllipticOperator, tol: float = 0.0) -> bool:
    """Nonpositive off-diagonals and weak diagonal dominance of the free block."""
    A = op.matrix.tocoo()
    off = A.row != A.col
    if np.any(A.data[off] > tol):
        return False
    A = op.matrix
    diag = A.diagonal()
    offsum = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    return bool(np.all(diag >= offsum - 1e-12 * np.abs(diag).max()))


def symmetry_defect(op: EllipticOperator, probes: int = 4, seed: int = 0) -> float:
    """max |<Au,v> - <u,Av>| / ||A|| over random probe pairs."""
    rng = np.random.default_rng(seed)
    A = op.matrix
    worst = 0.0
    for _ in range(probes):
        u = rng.standard_normal(A.shape[0])
        v = rng.standard_normal(A.shape[0])
        worst = max(worst, abs(v @ (A @ u) - u @ (A @ v)) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return worst / max(op.norm_estimate(), 1e-300)


def spd_solver(A: sp.spmatrix, tol: float = 1e-12, direct: bool | None = None, label: str = ""):
    """Reusable solver x = A^{-1} b for a fixed SPD matrix.

    Small or banded (radial) systems are factorized once; large periodic
    systems, where LU fill-in explodes, fall back to warm-started PCG.
    """
    N = A.shape[0]
    if direct is None:
        bandwidth = np.abs(A.tocoo().row - A.tocoo().col).max() if A.nnz else 0
        direct = N <= 6000 or bandwidth <= 2
    if direct:
        lu = spla.splu(sp.csc_matrix(A))
        return lu.solve
    state = {"x": None}

    def run(b):
        x0 = state["x"] if state["x"] is not None and state["x"].shape == b.shape else None
        x, rep = pcg(A, b, tol, x0=x0, label=label)
        if not rep.converged:
            raise SolverDivergenceError(f"PCG stalled at relative residual {rep.residual:.3e}")
        state["x"] = x
        return x

    return run
