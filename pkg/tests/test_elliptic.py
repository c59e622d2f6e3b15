import numpy as np
import pytest
from hypothesis import given, strategies as st

from yamabe_lab.elliptic import (SolverDivergenceError, assemble, is_m_matrix, residual, solve, spd_solver,
                                 symmetry_defect, weak_maximum_check)
from yamabe_lab.geometry import (CurvatureSpec, MetricField, ScalarField, build_periodic_grid, build_radial_grid,
                                 synthesize_normal_metric)

K = 2 * np.pi


def periodic_error(m, a=8.0):
    g = build_periodic_grid(3, 1.0, m)
    x = g.coords()
    u = np.sin(K * x[:, 0]) * np.sin(K * x[:, 1]) * np.cos(K * x[:, 2])
    V = 1.0 + 0.5 * np.sin(K * x[:, 2])
    op = assemble(MetricField.flat(g), a, V)
    sol, rep = solve(op, (3 * a * K ** 2 + V) * u, tol=1e-12)
    assert rep.converged
    return np.max(np.abs(sol.values - u))


def radial_error(n, m, a=1.0, r=1.0):
    g = build_radial_grid(n, r, m)
    s = g.axis()
    k = np.pi / (2 * r)
    u = np.cos(k * s)
    # Delta u = u'' + (n-1) u'/s with u'/s -> -k^2 at the center
    lap = -k ** 2 * np.cos(k * s) - (n - 1) * k ** 2 * np.sinc(k * s / np.pi)
    op = assemble(MetricField.flat(g), a, 2.0)
    sol, _ = solve(op, -a * lap + 2.0 * u, 0.0, method="direct")
    return np.max(np.abs(sol.values - u))


def slope(errs):
    return float(-np.polyfit(np.log(2.0) * np.arange(len(errs)), np.log(errs), 1)[0] / np.log(2.0))


def test_periodic_manufactured_second_order():
    errs = [periodic_error(m) for m in (8, 16, 32, 64)]
    assert slope(errs) >= 1.9
    assert all(np.log2(e0 / e1) >= 1.9 for e0, e1 in zip(errs, errs[1:]))


@pytest.mark.parametrize("n", [3, 5])
def test_radial_manufactured_second_order(n):
    errs = [radial_error(n, m) for m in (33, 65, 129, 257)]
    assert slope(errs) >= 1.9


def test_radial_poisson_quadratic():
    # -Delta u = 1 on the unit ball: u = (1 - s^2)/(2n)
    for n in (3, 5):
        g = build_radial_grid(n, 1.0, 65)
        sol, _ = solve(assemble(MetricField.flat(g), 1.0, 0.0), 1.0, 0.0, method="direct")
        s = g.axis()
        assert np.max(np.abs(sol.values - (1 - s * s) / (2 * n))) < 5e-4


def _op(kind, curved):
    if kind == "radial":
        return assemble(MetricField.flat(build_radial_grid(4, 0.5, 40)), 6.0, 1.0)
    g = build_periodic_grid(3, 0.4, 8)
    met = synthesize_normal_metric(g, CurvatureSpec.isotropic(3, -3.0)) if curved else MetricField.flat(g)
    mask = None
    if kind == "masked":
        mask = np.sum(g.centered_coords() ** 2, axis=1) > 0.15 ** 2
    return assemble(met, 8.0, 0.5, mask=mask)


@pytest.mark.parametrize("kind", ["periodic", "radial", "masked"])
@pytest.mark.parametrize("curved", [False, True])
def test_symmetry(kind, curved):
    assert symmetry_defect(_op(kind, curved)) < 1e-13


@pytest.mark.parametrize("kind", ["periodic", "radial", "masked"])
def test_m_matrix_diagonal_metric(kind):
    assert is_m_matrix(_op(kind, False))


def test_mixed_terms_break_m_matrix():
    # off-diagonal g^ij enter through centered gradients, which carry positive couplings
    assert not is_m_matrix(_op("periodic", True))


def test_weak_maximum_random(rng):
    violations = 0
    gp = build_periodic_grid(3, 1.0, 8)
    gr = build_radial_grid(3, 1.0, 60)
    ops = [assemble(MetricField.flat(gp), 8.0, 1.0), assemble(MetricField.flat(gr), 8.0, 0.0)]
    for trial in range(100):
        op = ops[trial % 2]
        f = rng.random(op.grid.size) * rng.choice([1e-3, 1.0, 1e3])
        f[rng.random(op.grid.size) < 0.5] = 0.0
        u, _ = solve(op, f, 0.0, method="direct")
        if not weak_maximum_check(op, u, f, atol=1e-10):
            violations += 1
    assert violations == 0


def test_weak_maximum_reports_node():
    g = build_radial_grid(3, 1.0, 16)
    op = assemble(MetricField.flat(g), 1.0, 0.0)
    u = np.zeros(g.size)
    u[3] = -1.0
    chk = weak_maximum_check(op, u)
    assert not chk and chk.node == 3
    with pytest.raises(ValueError):
        weak_maximum_check(op, u, rhs=-np.ones(g.size))


def test_singular_periodic_needs_mean_zero():
    g = build_periodic_grid(3, 1.0, 8)
    op = assemble(MetricField.flat(g), 1.0, 0.0)
    with pytest.raises(ValueError):
        solve(op, 1.0)
    x = g.coords()
    f = np.cos(K * x[:, 0])
    u, _ = solve(op, f, tol=1e-12)
    assert abs(u.values.sum()) < 1e-10
    assert residual(op, u, f) < 1e-9


def test_dirichlet_lift_constant():
    g = build_radial_grid(3, 0.5, 30)
    op = assemble(MetricField.flat(g), 8.0, 2.0)
    u, _ = solve(op, 2.0 * 3.0, 3.0, method="direct")
    assert np.allclose(u.values, 3.0, atol=1e-12)


def test_cg_stall_raises():
    g = build_periodic_grid(3, 1.0, 8)
    op = assemble(MetricField.flat(g), 1.0, 1e-6)
    with pytest.raises(SolverDivergenceError):
        solve(op, np.cos(K * g.coords()[:, 0]) + 1, tol=1e-14, maxiter=2)


@given(st.floats(min_value=0.1, max_value=10.0))
def test_spd_solver_reuse(shift):
    g = build_radial_grid(3, 1.0, 30)
    op = assemble(MetricField.flat(g), 1.0, shift)
    sol = spd_solver(op.matrix)
    b = np.ones(op.matrix.shape[0])
    x = sol(b)
    assert np.linalg.norm(op.matrix @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_grid_mismatch():
    op = assemble(MetricField.flat(build_radial_grid(3, 1.0, 16)), 1.0, 1.0)
    with pytest.raises(Exception):
        solve(op, ScalarField.constant(build_radial_grid(3, 1.0, 17), 1.0))
