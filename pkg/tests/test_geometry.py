import numpy as np
import pytest
from hypothesis import given, strategies as st

from yamabe_lab.constants import conformal_exponents, sphere_area
from yamabe_lab.geometry import (PERIODIC, RADIAL, CurvatureSpec, GridMismatchError, GridSpec, MetricField,
                                 ScalarField, build_periodic_grid, build_radial_grid, conformal_metric, integrate,
                                 laplace_beltrami, lp_norm, synthesize_normal_metric)
from yamabe_lab.io import read_fields, read_table, write_fields, write_metric, write_table


def test_grid_validation():
    with pytest.raises(ValueError):
        build_periodic_grid(2, 1.0, 8)
    with pytest.raises(ValueError):
        build_periodic_grid(3, 1.0, 3)
    with pytest.raises(MemoryError):
        build_periodic_grid(3, 1.0, 200)
    with pytest.raises(ValueError):
        GridSpec("hexagonal", 3, 1.0, 8)


@pytest.mark.parametrize("kind,m", [(PERIODIC, 8), (RADIAL, 40)])
def test_grid_dict_round_trip(kind, m):
    g = GridSpec(kind, 3, 0.7, m)
    assert GridSpec.from_dict(g.to_dict()) == g


def test_periodic_volume():
    g = build_periodic_grid(3, 2.0, 10)
    met = MetricField.flat(g)
    assert met.volume() == pytest.approx(8.0, rel=1e-14)


@pytest.mark.parametrize("n", [3, 5])
def test_radial_volume(n):
    r = 0.3
    g = build_radial_grid(n, r, 801)
    exact = sphere_area(n) * r ** n / n
    assert MetricField.flat(g).volume() == pytest.approx(exact, rel=1e-5)
    assert g.control_volumes().sum() == pytest.approx(exact, rel=1e-13)


def test_field_arithmetic_and_mismatch():
    g = build_periodic_grid(3, 1.0, 4)
    f = ScalarField.constant(g, 2.0)
    assert ((f * 3 - 1) / 5).max() == pytest.approx(1.0)
    other = ScalarField.constant(build_periodic_grid(3, 1.0, 5), 1.0)
    with pytest.raises(GridMismatchError):
        _ = f + other
    with pytest.raises(GridMismatchError):
        ScalarField(g, np.zeros(3))


def test_lp_norm_constant():
    g = build_periodic_grid(3, 1.0, 8)
    met = MetricField.flat(g)
    assert lp_norm(ScalarField.constant(g, 2.0), met, 6.0) == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(ValueError):
        lp_norm(ScalarField.constant(g, 2.0), met, 0.5)


def test_integrate_trig_mean_zero():
    g = build_periodic_grid(3, 1.0, 16)
    met = MetricField.flat(g)
    f = ScalarField.from_function(g, lambda x: np.sin(2 * np.pi * x[:, 0]) * np.cos(2 * np.pi * x[:, 1]))
    assert abs(integrate(f, met)) < 1e-15


def test_laplacian_of_plane_wave():
    m = 32
    g = build_periodic_grid(3, 1.0, m)
    met = MetricField.flat(g)
    u = ScalarField.from_function(g, lambda x: np.sin(2 * np.pi * x[:, 0]))
    lap = laplace_beltrami(met, u).values
    # second-order stencil symbol: -(4/h^2) sin^2(k h/2)
    k, h = 2 * np.pi, g.h
    expected = -(4 / h ** 2) * np.sin(k * h / 2) ** 2 * u.values
    assert np.max(np.abs(lap - expected)) < 1e-9


def test_normal_metric_trace_identities():
    curv = CurvatureSpec(-3.0, (-1.0, -1.0, -1.0))
    R = curv.riemann()
    ric = np.einsum("kikj->ij", R)
    assert np.allclose(ric, np.diag(curv.ricci_diag), atol=1e-14)
    assert np.trace(ric) == pytest.approx(curv.S0)
    assert np.allclose(R, -np.transpose(R, (1, 0, 2, 3)))


def test_normal_metric_rejects_bad_ricci():
    with pytest.raises(ValueError):
        CurvatureSpec(1.0, (0.0, 0.0, 0.0))


def test_normal_metric_density():
    g = build_periodic_grid(3, 0.4, 8)
    met = synthesize_normal_metric(g, CurvatureSpec.isotropic(3, -3.0))
    x = g.centered_coords()
    assert np.allclose(met.vol_density, 1 + np.sum(x * x, axis=1) / 6.0)


def test_flat_normal_metric_is_flat():
    g = build_periodic_grid(3, 0.4, 6)
    assert synthesize_normal_metric(g, CurvatureSpec.zero(3)).is_flat()


@given(st.floats(min_value=0.5, max_value=3.0))
def test_constant_conformal_factor_scales_curvature(c):
    g = build_periodic_grid(3, 1.0, 6)
    base = MetricField.flat(g).with_scalar_curvature(-1.0)
    _, p = conformal_exponents(3)
    new = conformal_metric(base, ScalarField.constant(g, c))
    assert np.allclose(new.scalar_curv, -c ** (2 - p), rtol=1e-12)


def test_conformal_metric_requires_positive():
    g = build_periodic_grid(3, 1.0, 4)
    with pytest.raises(ValueError):
        conformal_metric(MetricField.flat(g), ScalarField.constant(g, -1.0))


# ---------------------------------------------------------------- serialization

@pytest.mark.parametrize("kind,m", [(PERIODIC, 6), (RADIAL, 50)])
def test_field_round_trip(tmp_path, rng, kind, m):
    g = GridSpec(kind, 3, 0.9, m)
    u = ScalarField(g, rng.standard_normal(g.size) * 1e3)
    v = ScalarField(g, rng.random(g.size) * 1e-7)
    path = tmp_path / "f.csv"
    write_fields(path, {"u": u, "v": v})
    back = read_fields(path)
    assert back["u"].grid == g
    for name, f in (("u", u), ("v", v)):
        err = np.max(np.abs(back[name].values - f.values) / np.maximum(np.abs(f.values), 1e-300))
        assert err <= 1e-15


def test_field_csv_layout(tmp_path):
    g = build_periodic_grid(3, 1.0, 4)
    write_fields(tmp_path / "f.csv", {"u": ScalarField.constant(g, 0.1)})
    header, rows = read_table(tmp_path / "f.csv")
    assert header == ["node", "x0", "x1", "x2", "u"]
    assert len(rows) == 64 and rows[0][0] == "0" and rows[5][-1] == "0.1"


def test_metric_write(tmp_path):
    g = build_radial_grid(3, 0.2, 20)
    write_metric(tmp_path / "g.csv", MetricField.flat(g).with_scalar_curvature(-1.0))
    back = read_fields(tmp_path / "g.csv")
    assert np.all(back["scalar_curv"].values == -1.0)


def test_fields_need_common_grid(tmp_path):
    a = ScalarField.constant(build_periodic_grid(3, 1.0, 4), 1.0)
    b = ScalarField.constant(build_periodic_grid(3, 1.0, 5), 1.0)
    with pytest.raises(ValueError):
        write_fields(tmp_path / "x.csv", {"a": a, "b": b})


def test_table_is_deterministic(tmp_path):
    rows = [(1, 0.1 + 0.2, np.float64(1) / 3, True)]
    write_table(tmp_path / "a.csv", ["i", "x", "y", "ok"], rows)
    write_table(tmp_path / "b.csv", ["i", "x", "y", "ok"], rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert "0.30000000000000004" in (tmp_path / "a.csv").read_text()
