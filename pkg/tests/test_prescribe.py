import numpy as np
import pytest

from yamabe_lab.constants import conformal_exponents
from yamabe_lab.geometry import MetricField, build_periodic_grid, integrate
from yamabe_lab.prescribe import (NEGATIVE, POSITIVE, BumpSpec, PrescribeError, bump_profile, build_balanced_bump,
                                  flip_curvature, flip_curvature_negative, flip_curvature_positive,
                                  prescribed_curvature, spectral_laplacian)

A3, P3 = conformal_exponents(3)


def torus(m, S):
    return MetricField.flat(build_periodic_grid(3, 1.0, m)).with_scalar_curvature(S)


def test_bump_spec_validation():
    with pytest.raises(ValueError):
        BumpSpec((0.5,) * 3, 0.2, 1.0)
    with pytest.raises(ValueError):
        BumpSpec((0.5,) * 3, 0.2, 2.0, sign="up")
    assert BumpSpec((0.5,) * 3, 0.2, 2.0).shrunk().radius == 0.1
    assert BumpSpec((0.5,) * 3, 0.2, 2.0, POSITIVE).signed_depth == 2.0


def test_bump_peak_and_support():
    g = build_periodic_grid(3, 1.0, 16)
    f, k = bump_profile(g, BumpSpec((0.5,) * 3, 0.3, 2.0))
    assert f[k] == -2.0 and f.min() == -2.0
    r = np.sqrt(np.sum((g.coords() - 0.5) ** 2, axis=1))
    assert np.all(f[r >= 0.3] == 0)
    with pytest.raises(PrescribeError):
        bump_profile(g, BumpSpec((0.1, 0.5, 0.5), 0.3, 2.0))


def test_balanced_bump_mean_zero():
    met = torus(16, 0.5)
    F, eps = build_balanced_bump(met.grid, met, BumpSpec((0.5,) * 3, 0.3, 2.0))
    assert abs(integrate(F, met)) <= 1e-12
    assert 0 < eps < 1.0


def test_negative_flip():
    met = torus(32, 0.5)
    res = flip_curvature_negative(met, BumpSpec((0.5,) * 3, 0.45, 2.0))
    assert res.H_q < 0 and res.flipped
    assert res.band_ok
    assert abs(res.integral_F) <= 1e-12
    assert res.u_prime_sup < 2.0 / 8


def test_positive_flip():
    met = torus(32, -0.5)
    res = flip_curvature_positive(met, BumpSpec((0.5,) * 3, 0.45, 2.0, POSITIVE))
    assert res.H_q > 0 and res.flipped and res.band_ok


def test_flip_hypotheses():
    with pytest.raises(PrescribeError):
        flip_curvature_negative(torus(8, -0.1), BumpSpec((0.5,) * 3, 0.3, 2.0))
    with pytest.raises(PrescribeError):
        flip_curvature_negative(torus(8, 2.0), BumpSpec((0.5,) * 3, 0.3, 2.0))
    with pytest.raises(PrescribeError):
        flip_curvature_positive(torus(8, 0.1), BumpSpec((0.5,) * 3, 0.3, 2.0, POSITIVE))
    with pytest.raises(PrescribeError):
        flip_curvature_negative(torus(8, 0.5), BumpSpec((0.5,) * 3, 0.3, 2.0, POSITIVE))


def test_radius_halving_when_ball_too_big():
    met = torus(32, 0.5)
    res = flip_curvature(met, BumpSpec((0.5,) * 3, 0.6, 2.0), max_halvings=3)
    assert res.halvings >= 1 and res.spec.radius < 0.6


def test_prescribed_curvature_of_one_is_S():
    met = torus(8, 0.3)
    from yamabe_lab.geometry import ScalarField
    H = prescribed_curvature(met, ScalarField.constant(met.grid, 1.0))
    assert np.allclose(H.values, 0.3, atol=1e-12)


def test_spectral_laplacian_plane_wave():
    g = build_periodic_grid(3, 1.0, 16)
    u = np.sin(2 * np.pi * g.coords()[:, 1])
    assert np.allclose(spectral_laplacian(g, u), -(2 * np.pi) ** 2 * u, atol=1e-10)


def test_refinement_order():
    errs = []
    for m in (16, 32, 64):
        met = torus(m, 0.5)
        res = flip_curvature_negative(met, BumpSpec((0.5,) * 3, 0.45, 2.0))
        u = res.u.values
        Hs = u ** (1 - P3) * (-A3 * spectral_laplacian(met.grid, u) + 0.5 * u)
        errs.append(np.sqrt(np.mean((Hs - res.H.values) ** 2)))
    slopes = [np.log2(e0 / e1) for e0, e1 in zip(errs, errs[1:])]
    assert min(slopes) >= 1.9
