import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gplab.potentials import (RadialPotential, ScaledPotential, born_coupling, bundled_suite, evaluate,
                              gaussian_bump, radial_integral, rho_measure, smooth_bump, square_well,
                              zero_potential)


def test_square_well_values():
    v = square_well(2.0, 1.0)
    assert evaluate(v, 0.5) == 2.0
    assert evaluate(v, 1.5) == 0.0


def test_scaled_square_well():
    v = ScaledPotential(square_well(2.0, 1.0), 10, 1.0)
    assert evaluate(v, 0.05) == pytest.approx(200.0, rel=1e-15)
    assert v.support == pytest.approx(0.1)


def test_scaled_beta_zero_is_mean_field():
    base = smooth_bump(3.0, 1.0)
    v = ScaledPotential(base, 7, 0.0)
    r = np.linspace(0, 1.2, 50)
    np.testing.assert_allclose(v(r), base(r) / 7, rtol=1e-15)


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        evaluate(square_well(1.0, 1.0), -0.1)


@pytest.mark.parametrize("kind,strength,R", [("triangle", 1, 1), ("square_well", -1, 1), ("square_well", 1, 0)])
def test_invalid_potentials(kind, strength, R):
    with pytest.raises(ValueError):
        RadialPotential(kind, strength, R)


def test_scaled_rejects_bad_beta():
    with pytest.raises(ValueError):
        ScaledPotential(square_well(1, 1), 10, 1.5)


def test_rho_measure_square_wells():
    # sup r^2 V0 = V0 R^2 and int_0^R r V0 dr = V0 R^2 / 2
    assert rho_measure(zero_potential()) == 0.0
    assert rho_measure(square_well(2.0, 1.0)) == pytest.approx(3.0, rel=1e-8)
    assert rho_measure(square_well(0.02, 1.0)) == pytest.approx(0.03, rel=1e-8)


def test_born_coupling_square_well():
    assert born_coupling(zero_potential()) == 0.0
    assert born_coupling(square_well(2.0, 1.0)) == pytest.approx(4 * math.pi * 2.0 / 3, rel=1e-10)


def test_born_coupling_gaussian_against_direct_quadrature():
    from scipy import integrate
    v = gaussian_bump(1.5, 2.0)
    ref, _ = integrate.quad(lambda r: 4 * math.pi * r * r * float(v(r)), 0, 2.0, epsabs=1e-13, limit=200)
    assert born_coupling(v) == pytest.approx(ref, rel=1e-8)


def test_scaled_born_coupling_scales_as_inverse_n():
    # int N^2 V(N x) dx = N^-1 int V
    base = smooth_bump(1.0, 1.0)
    for N in (1, 10, 100):
        assert born_coupling(ScaledPotential(base, N)) == pytest.approx(born_coupling(base) / N, rel=1e-7)


def test_tabulated_bump_matches_analytic_profile():
    r = np.linspace(0, 1.0, 400)
    prof = np.where(r < 1, np.exp(1 - 1 / (1 - np.minimum(r, 0.999999) ** 2)), 0.0)
    tab = smooth_bump(1.0, 1.0, table=(r, prof))
    ref = smooth_bump(1.0, 1.0)
    x = np.linspace(0, 0.95, 77)
    np.testing.assert_allclose(tab(x), ref(x), atol=1e-5)


def test_bundled_suite():
    suite = bundled_suite()
    assert [(p.kind, p.strength, p.R) for p in suite] == [
        ("square_well", 2.0, 1.0), ("square_well", 0.02, 1.0), ("smooth_bump_table", 1.0, 1.0)]


def test_radial_integral_power_zero():
    assert radial_integral(square_well(2.0, 1.5), 0) == pytest.approx(3.0, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["square_well", "gaussian_bump", "smooth_bump_table"]),
       strength=st.floats(0.0, 50.0), R=st.floats(0.1, 5.0),
       r=st.lists(st.floats(0.0, 20.0), min_size=1, max_size=20))
def test_nonnegative_and_compactly_supported(kind, strength, R, r):
    v = RadialPotential(kind, strength, R)
    vals = np.asarray(v(np.array(r)))
    assert np.all(vals >= 0)
    assert np.all(vals[np.array(r) > R] == 0)


@settings(max_examples=30, deadline=None)
@given(N=st.integers(1, 500), beta=st.floats(0.0, 1.0), r=st.floats(0.0, 3.0))
def test_scaled_formula(N, beta, r):
    base = gaussian_bump(2.0, 1.0)
    v = ScaledPotential(base, N, beta)
    assert float(v(r)) == pytest.approx(N ** (3 * beta - 1) * float(base(N**beta * r)), rel=1e-12, abs=0)
