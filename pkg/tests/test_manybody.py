import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gplab.dynamics import EvolveParams, evolve_hartree, free_propagate, harmonic_trap
from gplab.fields import GridSpec, WaveField, kinetic_energy
from gplab.manybody import (MEMORY_BUDGET, CutoffParams, DensityMatrixK, ManyBodyHamiltonian, ManyBodyState,
                            MemoryBudgetError, apply_hamiltonian, asymmetry, check_budget, condensate_overlap,
                            cutoff_theta, empirical_level_sup, energy_per_particle, evolve_exact, expectation,
                            export_marginal, ground_state_manybody, jastrow_state, load_marginal, marginal,
                            mean_field_scan, pure_marginal, product_state, sobolev_trace, symmetrize,
                            trace_distance)
from gplab.manybody.cutoff import level_ratio_bound, pair_h, sample_configurations
from gplab.manybody.states import pair_profile
from gplab.potentials import smooth_bump

G16 = GridSpec(1, 10.0, 16)


def gauss(grid=G16, width=1.0, k=0.0, c=0.0):
    return WaveField.from_function(grid, lambda x: np.exp(-(x - c) ** 2 / (2 * width**2)) * np.exp(1j * k * x))


def random_state(rng, N, grid=G16):
    t = rng.normal(size=(grid.n,) * N) + 1j * rng.normal(size=(grid.n,) * N)
    return symmetrize(ManyBodyState(N, grid, t)).normalized()


def hole(depth=0.5, width=0.3):
    return lambda r: 1.0 - depth * np.exp(-np.asarray(r) ** 2 / (2 * width**2))


# --- memory budget ---------------------------------------------------------------

def test_budget_arithmetic():
    check_budget(16, 6)
    check_budget(32, 5)
    with pytest.raises(MemoryBudgetError, match="2 GiB"):
        check_budget(32, 7)
    assert 32**7 * 16 > MEMORY_BUDGET >= 32**5 * 16


def test_budget_message_suggests_limits():
    with pytest.raises(MemoryBudgetError) as exc:
        product_state(gauss(GridSpec(1, 10.0, 32)), 7)
    assert "N <= 5" in str(exc.value)


# --- states ----------------------------------------------------------------------

def test_product_state_n1_is_phi():
    phi = gauss()
    np.testing.assert_allclose(product_state(phi, 1).tensor, phi.values, atol=1e-15)


def test_product_state_flat():
    g = GridSpec(1, 4.0, 8)
    phi = WaveField(g, np.full(8, 0.5, dtype=complex))
    st3 = product_state(phi, 3)
    np.testing.assert_allclose(st3.tensor, g.L ** -1.5, rtol=1e-14)
    assert asymmetry(st3) == 0.0


def test_state_validation():
    with pytest.raises(ValueError):
        ManyBodyState(2, GridSpec(2, 1.0, 4), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        ManyBodyState(2, G16, np.zeros((16, 8)))


def test_symmetrize_random(rng):
    t = rng.normal(size=(8, 8, 8))
    s = symmetrize(ManyBodyState(3, GridSpec(1, 1.0, 8), t))
    assert asymmetry(s) <= 1e-14
    brute = sum(np.transpose(t, p) for p in itertools.permutations(range(3))) / 6
    np.testing.assert_allclose(s.tensor, brute, atol=1e-14)


def test_jastrow_trivial_factor_is_product():
    phi = gauss()
    np.testing.assert_allclose(jastrow_state(phi, 3, lambda r: np.ones_like(r)).tensor,
                               product_state(phi, 3).tensor, atol=1e-15)


def test_jastrow_norm_double_integral():
    phi = gauss(width=1.3)
    f = hole(0.6, 0.5)
    js = jastrow_state(phi, 2, f, normalize=False)
    x = G16.x
    h = G16.h
    brute = 0.0
    for a in range(16):
        for b in range(16):
            d = abs(x[a] - x[b])
            d = min(d, G16.L - d)
            brute += h * h * f(d) ** 2 * abs(phi.values[a]) ** 2 * abs(phi.values[b]) ** 2
    assert js.norm() ** 2 == pytest.approx(brute, rel=1e-10)


def test_jastrow_unnormalized_norm_below_one():
    assert jastrow_state(gauss(), 3, hole(), normalize=False).norm() < 1


def test_jastrow_rejects_nonpositive_factor():
    with pytest.raises(ValueError):
        jastrow_state(gauss(), 2, lambda r: 1.0 - 1.5 * np.exp(-np.asarray(r) ** 2))


# --- marginals -------------------------------------------------------------------

def test_product_marginals_exact():
    phi = gauss(k=0.7)
    ps = product_state(phi, 4)
    g1 = marginal(ps, 1)
    np.testing.assert_allclose(g1.kernel, pure_marginal(phi, 1).kernel, atol=1e-12)
    g2 = marginal(product_state(phi, 3), 2)
    np.testing.assert_allclose(g2.kernel, pure_marginal(phi, 2).kernel, atol=1e-12)


def test_marginal_invariants(rng):
    s = random_state(rng, 3)
    for k in (1, 2, 3):
        g = marginal(s, k)
        assert g.hermiticity_defect() <= 1e-10
        assert g.eigenvalues().min() >= -1e-10
        assert abs(g.trace() - 1) <= 1e-10


def test_marginal_chain_consistency(rng):
    s = random_state(rng, 3)
    for k in (1, 2):
        np.testing.assert_allclose(marginal(s, k + 1).reduce().kernel, marginal(s, k).kernel, atol=1e-10)


def test_jastrow_marginal_brute_force():
    phi = gauss(width=1.2)
    js = jastrow_state(phi, 2, hole(0.7, 0.4))
    psi = js.tensor
    h = G16.h
    brute = np.zeros((16, 16), dtype=complex)
    for a in range(16):
        for b in range(16):
            brute[a, b] = h * sum(psi[a, z] * np.conj(psi[b, z]) for z in range(16))
    g = marginal(js, 1)
    np.testing.assert_allclose(g.kernel, brute, atol=1e-12)
    np.testing.assert_allclose(g.eigenvalues(), np.linalg.eigvalsh(brute * h), atol=1e-10)


def test_marginal_range_checked(rng):
    with pytest.raises(ValueError):
        marginal(random_state(rng, 2), 3)


def test_marginal_export_roundtrip(tmp_path, rng):
    g = marginal(random_state(rng, 3), 2)
    export_marginal(g, tmp_path / "g2.bin")
    back = load_marginal(tmp_path / "g2.bin")
    assert back.k == 2 and back.grid == G16
    np.testing.assert_array_equal(back.kernel, g.kernel)


# --- distances -------------------------------------------------------------------

def test_trace_distance_examples():
    g = G16
    phi = WaveField(g, np.exp(2j * np.pi * g.x / g.L) / np.sqrt(g.L))
    chi = WaveField(g, np.exp(4j * np.pi * g.x / g.L) / np.sqrt(g.L))
    p = pure_marginal(phi)
    assert trace_distance(p, p) == 0.0
    assert trace_distance(p, pure_marginal(chi)) == pytest.approx(1.0, abs=1e-12)
    mix = DensityMatrixK(1, g, 0.5 * pure_marginal(phi).kernel + 0.5 * pure_marginal(chi).kernel)
    assert trace_distance(p, mix) == pytest.approx(0.5, abs=1e-12)
    assert condensate_overlap(mix, phi) == pytest.approx(0.5, abs=1e-12)
    assert condensate_overlap(p, phi) == pytest.approx(1.0, abs=1e-12)


def test_trace_distance_grid_mismatch():
    with pytest.raises(ValueError):
        trace_distance(pure_marginal(gauss()), pure_marginal(gauss(GridSpec(1, 10.0, 32))))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), t=st.floats(0.0, 3.0))
def test_trace_distance_unitary_invariance(seed, t):
    rng = np.random.default_rng(seed)
    a, b = marginal(random_state(rng, 2), 1), marginal(random_state(rng, 2), 1)
    u = np.fft.ifft(np.exp(-1j * t * G16.k**2)[:, None] * np.fft.fft(np.eye(16), axis=0), axis=0)
    conj = lambda g: DensityMatrixK(1, G16, u @ g.kernel @ u.conj().T)  # noqa: E731
    assert trace_distance(conj(a), conj(b)) == pytest.approx(trace_distance(a, b), abs=1e-10)


# --- sobolev trace ---------------------------------------------------------------

def test_sobolev_trace_product():
    phi = gauss(k=0.4)
    base = 1 + kinetic_energy(phi)
    for k in (1, 2):
        assert sobolev_trace(pure_marginal(phi, k)) == pytest.approx(base**k, rel=1e-8)


def test_sobolev_trace_flat():
    phi = WaveField(G16, np.full(16, G16.L ** -0.5, dtype=complex))
    assert sobolev_trace(pure_marginal(phi, 2)) == pytest.approx(1.0, abs=1e-14)


def test_jastrow_raises_sobolev_trace():
    phi = gauss()
    js = jastrow_state(phi, 3, hole(0.5, 0.3))
    assert sobolev_trace(marginal(js, 2)) > sobolev_trace(pure_marginal(phi, 2))


# --- hamiltonian and dynamics ----------------------------------------------------

def test_plane_waves_are_eigenvectors():
    g = G16
    ks = [1, -2, 3]
    waves = [WaveField(g, np.exp(2j * np.pi * m * g.x / g.L) / np.sqrt(g.L)) for m in ks]
    t = np.multiply.outer(np.multiply.outer(waves[0].values, waves[1].values), waves[2].values)
    s = ManyBodyState(3, g, t)
    hs = apply_hamiltonian(s, None)
    lam = sum((2 * np.pi * m / g.L) ** 2 for m in ks)
    np.testing.assert_allclose(hs.tensor, lam * t, atol=1e-12)


def test_two_body_energy_quadrature():
    phi = gauss(width=1.1)
    pot = smooth_bump(3.0, 1.5)
    ham = ManyBodyHamiltonian.build(2, G16, pot)
    e = expectation(product_state(phi, 2), ham)
    v = pair_profile(pot, G16)
    x, h, rho = G16.x, G16.h, phi.density
    inter = 0.0
    for a in range(16):
        for b in range(16):
            inter += h * h * v[(a - b) % 16] * rho[a] * rho[b]
    assert e == pytest.approx(2 * kinetic_energy(phi) + inter, rel=1e-8)


def test_hamiltonian_hermitian(rng):
    ham = ManyBodyHamiltonian.build(3, G16, smooth_bump(2.0, 1.0), harmonic_trap(0.1))
    a, b = random_state(rng, 3), random_state(rng, 3)
    lhs = a.inner(ManyBodyState(3, G16, ham.apply(b.tensor)))
    rhs = np.conj(b.inner(ManyBodyState(3, G16, ham.apply(a.tensor))))
    assert abs(lhs - rhs) <= 1e-10


def test_free_dynamics_stay_factorized():
    phi = gauss(k=0.5)
    ham = ManyBodyHamiltonian(3, G16, np.zeros(16))
    traj = evolve_exact(product_state(phi, 3), ham, EvolveParams(1e-2, 0.5, record_every=10))
    for t, i in zip(traj.times, range(len(traj))):
        ref = pure_marginal(free_propagate(phi, t), 1)
        np.testing.assert_allclose(marginal(traj[i], 1).kernel, ref.kernel, atol=1e-10)


def test_mass_and_symmetry_conservation():
    phi = gauss(k=0.5)
    ham = ManyBodyHamiltonian(3, G16, pair_profile(smooth_bump(5.0, 2.0), G16) / 3)
    traj = evolve_exact(product_state(phi, 3), ham, EvolveParams(1e-3, 1.0, record_every=100))
    assert max(abs(traj[i].norm() - 1) for i in range(len(traj))) <= 1e-10
    assert max(asymmetry(traj[i]) for i in range(len(traj))) <= 1e-10


def _energy_drift(ham, phi, dt):
    traj = evolve_exact(product_state(phi, 3), ham, EvolveParams(dt, 0.5, record_every=int(round(0.01 / dt))))
    e = [expectation(traj[i], ham) for i in range(len(traj))]
    return max(e) - min(e)


def test_energy_drift_soft_coupling():
    g = GridSpec(1, 20.0, 16)
    phi = gauss(g, width=2.0, k=0.3)
    ham = ManyBodyHamiltonian(3, g, pair_profile(smooth_bump(1.0, 4.0), g) / 3)
    assert _energy_drift(ham, phi, 1e-3) <= 1e-8


def test_energy_drift_second_order():
    phi = gauss(k=0.5)
    ham = ManyBodyHamiltonian(3, G16, pair_profile(smooth_bump(5.0, 2.0), G16) / 3)
    ratio = _energy_drift(ham, phi, 2e-3) / _energy_drift(ham, phi, 1e-3)
    assert 3.0 <= ratio <= 5.0


def test_ground_state_two_oscillators():
    g = GridSpec(1, 16.0, 32)
    ham = ManyBodyHamiltonian.build(2, g, None, harmonic_trap())
    start = product_state(gauss(g, width=1.7, c=0.3), 2)
    st2, e = ground_state_manybody(2, ham, tol=1e-6, initial=start)
    assert e == pytest.approx(2.0, abs=1e-3)


def test_ground_state_interaction_and_condensation():
    g = GridSpec(1, 16.0, 32)
    free = ManyBodyHamiltonian.build(3, g, None, harmonic_trap())
    weak = ManyBodyHamiltonian.build(3, g, smooth_bump(1.0, 1.0), harmonic_trap(), coupling=1 / 3)
    _, e0 = ground_state_manybody(3, free, tol=1e-6)
    s, e1 = ground_state_manybody(3, weak, tol=1e-6)
    assert e1 >= e0
    assert marginal(s, 1).eigenvalues().max() >= 0.9
    assert asymmetry(s) <= 1e-10


def test_ground_state_needs_trap():
    with pytest.raises(ValueError):
        ground_state_manybody(2, ManyBodyHamiltonian(2, G16, np.zeros(16)))


# --- energies --------------------------------------------------------------------

def test_energy_free_kinetic():
    phi = gauss(k=0.3)
    ham = ManyBodyHamiltonian(3, G16, np.zeros(16))
    rep = energy_per_particle(product_state(phi, 3), ham, phi)
    assert rep.energy_pp == pytest.approx(kinetic_energy(phi), rel=1e-12)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_product_energy_matches_comparator(N):
    phi = gauss()
    ham = ManyBodyHamiltonian.build(N, G16, smooth_bump(5.0, 1.0), coupling=1 / N)
    rep = energy_per_particle(product_state(phi, N), ham, phi)
    assert rep.energy_pp == pytest.approx(rep.comparator, rel=1e-8)
    v = pair_profile(smooth_bump(5.0, 1.0), G16)
    assert rep.b_eff == pytest.approx(G16.h * v.sum(), rel=1e-12)


def test_jastrow_lowers_interaction():
    phi = gauss()
    ham = ManyBodyHamiltonian.build(3, G16, smooth_bump(5.0, 1.0), coupling=1 / 3)
    prod = energy_per_particle(product_state(phi, 3), ham)
    jas = energy_per_particle(jastrow_state(phi, 3, hole()), ham)
    assert jas.interaction_pp < prod.interaction_pp


# --- mean-field scan -------------------------------------------------------------

def test_scan_zero_potential():
    rows = mean_field_scan(gauss(), smooth_bump(0.0, 1.0), 0.0, 0.3, [2, 3], EvolveParams(1e-2, 0.3))
    assert [r["N"] for r in rows] == [2, 3]
    assert all(r["trace_dist"] <= 1e-8 for r in rows)


def test_scan_t0():
    rows = mean_field_scan(gauss(), smooth_bump(2.0, 2.0), 0.0, 0.0, [3, 2], EvolveParams(1e-2, 0.3))
    assert [r["N"] for r in rows] == [2, 3]
    assert all(r["trace_dist"] <= 1e-12 and r["overlap"] == pytest.approx(1.0) for r in rows)


def test_scan_threads_identical():
    args = (gauss(), smooth_bump(2.0, 2.0), 0.0, 0.1, [2, 3, 4], EvolveParams(1e-2, 0.1))
    assert mean_field_scan(*args, threads=3) == mean_field_scan(*args, threads=1)


def test_scan_comparator_is_hartree():
    phi = gauss()
    pot = smooth_bump(2.0, 2.0)
    rows = mean_field_scan(phi, pot, 0.0, 0.2, [2], EvolveParams(1e-2, 0.2))
    assert rows[0]["trace_dist"] > 1e-4
    hart = evolve_hartree(phi, pair_profile(pot, G16), EvolveParams(1e-2, 0.2)).final
    assert condensate_overlap(marginal(product_state(hart, 2), 1), hart) == pytest.approx(1.0)


# --- cutoff functions ------------------------------------------------------------

def test_cutoff_convention_and_scalar():
    p = CutoffParams(0.1, 0.5)
    pos = np.zeros((2, 3))
    assert cutoff_theta(pos, p, k=0, n_level=1) == 1.0
    expected = math.exp(-(2.0 / 0.1**0.5) * math.exp(-1.0))
    assert cutoff_theta(pos, p, k=1, n_level=1) == pytest.approx(expected, rel=1e-12)


def test_pair_h_matrix():
    pos = np.array([[0.0], [0.3], [1.0]])
    h = pair_h(pos, 0.2)
    assert h[0, 0] == 0.0
    assert h[0, 1] == pytest.approx(math.exp(-math.sqrt(0.09 + 0.04) / 0.2))
    np.testing.assert_allclose(h, h.T)


def test_cutoff_params_validation():
    for args in [(0.0, 0.5), (0.1, 1.0), (0.1, 0.5, -1), (0.1, 0.5, 2000)]:
        with pytest.raises(ValueError):
            CutoffParams(*args)


def test_cutoff_monotone_on_random_configs():
    rng = np.random.default_rng(0)
    p = CutoffParams(0.1, 0.5)
    for c in sample_configurations(rng, 1000, 5, 3, 0.4):
        for n in range(3):
            for k in range(5):
                t = cutoff_theta(c, p, k, n)
                assert cutoff_theta(c, p, k + 1, n) <= t
                assert cutoff_theta(c, p, k, n + 1) <= t


@settings(max_examples=50, deadline=None)
@given(pos=st.lists(st.tuples(*[st.floats(-1, 1)] * 3), min_size=2, max_size=5),
       n=st.integers(1, 5), m=st.integers(1, 3))
def test_level_ratio_bound(pos, n, m):
    p = CutoffParams(0.1, 0.5)
    val = level_ratio_bound(np.array(pos), p, len(pos), n, m)
    assert val <= (2 * m / math.e) ** m * (1 + 1e-12)


@pytest.mark.parametrize("m", [1, 2])
def test_empirical_sup_stable(m):
    p = CutoffParams(0.1, 0.5)
    a = empirical_level_sup(np.random.default_rng(1), 1000, p, 4, 4, 1, m)
    b = empirical_level_sup(np.random.default_rng(2), 10000, p, 4, 4, 1, m)
    assert np.isfinite(a) and np.isfinite(b)
    assert abs(a - b) <= 0.2 * max(a, b)
