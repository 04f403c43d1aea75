import numpy as np
import pytest

from rqkd import evolution as ev
from rqkd import measurement as ms
from rqkd.ingest import assemble_active, load_fixture
from rqkd.statevector import XdfSimulator, inner
from rqkd.xdf import assemble_xdf

from conftest import random_state


def basis_vec(i, dim=16):
    v = np.zeros(dim, dtype=complex)
    v[i] = 1.0
    return v


def test_identical_states():
    a = random_state(2, np.random.default_rng(0))
    comb = ms.build_combination_states(a, a)
    assert comb.N_xB == pytest.approx(0.0) and comb.p_re(0) == pytest.approx(1.0)
    est = ms.estimate_overlap(a, a, ms.ShotPlan(1000, seed=1))
    assert est.value.real == pytest.approx(1.0, abs=1e-12)


def test_orthogonal_states():
    a, b = basis_vec(3), basis_vec(5)
    comb = ms.build_combination_states(a, b)
    assert comb.p_re(0) == pytest.approx(0.5) and comb.p_re(1) == pytest.approx(0.5)
    vals = [ms.estimate_overlap(a, b, ms.ShotPlan(2000, seed=s)).value.real for s in range(200)]
    assert abs(np.mean(vals)) < 4 * np.std(vals) / np.sqrt(len(vals))


def test_purely_imaginary_overlap():
    a = basis_vec(5)
    comb = ms.build_combination_states(a, 1j * a)
    assert comb.p_im(0) == pytest.approx(1.0)
    est = ms.estimate_overlap(a, 1j * a, ms.ShotPlan(100, seed=0))
    assert est.value.imag == pytest.approx(1.0)
    est = ms.estimate_overlap(a, -1j * a, ms.ShotPlan(100, seed=0))
    assert est.value.imag == pytest.approx(-1.0)


def test_known_overlap_binomial():
    a = basis_vec(5)
    b = 0.6 * basis_vec(5) + 0.8 * basis_vec(6)
    M = 1_000_000
    est = ms.estimate_overlap(a, b, ms.ShotPlan(M, seed=3, re_fraction=1.0))
    assert abs(est.value.real - 0.6) <= 4 * np.sqrt((1 - 0.36) / M)
    assert est.se_re == pytest.approx(np.sqrt((1 - 0.36) / M), rel=0.01)


def test_overlap_std_scaling():
    rng = np.random.default_rng(4)
    a, b = random_state(2, rng), random_state(2, rng)
    Ms = [100, 1000, 10_000, 100_000, 1_000_000]
    stds = [np.std([ms.estimate_overlap(a, b, ms.ShotPlan(M, seed=9), (M, k)).value.real for k in range(10)], ddof=1)
            for M in Ms]
    assert np.polyfit(np.log(Ms), np.log(stds), 1)[0] == pytest.approx(-0.5, abs=0.1)


def test_exact_mode_overlap(h4_sim):
    rng = np.random.default_rng(5)
    a, b = random_state(4, rng), random_state(4, rng)
    assert ms.estimate_overlap(a, b, ms.ShotPlan(1, mode="exact")).value == inner(a, b)


def test_eigenstate_energy_is_sharp():
    act = assemble_active(load_fixture("h2"))
    sim = XdfSimulator(assemble_xdf(act, np.inf))  # one-body term only
    assert sim.n_terms == 1
    phi = sim.rotate(basis_vec(0b0101), 0, inverse=True)
    e = sim.expectation(phi)
    np.testing.assert_allclose(sim.apply_hamiltonian(phi), e * phi, atol=1e-12)
    est = ms.estimate_h_element(phi, phi, sim, ms.ShotPlan(1_000_000, seed=2))
    assert abs(est.value.real - e) <= max(4 * est.se_re, 1e-10)


def test_h_element_exact_mode_and_recombination(h4_sim):
    rng = np.random.default_rng(6)
    phi = h4_sim.reference_state()
    w = ev.compute_weights(h4_sim, "qdrift", "d3")
    ket = ev.apply_trajectory(h4_sim, phi, w, ev.sample_trajectory(w, 5, 1), 0.2, "d3")
    bra = ev.apply_trajectory(h4_sim, phi, w, ev.sample_trajectory(w, 3, 2), 0.2, "d3")
    ref = inner(bra, h4_sim.apply_hamiltonian(ket))
    exact = ms.estimate_h_element(bra, ket, h4_sim, ms.ShotPlan(1, mode="exact"))
    assert abs(exact.value - ref) <= 1e-10
    assert abs(ms.exact_h_parts(bra, ket, h4_sim) - ref) <= 1e-10


def test_h_element_unbiased(h4_sim):
    phi = h4_sim.reference_state()
    w = ev.compute_weights(h4_sim, "qdrift", "d3")
    ket = ev.apply_trajectory(h4_sim, phi, w, ev.sample_trajectory(w, 4, 1), 0.3, "d3")
    ref = inner(phi, h4_sim.apply_hamiltonian(ket))
    est = ms.estimate_h_element(phi, ket, h4_sim, ms.ShotPlan(200_000, seed=8))
    assert abs(est.value.real - ref.real) <= 4 * est.se_re
    assert abs(est.value.imag - ref.imag) <= 4 * est.se_im


def test_estimates_are_reproducible(h4_sim):
    phi = h4_sim.reference_state()
    a = ms.estimate_h_element(phi, phi, h4_sim, ms.ShotPlan(500, seed=3), (1, 2))
    b = ms.estimate_h_element(phi, phi, h4_sim, ms.ShotPlan(500, seed=3), (1, 2))
    assert a.value == b.value


def test_pooling_identical_estimates():
    est = ms.ElementEstimate(0.3 + 0.1j, 0.0, 0.0)
    pooled = ms.combine_trajectory_shots([est] * 4)
    assert pooled.value == pytest.approx(0.3 + 0.1j)
    assert pooled.se_re == 0.0


def test_pooling_two_trajectories_equal_shots():
    a, b = basis_vec(5), basis_vec(6)
    e1 = ms.estimate_overlap(a, a, ms.ShotPlan(1000, seed=1))
    e2 = ms.estimate_overlap(a, b, ms.ShotPlan(1000, seed=2))
    pooled = ms.combine_trajectory_shots([e1, e2])
    assert pooled.value.real == pytest.approx(0.5 * (e1.value.real + e2.value.real))
    n = 50
    pooled = ms.combine_trajectory_shots([e1] * n)
    assert pooled.se_re <= e1.se_re / np.sqrt(n) + 1e-15


def test_pooled_trajectories_match_channel(h4_sim):
    phi = h4_sim.reference_state()
    w = ev.compute_weights(h4_sim, "optimal", "d3", phi)
    R, dt = 2, 0.1
    channel = inner(phi, ev.run_protocol(h4_sim, phi, "d3", dt, R, w))
    ests = []
    for k in range(1000):
        psi = ev.apply_trajectory(h4_sim, phi, w, ev.sample_trajectory(w, R, 5, k), dt, "d3")
        ests.append(ms.estimate_overlap(phi, psi, ms.ShotPlan(1000, seed=6), (k,)))
    pooled = ms.combine_trajectory_shots(ests)
    assert abs(pooled.value.real - channel.real) <= 4 * pooled.se_re
    assert abs(pooled.value.imag - channel.imag) <= 4 * pooled.se_im


def test_shot_plan_validation():
    with pytest.raises(ValueError):
        ms.ShotPlan(0)
    with pytest.raises(ValueError):
        ms.ShotPlan(10, mode="other")
    assert ms.ShotPlan(11).split_re_im() == (6, 5)
