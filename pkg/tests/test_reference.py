from math import comb

import numpy as np
import pytest

from rqkd.ingest import FIXTURES, IntegralSet, assemble_active, load_fixture
from rqkd.evolution import optimal_weights
from rqkd.reference import (
    ExactPropagator,
    brute_force_weights,
    build_dense,
    build_dense_xdf,
    fci_ground,
    weight_objective,
)
from rqkd.xdf import assemble_xdf

from conftest import random_integrals

FCI = {"h2": -1.1088730601684391, "h4": -2.180966514679425, "h6": -3.2576068322409624}


def test_single_orbital_closed_form():
    ints = IntegralSet(1, 0.2, np.array([[-1.3]]), np.full((1, 1, 1, 1), 0.6), 1, 1)
    dense = build_dense(assemble_active(ints))
    assert dense.matrix.shape == (1, 1)
    assert dense.matrix[0, 0] == pytest.approx(0.2 + 2 * -1.3 + 0.6)


def test_non_interacting_spectrum():
    h = np.diag([-1.0, 0.25, 0.9])
    ints = IntegralSet(3, 0.1, h, np.zeros((3, 3, 3, 3)), 1, 1)
    w = np.linalg.eigvalsh(build_dense(assemble_active(ints)).matrix)
    eps = np.diag(h)
    ref = np.sort([0.1 + a + b for a in eps for b in eps])
    np.testing.assert_allclose(w, ref, atol=1e-12)


@pytest.mark.parametrize("name", FIXTURES)
def test_dual_path_agreement(name):
    act = assemble_active(load_fixture(name))
    a = build_dense(act, "operator").matrix
    b = build_dense(act, "slater-condon").matrix
    assert np.max(np.abs(a - b)) <= 1e-10


def test_dual_path_random_open_shell():
    act = assemble_active(random_integrals(4, 2, 1, seed=11))
    a = build_dense(act, "operator").matrix
    b = build_dense(act, "slater-condon").matrix
    assert np.max(np.abs(a - b)) <= 1e-10


@pytest.mark.parametrize("name", ["h2", "h4"])
def test_xdf_equals_direct_without_truncation(name):
    act = assemble_active(load_fixture(name))
    direct = build_dense(act).matrix
    via_xdf = build_dense_xdf(assemble_xdf(act, 0.0)).matrix
    assert np.max(np.abs(direct - via_xdf)) <= 1e-8


def test_xdf_equals_direct_non_interacting():
    ints = random_integrals(3, 1, 2, seed=12)
    ints = IntegralSet(3, ints.e_nuc_ext, ints.h_pq, np.zeros_like(ints.g_pqrs), 1, 2)
    act = assemble_active(ints)
    np.testing.assert_allclose(build_dense_xdf(assemble_xdf(act, 0.0)).matrix, build_dense(act).matrix, atol=1e-10)


def test_xdf_spectrum_random_three_orbital():
    act = assemble_active(random_integrals(3, 2, 1, seed=13))
    w_direct = np.linalg.eigvalsh(build_dense(act).matrix)
    w_xdf = np.linalg.eigvalsh(build_dense_xdf(assemble_xdf(act, 0.0)).matrix)
    np.testing.assert_allclose(w_xdf, w_direct, atol=1e-9)


def test_dense_size_guard():
    act = assemble_active(random_integrals(5, 1, 1, seed=0))
    with pytest.raises(ValueError):
        build_dense_xdf(assemble_xdf(act))


@pytest.mark.parametrize("name", ["h2", "h4", "h6"])
def test_fci_energies(name):
    act = assemble_active(load_fixture(name))
    dense = build_dense(act)
    n = act.n_orb
    assert dense.dim == comb(n, act.n_alpha) * comb(n, act.n_beta)
    e, v = fci_ground(dense)
    assert e == pytest.approx(FCI[name], abs=1e-9)
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_fci_below_hf(h2_active):
    dense = build_dense(h2_active)
    hf_index = int(np.flatnonzero(dense.basis == 0b0101)[0])
    assert fci_ground(dense)[0] < dense.matrix[hf_index, hf_index]


def test_fci_invariant_under_orbital_permutation(h4_active):
    perm = [2, 0, 3, 1]
    g = h4_active.g_pqrs[np.ix_(perm, perm, perm, perm)]
    h = h4_active.kappa_pq[np.ix_(perm, perm)] + 0.5 * np.einsum("prrq->pq", g)
    ints = IntegralSet(4, h4_active.e_ext, h, g, 2, 2)
    e_perm, _ = fci_ground(build_dense(assemble_active(ints)))
    assert e_perm == pytest.approx(fci_ground(build_dense(h4_active))[0], abs=1e-10)


@pytest.fixture(scope="module")
def h4_prop(h4_active):
    return ExactPropagator(build_dense(h4_active))


def test_propagation_identity_and_unitarity(h4_prop, h4_sim):
    phi = h4_sim.reference_state()
    np.testing.assert_allclose(h4_prop.propagate(phi, 0.0), phi, atol=1e-12)
    psi = h4_prop.propagate(phi, 2.3)
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)


def test_energy_conserved(h4_prop, h4_sim):
    phi = h4_sim.reference_state()
    e = [np.real(np.vdot(psi, h4_prop.apply_hamiltonian(psi)))
         for psi in (h4_prop.propagate(phi, t) for t in (0.0, 0.5, 3.0, 10.0))]
    np.testing.assert_allclose(e, e[0], atol=1e-10)


def test_brute_force_weights_closed_forms():
    np.testing.assert_allclose(brute_force_weights([1.0, 1.0]).p, [0.5, 0.5], atol=1e-8)
    np.testing.assert_allclose(brute_force_weights([4.0, 1.0]).p, [2 / 3, 1 / 3], atol=1e-8)


def test_brute_force_matches_square_root_rule():
    rng = np.random.default_rng(0)
    for _ in range(5):
        c = rng.uniform(0.1, 5.0, size=3)
        res = brute_force_weights(c)
        assert res.converged
        np.testing.assert_allclose(res.p, optimal_weights(c), atol=1e-6)
        assert res.objective == pytest.approx(weight_objective(c, optimal_weights(c)), abs=1e-8)


def test_brute_force_rejects_bad_input():
    with pytest.raises(ValueError):
        brute_force_weights([0.0, 0.0])
    with pytest.raises(ValueError):
        brute_force_weights([1.0, -1.0])
