import numpy as np
import pytest

from xy_disorder.chain import Boundary, ChainSpec, DisorderSpec, DisorderTarget, homogeneous_chain
from xy_disorder.ed import (
    DenseOperator,
    annealed_cxy_check,
    build_dense_hamiltonian,
    compare_with_engine,
    pauli_expectation,
    reduced_density_matrix,
    reduced_two_site,
    solve_chain,
    thermal_state,
    two_site_correlators,
)

from conftest import random_chain


def test_two_site_ising_spectrum():
    h = build_dense_hamiltonian(ChainSpec(2, 1.0, 1.0, 0.0, 1.0, Boundary.OPEN))
    np.testing.assert_allclose(np.linalg.eigvalsh(h.matrix), [-0.5, -0.5, 0.5, 0.5], atol=1e-15)


def test_two_site_xx_spectrum():
    h = build_dense_hamiltonian(ChainSpec(2, 0.0, 1.0, 0.0, 1.0, Boundary.OPEN))
    np.testing.assert_allclose(np.linalg.eigvalsh(h.matrix), [-0.5, 0, 0, 0.5], atol=1e-15)


def test_single_spin_in_field_from_two_decoupled_sites():
    # N = 1 is not a chain; a decoupled pair is two copies of diag(-1/2, +1/2)
    h = build_dense_hamiltonian(ChainSpec(2, 0.5, 0.0, [1.0, 0.0], 1.0, Boundary.OPEN))
    np.testing.assert_allclose(np.diag(h.matrix), [-0.5, -0.5, 0.5, 0.5])


def test_hermitian_and_size_guard(rng):
    h = build_dense_hamiltonian(random_chain(rng, 5, boundary=Boundary.PERIODIC_C_CYCLIC))
    assert np.max(np.abs(h.matrix - h.matrix.T)) <= 1e-12
    with pytest.raises(ValueError):
        build_dense_hamiltonian(ChainSpec(13, 0.5, 1.0, 1.0, 1.0))


def test_thermal_state_invariants(rng):
    st = thermal_state(build_dense_hamiltonian(random_chain(rng, 6)), 5.0)
    rho = st.rho.matrix
    assert abs(np.trace(rho) - 1) <= 1e-12
    assert np.max(np.abs(rho - rho.conj().T)) <= 1e-12
    assert np.linalg.eigvalsh(rho).min() >= -1e-12


def test_zero_hamiltonian_is_maximally_mixed():
    st = thermal_state(DenseOperator(np.zeros((8, 8))), 1.0)
    np.testing.assert_allclose(st.rho.matrix, np.eye(8) / 8)
    assert st.ln_z == pytest.approx(3 * np.log(2))
    np.testing.assert_allclose(reduced_two_site(st.rho, 0, 2), np.eye(4) / 4, atol=1e-15)


def test_paramagnet_magnetisation():
    st = solve_chain(ChainSpec(2, 0.5, 0.0, 1.0, 2.0, Boundary.OPEN))
    rho1 = reduced_density_matrix(st.rho, [0])
    assert np.real(np.trace(rho1 @ np.diag([1, -1]))) == pytest.approx(np.tanh(1.0), abs=1e-12)


def test_two_site_ising_ln_z():
    st = solve_chain(ChainSpec(2, 1.0, 1.0, 0.0, 2.0, Boundary.OPEN))
    assert st.ln_z == pytest.approx(np.log(4 * np.cosh(1.0)), abs=1e-12)


def test_product_state_reduction():
    psi = np.zeros(16)
    psi[0] = 1.0  # all up
    rho = reduced_two_site(DenseOperator(np.outer(psi, psi)), 1, 2)
    np.testing.assert_array_equal(rho, np.diag([1.0, 0, 0, 0]))


def test_reduction_index_errors():
    rho = DenseOperator(np.eye(8) / 8)
    with pytest.raises(ValueError):
        reduced_two_site(rho, 1, 1)
    with pytest.raises(IndexError):
        reduced_two_site(rho, 0, 3)


def test_reduced_state_is_x_form_at_paper_point():
    st = solve_chain(homogeneous_chain(8, 0.5, 1.0, 1.0, 20.0))
    rho2 = reduced_two_site(st.rho, 3, 4)
    mask = np.eye(4, dtype=bool) | np.eye(4, dtype=bool)[::-1]
    assert np.max(np.abs(rho2[~mask])) <= 1e-10
    assert abs(np.trace(rho2) - 1) <= 1e-12
    assert np.linalg.eigvalsh(rho2).min() >= -1e-12


def test_pauli_coefficients_rebuild_state(rng):
    st = solve_chain(random_chain(rng, 4))
    rho2 = reduced_two_site(st.rho, 1, 2)
    from xy_disorder.ed import PAULI

    c = two_site_correlators(rho2)
    rebuilt = sum(c[a + b] * np.kron(PAULI[a], PAULI[b]) for a in "0xyz" for b in "0xyz") / 4
    np.testing.assert_allclose(rebuilt, rho2, atol=1e-12)


def test_per_realization_cxy_vanishes(rng):
    st = solve_chain(random_chain(rng, 6, boundary=Boundary.PERIODIC_C_CYCLIC))
    assert abs(pauli_expectation(reduced_two_site(st.rho, 2, 3), "x", "y")) <= 1e-12


def test_annealed_cxy_delta_disorder_is_zero():
    t = homogeneous_chain(6, 0.5, 1.0, 1.0, 20.0)
    est = annealed_cxy_check(DisorderSpec(DisorderTarget.COUPLING, 1.0, 0.0), t, 3)
    assert abs(est.mean) <= 1e-12


def test_engine_comparison_open_is_exact(rng):
    c = compare_with_engine(random_chain(rng, 7, beta=5.0))
    assert c.correlator_error <= 1e-9
    assert c.ln_z_relative_error <= 1e-9
    assert c.concurrence_error <= 1e-8
