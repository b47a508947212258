"""Exact diagonalisation of the spin chain in the full 2^N space.

Ground truth for every sign convention of the free-fermion engine. Periodic
chains use the true spin wrap-around bond here (no fermionic approximation).
Site 0 is the most significant qubit; bit value 0 is spin up (Z = +1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import (
    Boundary,
    ChainSpec,
    DisorderSpec,
    NO_PROBES,
    ProbeParams,
    bond_sites,
    sample_realization,
)
from .estimators import (
    EnsembleEstimate,
    check_ess,
    effective_sample_size,
    normalized_weights,
    running_mean_trace,
    weighted_mean,
    weighted_std_error,
)
from .streams import derive_substream

MAX_SITES = 12

PAULI = {
    "0": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class DenseOperator:
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_sites(self) -> int:
        return int(round(np.log2(self.dim)))


def build_dense_hamiltonian(chain: ChainSpec, probes: ProbeParams = NO_PROBES) -> DenseOperator:
    """Dense H, real in the computational basis, stored as float64."""
    n = chain.n_sites
    if n > MAX_SITES:
        raise ValueError(f"exact diagonalisation capped at {MAX_SITES} sites, got {n}")
    dim = 2**n
    states = np.arange(dim)
    bits = (states[None, :] >> (n - 1 - np.arange(n))[:, None]) & 1  # (n, dim)
    h = np.zeros((dim, dim))

    z = 1 - 2 * bits
    diag = -(0.5 * chain.fields + probes.lambda_z) @ z
    h[states, states] = diag

    g = chain.gamma
    for i in bond_sites(n, chain.boundary):
        j = (i + 1) % n
        cxx = 0.25 * (1 + g) * chain.couplings[i] + (1 + g) * probes.lambda_x
        cyy = 0.25 * (1 - g) * chain.couplings[i] + (1 - g) * probes.lambda_y
        flipped = states ^ ((1 << (n - 1 - i)) | (1 << (n - 1 - j)))
        # YY on a flipped pair: -1 if the two bits agree, +1 otherwise
        yy_sign = np.where(bits[i] == bits[j], -1.0, 1.0)
        np.add.at(h, (flipped, states), cxx + cyy * yy_sign)
    return DenseOperator(h)


@dataclass(frozen=True, eq=False)
class ThermalState:
    rho: DenseOperator
    ln_z: float


def thermal_state(h: DenseOperator, beta: float) -> ThermalState:
    """exp(-beta H) / Z with the ground energy shifted out before exponentiating."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    m = h.matrix
    if np.max(np.abs(m - m.conj().T)) > 1e-12:
        raise ValueError("Hamiltonian is not Hermitian")
    e, v = np.linalg.eigh(m)
    p = np.exp(-beta * (e - e[0]))
    z_shifted = p.sum()
    rho = (v * (p / z_shifted)) @ v.conj().T
    return ThermalState(DenseOperator(rho), float(-beta * e[0] + np.log(z_shifted)))


def reduced_density_matrix(rho: DenseOperator, sites) -> np.ndarray:
    """Partial trace keeping ``sites`` in the given order."""
    n = rho.n_sites
    sites = [int(s) for s in sites]
    if len(set(sites)) != len(sites):
        raise ValueError("sites must be distinct")
    for s in sites:
        if not 0 <= s < n:
            raise IndexError(f"site {s} out of range for {n} sites")
    t = rho.matrix.reshape((2,) * (2 * n))
    row = list(range(n))
    col = list(range(n, 2 * n))
    for k in range(n):
        if k not in sites:
            col[k] = row[k]
    out = [row[s] for s in sites] + [col[s] for s in sites]
    k = len(sites)
    return np.einsum(t, row + col, out).reshape(2**k, 2**k)


def reduced_two_site(rho: DenseOperator, i: int, j: int) -> np.ndarray:
    if i == j:
        raise ValueError("need two distinct sites")
    return reduced_density_matrix(rho, [i, j])


def pauli_expectation(rho2: np.ndarray, a: str, b: str) -> float:
    """Tr(rho2 sigma^a x sigma^b); labels from '0xyz'."""
    return float(np.real(np.trace(rho2 @ np.kron(PAULI[a], PAULI[b]))))


def two_site_correlators(rho2: np.ndarray) -> dict:
    """All 16 Pauli coefficients of a two-qubit state keyed by e.g. ``'xz'``."""
    return {a + b: pauli_expectation(rho2, a, b) for a in "0xyz" for b in "0xyz"}


@dataclass(frozen=True)
class OracleBond:
    m_z_left: float
    m_z_right: float
    c_xx: float
    c_yy: float
    c_zz: float
    c_xy: float
    rho2: np.ndarray


def oracle_bond(state: ThermalState, i: int, j: int) -> OracleBond:
    rho2 = reduced_two_site(state.rho, i, j)
    c = two_site_correlators(rho2)
    return OracleBond(c["z0"], c["0z"], c["xx"], c["yy"], c["zz"], c["xy"], rho2)


def solve_chain(chain: ChainSpec, beta: float | None = None) -> ThermalState:
    beta = chain.beta if beta is None else beta
    return thermal_state(build_dense_hamiltonian(chain), beta)


def annealed_cxy_check(
    disorder: DisorderSpec,
    chain_template: ChainSpec,
    n_samples: int,
    beta: float | None = None,
    master_seed: int = 0,
    bond: int | None = None,
) -> EnsembleEstimate:
    """Partition-function weighted average of <X_i Y_i+1> over realizations."""
    if chain_template.n_sites > 11:
        raise ValueError("annealed C_xy check limited to N <= 11")
    beta = chain_template.beta if beta is None else beta
    n = chain_template.n_sites
    i = n // 2 - 1 if bond is None else bond
    j = (i + 1) % n
    if disorder.std_dev == 0:
        # every realization is the same chain, so one solve is exact
        chain = sample_realization(chain_template, disorder, derive_substream(master_seed, 0))
        v = pauli_expectation(reduced_two_site(solve_chain(chain, beta).rho, i, j), "x", "y")
        return EnsembleEstimate(v, 0.0, n_samples, float(n_samples), np.full(len(running_mean_trace(np.zeros(n_samples))), v))
    ln_z = np.empty(n_samples)
    cxy = np.empty(n_samples)
    for k in range(n_samples):
        chain = sample_realization(chain_template, disorder, derive_substream(master_seed, k))
        state = solve_chain(chain, beta)
        ln_z[k] = state.ln_z
        cxy[k] = pauli_expectation(reduced_two_site(state.rho, i, j), "x", "y")
    ess = effective_sample_size(ln_z)
    check_ess(ess, "annealed C_xy")
    w = normalized_weights(ln_z)
    trace = running_mean_trace(cxy)  # unweighted running means, diagnostic only
    return EnsembleEstimate(
        float(weighted_mean(cxy, w)), float(weighted_std_error(cxy, w)), n_samples, ess, trace
    )


@dataclass(frozen=True)
class EngineComparison:
    """Largest engine-vs-oracle deviations over all bonds of one chain."""

    correlator_error: float  # max |delta| over m_z, C_xx, C_yy, C_zz
    ln_z_relative_error: float
    concurrence_error: float


def compare_with_engine(chain: ChainSpec, beta: float | None = None) -> EngineComparison:
    """Run the free-fermion engine and the dense oracle on the same chain."""
    from .chain import build_quadratic_form
    from .entanglement import Provenance, assemble_two_site_state, concurrence
    from .fermions import diagonalize, log_partition, pair_observables, thermal_correlations

    beta = chain.beta if beta is None else beta
    sol = diagonalize(build_quadratic_form(chain))
    g = thermal_correlations(sol, beta, chain.boundary)
    state = solve_chain(chain, beta)
    n = chain.n_sites
    corr_err = conc_err = 0.0
    for i in bond_sites(n, chain.boundary):
        pc = pair_observables(g, int(i))
        ob = oracle_bond(state, int(i), int((i + 1) % n))
        engine = np.array([pc.m_z_left, pc.m_z_right, pc.c_xx, pc.c_yy, pc.c_zz])
        exact = np.array([ob.m_z_left, ob.m_z_right, ob.c_xx, ob.c_yy, ob.c_zz])
        corr_err = max(corr_err, float(np.max(np.abs(engine - exact))))
        c_engine = concurrence(assemble_two_site_state(pc))
        c_exact = concurrence(ob.rho2)
        conc_err = max(conc_err, abs(c_engine - c_exact))
    ln_z = log_partition(sol, beta)
    rel = abs(ln_z - state.ln_z) / max(abs(state.ln_z), 1e-300)
    return EngineComparison(corr_err, rel, conc_err)
