"""Free-fermion solution of the quadratic form.

With A_i = c_i^+ + c_i and B_i = c_i^+ - c_i, the thermal contraction matrix
G_ij = <B_i A_j> determines every nearest-neighbour spin correlator:

    <Z_i>          = -G_ii
    <X_i X_i+1>    =  G_i,i+1
    <Y_i Y_i+1>    =  G_i+1,i
    <Z_i Z_i+1>    =  G_ii G_i+1,i+1 - G_i,i+1 G_i+1,i

The quadratic form is diagonalised through the SVD of A + B rather than the
eigenproblem of (A - B)(A + B), which would square the condition number near
gapless points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .chain import (
    Boundary,
    ChainSpec,
    NO_PROBES,
    ProbeParams,
    QuadraticForm,
    bond_sites,
    build_quadratic_form,
    quadratic_forms,
)


class EngineError(RuntimeError):
    """The SVD did not converge. ``context`` carries the offending parameters."""

    def __init__(self, message, context=None):
        super().__init__(message)
        self.context = context


class CancellationError(RuntimeError):
    """Finite-difference stencils disagree; the step is too small or too large."""


@dataclass(frozen=True, eq=False)
class FermionSolution:
    lambdas: np.ndarray  # descending, >= 0
    phi: np.ndarray  # rows phi_k
    psi: np.ndarray  # rows psi_k
    trace_a: float


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    g: np.ndarray
    boundary: Boundary = Boundary.OPEN


@dataclass(frozen=True)
class PairCorrelators:
    m_z_left: float
    m_z_right: float
    c_xx: float
    c_yy: float
    c_zz: float


def _svd(m: np.ndarray, context=None):
    try:
        return np.linalg.svd(m)
    except np.linalg.LinAlgError as exc:
        raise EngineError(f"SVD failed to converge: {exc}", context) from exc


def diagonalize(form: QuadraticForm, context=None) -> FermionSolution:
    """Bogoliubov modes from ``A + B = psi^T diag(lambdas) phi``."""
    a, b = np.asarray(form.a, float), np.asarray(form.b, float)
    u, s, vh = _svd(a + b, context)
    psi = u.T.copy()
    phi = vh.copy()
    # fix the sign gauge: first non-negligible entry of each phi_k positive
    for k in range(phi.shape[0]):
        row = phi[k]
        first = np.flatnonzero(np.abs(row) > 1e-12)
        if first.size and row[first[0]] < 0:
            phi[k] = -row
            psi[k] = -psi[k]
    return FermionSolution(s, phi, psi, float(np.trace(a)))


def ln_2cosh(x):
    """ln(2 cosh x) without overflow."""
    x = np.abs(np.asarray(x, dtype=float))
    return x + np.log1p(np.exp(-2.0 * np.minimum(x, 400.0)))


def log_partition(sol: FermionSolution, beta: float) -> float:
    """ln Z = sum_k ln(2 cosh(beta Lambda_k / 2)).

    The spin Hamiltonian equals sum_k Lambda_k (eta_k^+ eta_k - 1/2): the
    Bogoliubov zero-point term -sum Lambda/2 + Tr A/2 and the Jordan-Wigner
    constant -Tr A/2 combine so that Tr A drops out.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    return float(np.sum(ln_2cosh(0.5 * beta * sol.lambdas)))


def thermal_correlations(
    sol: FermionSolution, beta: float, boundary: Boundary = Boundary.OPEN
) -> CorrelationMatrix:
    if not beta > 0:
        raise ValueError("beta must be positive")
    t = np.tanh(0.5 * beta * sol.lambdas)
    g = -(sol.psi.T * t) @ sol.phi
    return CorrelationMatrix(g, Boundary(boundary))


def pair_observables(g: CorrelationMatrix, bond: int) -> PairCorrelators:
    """Correlators of bond ``bond`` (0-based: sites ``bond`` and ``bond + 1``)."""
    n = g.g.shape[0]
    n_bonds = len(bond_sites(n, g.boundary))
    if not 0 <= bond < n_bonds:
        raise IndexError(f"bond {bond} out of range for {n_bonds} bonds")
    i, j = bond, (bond + 1) % n
    m1, m2 = -g.g[i, i], -g.g[j, j]
    cxx, cyy = g.g[i, j], g.g[j, i]
    czz = g.g[i, i] * g.g[j, j] - cxx * cyy
    return PairCorrelators(float(m1), float(m2), float(cxx), float(cyy), float(czz))


# ---------------------------------------------------------------------------
# batched kernels used by the ensemble code


def solve_batch(a: np.ndarray, b: np.ndarray, beta: float, context=None):
    """ln Z and G for stacked forms of shape (S, N, N)."""
    u, s, vh = _svd(a + b, context)
    ln_z = ln_2cosh(0.5 * beta * s).sum(axis=-1)
    t = np.tanh(0.5 * beta * s)
    g = -(u * t[..., None, :]) @ vh
    return ln_z, g


def bond_correlators(g: np.ndarray, bonds: np.ndarray):
    """(m_left, m_right, c_xx, c_yy) arrays of shape (..., n_bonds)."""
    n = g.shape[-1]
    i = np.asarray(bonds)
    j = (i + 1) % n
    return -g[..., i, i], -g[..., j, j], g[..., i, j], g[..., j, i]


def ln_z_batch(couplings, fields, gamma, beta, boundary, probes: ProbeParams = NO_PROBES):
    a, b = quadratic_forms(couplings, fields, gamma, boundary, probes)
    s = np.linalg.svd(a + b, compute_uv=False)
    return ln_2cosh(0.5 * beta * s).sum(axis=-1)


# ---------------------------------------------------------------------------


class Probe(str, enum.Enum):
    XX = "xx"
    YY = "yy"
    Z = "z"


def _probe(which: Probe, step: float) -> ProbeParams:
    return {
        Probe.XX: ProbeParams(lambda_x=step),
        Probe.YY: ProbeParams(lambda_y=step),
        Probe.Z: ProbeParams(lambda_z=step),
    }[which]


def probe_fd_crosscheck(
    chain: ChainSpec,
    beta: float | None = None,
    which: Probe = Probe.XX,
    step: float = 1e-4,
    tol: float = 1e-6,
) -> float:
    """Observable conjugate to a probe, from finite differences of ln Z.

    Returns sum_bonds (1+g) <XX> for ``XX``, sum_bonds (1-g) <YY> for ``YY``
    and sum_sites <Z> for ``Z``. Raises :class:`CancellationError` when the
    two-point and four-point central stencils differ by more than
    ``tol * max(1, |value|)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    beta = chain.beta if beta is None else beta
    which = Probe(which)

    def ln_z(lam):
        form = build_quadratic_form(chain, _probe(which, lam))
        return log_partition(diagonalize(form), beta)

    f1p, f1m = ln_z(step), ln_z(-step)
    f2p, f2m = ln_z(2 * step), ln_z(-2 * step)
    d2 = (f1p - f1m) / (2 * step)
    d4 = (8 * (f1p - f1m) - (f2p - f2m)) / (12 * step)
    # H contains +lambda (1+g) XX per bond but -lambda Z per site
    sign = 1.0 if which is Probe.Z else -1.0
    value = sign * d2 / beta
    if abs(d2 - d4) / beta > tol * max(1.0, abs(value)):
        raise CancellationError(
            f"two-point ({sign * d2 / beta!r}) and four-point ({sign * d4 / beta!r}) "
            f"stencils disagree at step {step!r}"
        )
    return value


def wick_probe_sum(chain: ChainSpec, beta: float | None = None, which: Probe = Probe.XX) -> float:
    """The same observable as :func:`probe_fd_crosscheck`, via Wick contractions."""
    beta = chain.beta if beta is None else beta
    corr = thermal_correlations(diagonalize(build_quadratic_form(chain)), beta, chain.boundary)
    which = Probe(which)
    if which is Probe.Z:
        return float(-np.trace(corr.g))
    m1, m2, cxx, cyy = bond_correlators(corr.g, chain.bonds)
    if which is Probe.XX:
        return float((1 + chain.gamma) * cxx.sum())
    return float((1 - chain.gamma) * cyy.sum())
