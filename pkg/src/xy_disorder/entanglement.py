"""Two-qubit X states built from correlators, and their concurrence."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .fermions import PairCorrelators

PSD_TOL = 1e-9

_SYSY = np.array(
    [[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=complex
)
_X_MASK = np.eye(4, dtype=bool) | np.eye(4, dtype=bool)[::-1]


class Provenance(str, enum.Enum):
    PER_REALIZATION = "per_realization"
    ANNEALED_ASSEMBLED = "annealed_assembled"
    ORACLE_REDUCED = "oracle_reduced"


class NonPhysicalState(ValueError):
    """Assembled matrix has an eigenvalue below -PSD_TOL."""

    def __init__(self, message, correlators=None, min_eigenvalue=None):
        super().__init__(message)
        self.correlators = correlators
        self.min_eigenvalue = min_eigenvalue


@dataclass(frozen=True, eq=False)
class TwoSiteState:
    rho: np.ndarray
    provenance: Provenance = Provenance.PER_REALIZATION

    @property
    def is_x_form(self) -> bool:
        return not np.any(self.rho[~_X_MASK])


def x_state_entries(m1, m2, cxx, cyy, czz=None):
    """Diagonal and anti-diagonal of the X state (vectorised).

    Returns (r11, r22, r33, r44, r14, r23); ``czz`` defaults to the Wick
    value m1 m2 - cxx cyy.
    """
    m1, m2, cxx, cyy = (np.asarray(v, dtype=float) for v in (m1, m2, cxx, cyy))
    if czz is None:
        czz = m1 * m2 - cxx * cyy
    r11 = (1 + m1 + m2 + czz) / 4
    r22 = (1 + m1 - m2 - czz) / 4
    r33 = (1 - m1 + m2 - czz) / 4
    r44 = (1 - m1 - m2 + czz) / 4
    return r11, r22, r33, r44, (cxx - cyy) / 4, (cxx + cyy) / 4


def assemble_two_site_state(
    pc: PairCorrelators, provenance: Provenance = Provenance.PER_REALIZATION
) -> TwoSiteState:
    """rho = 1/4 [II + m1 ZI + m2 IZ + Cxx XX + Cyy YY + Czz ZZ].

    A minimum eigenvalue in (-PSD_TOL, 0) is repaired by clipping and
    renormalising; anything lower raises :class:`NonPhysicalState`.
    """
    vals = (pc.m_z_left, pc.m_z_right, pc.c_xx, pc.c_yy, pc.c_zz)
    if any(abs(v) > 1 + PSD_TOL for v in vals):
        raise NonPhysicalState(f"correlators outside [-1, 1]: {pc}", pc)
    r11, r22, r33, r44, r14, r23 = (
        float(v) for v in x_state_entries(pc.m_z_left, pc.m_z_right, pc.c_xx, pc.c_yy, pc.c_zz)
    )
    rho = np.zeros((4, 4))
    rho[0, 0], rho[1, 1], rho[2, 2], rho[3, 3] = r11, r22, r33, r44
    rho[0, 3] = rho[3, 0] = r14
    rho[1, 2] = rho[2, 1] = r23

    # X states block-diagonalise into {0,3} and {1,2}
    eigs = np.concatenate(
        [np.linalg.eigvalsh(rho[np.ix_([0, 3], [0, 3])]), np.linalg.eigvalsh(rho[np.ix_([1, 2], [1, 2])])]
    )
    lo = eigs.min()
    if lo < -PSD_TOL:
        raise NonPhysicalState(
            f"assembled state has eigenvalue {lo:.3e} for correlators {pc}", pc, lo
        )
    if lo < 0:
        rho = _project_psd(rho)
    return TwoSiteState(rho, provenance)


def _project_psd(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0, None)
    out = (v * w) @ v.T
    out = out / np.trace(out)
    out[~_X_MASK] = 0.0
    return out


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def concurrence(state) -> float:
    """Wootters concurrence of any two-qubit density matrix.

    The lambdas are the eigenvalues of sqrt(sqrt(rho) rho~ sqrt(rho)), which
    are the singular values of sqrt(rho) sqrt(rho~). Taking singular values
    avoids square roots of near-zero eigenvalues, which amplify rounding.
    """
    rho = state.rho if isinstance(state, TwoSiteState) else np.asarray(state)
    rho = np.asarray(rho, dtype=complex)
    rho_tilde = _SYSY @ rho.conj() @ _SYSY
    lam = np.linalg.svd(_psd_sqrt(rho) @ _psd_sqrt(rho_tilde), compute_uv=False)
    return float(min(1.0, max(0.0, lam[0] - lam[1] - lam[2] - lam[3])))


def concurrence_x_state(state) -> float:
    """2 max(0, |r23| - sqrt(r11 r44), |r14| - sqrt(r22 r33))."""
    rho = state.rho if isinstance(state, TwoSiteState) else np.asarray(state)
    if np.any(rho[~_X_MASK] != 0):
        raise ValueError("state is not of X form")
    d = np.real(np.diag(rho))
    r14, r23 = abs(rho[0, 3]), abs(rho[1, 2])
    return float(
        2 * max(0.0, r23 - np.sqrt(max(d[0] * d[3], 0.0)), r14 - np.sqrt(max(d[1] * d[2], 0.0)))
    )


def x_concurrence(m1, m2, cxx, cyy, czz=None):
    """Vectorised closed-form concurrence straight from correlators."""
    r11, r22, r33, r44, r14, r23 = x_state_entries(m1, m2, cxx, cyy, czz)
    a = np.abs(r23) - np.sqrt(np.clip(r11 * r44, 0, None))
    b = np.abs(r14) - np.sqrt(np.clip(r22 * r33, 0, None))
    return 2 * np.maximum(0.0, np.maximum(a, b))
