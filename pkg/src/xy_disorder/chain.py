"""Random transverse-field XY chains and their Jordan-Wigner quadratic form.

The spin Hamiltonian is

    H = sum_i J_i/4 [(1+g) X_i X_{i+1} + (1-g) Y_i Y_{i+1}] - sum_i h_i/2 Z_i

and, after Jordan-Wigner with an occupied mode meaning spin down,

    H = sum_ij c_i^+ A_ij c_j + 1/2 sum_ij (c_i^+ B_ij c_j^+ + h.c.) - Tr A / 2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .streams import RandomStream


class Boundary(str, enum.Enum):
    PERIODIC_C_CYCLIC = "periodic_c_cyclic"
    OPEN = "open"


class DisorderTarget(str, enum.Enum):
    COUPLING = "coupling"
    FIELD = "field"


class Distribution(str, enum.Enum):
    GAUSSIAN = "gaussian"


def _frozen(a, n: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """One concrete chain. ``couplings[i]`` is the bond between sites i and i+1.

    Scalars for ``couplings``/``fields`` are broadcast to all sites. Under
    open boundaries the last coupling (bond N -> 1) is ignored.
    """

    n_sites: int
    gamma: float
    couplings: np.ndarray
    fields: np.ndarray
    beta: float
    boundary: Boundary = Boundary.PERIODIC_C_CYCLIC

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise ValueError(f"n_sites must be an integer >= 2, got {self.n_sites}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "n_sites", int(self.n_sites))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "couplings", _frozen(self.couplings, self.n_sites, "couplings"))
        object.__setattr__(self, "fields", _frozen(self.fields, self.n_sites, "fields"))

    def with_params(self, **changes) -> "ChainSpec":
        return replace(self, **changes)

    @property
    def bonds(self) -> np.ndarray:
        return bond_sites(self.n_sites, self.boundary)

    def __repr__(self):
        return (
            f"ChainSpec(n_sites={self.n_sites}, gamma={self.gamma}, beta={self.beta}, "
            f"boundary={self.boundary.value}, couplings={self.couplings.tolist()}, "
            f"fields={self.fields.tolist()})"
        )


def bond_sites(n_sites: int, boundary: Boundary) -> np.ndarray:
    """Left site of every bond (0-based). The right site is ``(left + 1) % n``."""
    n_bonds = n_sites if Boundary(boundary) is Boundary.PERIODIC_C_CYCLIC else n_sites - 1
    return np.arange(n_bonds)


@dataclass(frozen=True)
class DisorderSpec:
    """I.i.d. disorder on one parameter family; ``std_dev = 0`` is the delta distribution."""

    target: DisorderTarget
    mean: float
    std_dev: float
    distribution: Distribution = Distribution.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "target", DisorderTarget(self.target))
        object.__setattr__(self, "distribution", Distribution(self.distribution))
        if not self.std_dev >= 0:
            raise ValueError(f"std_dev must be >= 0, got {self.std_dev}")

    def with_mean(self, mean: float) -> "DisorderSpec":
        return replace(self, mean=float(mean))

    def with_std(self, std_dev: float) -> "DisorderSpec":
        return replace(self, std_dev=float(std_dev))


@dataclass(frozen=True)
class ProbeParams:
    """Auxiliary source terms.

    The probed Hamiltonian adds, per bond, ``(1+g) lx X X + (1-g) ly Y Y`` and,
    per site, ``-lz Z``. Derivatives of ln Z at zero probes give correlators.
    """

    lambda_x: float = 0.0
    lambda_y: float = 0.0
    lambda_z: float = 0.0


NO_PROBES = ProbeParams()


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    a: np.ndarray
    b: np.ndarray


def sample_disordered(
    template: ChainSpec, disorder: DisorderSpec, normals: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Map standard normals of shape (..., N) to (couplings, fields) arrays.

    Drawing standard normals first and shifting/scaling afterwards keeps the
    same random numbers across different means and widths.
    """
    normals = np.asarray(normals, dtype=float)
    values = disorder.mean + disorder.std_dev * normals
    if disorder.std_dev == 0:
        values = np.full(normals.shape, float(disorder.mean))
    if disorder.target is DisorderTarget.COUPLING:
        return values, np.broadcast_to(template.fields, normals.shape).copy()
    return np.broadcast_to(template.couplings, normals.shape).copy(), values


def draw_normals(stream: RandomStream, n_sites: int) -> np.ndarray:
    return stream.generator().standard_normal(n_sites)


def sample_realization(
    spec_template: ChainSpec, disorder: DisorderSpec, stream: RandomStream
) -> ChainSpec:
    """Draw one realization; negative draws are kept."""
    couplings, fields = sample_disordered(
        spec_template, disorder, draw_normals(stream, spec_template.n_sites)
    )
    return spec_template.with_params(couplings=couplings, fields=fields)


def quadratic_forms(
    couplings: np.ndarray,
    fields: np.ndarray,
    gamma: float,
    boundary: Boundary,
    probes: ProbeParams = NO_PROBES,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched (A, B) for arrays of shape (..., N); returns (..., N, N) pairs."""
    couplings = np.asarray(couplings, dtype=float)
    fields = np.asarray(fields, dtype=float)
    n = couplings.shape[-1]
    if n < 2:
        raise ValueError(f"need at least 2 sites, got {n}")
    shape = couplings.shape[:-1] + (n, n)
    a = np.zeros(shape)
    b = np.zeros(shape)

    # per bond: a XX + b YY maps to A_off = a + b, B = a - b
    xx = 0.25 * (1 + gamma) * couplings + (1 + gamma) * probes.lambda_x
    yy = 0.25 * (1 - gamma) * couplings + (1 - gamma) * probes.lambda_y
    hop = xx + yy
    pair = xx - yy

    idx = np.arange(n)
    a[..., idx, idx] = fields + 2 * probes.lambda_z
    # accumulate: for N = 2 with a periodic wrap both bonds share entries
    for i in bond_sites(n, boundary):
        j = (i + 1) % n
        a[..., i, j] += hop[..., i]
        a[..., j, i] += hop[..., i]
        b[..., i, j] += pair[..., i]
        b[..., j, i] -= pair[..., i]
    return a, b


def build_quadratic_form(chain: ChainSpec, probes: ProbeParams = NO_PROBES) -> QuadraticForm:
    a, b = quadratic_forms(chain.couplings, chain.fields, chain.gamma, chain.boundary, probes)
    return QuadraticForm(a, b)


def homogeneous_chain(
    n_sites: int,
    gamma: float,
    coupling: float,
    field: float,
    beta: float,
    boundary: Boundary = Boundary.PERIODIC_C_CYCLIC,
) -> ChainSpec:
    return ChainSpec(n_sites, gamma, coupling, field, beta, boundary)
