"""Disorder-averaged nearest-neighbour entanglement in random transverse-field XY chains."""

__version__ = "0.1.0"

from .chain import (
    Boundary,
    ChainSpec,
    DisorderSpec,
    DisorderTarget,
    Distribution,
    ProbeParams,
    QuadraticForm,
    build_quadratic_form,
    homogeneous_chain,
    sample_realization,
)
from .entanglement import (
    NonPhysicalState,
    TwoSiteState,
    assemble_two_site_state,
    concurrence,
    concurrence_x_state,
)
from .estimators import EnsembleEstimate, EstimateRefused
from .fermions import (
    EngineError,
    FermionSolution,
    PairCorrelators,
    diagonalize,
    log_partition,
    pair_observables,
    probe_fd_crosscheck,
    thermal_correlations,
)
from .streams import RandomStream, derive_substream
