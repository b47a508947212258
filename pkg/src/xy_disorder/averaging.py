"""Quenched and annealed disorder averages over ensembles of realizations.

Quenched: concurrence per realization, then the plain mean.
Annealed: correlators averaged with weights proportional to Z of each
realization (the derivative of ln <Z>), then one concurrence of the
assembled state, with C_zz rebuilt from the Wick identity.

Realization ``k`` always uses substream ``(master_seed, k)``. Work is split
into fixed-size chunks that may run in worker processes; results are
concatenated in index order before any reduction, so the worker count never
changes a single bit of the output.
"""

from __future__ import annotations

import atexit
import enum
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import proposal as tilt
from .chain import (
    Boundary,
    ChainSpec,
    DisorderSpec,
    DisorderTarget,
    NO_PROBES,
    ProbeParams,
    bond_sites,
    quadratic_forms,
    sample_disordered,
)
from .entanglement import x_concurrence
from .estimators import (
    ESS_WARN,
    EnsembleEstimate,
    EstimateRefused,
    check_ess,
    checkpoints,
    effective_sample_size,
    normalized_weights,
    plain_estimate,
    weighted_mean,
)
from .fermions import EngineError, bond_correlators, ln_2cosh, ln_z_batch, solve_batch
from .streams import MAIN, PILOT, derive_substream

CHUNK = 128
MAX_FAILURE_FRACTION = 1e-3
N_JACKKNIFE_BLOCKS = 20
PILOT_SIZE = 256
PILOT_ROUNDS = 8
PILOT_TARGET_ESS = 0.5
N_BASE_POINTS = 241


class BondPolicy(str, enum.Enum):
    ALL_BONDS_MEAN = "all_bonds_mean"
    CENTRAL_BOND = "central_bond"


class AnnealedMethod(str, enum.Enum):
    PRIOR = "prior"  # draw disorder from its distribution, weight by Z
    TILTED = "tilted"  # draw from a fitted approximation of P Z, exact weights


def policy_bonds(n_sites: int, boundary: Boundary, policy: BondPolicy) -> np.ndarray:
    if BondPolicy(policy) is BondPolicy.CENTRAL_BOND:
        return np.array([n_sites // 2 - 1])
    return bond_sites(n_sites, boundary)


def default_workers() -> int:
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# per-realization kernels


def draw_normals(master_seed: int, indices, n_sites: int, purpose: int = MAIN) -> np.ndarray:
    return np.stack(
        [derive_substream(master_seed, int(k), purpose).generator().standard_normal(n_sites) for k in indices]
    )


@dataclass(frozen=True, eq=False)
class Evaluated:
    """Per-realization results, rows in realization order."""

    ln_z: np.ndarray  # (S,)
    m_left: np.ndarray  # (S, B) for the selected bonds
    m_right: np.ndarray
    c_xx: np.ndarray
    c_yy: np.ndarray
    failed: np.ndarray  # (S,) bool

    @property
    def concurrence(self) -> np.ndarray:
        return x_concurrence(self.m_left, self.m_right, self.c_xx, self.c_yy)


def _evaluate_chunk(couplings, fields, gamma, beta, boundary, bonds):
    a, b = quadratic_forms(couplings, fields, gamma, boundary)
    failed = np.zeros(len(a), dtype=bool)
    try:
        ln_z, g = solve_batch(a, b, beta)
    except EngineError:
        # isolate the failing realizations
        ln_z = np.full(len(a), np.nan)
        g = np.full(a.shape, np.nan)
        for s in range(len(a)):
            try:
                lz, gs = solve_batch(a[s : s + 1], b[s : s + 1], beta)
                ln_z[s], g[s] = lz[0], gs[0]
            except EngineError:
                failed[s] = True
    m1, m2, cxx, cyy = bond_correlators(g, bonds)
    return ln_z, m1, m2, cxx, cyy, failed


def _evaluate_chunk_star(job):
    return _evaluate_chunk(*job)


_POOL: dict = {}


def _pool(workers: int) -> ProcessPoolExecutor:
    if workers not in _POOL:
        for old in _POOL.values():
            old.shutdown()
        _POOL.clear()
        _POOL[workers] = ProcessPoolExecutor(max_workers=workers)
    return _POOL[workers]


@atexit.register
def _shutdown_pools():
    for pool in _POOL.values():
        pool.shutdown(cancel_futures=True)
    _POOL.clear()


def evaluate(couplings, fields, gamma, beta, boundary, bonds, workers: int = 1) -> Evaluated:
    """Solve every realization (rows of ``couplings``/``fields``).

    Rows are cut into chunks of fixed size ``CHUNK`` whatever the worker
    count, and chunk results are concatenated in index order.
    """
    couplings = np.asarray(couplings, dtype=float)
    fields = np.asarray(fields, dtype=float)
    jobs = [
        (couplings[s : s + CHUNK], fields[s : s + CHUNK], gamma, beta, boundary, bonds)
        for s in range(0, len(couplings), CHUNK)
    ]
    if workers > 1 and len(jobs) > 1:
        parts = list(_pool(workers).map(_evaluate_chunk_star, jobs))
    else:
        parts = [_evaluate_chunk(*job) for job in jobs]
    cols = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    return Evaluated(*cols)


def _evaluate_ensemble(couplings, fields, disorder, template, beta, bonds, workers) -> Evaluated:
    """Like :func:`evaluate`; a delta distribution is solved once and tiled."""
    if disorder.std_dev == 0:
        one = evaluate(couplings[:1], fields[:1], template.gamma, beta, template.boundary, bonds)
        n = len(couplings)
        return Evaluated(*(np.repeat(getattr(one, f), n, axis=0) for f in _EVALUATED_FIELDS))
    return evaluate(couplings, fields, template.gamma, beta, template.boundary, bonds, workers)


_EVALUATED_FIELDS = ("ln_z", "m_left", "m_right", "c_xx", "c_yy", "failed")


def _check_failures(ev: Evaluated, what: str):
    n_fail = int(ev.failed.sum())
    if n_fail > MAX_FAILURE_FRACTION * len(ev.failed):
        raise EngineError(f"{what}: {n_fail} of {len(ev.failed)} realizations failed", {"failures": n_fail})
    return n_fail


# ---------------------------------------------------------------------------
# quenched


def quenched_average_concurrence(
    template: ChainSpec,
    disorder: DisorderSpec,
    n_samples: int,
    beta: float | None = None,
    bond_policy: BondPolicy = BondPolicy.ALL_BONDS_MEAN,
    master_seed: int = 0,
    workers: int = 1,
    normals: np.ndarray | None = None,
) -> EnsembleEstimate:
    """Mean over realizations of the (bond-reduced) concurrence."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    beta = template.beta if beta is None else beta
    bonds = policy_bonds(template.n_sites, template.boundary, bond_policy)
    if normals is None:
        normals = draw_normals(master_seed, range(n_samples), template.n_sites)
    couplings, fields = sample_disordered(template, disorder, normals[:n_samples])
    ev = _evaluate_ensemble(couplings, fields, disorder, template, beta, bonds, workers)
    _check_failures(ev, "quenched average")
    per_real = ev.concurrence.mean(axis=1)
    return plain_estimate(per_real[~ev.failed])


# ---------------------------------------------------------------------------
# annealed


@dataclass(frozen=True, eq=False)
class WeightedSample:
    """Disorder draws with their importance log weights (excluding ln Z)."""

    values: np.ndarray  # (S, N) the disordered parameter array
    log_weight_base: np.ndarray  # log prior - log proposal, per draw
    evaluated: Evaluated
    method: AnnealedMethod

    @property
    def log_weights(self) -> np.ndarray:
        return self.log_weight_base + self.evaluated.ln_z


@dataclass(frozen=True, eq=False)
class AnnealedCorrelators:
    """Z-weighted correlators. Per-bond arrays follow the bond policy."""

    m_left: np.ndarray  # (B,)
    m_right: np.ndarray
    c_xx: np.ndarray
    c_yy: np.ndarray
    m_z: float  # bond-reduced values used to assemble the state
    m_z_right: float
    c_xx_mean: float
    c_yy_mean: float
    std_errors: dict
    ess: float
    max_ln_z: float
    log_mean_z: float
    n_samples: int
    method: AnnealedMethod
    low_ess_warning: bool
    jackknife: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def c_zz(self) -> float:
        return self.m_z * self.m_z_right - self.c_xx_mean * self.c_yy_mean

    @property
    def concurrence(self) -> float:
        return float(x_concurrence(self.m_z, self.m_z_right, self.c_xx_mean, self.c_yy_mean))


def _target_values(template: ChainSpec, disorder: DisorderSpec):
    return template.couplings if disorder.target is DisorderTarget.COUPLING else template.fields


def _as_chain_arrays(template: ChainSpec, disorder: DisorderSpec, values: np.ndarray):
    s = values.shape
    if disorder.target is DisorderTarget.COUPLING:
        return values, np.broadcast_to(template.fields, s).copy()
    return np.broadcast_to(template.couplings, s).copy(), values


def _tilt_slope(template: ChainSpec, disorder: DisorderSpec, beta: float) -> float:
    """Bound on |d ln Z / dx_i| for one disordered parameter."""
    if disorder.target is DisorderTarget.COUPLING:
        g = template.gamma
        return beta * (abs(1 + g) + abs(1 - g)) / 4
    return beta / 2


def _n_active(template: ChainSpec, disorder: DisorderSpec) -> int:
    """Disordered parameters that enter H; an open chain has no wrap coupling."""
    n = template.n_sites
    if disorder.target is DisorderTarget.COUPLING and template.boundary is Boundary.OPEN:
        return n - 1
    return n


def _with_inactive(template, disorder, x, fill):
    """Pad proposal draws over the active parameters back to n_sites columns."""
    n = template.n_sites
    if x.shape[1] == n:
        return x
    return np.concatenate([x, fill[:, x.shape[1] : n]], axis=1)


def _ln_z_symmetry(template: ChainSpec, disorder: DisorderSpec) -> tilt.Symmetry:
    """Exact sign symmetry of ln Z in the disordered parameters."""
    if disorder.target is DisorderTarget.COUPLING:
        return tilt.Symmetry.SITE
    # a global spin flip reverses every field; an odd c-cyclic ring breaks it
    if template.boundary is Boundary.OPEN or template.n_sites % 2 == 0:
        return tilt.Symmetry.GLOBAL
    return tilt.Symmetry.NONE


def _homogeneous_tilt(template, disorder, beta):
    """ln Z per active parameter of the homogeneous chain, on a grid covering the tilted marginal."""
    mean, std = disorder.mean, disorder.std_dev
    reach = _tilt_slope(template, disorder, beta) * std**2 + 10 * std + 1.0
    grid = np.linspace(mean - reach, mean + reach, N_BASE_POINTS)
    n = template.n_sites
    vals = np.repeat(grid[:, None], n, axis=1)
    couplings, fields = _as_chain_arrays(template, disorder, vals)
    ln_z = ln_z_batch(couplings, fields, template.gamma, beta, template.boundary)
    return grid, ln_z / _n_active(template, disorder)


def build_tilted_proposal(
    template: ChainSpec,
    disorder: DisorderSpec,
    beta: float,
    master_seed: int,
    workers: int = 1,
    pilot_size: int = PILOT_SIZE,
    rounds: int = PILOT_ROUNDS,
):
    """Fit the ring proposal from pilot draws (their own substreams).

    Each round draws a pilot batch from the current proposal, scores that
    proposal by the ESS fraction of its own batch, and refits ln Z on all
    batches so far. Fits can overshoot where no pilot data exists yet, so the
    best-scoring proposal is kept rather than the last one. The result is a
    defensive mixture with the homogeneous product tilt.
    """
    n = _n_active(template, disorder)
    mean, std = disorder.mean, disorder.std_dev
    grid, base = _homogeneous_tilt(template, disorder, beta)
    lo, hi = tilt.support(mean, std, grid, base)
    symmetry = _ln_z_symmetry(template, disorder)
    safe = tilt.proposal_from_model(None, mean, std, lo, hi, n, (grid, base))
    prop, best, best_score = safe, safe, -1.0
    xs, lzs = [], []
    for r in range(rounds):
        z = draw_normals(master_seed, range(r * pilot_size, (r + 1) * pilot_size), template.n_sites, PILOT)
        x = prop.sample(tilt.uniforms_from_normals(z[:, :n]))
        full = _with_inactive(template, disorder, x, mean + std * z)
        couplings, fields = _as_chain_arrays(template, disorder, full)
        ln_z = ln_z_batch(couplings, fields, template.gamma, beta, template.boundary)
        log_w = -0.5 * np.sum(((x - mean) / std) ** 2, axis=1) + ln_z - prop.log_density(x)
        score = effective_sample_size(log_w) / pilot_size
        if score > best_score:
            best, best_score = prop, score
        if score >= PILOT_TARGET_ESS:
            break
        xs.append(x)
        lzs.append(ln_z)
        model = tilt.fit_ln_z_model(np.concatenate(xs), np.concatenate(lzs), lo, hi, grid, base, symmetry)
        prop = tilt.proposal_from_model(model, mean, std, lo, hi, n)
    if best is safe:
        return safe
    return tilt.DefensiveMixture(safe, best)


def draw_weighted_sample(
    template: ChainSpec,
    disorder: DisorderSpec,
    n_samples: int,
    beta: float | None = None,
    bond_policy: BondPolicy = BondPolicy.ALL_BONDS_MEAN,
    master_seed: int = 0,
    workers: int = 1,
    method: AnnealedMethod = AnnealedMethod.TILTED,
    normals: np.ndarray | None = None,
) -> WeightedSample:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    beta = template.beta if beta is None else beta
    method = AnnealedMethod(method)
    n = template.n_sites
    bonds = policy_bonds(n, template.boundary, bond_policy)
    if normals is None:
        normals = draw_normals(master_seed, range(n_samples), n)
    normals = normals[:n_samples]
    if method is AnnealedMethod.PRIOR or disorder.std_dev == 0:
        couplings, fields = sample_disordered(template, disorder, normals)
        values = couplings if disorder.target is DisorderTarget.COUPLING else fields
        base = np.zeros(n_samples)
    else:
        prop = build_tilted_proposal(template, disorder, beta, master_seed, workers)
        active = prop.n_vars
        tilted = prop.sample(tilt.uniforms_from_normals(normals[:, :active]))
        # parameters outside H keep their prior draws, whose weight factor cancels
        values = _with_inactive(template, disorder, tilted, disorder.mean + disorder.std_dev * normals)
        log_prior = -0.5 * np.sum(((tilted - disorder.mean) / disorder.std_dev) ** 2, axis=1)
        base = log_prior - prop.log_density(tilted)
        couplings, fields = _as_chain_arrays(template, disorder, values)
    ev = _evaluate_ensemble(couplings, fields, disorder, template, beta, bonds, workers)
    _check_failures(ev, "annealed average")
    if ev.failed.any():
        base = np.where(ev.failed, -np.inf, base)
        ev = replace(ev, ln_z=np.where(ev.failed, 0.0, ev.ln_z))
    return WeightedSample(values, base, ev, method)


def _blocks(n, n_blocks=N_JACKKNIFE_BLOCKS):
    n_blocks = max(2, min(n_blocks, n))
    return np.array_split(np.arange(n), n_blocks)


def summarize_annealed(sample: WeightedSample, refuse: bool = True) -> AnnealedCorrelators:
    ev = sample.evaluated
    log_w = sample.log_weights
    n = len(log_w)
    ess = effective_sample_size(log_w)
    if refuse:
        check_ess(ess)
    w = normalized_weights(log_w)
    fields4 = [ev.m_left, ev.m_right, ev.c_xx, ev.c_yy]
    per_bond = [weighted_mean(np.nan_to_num(f), w) for f in fields4]
    # bond-reduced per realization, then weighted
    reduced = np.stack([np.nan_to_num(f).mean(axis=1) for f in fields4], axis=1)  # (S, 4)
    means = weighted_mean(reduced, w)
    se = np.sqrt(np.sum((w[:, None] * (reduced - means)) ** 2, axis=0))

    # leave-one-block-out replicates for downstream (nonlinear) errors
    wr = w[:, None] * reduced
    jack = []
    for blk in _blocks(n):
        keep_w = 1.0 - w[blk].sum()
        if keep_w <= 0:
            jack.append(means)
            continue
        jack.append((wr.sum(axis=0) - wr[blk].sum(axis=0)) / keep_w)
    jack = np.array(jack)

    # running weighted concurrence at 5% checkpoints
    cw = np.cumsum(np.exp(log_w - log_w.max()))
    cwr = np.cumsum(np.exp(log_w - log_w.max())[:, None] * reduced, axis=0)
    pts = checkpoints(n)
    run = cwr[pts - 1] / np.where(cw[pts - 1] > 0, cw[pts - 1], np.nan)[:, None]
    trace = x_concurrence(run[:, 0], run[:, 1], run[:, 2], run[:, 3])

    log_mean_z = float(logsumexp(log_w) - logsumexp(sample.log_weight_base))
    return AnnealedCorrelators(
        *per_bond,
        *(float(v) for v in means),
        std_errors=dict(zip(("m_left", "m_right", "c_xx", "c_yy"), se.tolist())),
        ess=ess,
        max_ln_z=float(np.max(ev.ln_z)),
        log_mean_z=log_mean_z,
        n_samples=n,
        method=sample.method,
        low_ess_warning=ess < ESS_WARN,
        jackknife=jack,
        trace=trace,
    )


def annealed_average_correlators(
    template: ChainSpec,
    disorder: DisorderSpec,
    n_samples: int,
    beta: float | None = None,
    bond_policy: BondPolicy = BondPolicy.ALL_BONDS_MEAN,
    master_seed: int = 0,
    workers: int = 1,
    method: AnnealedMethod = AnnealedMethod.TILTED,
    normals: np.ndarray | None = None,
) -> AnnealedCorrelators:
    """Z-weighted correlators; raises :class:`EstimateRefused` when ESS < 10."""
    sample = draw_weighted_sample(
        template, disorder, n_samples, beta, bond_policy, master_seed, workers, method, normals
    )
    return summarize_annealed(sample)


def annealed_probe_derivative(
    sample: WeightedSample,
    template: ChainSpec,
    disorder: DisorderSpec,
    beta: float | None = None,
    which: str = "xx",
    step: float = 1e-4,
) -> float:
    """Probe observable from finite differences of ln <Z(lambda)> on a fixed sample.

    Returns the bond sum of (1+g)<XX> (``xx``), (1-g)<YY> (``yy``) or the site
    sum of <Z> (``z``), to be compared with the weighted Wick-path averages.
    """
    beta = template.beta if beta is None else beta
    couplings, fields = _as_chain_arrays(template, disorder, sample.values)
    key = {"xx": "lambda_x", "yy": "lambda_y", "z": "lambda_z"}[which]

    def ln_mean_z(lam):
        probes = ProbeParams(**{key: lam})
        ln_z = ln_z_batch(couplings, fields, template.gamma, beta, template.boundary, probes)
        return logsumexp(sample.log_weight_base + ln_z)

    d = (ln_mean_z(step) - ln_mean_z(-step)) / (2 * step)
    sign = 1.0 if which == "z" else -1.0
    return sign * d / beta


# ---------------------------------------------------------------------------
# curves over the control parameter (the disorder mean)


@dataclass(frozen=True, eq=False)
class CurvePoint:
    x: float
    mean: float
    std_error: float
    ess: float
    n_samples: int


@dataclass(frozen=True, eq=False)
class AnnealedCurve:
    xs: np.ndarray
    concurrence: np.ndarray
    std_error: np.ndarray
    ess: np.ndarray
    n_samples: int
    correlators: np.ndarray  # (len(xs), 4): m_left, m_right, c_xx, c_yy
    refused: np.ndarray  # (len(xs),) bool
    eval_xs: np.ndarray | None = None
    eval_concurrence: np.ndarray | None = None
    eval_std_error: np.ndarray | None = None


def _curve_normals(template, n_samples, master_seed):
    # common random numbers: the same standard normals at every grid point
    return draw_normals(master_seed, range(n_samples), template.n_sites)


def quenched_curve(
    template: ChainSpec,
    disorder: DisorderSpec,
    xs,
    n_samples: int,
    beta: float | None = None,
    bond_policy: BondPolicy = BondPolicy.ALL_BONDS_MEAN,
    master_seed: int = 0,
    workers: int = 1,
) -> list[EnsembleEstimate]:
    normals = _curve_normals(template, n_samples, master_seed)
    return [
        quenched_average_concurrence(
            template, disorder.with_mean(x), n_samples, beta, bond_policy, master_seed, workers, normals
        )
        for x in xs
    ]


def homogeneous_concurrence(
    template: ChainSpec, value: float, target: DisorderTarget, beta: float | None = None,
    bond_policy: BondPolicy = BondPolicy.ALL_BONDS_MEAN,
) -> float:
    est = quenched_average_concurrence(
        template, DisorderSpec(target, value, 0.0), 1, beta, bond_policy, normals=np.zeros((1, template.n_sites))
    )
    return est.mean


def annealed_concurrence_curve(
    template: ChainSpec,
    disorder: DisorderSpec,
    mu_grid,
    n_samples: int,
    beta: float | None = None,
    bond_policy: BondPolicy = BondPolicy.ALL_BONDS_MEAN,
    master_seed: int = 0,
    workers: int = 1,
    method: AnnealedMethod = AnnealedMethod.TILTED,
    spline: bool = True,
    eval_points=None,
    refuse: bool = True,
) -> AnnealedCurve:
    """Annealed concurrence along the control parameter.

    Correlators are computed at every grid point; with ``spline`` they are
    interpolated by natural cubic splines and the concurrence is assembled
    from the interpolants (at ``eval_points``, default the grid itself).
    Refused grid points (ESS < 10) are reported in ``refused`` and, when
    ``refuse`` is set, abort the curve.
    """
    from .analysis import spline_fit

    xs = np.asarray(mu_grid, dtype=float)
    if spline and (len(xs) < 4 or np.any(np.diff(xs) <= 0)):
        raise ValueError("mu_grid must be strictly increasing with at least 4 points")
    normals = _curve_normals(template, n_samples, master_seed)
    corr = np.empty((len(xs), 4))
    jack = np.empty((len(xs), len(_blocks(n_samples)), 4))
    ess = np.empty(len(xs))
    refused = np.zeros(len(xs), dtype=bool)
    for k, x in enumerate(xs):
        sample = draw_weighted_sample(
            template, disorder.with_mean(x), n_samples, beta, bond_policy, master_seed, workers, method, normals
        )
        try:
            ac = summarize_annealed(sample, refuse=True)
        except EstimateRefused:
            if refuse:
                raise
            refused[k] = True
            ac = summarize_annealed(sample, refuse=False)
        corr[k] = (ac.m_z, ac.m_z_right, ac.c_xx_mean, ac.c_yy_mean)
        jack[k] = ac.jackknife
        ess[k] = ac.ess

    # at the knots the spline reproduces the data, so grid values are pointwise
    conc = _assemble_checked(corr.T, xs)
    se = _jackknife_se(np.array([x_concurrence(*jack[:, b, :].T) for b in range(jack.shape[1])]))
    eval_xs = eval_conc = eval_se = None
    if spline and eval_points is not None:
        eval_xs = np.asarray(eval_points, dtype=float)
        splines = [spline_fit(xs, corr[:, i]) for i in range(4)]
        eval_conc = _assemble_checked([sp(eval_xs) for sp in splines], eval_xs)
        reps = [
            x_concurrence(*(spline_fit(xs, jack[:, b, i])(eval_xs) for i in range(4)))
            for b in range(jack.shape[1])
        ]
        eval_se = _jackknife_se(np.array(reps))
    return AnnealedCurve(xs, conc, se, ess, n_samples, corr, refused, eval_xs, eval_conc, eval_se)


def _jackknife_se(reps: np.ndarray) -> np.ndarray:
    nb = len(reps)
    return np.sqrt((nb - 1) / nb * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))


def _assemble_checked(vals, at):
    """Concurrence from interpolated correlators, enforcing positivity of the state."""
    from .entanglement import NonPhysicalState, PSD_TOL, x_state_entries

    m1, m2, cxx, cyy = (np.asarray(v) for v in vals)
    r11, r22, r33, r44, r14, r23 = x_state_entries(m1, m2, cxx, cyy)
    # eigenvalues of the two 2x2 blocks
    lo_a = 0.5 * (r11 + r44) - np.sqrt(0.25 * (r11 - r44) ** 2 + r14**2)
    lo_b = 0.5 * (r22 + r33) - np.sqrt(0.25 * (r22 - r33) ** 2 + r23**2)
    lo = np.minimum(lo_a, lo_b)
    bad = lo < -PSD_TOL
    if np.any(bad):
        k = int(np.argmax(bad))
        raise NonPhysicalState(
            f"interpolated state not positive at x = {np.atleast_1d(at)[k]!r} "
            f"(min eigenvalue {np.atleast_1d(lo)[k]:.3e})",
            {"x": float(np.atleast_1d(at)[k])},
            float(np.atleast_1d(lo)[k]),
        )
    return x_concurrence(m1, m2, cxx, cyy)
