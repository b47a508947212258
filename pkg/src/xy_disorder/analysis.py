"""Phase structure from concurrence curves: splines, QPT proxy, segments, sigma_c, grids."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

DEFAULT_TOL = 1e-3
N_SCAN = 1000
FLAT_RANGE = 1e-3
# a minimum counts as prominent only when it sits this far below the lower of
# the derivative maxima enclosing it, relative to the derivative's full range
PROMINENCE_RATIO = 0.5
# ... and when it is sharp: prominence over the dip's full width at half
# prominence, in units of C per (control unit)^2
MIN_SHARPNESS = 1.0


class ExtrapolationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NaturalSpline:
    """Natural cubic spline that refuses to evaluate outside its knots."""

    xs: np.ndarray
    ys: np.ndarray
    _cs: CubicSpline = field(repr=False)

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.xs[0]), float(self.xs[-1])

    def __call__(self, x, nu: int = 0):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        slack = 1e-12 * max(1.0, abs(hi - lo))
        if np.any(x < lo - slack) or np.any(x > hi + slack):
            raise ExtrapolationError(f"spline evaluation outside [{lo}, {hi}]")
        return self._cs(np.clip(x, lo, hi), nu)

    def derivative(self, x):
        return self(x, 1)


def spline_fit(xs, ys) -> NaturalSpline:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    if len(xs) < 4:
        raise ValueError("spline fit needs at least 4 points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly increasing")
    return NaturalSpline(xs, ys, CubicSpline(xs, ys, bc_type="natural", extrapolate=False))


class Averaging(str, enum.Enum):
    ANNEALED = "annealed"
    QUENCHED = "quenched"
    HOMOGENEOUS = "homogeneous"


@dataclass(frozen=True, eq=False)
class Curve:
    xs: np.ndarray
    ys: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise ValueError("xs and ys must be 1-d arrays of equal length")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("curve xs must be strictly increasing")
        if np.any(ys < 0):
            raise ValueError("concurrence values must be non-negative")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)


# ---------------------------------------------------------------------------
# QPT proxy


@dataclass(frozen=True)
class DerivativeMinimum:
    x_min: float
    value: float
    prominence: float
    width: float  # full width of the dip at half prominence

    @property
    def sharpness(self) -> float:
        return self.prominence / self.width


@dataclass(frozen=True)
class NoProminentMinimum:
    """The derivative has no clear dip; carries the numbers behind the verdict."""

    derivative_range: float
    prominence: float
    reason: str
    width: float = float("nan")

    @property
    def sharpness(self) -> float:
        return self.prominence / self.width if self.width > 0 else float("nan")


def _quadratic_vertex(x, y):
    """Vertex of the parabola through three points (falls back to the middle)."""
    c = np.polyfit(x - x[1], y, 2)
    if c[0] <= 0:
        return x[1], y[1]
    dx = -c[1] / (2 * c[0])
    dx = float(np.clip(dx, x[0] - x[1], x[2] - x[1]))
    return x[1] + dx, float(np.polyval(c, dx))


def derivative_profile(curve: Curve, n_scan: int = N_SCAN):
    """Dense samples of dC/dx over the curve's range."""
    sp = spline_fit(curve.xs, curve.ys)
    x = np.linspace(curve.xs[0], curve.xs[-1], n_scan)
    return x, sp.derivative(x)


def prominence_of(d: np.ndarray, k: int) -> float:
    """Depth of d[k] below the lower of the highest points on either side."""
    left = d[: k + 1].max()
    right = d[k:].max()
    return float(min(left, right) - d[k])


def dip_width(x: np.ndarray, d: np.ndarray, k: int, prominence: float) -> float:
    """Full width of the dip around d[k] where it lies below half its prominence.

    Crossings are located by linear interpolation between scan points; a dip
    still below the half level at the edge of the scan is cut off there.
    """
    half = d[k] + 0.5 * prominence
    above = d >= half
    left = np.nonzero(above[:k])[0]
    right = np.nonzero(above[k + 1 :])[0]

    def cross(i, j):
        return x[i] + (half - d[i]) * (x[j] - x[i]) / (d[j] - d[i])

    xl = x[0] if len(left) == 0 else cross(left[-1], left[-1] + 1)
    xr = x[-1] if len(right) == 0 else cross(k + right[0], k + right[0] + 1)
    return float(xr - xl)


def derivative_min(
    curve: Curve,
    n_scan: int = N_SCAN,
    prominence_ratio: float = PROMINENCE_RATIO,
    min_sharpness: float = MIN_SHARPNESS,
) -> DerivativeMinimum | NoProminentMinimum:
    """Location of the minimum of dC/dx (the finite-size QPT proxy).

    The minimum is found on a dense scan and refined by a parabola through
    the lowest scan point and its neighbours. It is reported only if it is
    prominent:

    * the derivative varies by at least ``FLAT_RANGE``;
    * the dip is at least ``prominence_ratio`` of that variation deep on
      both sides (a minimum on the edge of the range has zero prominence);
    * the dip is sharp: prominence divided by its full width at half
      prominence is at least ``min_sharpness``. Disorder smears the dip out
      long before the derivative becomes flat, and this is what separates a
      located transition from a smooth crossover.
    """
    if len(curve.xs) < 6:
        raise ValueError("derivative_min needs at least 6 points")
    x, d = derivative_profile(curve, n_scan)
    k = int(np.argmin(d))
    d_range = float(d.max() - d.min())
    prom = prominence_of(d, k)
    if d_range < FLAT_RANGE:
        return NoProminentMinimum(d_range, prom, "derivative is flat")
    if prom < prominence_ratio * d_range:
        return NoProminentMinimum(d_range, prom, "minimum is not prominent")
    width = dip_width(x, d, k, prom)
    if prom < min_sharpness * width:
        return NoProminentMinimum(d_range, prom, "minimum is too blunt", width)
    xm, vm = _quadratic_vertex(x[k - 1 : k + 2], d[k - 1 : k + 2])
    return DerivativeMinimum(float(xm), float(vm), prom, width)


# ---------------------------------------------------------------------------
# segments


@dataclass(frozen=True)
class Segments:
    intervals: tuple  # ((x_start, x_end), ...) of grid points with C > tol
    index_ranges: tuple  # ((i_start, i_end), ...) inclusive
    n_points: int = 0  # grid length, needed to see runs touching the ends

    @property
    def count(self) -> int:
        return len(self.intervals)

    def separable_gaps(self) -> int:
        """Zero intervals lying strictly between entangled segments."""
        return max(0, self.count - 1)

    def separable_intervals(self) -> int:
        """All maximal runs of grid points with C <= tol, including end runs.

        A run at x = 0 counts: the model is symmetric under x -> -x, so a
        separable run starting there is interior on the full axis.
        """
        if self.count == 0:
            return 1 if self.n_points else 0
        lead = self.index_ranges[0][0] > 0
        trail = self.index_ranges[-1][1] < self.n_points - 1
        return self.separable_gaps() + int(lead) + int(trail)


def classify_segments(curve: Curve, tol: float = DEFAULT_TOL, merge_single_dips: bool = False) -> Segments:
    """Maximal runs of grid points with C > tol.

    With ``merge_single_dips``, two runs separated by exactly one sub-tol
    grid point are joined (a dip narrower than the grid cannot be resolved).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    above = curve.ys > tol
    runs = []
    start = None
    for i, a in enumerate(above):
        if a and start is None:
            start = i
        elif not a and start is not None:
            runs.append([start, i - 1])
            start = None
    if start is not None:
        runs.append([start, len(above) - 1])
    if merge_single_dips:
        merged = []
        for r in runs:
            if merged and r[0] - merged[-1][1] == 2:
                merged[-1][1] = r[1]
            else:
                merged.append(r)
        runs = merged
    return Segments(
        tuple((float(curve.xs[i]), float(curve.xs[j])) for i, j in runs),
        tuple((i, j) for i, j in runs),
        len(above),
    )


# ---------------------------------------------------------------------------
# sigma_c


class NonMonotoneTransition(ValueError):
    def __init__(self, message, anomalies):
        super().__init__(message)
        self.anomalies = anomalies


@dataclass(frozen=True)
class SigmaCResult:
    sigma_c: float
    half_width: float
    probes: tuple  # ((sigma, segment_count), ...) in evaluation order

    @property
    def bracket(self) -> tuple[float, float]:
        return self.sigma_c - self.half_width, self.sigma_c + self.half_width


def find_sigma_c(
    count_at: Callable[[float], int],
    sigma_lo: float,
    sigma_hi: float,
    count_lo: int | None = None,
    count_hi: int | None = None,
    tol: float = 0.01,
    max_iter: int = 30,
) -> SigmaCResult:
    """Bisection on sigma between a many-revival and a single-revival line.

    ``count_at(sigma)`` returns the number of entangled segments on the line
    of constant sigma. The count is expected to be non-increasing in sigma;
    any probe that breaks this raises :class:`NonMonotoneTransition`.
    """
    if not sigma_lo < sigma_hi:
        raise ValueError("need sigma_lo < sigma_hi")
    probes = []

    def count(s):
        c = int(count_at(s))
        probes.append((float(s), c))
        return c

    c_lo = count(sigma_lo) if count_lo is None else count_lo
    c_hi = count(sigma_hi) if count_hi is None else count_hi
    if not c_lo > c_hi:
        raise NonMonotoneTransition(
            f"segment count does not drop across the bracket: {c_lo} at {sigma_lo}, {c_hi} at {sigma_hi}",
            [(sigma_lo, c_lo), (sigma_hi, c_hi)],
        )
    lo, hi = sigma_lo, sigma_hi
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        c = count(mid)
        if c > c_lo or c < c_hi:
            raise NonMonotoneTransition(
                f"segment count {c} at sigma = {mid} outside [{c_hi}, {c_lo}]", [(mid, c)]
            )
        if c == c_hi:
            hi = mid
        elif c == c_lo:
            lo = mid
        else:
            # intermediate count: the transition splits; follow the upper edge
            lo = mid
            c_lo = c
    return SigmaCResult(0.5 * (lo + hi), 0.5 * (hi - lo), tuple(probes))


# ---------------------------------------------------------------------------
# phase grids


class GridMode(str, enum.Enum):
    SEPARABLE_ENTANGLED = "separable_entangled"
    NORMAL_ENHANCED = "normal_enhanced"


class Label(str, enum.Enum):
    SEPARABLE = "Separable"
    ENTANGLED = "Entangled"
    NORMAL = "Normal"
    ENHANCED = "Enhanced"
    UNKNOWN = "Unknown"


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    mu_axis: np.ndarray
    sigma_axis: np.ndarray
    labels: np.ndarray  # (len(sigma_axis), len(mu_axis)) of Label
    mode: GridMode
    tolerance: float = DEFAULT_TOL
    values: np.ndarray | None = None  # the concurrence (or difference) behind each label

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.labels.shape != (len(self.sigma_axis), len(self.mu_axis)):
            raise ValueError("labels shape must be (len(sigma_axis), len(mu_axis))")

    def nodes(self, label: Label):
        """(mu, sigma) pairs carrying ``label``."""
        hit = np.frompyfunc(lambda l: l is label, 1, 1)(self.labels).astype(bool)
        si, mi = np.nonzero(hit)
        return [(float(self.mu_axis[m]), float(self.sigma_axis[s])) for s, m in zip(si, mi)]

    @property
    def unknown(self):
        return self.nodes(Label.UNKNOWN)


def label_nodes(mode: GridMode, values, baseline=None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Labels for an array of concurrences; NaN marks a failed estimate."""
    values = np.asarray(values, dtype=float)
    mode = GridMode(mode)
    if mode is GridMode.SEPARABLE_ENTANGLED:
        hit, yes, no = values > tol, Label.ENTANGLED, Label.SEPARABLE
    else:
        if baseline is None:
            raise ValueError("normal/enhanced labelling needs the homogeneous baseline")
        hit, yes, no = values - np.asarray(baseline, dtype=float) > tol, Label.ENHANCED, Label.NORMAL
    # built element-wise: numpy would coerce a str-enum fill value to plain str
    flat = [Label.UNKNOWN if np.isnan(v) else (yes if h else no) for v, h in zip(values.ravel(), hit.ravel())]
    out = np.empty(values.shape, dtype=object)
    out.ravel()[:] = flat if values.ndim else flat[0]
    return out


def phase_grid(
    mode: GridMode,
    mu_axis: Sequence[float],
    sigma_axis: Sequence[float],
    row: Callable[[float], np.ndarray],
    baseline: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
) -> PhaseGrid:
    """Label every (sigma, mu) node.

    ``row(sigma)`` returns concurrences along ``mu_axis`` (NaN where the
    estimate failed); an exception from ``row`` leaves the whole row Unknown.
    """
    mu_axis = np.asarray(mu_axis, dtype=float)
    sigma_axis = np.asarray(sigma_axis, dtype=float)
    values = np.full((len(sigma_axis), len(mu_axis)), np.nan)
    for i, s in enumerate(sigma_axis):
        try:
            values[i] = row(float(s))
        except (ArithmeticError, ValueError, RuntimeError):
            pass
    labels = label_nodes(mode, values, baseline, tol)
    if GridMode(mode) is GridMode.NORMAL_ENHANCED:
        values = values - np.asarray(baseline, dtype=float)
    return PhaseGrid(mu_axis, sigma_axis, labels, GridMode(mode), tol, values)
