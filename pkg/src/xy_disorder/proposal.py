"""Tilted importance proposals for annealed averages.

The annealed ensemble samples disorder from P(x) Z(x) / <Z>. At low
temperature ln Z varies by tens of nats between realizations, so drawing x
from the prior P leaves one or two realizations carrying all the weight.

Here ln Z(x) is approximated by a nearest-neighbour model

    ln Z(x) ~ c + sum_i f1(x_i) + sum_i f2(x_i, x_i+1)      (ring)

fitted by least squares on pilot draws, and x is sampled from
P(x) exp(f1 + f2) discretised on a grid of cells: a ring Markov random
field that transfer matrices sample exactly. Each x_i is placed uniformly
inside its cell, so the proposal has a closed-form density and importance
weights stay exact. Inverse-CDF sampling from one uniform per variable keeps
draws continuous in the uniforms, so common random numbers give smooth
curves across grid points.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp, ndtr

N_CELLS = 96
N_UNARY_BASIS = 24
N_PAIR_BASIS = 8
RIDGE = 1e-6


def _log_prior(x, mean, std):
    return -0.5 * ((np.asarray(x) - mean) / std) ** 2


@dataclass(frozen=True, eq=False)
class RingProposal:
    """Discretised ring MRF ``q(x) ∝ prod_i exp(u(x_i) + v(x_i, x_i+1))``."""

    edges: np.ndarray  # (M+1,)
    unary: np.ndarray  # (M,) log potentials
    pair: np.ndarray  # (M, M) symmetric log potentials
    n_vars: int

    def __post_init__(self):
        m = len(self.unary)
        # symmetric transfer matrix, log-scaled powers for exact sampling
        log_t = 0.5 * self.unary[:, None] + self.pair + 0.5 * self.unary[None, :]
        shift = log_t.max()
        t = np.exp(log_t - shift)
        powers = [np.eye(m)]
        log_scales = [0.0]
        for _ in range(self.n_vars):
            p = t @ powers[-1]
            s = p.max()
            powers.append(p / s)
            log_scales.append(log_scales[-1] + np.log(s))
        object.__setattr__(self, "_t", t)
        object.__setattr__(self, "_powers", powers)
        log_norm = logsumexp(np.log(np.clip(np.diag(powers[-1]), 1e-300, None))) + log_scales[-1]
        object.__setattr__(self, "_log_norm", log_norm + self.n_vars * shift)

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def sample(self, uniforms: np.ndarray) -> np.ndarray:
        """Map uniforms of shape (S, n_vars) to draws, by sequential inverse CDFs."""
        u = np.asarray(uniforms, dtype=float)
        s, n = u.shape
        if n != self.n_vars:
            raise ValueError(f"expected {self.n_vars} uniforms per draw, got {n}")
        cells = np.empty((s, n), dtype=int)
        frac = np.empty((s, n))
        first = np.diag(self._powers[n]).copy()
        cells[:, 0], frac[:, 0] = _inverse_cdf(np.broadcast_to(first, (s, len(first))), u[:, 0])
        anchor = cells[:, 0]
        for t_idx in range(1, n):
            w = self._t[cells[:, t_idx - 1]] * self._powers[n - t_idx][:, anchor].T
            cells[:, t_idx], frac[:, t_idx] = _inverse_cdf(w, u[:, t_idx])
        return self.edges[cells] + frac * self.width

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """log q(x) for draws of shape (S, n_vars); -inf outside the grid."""
        x = np.asarray(x, dtype=float)
        cells = np.floor((x - self.edges[0]) / self.width).astype(int)
        inside = np.all((cells >= 0) & (cells < len(self.unary)), axis=-1)
        cells = np.clip(cells, 0, len(self.unary) - 1)
        nxt = np.roll(cells, -1, axis=-1)
        log_q = (
            self.unary[cells].sum(-1)
            + self.pair[cells, nxt].sum(-1)
            - self._log_norm
            - self.n_vars * np.log(self.width)
        )
        return np.where(inside, log_q, -np.inf)


def _inverse_cdf(weights: np.ndarray, u: np.ndarray):
    """Row-wise categorical inverse CDF returning (index, position within cell)."""
    cdf = np.cumsum(weights, axis=1)
    total = cdf[:, -1:]
    cdf = cdf / total
    idx = np.minimum((cdf < u[:, None]).sum(axis=1), weights.shape[1] - 1)
    lo = np.where(idx > 0, cdf[np.arange(len(idx)), idx - 1], 0.0)
    p = cdf[np.arange(len(idx)), idx] - lo
    frac = np.clip((u - lo) / np.where(p > 0, p, 1.0), 0.0, 1.0 - 1e-12)
    return idx, frac


def uniforms_from_normals(z: np.ndarray) -> np.ndarray:
    """Standard normal draws to uniforms, so both estimators share one stream."""
    return ndtr(z)


# ---------------------------------------------------------------------------
# fitting


def _rbf(x, centers, width):
    return np.exp(-0.5 * ((np.asarray(x)[..., None] - centers) / width) ** 2)


class Symmetry(str, Enum):
    """Sign symmetry of ln Z that the surrogate may assume.

    SITE: even in each variable. Coupling signs can be gauged away bond by bond
    (up to the parity of a ring). GLOBAL: even under flipping every variable at
    once, as for fields under a global spin flip. Both let the fit pool data
    from all sign patterns.
    """

    NONE = "none"
    GLOBAL = "global"
    SITE = "site"


@dataclass(frozen=True, eq=False)
class LnZModel:
    """Additive-plus-pair regression model of ln Z over disorder arrays.

    Under a symmetry the learned terms see |x|; GLOBAL adds a pair term
    carrying sign(x) sign(y), which spans every jointly even pair function.
    """

    unary_centers: np.ndarray
    unary_width: float
    pair_centers: np.ndarray
    pair_width: float
    coef: np.ndarray  # [const, base, unary..., pair..., signed pair...]
    base_grid: np.ndarray
    base_values: np.ndarray
    symmetry: Symmetry = Symmetry.NONE

    def _base(self, x):
        return np.interp(x, self.base_grid, self.base_values)

    def _arg(self, x):
        return np.asarray(x) if self.symmetry is Symmetry.NONE else np.abs(x)

    def unary(self, x):
        k = len(self.unary_centers)
        rbf = _rbf(self._arg(x), self.unary_centers, self.unary_width)
        return self.coef[1] * self._base(x) + rbf @ self.coef[2 : 2 + k]

    def pair(self, x, y):
        k, m = len(self.unary_centers), len(self.pair_centers)
        n_pair = m * (m + 1) // 2
        c = self.coef[2 + k :]
        bx = _rbf(self._arg(x), self.pair_centers, self.pair_width)
        by = _rbf(self._arg(y), self.pair_centers, self.pair_width)
        out = np.einsum("...k,kl,...l->...", bx, _sym_from_upper(c[:n_pair], m), by)
        if self.symmetry is Symmetry.GLOBAL:
            signed = np.einsum("...k,kl,...l->...", bx, _sym_from_upper(c[n_pair:], m), by)
            out = out + np.sign(x) * np.sign(y) * signed
        return out


def _sym_from_upper(c, k):
    m = np.zeros((k, k))
    iu = np.triu_indices(k)
    m[iu] = c
    m = 0.5 * (m + m.T)
    return m


def _pair_columns(bp, weight=None):
    outer = np.einsum("snk,snl->skl", bp, np.roll(bp, -1, axis=1)) if weight is None else np.einsum(
        "sn,snk,snl->skl", weight, bp, np.roll(bp, -1, axis=1)
    )
    outer = outer + outer.transpose(0, 2, 1)
    iu = np.triu_indices(bp.shape[-1])
    # coefficient c_kl enters the symmetric matrix as c_kl / 2 off the diagonal
    return 0.5 * outer[:, iu[0], iu[1]]


def _features(x, base, unary_centers, unary_width, pair_centers, pair_width, symmetry=Symmetry.NONE):
    """Design matrix rows for draws x of shape (S, n)."""
    s = x.shape[0]
    arg = x if symmetry is Symmetry.NONE else np.abs(x)
    bu = _rbf(arg, unary_centers, unary_width).sum(axis=1)
    bp = _rbf(arg, pair_centers, pair_width)
    cols = [np.ones(s), base.sum(axis=1), bu, _pair_columns(bp)]
    if symmetry is Symmetry.GLOBAL:
        sg = np.sign(x)
        cols.append(_pair_columns(bp, sg * np.roll(sg, -1, axis=1)))
    return np.column_stack(cols)


def fit_ln_z_model(x, ln_z, lo, hi, base_grid, base_values, symmetry=Symmetry.NONE) -> LnZModel:
    x = np.asarray(x, dtype=float)
    symmetry = Symmetry(symmetry)
    if symmetry is not Symmetry.NONE:
        lo, hi = (0.0 if lo < 0 else lo), max(abs(lo), abs(hi))
    unary_centers = np.linspace(lo, hi, N_UNARY_BASIS)
    unary_width = 1.5 * (unary_centers[1] - unary_centers[0])
    pair_centers = np.linspace(lo, hi, N_PAIR_BASIS)
    pair_width = 1.0 * (pair_centers[1] - pair_centers[0])
    base = np.interp(x, base_grid, base_values)
    design = _features(x, base, unary_centers, unary_width, pair_centers, pair_width, symmetry)
    y = np.asarray(ln_z, dtype=float)
    y0 = y.mean()
    # column scaling + tiny ridge keeps the solve well posed on small pilots
    norms = np.linalg.norm(design, axis=0)
    empty = norms == 0
    norms[empty] = 1.0
    d = design / norms
    reg = RIDGE * len(y) * np.eye(d.shape[1])
    # constant and base slope are unpenalised unless the base column is empty
    reg[0, 0] = 0.0
    if not empty[1]:
        reg[1, 1] = 0.0
    coef = np.linalg.solve(d.T @ d + reg, d.T @ (y - y0)) / norms
    coef[0] += y0
    return LnZModel(unary_centers, unary_width, pair_centers, pair_width, coef, base_grid, base_values, symmetry)


def proposal_from_model(model: LnZModel | None, mean, std, lo, hi, n_vars, base=None) -> RingProposal:
    """Ring proposal ``P(x) exp(f1 + f2)``; with no model, a product ``P(x) exp(base)``."""
    edges = np.linspace(lo, hi, N_CELLS + 1)
    c = 0.5 * (edges[1:] + edges[:-1])
    if model is None:
        unary = _log_prior(c, mean, std) + np.interp(c, base[0], base[1])
        pair = np.zeros((len(c), len(c)))
    else:
        unary = _log_prior(c, mean, std) + model.unary(c)
        pair = model.pair(c[:, None], c[None, :])
        pair = 0.5 * (pair + pair.T)
    return RingProposal(edges, unary, pair, n_vars)


def support(mean, std, base_grid, base_values, mass_floor=1e-14):
    """Interval carrying the tilted single-site marginal, padded by a few cells."""
    log_m = _log_prior(base_grid, mean, std) + base_values
    keep = log_m - log_m.max() > np.log(mass_floor)
    lo, hi = base_grid[keep].min(), base_grid[keep].max()
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


@dataclass(frozen=True, eq=False)
class DefensiveMixture:
    """Deterministic mixture: every ``period``-th draw comes from ``safe``.

    Weights use the full mixture density, so a poor fitted component can
    never produce unbounded importance weights.
    """

    safe: RingProposal
    fitted: RingProposal
    period: int = 10

    @property
    def n_vars(self) -> int:
        return self.fitted.n_vars

    def _from_safe(self, s):
        return np.arange(s) % self.period == 0

    def sample(self, uniforms: np.ndarray) -> np.ndarray:
        u = np.asarray(uniforms, dtype=float)
        pick = self._from_safe(len(u))
        out = np.empty_like(u)
        if pick.any():
            out[pick] = self.safe.sample(u[pick])
        if (~pick).any():
            out[~pick] = self.fitted.sample(u[~pick])
        return out

    def log_density(self, x: np.ndarray) -> np.ndarray:
        a = 1.0 / self.period
        with np.errstate(divide="ignore"):
            return np.logaddexp(
                np.log(a) + self.safe.log_density(x), np.log1p(-a) + self.fitted.log_density(x)
            )
