"""Self-normalised importance-sampling arithmetic on log weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

ESS_REFUSE = 10.0
ESS_WARN = 100.0


class EstimateRefused(RuntimeError):
    """Weights are too concentrated for the estimate to mean anything."""

    def __init__(self, message, ess=None):
        super().__init__(message)
        self.ess = ess


@dataclass(frozen=True, eq=False)
class EnsembleEstimate:
    mean: float
    std_error: float
    n_samples: int
    ess: float
    convergence_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


def normalized_weights(log_w: np.ndarray) -> np.ndarray:
    """exp(log_w - max) / sum; exact when one term dominates by hundreds of nats."""
    log_w = np.asarray(log_w, dtype=float)
    return np.exp(log_w - logsumexp(log_w))


def effective_sample_size(log_w: np.ndarray) -> float:
    """(sum w)^2 / sum w^2, computed in log space."""
    log_w = np.asarray(log_w, dtype=float)
    return float(np.exp(2 * logsumexp(log_w) - logsumexp(2 * log_w)))


def weighted_mean(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted mean along the first axis; ``weights`` already normalised.

    Pivoted on the first row, so identical rows give that row back exactly.
    """
    values = np.asarray(values, dtype=float)
    return values[0] + np.tensordot(weights, values - values[0], axes=(0, 0))


def weighted_std_error(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Delta-method standard error of the self-normalised mean."""
    values = np.asarray(values, dtype=float)
    mean = weighted_mean(values, weights)
    dev = values - mean
    w2 = np.asarray(weights).reshape((-1,) + (1,) * (values.ndim - 1)) ** 2
    return np.sqrt(np.sum(w2 * dev**2, axis=0))


def check_ess(ess: float, what: str = "annealed estimate") -> None:
    if ess < ESS_REFUSE:
        raise EstimateRefused(
            f"{what}: effective sample size {ess:.3g} below {ESS_REFUSE:g}", ess
        )


def checkpoints(n: int, n_checkpoints: int = 20) -> np.ndarray:
    """Sample counts at which running means are recorded (every 5%)."""
    pts = np.unique(np.ceil(np.arange(1, n_checkpoints + 1) * n / n_checkpoints).astype(int))
    return pts[pts >= 1]


def running_mean_trace(values: np.ndarray, n_checkpoints: int = 20) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    csum = np.cumsum(values - values[0])
    pts = checkpoints(len(values), n_checkpoints)
    return values[0] + csum[pts - 1] / pts


def plain_estimate(values: np.ndarray, n_checkpoints: int = 20) -> EnsembleEstimate:
    """Unweighted mean with standard error; ESS equals n."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    se = float(np.std(values - values[0], ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    mean = values[0] + np.mean(values - values[0])
    return EnsembleEstimate(
        float(mean), se, n, float(n), running_mean_trace(values, n_checkpoints)
    )
