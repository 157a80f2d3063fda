"""Weighted summary statistics and information measures for posteriors."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .core import effective_sample_size

__all__ = [
    "weighted_quantile",
    "weighted_mean_and_variance",
    "weight_entropy",
    "cross_entropy_estimate",
    "weighted_trajectory_band",
    "kde_1d",
]


def _normalized_weights(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    return np.exp(lw - logsumexp(lw))


def weighted_quantile(values, log_weights, q: float) -> float:
    """Left-continuous inverse CDF of a weighted sample.

    Returns the smallest value whose cumulative normalized weight reaches
    ``q``; q=0 gives the minimum and q=1 the maximum.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    values = np.asarray(values, dtype=float)
    w = _normalized_weights(log_weights)
    if values.shape[0] != w.shape[0]:
        raise ValueError("values and log_weights disagree on length")
    order = np.argsort(values, kind="stable")
    cumw = np.cumsum(w[order])
    idx = int(np.searchsorted(cumw, q, side="left"))
    return float(values[order[min(idx, len(values) - 1)]])


def weighted_mean_and_variance(values, log_weights):
    """Weighted first and second central moments along the leading axis."""
    values = np.asarray(values, dtype=float)
    w = _normalized_weights(log_weights)
    mean = np.tensordot(w, values, axes=(0, 0))
    var = np.tensordot(w, (values - mean) ** 2, axes=(0, 0))
    return mean, var


def weight_entropy(log_weights) -> float:
    """Entropy of the weights relative to uniform, ``-sum w ln(M w)``.

    Non-positive; zero exactly when the weights are uniform.
    """
    lw = np.asarray(log_weights, dtype=float)
    lw = lw - logsumexp(lw)
    w = np.exp(lw)
    active = w > 0.0
    return float(-np.sum(w[active] * (lw[active] + math.log(lw.size))))


def cross_entropy_estimate(samples, log_weights, prior) -> float:
    """Cross-entropy of the weighted posterior with a prior, in nats.

    ``H(posterior, prior) = -E_posterior[ln p_prior]``, estimated as the
    weighted average of the prior log density over the samples.  Returns
    ``inf`` if any sample with positive weight falls outside the prior's
    support.
    """
    w = _normalized_weights(log_weights)
    logp = np.asarray(prior.log_density(np.asarray(samples, dtype=float)), dtype=float)
    active = w > 0.0
    if np.any(np.isneginf(logp[active])):
        return math.inf
    return float(-np.sum(w[active] * logp[active]))


def weighted_trajectory_band(trajectories, log_weights, q_low: float = 1.0 / 6.0, q_high: float = 5.0 / 6.0):
    """Per-time weighted mean and quantile band of an (M, T) trajectory stack.

    Defaults bracket the central 67% of weighted mass.  Returns
    ``(mean, low, high)``, each of length T.
    """
    traj = np.asarray(trajectories, dtype=float)
    if traj.ndim == 1:
        traj = traj[:, None]
    w = _normalized_weights(log_weights)
    if traj.shape[0] != w.shape[0]:
        raise ValueError("trajectories and log_weights disagree on ensemble size")
    mean = w @ traj
    order = np.argsort(traj, axis=0, kind="stable")
    cumw = np.cumsum(np.take_along_axis(np.broadcast_to(w[:, None], traj.shape), order, axis=0), axis=0)
    sorted_traj = np.take_along_axis(traj, order, axis=0)
    low = np.empty(traj.shape[1])
    high = np.empty(traj.shape[1])
    last = traj.shape[0] - 1
    for t in range(traj.shape[1]):
        low[t] = sorted_traj[min(np.searchsorted(cumw[:, t], q_low, side="left"), last), t]
        high[t] = sorted_traj[min(np.searchsorted(cumw[:, t], q_high, side="left"), last), t]
    return mean, low, high


def silverman_bandwidth(values, log_weights) -> float:
    """Silverman's rule with the effective sample size in place of M."""
    values = np.asarray(values, dtype=float)
    _, var = weighted_mean_and_variance(values, log_weights)
    std = math.sqrt(float(var))
    iqr = weighted_quantile(values, log_weights, 0.75) - weighted_quantile(values, log_weights, 0.25)
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    if spread <= 0:
        spread = max(abs(float(np.mean(values))), 1.0) * 1e-3
    ess = effective_sample_size(log_weights)
    return 0.9 * spread * ess ** (-0.2)


def kde_1d(samples, log_weights, bandwidth: float | None = None, grid=None):
    """Weighted Gaussian kernel density estimate on a grid.

    Returns ``(grid, density)``.  With ``bandwidth=None`` the smoothing
    follows Silverman's rule evaluated at the effective sample size; with
    ``grid=None`` a 512-point grid spanning the samples plus four
    bandwidths is used.  The density integrates to 1 (trapezoid rule)
    whenever the grid covers the sample range.
    """
    values = np.asarray(samples, dtype=float).ravel()
    w = _normalized_weights(log_weights)
    if bandwidth is None:
        bandwidth = silverman_bandwidth(values, log_weights)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    if grid is None:
        lo = values.min() - 4.0 * bandwidth
        hi = values.max() + 4.0 * bandwidth
        grid = np.linspace(lo, hi, 512)
    else:
        grid = np.asarray(grid, dtype=float)
    z = (grid[:, None] - values[None, :]) / bandwidth
    kernel = np.exp(-0.5 * z * z) / (bandwidth * math.sqrt(2.0 * math.pi))
    return grid, kernel @ w
