"""Exponential-tilt reweighting of an ensemble and the multiplier solve.

Given an ensemble of simulator runs with observable values ``G[i, k]`` and
targets ``gbar_k``, find multipliers ``lam`` such that the reweighted
ensemble satisfies every constraint in expectation:

    w_i  proportional to  base_i * exp(-sum_k lam_k G[i, k])
    E_w[g_k] + xi_k(lam_k) = gbar_k        for all k

where ``xi_k`` is the tilted mean of restraint k's error prior.  The
multipliers are found by full-batch descent on the squared constraint
residuals, starting from ``lam = 0``.  The solve is deterministic: the
same ensemble, restraints, and options always produce bitwise-identical
output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .distributions import DeltaError, ErrorPrior

__all__ = [
    "Restraint",
    "Ensemble",
    "OptimizerOptions",
    "LagrangeState",
    "compute_log_weights",
    "weighted_expectation",
    "constraint_residuals",
    "loss_and_gradient",
    "solve_lambda",
    "effective_sample_size",
]

# Multipliers for bounded-domain error priors are projected to stay this
# close to the divergence boundary at most.
_DOMAIN_MARGIN = 1.0 - 1e-9


@dataclass(frozen=True)
class Restraint:
    """One target observation enforced in expectation.

    ``observable_index`` selects a column of the ensemble's observable
    matrix, ``target`` is the value its weighted average (plus the error
    prior's tilted mean) must reach.
    """

    observable_index: int
    target: float
    error_prior: ErrorPrior = field(default_factory=DeltaError)


class Ensemble:
    """Parameter draws plus their observable matrix.

    Parameters
    ----------
    samples : array-like, shape (M, D), or None
        Parameter vectors; may be omitted when only the observable matrix
        is available (externally produced ensembles).
    observables : array-like, shape (M, N)
        ``observables[i, k]`` is observable k evaluated on run i.
    base_log_weights : array-like, shape (M,), optional
        Unnormalized log weights the tilt multiplies (e.g. a prior /
        sampling-distribution correction).  Defaults to uniform.
    source_log_density : array-like, shape (M,), optional
        Log density of the distribution the samples were drawn from,
        kept for variational diagnostics.
    """

    def __init__(self, samples, observables, base_log_weights=None, source_log_density=None):
        obs = np.asarray(observables, dtype=float)
        if obs.ndim == 1:
            obs = obs[:, None]
        if obs.ndim != 2:
            raise ValueError(f"observables must be 2-D, got shape {obs.shape}")
        if obs.shape[0] < 2:
            raise ValueError(f"ensemble needs at least 2 samples, got {obs.shape[0]}")
        if not np.all(np.isfinite(obs)):
            raise ValueError("observable matrix contains non-finite entries")
        self.observables = obs
        self.samples = None if samples is None else np.asarray(samples, dtype=float)
        if self.samples is not None and self.samples.shape[0] != obs.shape[0]:
            raise ValueError("samples and observables disagree on ensemble size")
        self.base_log_weights = (
            None if base_log_weights is None else np.asarray(base_log_weights, dtype=float)
        )
        if self.base_log_weights is not None and self.base_log_weights.shape != (obs.shape[0],):
            raise ValueError("base_log_weights must be a length-M vector")
        self.source_log_density = (
            None if source_log_density is None else np.asarray(source_log_density, dtype=float)
        )

    @property
    def size(self) -> int:
        return self.observables.shape[0]

    @property
    def n_observables(self) -> int:
        return self.observables.shape[1]


@dataclass(frozen=True)
class OptimizerOptions:
    """Settings for the multiplier solve.

    ``method`` is ``"adam"`` (default, standard moment coefficients) or
    ``"gd"`` for plain gradient descent.  ``tolerance`` bounds the largest
    absolute constraint residual, in observable units.
    """

    learning_rate: float = 0.1
    epochs: int = 2000
    tolerance: float = 1e-4
    method: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.method not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer method '{self.method}'")


@dataclass(frozen=True)
class LagrangeState:
    """Result of a multiplier solve.

    ``log_weights`` are normalized (their exponentials sum to 1), and
    ``residuals[k] = target_k - (E_w[g_k] + xi_k(lam_k))``.
    """

    lam: np.ndarray
    log_weights: np.ndarray
    residuals: np.ndarray
    loss: float
    converged: bool
    epochs_run: int

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


def compute_log_weights(observables, lam, base_log_weights=None) -> np.ndarray:
    """Normalized log weights of the exponentially tilted ensemble.

    ``log w_i = base_i - sum_k lam_k * observables[i, k]`` up to the
    log-sum-exp normalizer.  The error priors' tilt integrals are constant
    across samples and cancel here; they enter through the residuals.
    """
    obs = np.asarray(observables, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    logw = -obs @ lam
    if base_log_weights is not None:
        logw = logw + np.asarray(base_log_weights, dtype=float)
    return logw - logsumexp(logw)


def weighted_expectation(values, log_weights) -> float | np.ndarray:
    """Weighted average ``sum_i w_i values_i`` with normalized weights.

    ``values`` may be an (M,) vector or an (M, ...) array; averaging is
    over the leading axis.
    """
    values = np.asarray(values, dtype=float)
    lw = np.asarray(log_weights, dtype=float)
    if values.shape[0] != lw.shape[0]:
        raise ValueError("values and log_weights disagree on length")
    w = np.exp(lw - logsumexp(lw))
    out = np.tensordot(w, values, axes=(0, 0))
    return float(out) if out.ndim == 0 else out


def effective_sample_size(log_weights) -> float:
    """Importance-sampling ESS, ``1 / sum_i w_i^2``; lies in [1, M]."""
    lw = np.asarray(log_weights, dtype=float)
    lw = lw - logsumexp(lw)
    return float(np.exp(-logsumexp(2.0 * lw)))


def _restraint_columns(ensemble: Ensemble, restraints) -> np.ndarray:
    idx = []
    for r in restraints:
        if not 0 <= r.observable_index < ensemble.n_observables:
            raise ValueError(
                f"restraint observable_index {r.observable_index} out of range "
                f"for {ensemble.n_observables} observables"
            )
        idx.append(r.observable_index)
    return ensemble.observables[:, idx]


def _tilted_terms(restraints, lam):
    xi = np.array([r.error_prior.tilted_mean(l) for r, l in zip(restraints, lam)])
    xi_prime = np.array(
        [r.error_prior.tilted_mean_derivative(l) for r, l in zip(restraints, lam)]
    )
    return xi, xi_prime


def constraint_residuals(ensemble: Ensemble, restraints, lam) -> np.ndarray:
    """Per-restraint gap ``target_k - (E_w[g_k] + xi_k(lam_k))``."""
    restraints = list(restraints)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    cols = _restraint_columns(ensemble, restraints)
    lw = compute_log_weights(cols, lam, ensemble.base_log_weights)
    means = np.exp(lw) @ cols
    xi = np.array([r.error_prior.tilted_mean(l) for r, l in zip(restraints, lam)])
    targets = np.array([r.target for r in restraints])
    return targets - (means + xi)


def loss_and_gradient(ensemble: Ensemble, restraints, lam):
    """Squared-residual loss and its analytic gradient in ``lam``.

    Uses d E_w[g_l] / d lam_k = -Cov_w(g_l, g_k), so

        d loss / d lam_k = 2 sum_l r_l Cov_w(g_l, g_k) - 2 r_k xi_k'(lam_k).
    """
    restraints = list(restraints)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    cols = _restraint_columns(ensemble, restraints)
    loss, grad, _, _ = _evaluate(cols, restraints, lam, ensemble.base_log_weights)
    return loss, grad


def _evaluate(cols, restraints, lam, base_log_weights):
    """Loss, gradient, residuals, and log weights at one multiplier setting."""
    lw = compute_log_weights(cols, lam, base_log_weights)
    w = np.exp(lw)
    means = w @ cols
    xi, xi_prime = _tilted_terms(restraints, lam)
    targets = np.array([r.target for r in restraints])
    residuals = targets - (means + xi)
    loss = float(residuals @ residuals)
    cov = (cols * w[:, None]).T @ cols - np.outer(means, means)
    grad = 2.0 * (cov @ residuals - residuals * xi_prime)
    return loss, grad, residuals, lw


def solve_lambda(ensemble: Ensemble, restraints, options: OptimizerOptions | None = None) -> LagrangeState:
    """Find multipliers matching every restraint in weighted expectation.

    Full-batch descent from ``lam = 0`` until the largest absolute
    residual drops below ``options.tolerance`` or the epoch budget is
    exhausted; in the latter case the returned state has
    ``converged=False`` (infeasible restraint sets are reported this way,
    not raised).  Multipliers of bounded-domain error priors are projected
    back inside the finite-tilt domain after every step.
    """
    options = options or OptimizerOptions()
    restraints = list(restraints)
    if not restraints:
        raise ValueError("at least one restraint is required")
    cols = _restraint_columns(ensemble, restraints)
    n = len(restraints)
    cap = np.array([r.error_prior.lambda_bound() for r in restraints]) * _DOMAIN_MARGIN

    lam = np.zeros(n)
    m = np.zeros(n)
    v = np.zeros(n)
    converged = False
    epochs_run = 0

    while True:
        loss, grad, residuals, lw = _evaluate(cols, restraints, lam, ensemble.base_log_weights)
        if not np.isfinite(loss):
            raise ValueError(f"non-finite loss after {epochs_run} epochs")
        if np.max(np.abs(residuals)) <= options.tolerance:
            converged = True
            break
        if epochs_run >= options.epochs:
            break
        epochs_run += 1
        if options.method == "adam":
            m = options.beta1 * m + (1.0 - options.beta1) * grad
            v = options.beta2 * v + (1.0 - options.beta2) * grad**2
            m_hat = m / (1.0 - options.beta1**epochs_run)
            v_hat = v / (1.0 - options.beta2**epochs_run)
            lam = lam - options.learning_rate * m_hat / (np.sqrt(v_hat) + options.eps)
        else:
            lam = lam - options.learning_rate * grad
        lam = np.clip(lam, -cap, cap)

    return LagrangeState(
        lam=lam,
        log_weights=lw,
        residuals=residuals,
        loss=loss,
        converged=converged,
        epochs_run=epochs_run,
    )
