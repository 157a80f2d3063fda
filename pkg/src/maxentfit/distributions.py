"""Parameter priors and observation-error priors.

Parameter priors expose sampling, log-density, and log-density gradients
for the vectors fed to a simulator.  Error priors describe allowed
systematic bias on a single observation target; the constraint solver
needs the integrals of their exponentially tilted form,

    Z(lam)  = integral exp(-lam * eps) p0(eps) deps
    xi(lam) = mean of eps under the tilted density = -d/dlam ln Z(lam)

which are implemented in closed form here and validated against
quadrature in the test suite.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

__all__ = [
    "DiagonalGaussianPrior",
    "TruncatedNormalPrior",
    "ErrorPrior",
    "DeltaError",
    "GaussianError",
    "LaplaceError",
    "TiltDomainError",
    "prior_from_config",
    "error_prior_from_config",
]

_LOG_2PI = math.log(2.0 * math.pi)


class TiltDomainError(ValueError):
    """Tilt coefficient outside the domain where the tilt integral is finite."""


def _as_param_vector(value, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


class DiagonalGaussianPrior:
    """Independent normal prior per coordinate.

    Parameters
    ----------
    mean : array-like, shape (D,)
        Per-coordinate mean.
    variance : array-like, shape (D,)
        Per-coordinate variance, each strictly positive.
    """

    def __init__(self, mean, variance):
        self.mean = _as_param_vector(mean, "mean")
        self.variance = _as_param_vector(variance, "variance")
        if self.mean.shape != self.variance.shape:
            raise ValueError(
                f"mean has dimension {self.mean.size} but variance has "
                f"dimension {self.variance.size}"
            )
        if np.any(self.variance <= 0.0):
            raise ValueError("all variances must be strictly positive")

    @property
    def dim(self) -> int:
        return self.mean.size

    def __repr__(self) -> str:
        return f"DiagonalGaussianPrior(mean={self.mean!r}, variance={self.variance!r})"

    def with_params(self, mean, variance) -> "DiagonalGaussianPrior":
        """New prior of the same family with updated parameters."""
        return DiagonalGaussianPrior(mean, variance)

    def sample(self, n: int, seed: int) -> np.ndarray:
        """Draw ``n`` independent vectors; deterministic given ``seed``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, self.dim))
        return self.mean + np.sqrt(self.variance) * z

    def _check_theta(self, theta) -> np.ndarray:
        arr = np.asarray(theta, dtype=float)
        if arr.ndim == 0 or arr.shape[-1] != self.dim:
            got = arr.shape[-1] if arr.ndim else 0
            raise ValueError(f"theta has trailing dimension {got}, expected {self.dim}")
        return arr

    def log_density(self, theta):
        """Log density at ``theta``; accepts a (D,) vector or an (..., D) batch."""
        arr = self._check_theta(theta)
        quad = (arr - self.mean) ** 2 / self.variance
        out = -0.5 * np.sum(quad + np.log(self.variance) + _LOG_2PI, axis=-1)
        return float(out) if arr.ndim == 1 else out

    def grad_log_density(self, theta):
        """Gradient of the log density with respect to ``theta``."""
        arr = self._check_theta(theta)
        return -(arr - self.mean) / self.variance

    def param_grad_log_density(self, theta):
        """Gradients of the log density with respect to (mean, variance).

        Returns a pair of arrays shaped like ``theta``; used by the
        variational sampler update.
        """
        arr = self._check_theta(theta)
        centered = arr - self.mean
        d_mean = centered / self.variance
        d_var = (centered**2 - self.variance) / (2.0 * self.variance**2)
        return d_mean, d_var


class TruncatedNormalPrior:
    """Normal prior truncated to ``[lower_bound, inf)`` per coordinate.

    The density is renormalized on the truncated support, so it integrates
    to 1 coordinate-wise.  Log density is ``-inf`` below the bound.
    """

    def __init__(self, mean, variance, lower_bound):
        self.mean = _as_param_vector(mean, "mean")
        self.variance = _as_param_vector(variance, "variance")
        self.lower_bound = _as_param_vector(lower_bound, "lower_bound")
        if not (self.mean.shape == self.variance.shape == self.lower_bound.shape):
            raise ValueError("mean, variance, and lower_bound must share one dimension")
        if np.any(self.variance <= 0.0):
            raise ValueError("all variances must be strictly positive")

    @property
    def dim(self) -> int:
        return self.mean.size

    def __repr__(self) -> str:
        return (
            f"TruncatedNormalPrior(mean={self.mean!r}, variance={self.variance!r}, "
            f"lower_bound={self.lower_bound!r})"
        )

    def with_params(self, mean, variance) -> "TruncatedNormalPrior":
        """New prior of the same family (same truncation) with updated parameters."""
        return TruncatedNormalPrior(mean, variance, self.lower_bound)

    @property
    def _sigma(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def _alpha(self) -> np.ndarray:
        # standardized truncation point
        return (self.lower_bound - self.mean) / self._sigma

    def sample(self, n: int, seed: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        return stats.truncnorm.rvs(
            a=self._alpha,
            b=np.inf,
            loc=self.mean,
            scale=self._sigma,
            size=(n, self.dim),
            random_state=rng,
        )

    def _check_theta(self, theta) -> np.ndarray:
        arr = np.asarray(theta, dtype=float)
        if arr.ndim == 0 or arr.shape[-1] != self.dim:
            got = arr.shape[-1] if arr.ndim else 0
            raise ValueError(f"theta has trailing dimension {got}, expected {self.dim}")
        return arr

    def log_density(self, theta):
        arr = self._check_theta(theta)
        quad = (arr - self.mean) ** 2 / self.variance
        # log of the per-coordinate normalizer P(X >= lower_bound)
        log_tail = stats.norm.logsf(self._alpha)
        body = -0.5 * (quad + np.log(self.variance) + _LOG_2PI) - log_tail
        out = np.where(arr >= self.lower_bound, body, -np.inf).sum(axis=-1)
        return float(out) if arr.ndim == 1 else out

    def grad_log_density(self, theta):
        """Gradient wrt theta; raises for points on or below the truncation bound."""
        arr = self._check_theta(theta)
        if np.any(arr <= self.lower_bound):
            raise ValueError("grad_log_density requires theta strictly above lower_bound")
        return -(arr - self.mean) / self.variance

    def param_grad_log_density(self, theta):
        arr = self._check_theta(theta)
        if np.any(arr <= self.lower_bound):
            raise ValueError("param gradients require theta strictly above lower_bound")
        centered = arr - self.mean
        alpha = self._alpha
        # hazard ratio pdf(alpha) / sf(alpha), computed in log space
        hazard = np.exp(stats.norm.logpdf(alpha) - stats.norm.logsf(alpha))
        d_mean = centered / self.variance - hazard / self._sigma
        d_var = (centered**2 - self.variance) / (2.0 * self.variance**2) - (
            hazard * alpha / (2.0 * self.variance)
        )
        return d_mean, d_var


class ErrorPrior:
    """Base class for zero-mean symmetric priors on systematic observation error."""

    def tilt_log_normalizer(self, lam: float) -> float:
        """ln of the exponential-tilt integral Z(lam)."""
        raise NotImplementedError

    def tilted_mean(self, lam: float) -> float:
        """Mean of the error under the tilted density, -d/dlam ln Z."""
        raise NotImplementedError

    def tilted_mean_derivative(self, lam: float) -> float:
        """d/dlam of :meth:`tilted_mean`."""
        raise NotImplementedError

    def lambda_bound(self) -> float:
        """Largest |lam| for which the tilt integral is finite (inf if unbounded)."""
        return math.inf


class DeltaError(ErrorPrior):
    """Point mass at zero: no systematic disagreement is allowed."""

    def tilt_log_normalizer(self, lam: float) -> float:
        return 0.0

    def tilted_mean(self, lam: float) -> float:
        return 0.0

    def tilted_mean_derivative(self, lam: float) -> float:
        return 0.0

    def __repr__(self) -> str:
        return "DeltaError()"

    def __eq__(self, other) -> bool:
        return isinstance(other, DeltaError)

    def __hash__(self) -> int:
        return hash("DeltaError")


class GaussianError(ErrorPrior):
    """Zero-mean normal error with standard deviation ``sigma``.

    Z(lam) = exp(lam^2 sigma^2 / 2), so xi(lam) = -lam sigma^2.
    """

    def __init__(self, sigma: float):
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        self.sigma = float(sigma)

    def tilt_log_normalizer(self, lam: float) -> float:
        return 0.5 * lam * lam * self.sigma * self.sigma

    def tilted_mean(self, lam: float) -> float:
        return -lam * self.sigma * self.sigma

    def tilted_mean_derivative(self, lam: float) -> float:
        return -self.sigma * self.sigma

    def __repr__(self) -> str:
        return f"GaussianError(sigma={self.sigma!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, GaussianError) and other.sigma == self.sigma

    def __hash__(self) -> int:
        return hash(("GaussianError", self.sigma))


class LaplaceError(ErrorPrior):
    """Zero-mean Laplace error with scale ``b``.

    Z(lam) = 1 / (1 - b^2 lam^2), finite only for |lam| < 1/b.
    """

    def __init__(self, scale: float):
        if scale <= 0:
            raise ValueError("scale must be > 0")
        self.scale = float(scale)

    def lambda_bound(self) -> float:
        return 1.0 / self.scale

    def _check_domain(self, lam: float) -> None:
        bound = self.lambda_bound()
        if abs(lam) >= bound:
            raise TiltDomainError(
                f"tilt integral diverges: |lambda|={abs(lam):g} must be < "
                f"1/scale={bound:g}"
            )

    def tilt_log_normalizer(self, lam: float) -> float:
        self._check_domain(lam)
        return -math.log1p(-((self.scale * lam) ** 2))

    def tilted_mean(self, lam: float) -> float:
        self._check_domain(lam)
        b2 = self.scale * self.scale
        return -2.0 * b2 * lam / (1.0 - b2 * lam * lam)

    def tilted_mean_derivative(self, lam: float) -> float:
        self._check_domain(lam)
        b2 = self.scale * self.scale
        denom = 1.0 - b2 * lam * lam
        return -2.0 * b2 * (1.0 + b2 * lam * lam) / (denom * denom)

    def __repr__(self) -> str:
        return f"LaplaceError(scale={self.scale!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, LaplaceError) and other.scale == self.scale

    def __hash__(self) -> int:
        return hash(("LaplaceError", self.scale))


def prior_from_config(spec: dict):
    """Build a parameter prior from a declarative config mapping.

    Recognized kinds: ``gaussian`` (mean, variance) and
    ``truncated_gaussian`` (mean, variance, lower_bound).
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("prior config must be a mapping with a 'kind' field")
    kind = spec["kind"]
    if kind == "gaussian":
        _reject_extra_keys(spec, {"kind", "mean", "variance"}, "prior")
        return DiagonalGaussianPrior(spec["mean"], spec["variance"])
    if kind == "truncated_gaussian":
        _reject_extra_keys(spec, {"kind", "mean", "variance", "lower_bound"}, "prior")
        return TruncatedNormalPrior(spec["mean"], spec["variance"], spec["lower_bound"])
    raise ValueError(f"unknown prior kind '{kind}'")


def error_prior_from_config(spec: dict) -> ErrorPrior:
    """Build an error prior from ``{"kind": ...}`` plus its parameter."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("error prior config must be a mapping with a 'kind' field")
    kind = spec["kind"]
    if kind == "delta":
        _reject_extra_keys(spec, {"kind"}, "error prior")
        return DeltaError()
    if kind == "gaussian":
        _reject_extra_keys(spec, {"kind", "sigma"}, "error prior")
        return GaussianError(spec["sigma"])
    if kind == "laplace":
        _reject_extra_keys(spec, {"kind", "scale"}, "error prior")
        return LaplaceError(spec["scale"])
    raise ValueError(f"unknown error prior kind '{kind}'")


def _reject_extra_keys(spec: dict, allowed: set, label: str) -> None:
    extra = sorted(set(spec) - allowed)
    if extra:
        raise ValueError(f"unknown field '{extra[0]}' in {label} config")
    missing = sorted(allowed - {"kind"} - set(spec))
    if missing:
        raise ValueError(f"missing field '{missing[0]}' in {label} config")
