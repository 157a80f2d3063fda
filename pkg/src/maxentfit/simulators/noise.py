"""Synthetic observation targets from a reference run plus measurement noise."""

from __future__ import annotations

import numpy as np

__all__ = ["synthesize_observations"]


def synthesize_observations(reference_values, noise_kind: str, noise_scale: float, rng_seed: int) -> np.ndarray:
    """Perturb reference observable values into observation targets.

    ``noise_kind`` is ``"gaussian"`` (zero-mean normal, ``noise_scale`` is
    the standard deviation) or ``"uniform"`` (additive draw from
    ``[-noise_scale, +noise_scale]``, e.g. a fraction of the reference
    trajectory's peak).  Deterministic given the seed; a zero scale
    returns the reference values unchanged.
    """
    values = np.asarray(reference_values, dtype=float)
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    rng = np.random.default_rng(rng_seed)
    if noise_kind == "gaussian":
        noise = rng.normal(0.0, 1.0, size=values.shape) * noise_scale
    elif noise_kind == "uniform":
        noise = rng.uniform(-1.0, 1.0, size=values.shape) * noise_scale
    else:
        raise ValueError(f"unknown noise kind '{noise_kind}'")
    return values + noise
