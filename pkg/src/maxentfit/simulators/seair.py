"""Discrete-time SEAIR epidemic on mobility-coupled patches.

Each patch holds population fractions over the chain

    S -> E -> A -> I -> R

with new exposures at rate ``beta * S * (A + I)`` and stage departures at
rate ``1 / period``.  After every reaction step the patch states are mixed
by the mobility matrix: patch p's new state is the convex combination
``sum_q mobility[p, q] * state[q]``, which preserves each patch's fraction
sum exactly for a row-stochastic matrix.  Mobility matrices built here are
also column-stochastic (balanced flows), so population aggregates are
conserved by mixing as well.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "COMPARTMENTS",
    "SeairConfig",
    "SeairParams",
    "SeairTrajectory",
    "make_mobility_matrix",
    "simulate_seair",
    "simulate_seair_ensemble",
    "seair_observables",
    "seair_trajectory_to_csv",
]

COMPARTMENTS = ("S", "E", "A", "I", "R")
PARAM_NAMES = ("start_I", "start_A", "E_period", "A_period", "I_period")


def make_mobility_matrix(patches: int, seed: int, diagonal_floor: float = 0.8) -> np.ndarray:
    """Random balanced mobility matrix with dominating diagonal.

    Returns ``diagonal_floor * I + (1 - diagonal_floor) * K`` where K is
    an average of random permutation matrices, so the result is doubly
    stochastic with every diagonal entry >= ``diagonal_floor``.
    Deterministic given the seed.
    """
    if patches < 1:
        raise ValueError("patches must be >= 1")
    if not 0.5 < diagonal_floor < 1.0:
        raise ValueError("diagonal_floor must lie in (0.5, 1)")
    rng = np.random.default_rng(seed)
    mix = np.zeros((patches, patches))
    n_perms = 16
    for _ in range(n_perms):
        perm = rng.permutation(patches)
        mix[np.arange(patches), perm] += 1.0 / n_perms
    return diagonal_floor * np.eye(patches) + (1.0 - diagonal_floor) * mix


@dataclass(frozen=True)
class SeairConfig:
    """Patch count, mobility, infectivity, and time discretization."""

    patches: int = 3
    mobility: np.ndarray | None = None
    infectivity: float = 0.25
    dt: float = 1.0
    steps: int = 250

    def __post_init__(self):
        if self.patches < 1:
            raise ValueError("patches must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        mobility = self.mobility
        if mobility is None:
            mobility = np.eye(self.patches)
        mobility = np.asarray(mobility, dtype=float)
        if mobility.shape != (self.patches, self.patches):
            raise ValueError(f"mobility must be {self.patches}x{self.patches}")
        rows = mobility.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            raise ValueError("mobility rows must sum to 1 within 1e-12")
        off = rows - np.diag(mobility)
        if np.any(np.diag(mobility) <= off):
            raise ValueError("mobility diagonal entries must strictly dominate their rows")
        object.__setattr__(self, "mobility", mobility)


@dataclass(frozen=True)
class SeairParams:
    """Seed fractions in patch 1 and the three stage durations."""

    start_I: float
    start_A: float
    E_period: float
    A_period: float
    I_period: float

    def __post_init__(self):
        if not (0.0 <= self.start_I <= 1.0 and 0.0 <= self.start_A <= 1.0):
            raise ValueError("start fractions must lie in [0, 1]")
        if self.start_I + self.start_A > 1.0:
            raise ValueError("start_I + start_A must not exceed 1")
        if min(self.E_period, self.A_period, self.I_period) <= 0.0:
            raise ValueError("periods must be > 0")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.start_I, self.start_A, self.E_period, self.A_period, self.I_period]
        )


@dataclass(frozen=True)
class SeairTrajectory:
    """Compartment fractions over time plus stability accounting.

    ``values`` has shape ``(steps + 1, patches, 5)`` for a single run or
    ``(M, steps + 1, patches, 5)`` for an ensemble, compartments ordered
    S, E, A, I, R.  ``clamp_events`` counts fractions that left [0, 1]
    during integration and were clamped (0 for stable settings);
    ``init_rescaled`` flags runs whose seed fractions had to be scaled
    down to sum to at most 1.
    """

    values: np.ndarray
    clamp_events: int | np.ndarray
    init_rescaled: bool | np.ndarray


def simulate_seair(params, config: SeairConfig | None = None) -> SeairTrajectory:
    """Run one trajectory from validated :class:`SeairParams`."""
    if isinstance(params, SeairParams):
        params = params.as_array()
    else:
        params = SeairParams(*np.asarray(params, dtype=float)).as_array()
    batch = simulate_seair_ensemble(params[None, :], config)
    return SeairTrajectory(
        values=batch.values[0],
        clamp_events=int(batch.clamp_events[0]),
        init_rescaled=bool(batch.init_rescaled[0]),
    )


def simulate_seair_ensemble(raw_params, config: SeairConfig | None = None) -> SeairTrajectory:
    """Run a batch of trajectories from raw parameter vectors.

    Raw vectors are sanitized so the forward map stays finite for any
    input: negative seed fractions are clipped to 0, seed fractions are
    rescaled when they sum past 1 (flagged in ``init_rescaled``), and
    periods are floored at a tiny positive value.
    """
    config = config or SeairConfig()
    raw = np.asarray(raw_params, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != 5:
        raise ValueError(f"raw_params must have shape (M, 5), got {raw.shape}")
    n = raw.shape[0]
    p = config.patches

    start_i = np.clip(raw[:, 0], 0.0, None)
    start_a = np.clip(raw[:, 1], 0.0, None)
    total = start_i + start_a
    rescaled = total > 1.0
    scale = np.where(rescaled, 1.0 / np.where(total > 0, total, 1.0), 1.0)
    start_i = start_i * scale
    start_a = start_a * scale
    periods = np.clip(raw[:, 2:5], 1e-9, None)
    out_rates = config.dt / periods  # (M, 3): E, A, I departures per step

    state = np.zeros((n, p, 5))
    state[:, :, 0] = 1.0
    state[:, 0, 0] = 1.0 - start_i - start_a
    state[:, 0, 2] = start_a
    state[:, 0, 3] = start_i

    beta_dt = config.infectivity * config.dt
    mobility = config.mobility
    mix = not np.array_equal(mobility, np.eye(p))

    values = np.empty((n, config.steps + 1, p, 5))
    values[:, 0] = state
    clamps = np.zeros(n, dtype=int)

    for step in range(1, config.steps + 1):
        s, e, a, i, r = (state[:, :, c] for c in range(5))
        exposures = beta_dt * s * (a + i)
        e_out = out_rates[:, 0:1] * e
        a_out = out_rates[:, 1:2] * a
        i_out = out_rates[:, 2:3] * i
        state = np.stack(
            [s - exposures, e + exposures - e_out, a + e_out - a_out, i + a_out - i_out, r + i_out],
            axis=2,
        )
        if mix:
            state = np.einsum("pq,mqc->mpc", mobility, state)
        bad = (state < 0.0) | (state > 1.0)
        if bad.any():
            bad_patches = bad.any(axis=2, keepdims=True)
            clamps += bad.sum(axis=(1, 2))
            state = np.clip(state, 0.0, 1.0)
            patch_sums = state.sum(axis=2, keepdims=True)
            renorm = np.where(bad_patches, np.where(patch_sums > 0, patch_sums, 1.0), 1.0)
            state = state / renorm
        values[:, step] = state

    return SeairTrajectory(values=values, clamp_events=clamps, init_rescaled=rescaled)


def seair_observables(values, patch: int, compartment, times) -> np.ndarray:
    """Extract one compartment's fraction in one patch at given step indices.

    ``values`` may be a single trajectory ``(T, P, 5)`` or an ensemble
    ``(M, T, P, 5)``; ``compartment`` is an index or a letter from
    ``COMPARTMENTS``.
    """
    arr = np.asarray(values, dtype=float)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if isinstance(compartment, str):
        compartment = COMPARTMENTS.index(compartment)
    if not 0 <= patch < arr.shape[2]:
        raise ValueError(f"patch {patch} out of range for {arr.shape[2]} patches")
    if not 0 <= compartment < 5:
        raise ValueError(f"compartment index {compartment} out of range")
    times = [int(t) for t in np.atleast_1d(times)]
    last = arr.shape[1] - 1
    for t in times:
        if not 0 <= t <= last:
            raise ValueError(f"time index {t} out of range [0, {last}]")
    out = arr[:, times, patch, compartment]
    return out[0] if single else out


def seair_trajectory_to_csv(values, path) -> None:
    """Write a single trajectory as ``step,patch,compartment,value`` rows."""
    arr = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "patch", "compartment", "value"])
        for step in range(arr.shape[0]):
            for patch in range(arr.shape[1]):
                for c, name in enumerate(COMPARTMENTS):
                    writer.writerow([step, patch, name, repr(float(arr[step, patch, c]))])
