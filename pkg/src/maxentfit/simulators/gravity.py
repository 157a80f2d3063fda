"""Point particle in a fixed planar field of three gravitational attractors.

The scene (attractor positions, start point, step size) is fixed by the
config; the inferred quantities are the three attractor masses and the
particle's initial velocity.  Integration is semi-implicit Euler, which
keeps the energy error of this chaotic system bounded, and a softening
length keeps the force finite for arbitrary (even negative) masses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GravityConfig",
    "GravityParams",
    "simulate_gravity",
    "simulate_gravity_ensemble",
    "gravity_observables",
    "default_observation_steps",
    "gravity_trajectory_to_csv",
]

PARAM_NAMES = ("m1", "m2", "m3", "v0x", "v0y")

_DEFAULT_ATTRACTORS = ((-60.0, -40.0), (40.0, -60.0), (0.0, 60.0))


@dataclass(frozen=True)
class GravityConfig:
    """Fixed scene and integration settings (SI units)."""

    attractor_positions: tuple = _DEFAULT_ATTRACTORS
    gravitational_constant: float = 1.0
    particle_start: tuple = (0.0, 0.0)
    dt: float = 0.1
    steps: int = 100
    softening: float = 0.5

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.softening <= 0:
            raise ValueError("softening must be > 0")

    @property
    def attractors(self) -> np.ndarray:
        return np.asarray(self.attractor_positions, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class GravityParams:
    """Attractor masses (kg) and initial particle velocity (m/s)."""

    m1: float
    m2: float
    m3: float
    v0x: float
    v0y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.m1, self.m2, self.m3, self.v0x, self.v0y])

    @classmethod
    def from_array(cls, values) -> "GravityParams":
        return cls(*(float(v) for v in np.asarray(values, dtype=float)))


def simulate_gravity(params, config: GravityConfig | None = None) -> np.ndarray:
    """Integrate one trajectory.

    ``params`` is a GravityParams or a length-5 array (m1, m2, m3, v0x,
    v0y).  Returns positions of shape ``(steps + 1, 2)``; row 0 is the
    initial position.
    """
    if isinstance(params, GravityParams):
        params = params.as_array()
    traj = simulate_gravity_ensemble(np.asarray(params, dtype=float)[None, :], config)
    return traj[0]


def simulate_gravity_ensemble(params, config: GravityConfig | None = None) -> np.ndarray:
    """Integrate a batch of trajectories; returns shape ``(M, steps + 1, 2)``."""
    config = config or GravityConfig()
    params = np.asarray(params, dtype=float)
    if params.ndim != 2 or params.shape[1] != 5:
        raise ValueError(f"params must have shape (M, 5), got {params.shape}")
    n = params.shape[0]
    masses = params[:, :3]
    attractors = config.attractors
    if attractors.shape[0] != masses.shape[1]:
        raise ValueError("number of attractor positions must match the three masses")

    pos = np.tile(np.asarray(config.particle_start, dtype=float), (n, 1))
    vel = params[:, 3:5].copy()
    eps2 = config.softening**2
    g = config.gravitational_constant

    out = np.empty((n, config.steps + 1, 2))
    out[:, 0] = pos
    for step in range(1, config.steps + 1):
        diff = attractors[None, :, :] - pos[:, None, :]  # (M, 3, 2)
        r2 = np.sum(diff * diff, axis=2) + eps2
        accel = g * np.sum((masses / r2**1.5)[:, :, None] * diff, axis=1)
        vel = vel + config.dt * accel
        pos = pos + config.dt * vel
        out[:, step] = pos
    return out


def default_observation_steps(steps: int) -> tuple:
    """Every 20th step up to 100, capped at the trajectory's last index."""
    return tuple(min(s, steps) for s in (20, 40, 60, 80, 100))


def gravity_observables(trajectory, observation_steps=None) -> np.ndarray:
    """Flatten the (x, y) positions at the requested step indices.

    Works on a single ``(T, 2)`` trajectory or an ``(M, T, 2)`` batch;
    returns 10 values per trajectory for the default five steps.
    """
    traj = np.asarray(trajectory, dtype=float)
    single = traj.ndim == 2
    if single:
        traj = traj[None]
    last = traj.shape[1] - 1
    if observation_steps is None:
        observation_steps = default_observation_steps(last)
    steps = [int(s) for s in observation_steps]
    for s in steps:
        if not 0 <= s <= last:
            raise ValueError(f"observation step {s} out of range [0, {last}]")
    flat = traj[:, steps, :].reshape(traj.shape[0], -1)
    return flat[0] if single else flat


def gravity_trajectory_to_csv(trajectory, path) -> None:
    """Write a single trajectory as ``step,x,y`` rows."""
    traj = np.asarray(trajectory, dtype=float)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "x", "y"])
        for step, (x, y) in enumerate(traj):
            writer.writerow([step, repr(float(x)), repr(float(y))])
