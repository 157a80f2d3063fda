"""Experiment driver: declarative configs in, reproducible result bundles out.

Subcommands
-----------
run <config>                 sample, solve, run baselines, write a bundle
reweight <csv> <restraints>  solve weights for an external observable matrix
plotdata <bundle> <which>    emit plot-ready CSVs from a bundle
validate <config>            parse and validate a config without running

Exit codes: 0 success, 1 error, 2 flagged non-convergence.  All bundle
files are UTF-8 CSV with a header row or JSON with stable key ordering;
re-running the same config reproduces a bundle bitwise.  Setting
``MAXENTFIT_OUTPUT_ROOT`` relocates relative output directories.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    AbcOptions,
    bayes_toy_posterior,
    least_squares_fit,
    maxent_toy_posterior,
    rejection_abc,
)
from .core import (
    Ensemble,
    OptimizerOptions,
    Restraint,
    effective_sample_size,
    solve_lambda,
)
from .diagnostics import (
    cross_entropy_estimate,
    kde_1d,
    weighted_mean_and_variance,
    weighted_trajectory_band,
)
from .distributions import error_prior_from_config, prior_from_config
from .simulators import (
    COMPARTMENTS,
    GravityConfig,
    SeairConfig,
    default_observation_steps,
    gravity_observables,
    make_mobility_matrix,
    seair_observables,
    simulate_gravity_ensemble,
    simulate_seair_ensemble,
    synthesize_observations,
)
from .simulators.gravity import PARAM_NAMES as GRAVITY_PARAM_NAMES
from .simulators.seair import PARAM_NAMES as SEAIR_PARAM_NAMES
from .variational import variational_fit

OUTPUT_ROOT_ENV = "MAXENTFIT_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


class ConfigError(ValueError):
    """Config validation failure with a field-precise message."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _check_keys(section: dict, path: str, allowed: set, required: set = frozenset()):
    if not isinstance(section, dict):
        raise ConfigError(f"'{path or 'config'}' must be a mapping")
    prefix = f"{path}." if path else ""
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown field '{prefix}{unknown[0]}'")
    missing = sorted(required - set(section))
    if missing:
        raise ConfigError(f"missing required field '{prefix}{missing[0]}'")


def _number(section: dict, path: str, key: str, default=None, minimum=None, integer=False):
    if key not in section:
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field '{path}.{key}' must be a number")
    if integer and int(value) != value:
        raise ConfigError(f"field '{path}.{key}' must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"field '{path}.{key}' must be >= {minimum}")
    return int(value) if integer else float(value)


def load_config(path) -> dict:
    """Parse and validate an experiment config; returns the raw mapping."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validate_config(raw)
    return raw


def validate_config(cfg: dict) -> None:
    _check_keys(
        cfg,
        "",
        allowed={
            "experiment",
            "seed",
            "ensemble_size",
            "output_dir",
            "prior",
            "restraints",
            "optimizer",
            "variational",
            "baselines",
            "observations",
            "external",
            "gravity",
            "seair",
        },
        required={"experiment", "seed", "output_dir"},
    )
    kind = cfg["experiment"]
    if kind not in ("toy", "gravity", "seair", "external"):
        raise ConfigError(f"field 'experiment' must be one of toy/gravity/seair/external, got '{kind}'")
    _number(cfg, "", "seed", integer=True, minimum=0)
    if not isinstance(cfg["output_dir"], str) or not cfg["output_dir"]:
        raise ConfigError("field 'output_dir' must be a non-empty string")

    if kind == "external":
        if "external" not in cfg:
            raise ConfigError("missing required field 'external'")
        _check_keys(cfg["external"], "external", {"observables_csv"}, {"observables_csv"})
        if "restraints" not in cfg:
            raise ConfigError("missing required field 'restraints'")
    else:
        if "prior" not in cfg:
            raise ConfigError("missing required field 'prior'")
        if "ensemble_size" not in cfg:
            raise ConfigError("missing required field 'ensemble_size'")
        _number(cfg, "", "ensemble_size", integer=True, minimum=2)
        try:
            prior_from_config(cfg["prior"])
        except ValueError as exc:
            raise ConfigError(f"prior: {exc}") from exc

    if kind == "toy":
        if "restraints" not in cfg:
            raise ConfigError("missing required field 'restraints'")
    if kind in ("gravity", "seair"):
        if "observations" not in cfg:
            raise ConfigError("missing required field 'observations'")

    if "restraints" in cfg:
        _validate_restraints(cfg["restraints"])
    if "optimizer" in cfg:
        _validate_optimizer(cfg["optimizer"])
    if "variational" in cfg:
        _check_keys(
            cfg["variational"],
            "variational",
            {"enabled", "rounds", "ess_floor", "learning_rate"},
        )
        _number(cfg["variational"], "variational", "rounds", integer=True, minimum=1)
        _number(cfg["variational"], "variational", "ess_floor", minimum=0.0)
        _number(cfg["variational"], "variational", "learning_rate", minimum=0.0)
    if "baselines" in cfg:
        _check_keys(cfg["baselines"], "baselines", {"abc", "least_squares"})
        if "abc" in cfg["baselines"]:
            _check_keys(
                cfg["baselines"]["abc"],
                "baselines.abc",
                {"enabled", "n_simulations", "acceptance_quantile"},
            )
        if "least_squares" in cfg["baselines"]:
            _check_keys(
                cfg["baselines"]["least_squares"],
                "baselines.least_squares",
                {"enabled", "max_iterations"},
            )

    if kind == "gravity":
        _validate_gravity(cfg)
    if kind == "seair":
        _validate_seair(cfg)


def _validate_restraints(entries) -> None:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("field 'restraints' must be a non-empty list")
    for i, entry in enumerate(entries):
        _check_keys(entry, f"restraints[{i}]", {"observable", "target", "error"}, {"observable", "target"})
        if "error" in entry:
            try:
                error_prior_from_config(entry["error"])
            except ValueError as exc:
                raise ConfigError(f"restraints[{i}].error: {exc}") from exc


def _validate_optimizer(section) -> None:
    _check_keys(section, "optimizer", {"learning_rate", "epochs", "tolerance", "method"})
    _number(section, "optimizer", "learning_rate", minimum=0.0)
    _number(section, "optimizer", "epochs", integer=True, minimum=1)
    _number(section, "optimizer", "tolerance", minimum=0.0)
    if "method" in section and section["method"] not in ("adam", "gd"):
        raise ConfigError("field 'optimizer.method' must be 'adam' or 'gd'")


def _validate_gravity(cfg) -> None:
    obs = cfg["observations"]
    _check_keys(obs, "observations", {"true_params", "noise_std", "steps", "error"}, {"true_params", "noise_std"})
    if len(obs["true_params"]) != 5:
        raise ConfigError("field 'observations.true_params' must list 5 values")
    if "error" in obs:
        try:
            error_prior_from_config(obs["error"])
        except ValueError as exc:
            raise ConfigError(f"observations.error: {exc}") from exc
    if "gravity" in cfg:
        _check_keys(
            cfg["gravity"],
            "gravity",
            {"dt", "steps", "softening", "gravitational_constant", "attractor_positions", "particle_start"},
        )


def _validate_seair(cfg) -> None:
    obs = cfg["observations"]
    _check_keys(
        obs,
        "observations",
        {"true_params", "count", "window", "noise_fraction", "patch", "compartment", "error"},
        {"true_params", "count", "noise_fraction"},
    )
    if len(obs["true_params"]) != 5:
        raise ConfigError("field 'observations.true_params' must list 5 values")
    if "compartment" in obs and obs["compartment"] not in COMPARTMENTS:
        raise ConfigError(f"field 'observations.compartment' must be one of {COMPARTMENTS}")
    if "error" in obs:
        try:
            error_prior_from_config(obs["error"])
        except ValueError as exc:
            raise ConfigError(f"observations.error: {exc}") from exc
    if "seair" in cfg:
        _check_keys(
            cfg["seair"],
            "seair",
            {"patches", "infectivity", "dt", "steps", "mobility_diagonal_floor"},
        )


def _optimizer_options(cfg: dict) -> OptimizerOptions:
    section = cfg.get("optimizer", {})
    return OptimizerOptions(
        learning_rate=section.get("learning_rate", 0.1),
        epochs=int(section.get("epochs", 2000)),
        tolerance=section.get("tolerance", 1e-4),
        method=section.get("method", "adam"),
    )


def stream_seed(master: int, name: str) -> int:
    """Deterministic named random stream derived from the master seed."""
    payload = f"{master}:{name}".encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


# ---------------------------------------------------------------------------
# experiment assembly
# ---------------------------------------------------------------------------


class _Experiment:
    """Everything the bundle writer needs, collected while running."""

    def __init__(self, kind):
        self.kind = kind
        self.prior = None
        self.param_names = ()
        self.observable_names = ()
        self.samples = None
        self.observables = None
        self.restraints = ()
        self.lagrange = None
        self.variational = None
        self.bands = None  # list of (series, times, mean, low, high)
        self.reference = None  # list of row tuples for reference.csv
        self.reference_header = ()
        self.abc = None
        self.least_squares = None
        self.extras = {}


def _restraints_from_config(entries, observable_names) -> list:
    restraints = []
    for i, entry in enumerate(entries):
        selector = entry["observable"]
        if isinstance(selector, str):
            if selector not in observable_names:
                raise ConfigError(f"restraints[{i}].observable '{selector}' not found")
            index = observable_names.index(selector)
        else:
            index = int(selector)
            if not 0 <= index < len(observable_names):
                raise ConfigError(f"restraints[{i}].observable index {index} out of range")
        error = error_prior_from_config(entry.get("error", {"kind": "delta"}))
        restraints.append(Restraint(index, float(entry["target"]), error))
    return restraints


def _run_toy(cfg: dict, out_dir: Path) -> _Experiment:
    exp = _Experiment("toy")
    exp.prior = prior_from_config(cfg["prior"])
    m = int(cfg["ensemble_size"])
    seed = int(cfg["seed"])
    dim = exp.prior.dim
    exp.param_names = tuple(f"theta_{i}" for i in range(dim)) if dim > 1 else ("r",)
    exp.observable_names = exp.param_names
    exp.samples = exp.prior.sample(m, stream_seed(seed, "prior-draws"))
    exp.observables = exp.samples
    exp.restraints = _restraints_from_config(cfg["restraints"], exp.observable_names)
    _solve_experiment(exp, cfg, out_dir, observable_fn=lambda thetas: thetas)
    return exp


def _gravity_config(cfg: dict) -> GravityConfig:
    section = cfg.get("gravity", {})
    kwargs = {}
    for key in ("dt", "steps", "softening", "gravitational_constant"):
        if key in section:
            kwargs[key] = section[key]
    if "attractor_positions" in section:
        kwargs["attractor_positions"] = tuple(tuple(p) for p in section["attractor_positions"])
    if "particle_start" in section:
        kwargs["particle_start"] = tuple(section["particle_start"])
    if "steps" in kwargs:
        kwargs["steps"] = int(kwargs["steps"])
    return GravityConfig(**kwargs)


def _run_gravity(cfg: dict, out_dir: Path) -> _Experiment:
    exp = _Experiment("gravity")
    exp.prior = prior_from_config(cfg["prior"])
    if exp.prior.dim != 5:
        raise ConfigError("gravity prior must be 5-dimensional (m1, m2, m3, v0x, v0y)")
    seed = int(cfg["seed"])
    m = int(cfg["ensemble_size"])
    sim_config = _gravity_config(cfg)
    obs_cfg = cfg["observations"]
    steps = [int(s) for s in obs_cfg.get("steps", default_observation_steps(sim_config.steps))]
    exp.param_names = GRAVITY_PARAM_NAMES
    exp.observable_names = tuple(f"{axis}{s}" for s in steps for axis in ("x", "y"))

    def observable_fn(thetas):
        return gravity_observables(simulate_gravity_ensemble(thetas, sim_config), steps)

    reference_traj = simulate_gravity_ensemble(
        np.asarray(obs_cfg["true_params"], dtype=float)[None, :], sim_config
    )[0]
    reference_values = gravity_observables(reference_traj, steps)
    targets = synthesize_observations(
        reference_values, "gaussian", float(obs_cfg["noise_std"]), stream_seed(seed, "observation-noise")
    )
    error = error_prior_from_config(obs_cfg.get("error", {"kind": "delta"}))
    exp.restraints = [Restraint(k, float(t), error) for k, t in enumerate(targets)]

    exp.samples = exp.prior.sample(m, stream_seed(seed, "prior-draws"))
    trajectories = simulate_gravity_ensemble(exp.samples, sim_config)
    exp.observables = gravity_observables(trajectories, steps)
    _solve_experiment(exp, cfg, out_dir, observable_fn=observable_fn)

    times = np.arange(sim_config.steps + 1) * sim_config.dt
    exp.bands = []
    for axis, label in ((0, "x"), (1, "y")):
        mean, low, high = weighted_trajectory_band(
            trajectories[:, :, axis], exp.lagrange.log_weights
        )
        exp.bands.append((label, times, mean, low, high))
    exp.reference_header = ("step", "x", "y")
    exp.reference = [
        (step, reference_traj[step, 0], reference_traj[step, 1])
        for step in range(reference_traj.shape[0])
    ]
    _run_baselines(exp, cfg, observable_fn, targets)
    return exp


def _seair_config(cfg: dict) -> SeairConfig:
    section = cfg.get("seair", {})
    patches = int(section.get("patches", 3))
    floor = section.get("mobility_diagonal_floor", 0.8)
    mobility = make_mobility_matrix(patches, stream_seed(int(cfg["seed"]), "mobility"), floor)
    return SeairConfig(
        patches=patches,
        mobility=mobility,
        infectivity=section.get("infectivity", 0.25),
        dt=section.get("dt", 1.0),
        steps=int(section.get("steps", 250)),
    )


def _run_seair(cfg: dict, out_dir: Path) -> _Experiment:
    exp = _Experiment("seair")
    exp.prior = prior_from_config(cfg["prior"])
    if exp.prior.dim != 5:
        raise ConfigError("seair prior must be 5-dimensional")
    seed = int(cfg["seed"])
    m = int(cfg["ensemble_size"])
    sim_config = _seair_config(cfg)
    obs_cfg = cfg["observations"]
    patch = int(obs_cfg.get("patch", 0))
    compartment = obs_cfg.get("compartment", "I")
    count = int(obs_cfg["count"])
    window = obs_cfg.get("window", [0, sim_config.steps // 2])
    lo, hi = int(window[0]), int(window[1])
    rng = np.random.default_rng(stream_seed(seed, "observation-times"))
    times = np.sort(rng.choice(np.arange(lo, hi + 1), size=count, replace=False))

    exp.param_names = SEAIR_PARAM_NAMES
    exp.observable_names = tuple(f"{compartment}_patch{patch + 1}_t{t}" for t in times)

    def observable_fn(thetas):
        batch = simulate_seair_ensemble(thetas, sim_config)
        return seair_observables(batch.values, patch, compartment, times)

    reference = simulate_seair_ensemble(
        np.asarray(obs_cfg["true_params"], dtype=float)[None, :], sim_config
    )
    reference_traj = reference.values[0]
    reference_values = seair_observables(reference_traj, patch, compartment, times)
    peak = float(np.max(reference_traj[:, patch, COMPARTMENTS.index(compartment)]))
    noise_scale = float(obs_cfg["noise_fraction"]) * peak
    targets = synthesize_observations(
        reference_values, "uniform", noise_scale, stream_seed(seed, "observation-noise")
    )
    error = error_prior_from_config(obs_cfg.get("error", {"kind": "laplace", "scale": 0.01}))
    exp.restraints = [Restraint(k, float(t), error) for k, t in enumerate(targets)]

    exp.samples = exp.prior.sample(m, stream_seed(seed, "prior-draws"))
    batch = simulate_seair_ensemble(exp.samples, sim_config)
    exp.observables = seair_observables(batch.values, patch, compartment, times)
    exp.extras["clamp_events_total"] = int(np.sum(batch.clamp_events))
    exp.extras["init_rescaled_count"] = int(np.sum(batch.init_rescaled))
    exp.extras["observation_times"] = [int(t) for t in times]
    exp.extras["mobility"] = sim_config.mobility.tolist()
    _solve_experiment(exp, cfg, out_dir, observable_fn=observable_fn)

    time_axis = np.arange(sim_config.steps + 1) * sim_config.dt
    exp.bands = []
    for p in range(sim_config.patches):
        for c, name in enumerate(COMPARTMENTS):
            mean, low, high = weighted_trajectory_band(
                batch.values[:, :, p, c], exp.lagrange.log_weights
            )
            exp.bands.append((f"patch{p + 1}_{name}", time_axis, mean, low, high))
    exp.reference_header = ("step", "patch", "compartment", "value")
    exp.reference = [
        (step, p, COMPARTMENTS[c], reference_traj[step, p, c])
        for step in range(reference_traj.shape[0])
        for p in range(sim_config.patches)
        for c in range(5)
    ]
    _run_baselines(exp, cfg, observable_fn, targets)
    return exp


def _run_external_matrix(cfg: dict, observables: np.ndarray, names) -> _Experiment:
    exp = _Experiment("external")
    exp.observable_names = tuple(names)
    exp.observables = observables
    exp.restraints = _restraints_from_config(cfg["restraints"], list(names))
    ensemble = Ensemble(None, observables)
    exp.lagrange = solve_lambda(ensemble, exp.restraints, _optimizer_options(cfg))
    return exp


def _solve_experiment(exp: _Experiment, cfg: dict, out_dir: Path, observable_fn) -> None:
    options = _optimizer_options(cfg)
    var_cfg = cfg.get("variational", {})
    if var_cfg.get("enabled", False):
        out_dir.mkdir(parents=True, exist_ok=True)
        result = variational_fit(
            exp.prior,
            observable_fn,
            exp.restraints,
            rounds=int(var_cfg.get("rounds", 20)),
            ensemble_size=int(cfg["ensemble_size"]),
            solver_options=options,
            sampler_learning_rate=var_cfg.get("learning_rate", 0.5),
            ess_floor=var_cfg.get("ess_floor", 0.05),
            seed=stream_seed(int(cfg["seed"]), "variational"),
            log_path=out_dir / "sampler_log.jsonl",
        )
        exp.variational = result
        exp.lagrange = result.lagrange_state
        exp.samples = result.ensemble.samples
        exp.observables = result.ensemble.observables
    else:
        ensemble = Ensemble(exp.samples, exp.observables)
        exp.lagrange = solve_lambda(ensemble, exp.restraints, options)


def _run_baselines(exp: _Experiment, cfg: dict, observable_fn, targets) -> None:
    section = cfg.get("baselines", {})
    abc_cfg = section.get("abc", {})
    if abc_cfg.get("enabled", False):
        options = AbcOptions(
            n_simulations=int(abc_cfg.get("n_simulations", 10000)),
            acceptance_quantile=abc_cfg.get("acceptance_quantile", 0.01),
        )
        exp.abc = rejection_abc(
            exp.prior, observable_fn, targets, options, stream_seed(int(cfg["seed"]), "abc")
        )
    ls_cfg = section.get("least_squares", {})
    if ls_cfg.get("enabled", False):
        exp.least_squares = least_squares_fit(
            observable_fn,
            targets,
            exp.prior.mean,
            max_iterations=int(ls_cfg.get("max_iterations", 500)),
            rng_seed=stream_seed(int(cfg["seed"]), "least-squares"),
        )


# ---------------------------------------------------------------------------
# bundle output
# ---------------------------------------------------------------------------


def _jsonify(value):
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_matrix_csv(path: Path, names, matrix) -> None:
    arr = np.asarray(matrix, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    _write_csv(path, names, (tuple(float(v) for v in row) for row in arr))


def resolve_output_dir(output_dir: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    path = Path(output_dir)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def write_bundle(exp: _Experiment, cfg: dict, config_bytes: bytes) -> Path:
    out = resolve_output_dir(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)

    (out / "config.json").write_bytes(config_bytes)

    state = exp.lagrange
    ess = effective_sample_size(state.log_weights)
    summary = {
        "experiment": exp.kind,
        "provenance": {
            "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
            "seed": cfg["seed"],
            "version": __version__,
            "batch_size": int(exp.observables.shape[0]),
        },
        "solve": {
            "lambda": state.lam,
            "residuals": state.residuals,
            "loss": state.loss,
            "converged": state.converged,
            "epochs_run": state.epochs_run,
            "ess": ess,
        },
        "restraints": [
            {
                "observable": exp.observable_names[r.observable_index],
                "target": r.target,
                "error": repr(r.error_prior),
            }
            for r in exp.restraints
        ],
    }
    if exp.samples is not None and exp.prior is not None:
        mean, var = weighted_mean_and_variance(exp.samples, state.log_weights)
        summary["posterior"] = {
            "parameter_names": list(exp.param_names),
            "weighted_mean": mean,
            "weighted_variance": var,
            "cross_entropy_to_prior": cross_entropy_estimate(
                exp.samples, state.log_weights, exp.prior
            ),
        }
    if exp.variational is not None:
        sampler = exp.variational.sampler_state.sampler
        summary["variational"] = {
            "converged": exp.variational.converged,
            "rounds_run": exp.variational.rounds_run,
            "sampler_mean": sampler.mean,
            "sampler_variance": sampler.variance,
            "ess_history": list(exp.variational.sampler_state.ess_history),
        }
    if exp.abc is not None:
        abc_mean = exp.abc.samples.mean(axis=0)
        summary["baselines"] = summary.get("baselines", {})
        summary["baselines"]["abc"] = {
            "n_accepted": int(exp.abc.samples.shape[0]),
            "threshold": exp.abc.threshold,
            "accepted_mean": abc_mean,
        }
    if exp.least_squares is not None:
        summary["baselines"] = summary.get("baselines", {})
        summary["baselines"]["least_squares"] = {
            "params": exp.least_squares.params,
            "residual": exp.least_squares.residual,
            "converged": exp.least_squares.converged,
            "restarted": exp.least_squares.restarted,
        }
    for key, value in exp.extras.items():
        if not key.startswith("_"):
            summary.setdefault("simulator", {})[key] = value

    (out / "summary.json").write_text(json.dumps(_jsonify(summary), sort_keys=True, indent=2) + "\n")

    weights = np.exp(state.log_weights)
    _write_csv(
        out / "weights.csv",
        ("sample_index", "weight"),
        ((i, float(w)) for i, w in enumerate(weights)),
    )
    _write_matrix_csv(out / "observables.csv", exp.observable_names, exp.observables)
    if exp.samples is not None:
        _write_matrix_csv(out / "samples.csv", exp.param_names, exp.samples)
    _write_csv(
        out / "targets.csv",
        ("restraint", "observable", "target", "error_prior"),
        (
            (k, exp.observable_names[r.observable_index], float(r.target), repr(r.error_prior))
            for k, r in enumerate(exp.restraints)
        ),
    )
    if exp.bands:
        rows = []
        for series, times, mean, low, high in exp.bands:
            for t, m_, lo_, hi_ in zip(times, mean, low, high):
                rows.append((series, float(t), float(m_), float(lo_), float(hi_)))
        _write_csv(out / "bands.csv", ("series", "time", "mean", "low", "high"), rows)
    if exp.reference is not None:
        _write_csv(out / "reference.csv", exp.reference_header, exp.reference)
    if exp.abc is not None:
        _write_matrix_csv(out / "abc_samples.csv", exp.param_names, exp.abc.samples)
    return out


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


_RUNNERS = {"toy": _run_toy, "gravity": _run_gravity, "seair": _run_seair}


def run_experiment(config_path) -> tuple[Path, int]:
    """Run a config end to end; returns (bundle directory, exit code)."""
    config_path = Path(config_path)
    cfg = load_config(config_path)
    config_bytes = _canonical_config_bytes(cfg)
    kind = cfg["experiment"]
    out_dir = resolve_output_dir(cfg["output_dir"])
    if kind == "external":
        csv_path = Path(cfg["external"]["observables_csv"])
        if not csv_path.is_absolute():
            csv_path = config_path.parent / csv_path
        names, matrix = read_observables_csv(csv_path)
        exp = _run_external_matrix(cfg, matrix, names)
    else:
        exp = _RUNNERS[kind](cfg, out_dir)
    bundle = write_bundle(exp, cfg, config_bytes)
    if exp.variational is not None:
        code = EXIT_OK if exp.variational.converged else EXIT_NOT_CONVERGED
    else:
        code = EXIT_OK if exp.lagrange.converged else EXIT_NOT_CONVERGED
    return bundle, code


def _canonical_config_bytes(cfg: dict) -> bytes:
    return (json.dumps(_jsonify(cfg), sort_keys=True, indent=2) + "\n").encode()


def read_observables_csv(path) -> tuple[list, np.ndarray]:
    """Read an external observable matrix: header row of names, float cells."""
    path = Path(path)
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            names = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ValueError(f"{path}: line {line_number} has {len(row)} cells, expected {len(names)}")
            values = []
            for col, cell in enumerate(row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric cell at line {line_number}, "
                        f"column {col + 1} ('{names[col]}')"
                    ) from None
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return [n.strip() for n in names], np.asarray(rows, dtype=float)


def run_external(observables_csv, restraints_config) -> tuple[Path, int]:
    """Reweight an externally produced observable matrix.

    ``restraints_config`` is a JSON file with ``restraints`` (observable
    selector by column name or index, target, error), optional
    ``optimizer`` settings, and ``output_dir``.
    """
    spec = json.loads(Path(restraints_config).read_text())
    _check_keys(spec, "", {"restraints", "optimizer", "output_dir"}, {"restraints", "output_dir"})
    _validate_restraints(spec["restraints"])
    if "optimizer" in spec:
        _validate_optimizer(spec["optimizer"])
    names, matrix = read_observables_csv(observables_csv)
    cfg = {
        "experiment": "external",
        "seed": 0,
        "output_dir": spec["output_dir"],
        "restraints": spec["restraints"],
        "optimizer": spec.get("optimizer", {}),
        "external": {"observables_csv": str(observables_csv)},
    }
    exp = _run_external_matrix(cfg, matrix, names)
    bundle = write_bundle(exp, cfg, _canonical_config_bytes(cfg))
    return bundle, EXIT_OK if exp.lagrange.converged else EXIT_NOT_CONVERGED


def emit_plot_data(bundle_dir, which: str) -> list[Path]:
    """Write plot-ready CSVs derived from a bundle into ``<bundle>/plots``.

    ``which`` is one of ``posterior_kde`` (one value/density grid per
    parameter), ``trajectory_band`` (per-series weighted mean and central
    67% band), or ``entropy_curve`` (analytic posterior entropies for a
    sweep of observation targets on the 1-D toy).
    """
    bundle = Path(bundle_dir)
    plots = bundle / "plots"
    written = []

    if which == "posterior_kde":
        samples = _require_bundle_file(bundle, "samples.csv")
        weights_path = _require_bundle_file(bundle, "weights.csv")
        names, matrix = read_observables_csv(samples)
        _, weight_rows = read_observables_csv(weights_path)
        log_weights = np.log(np.clip(weight_rows[:, 1], 1e-300, None))
        plots.mkdir(exist_ok=True)
        for j, name in enumerate(names):
            grid, density = kde_1d(matrix[:, j], log_weights)
            path = plots / f"posterior_kde_{name}.csv"
            _write_csv(path, ("value", "density"), zip(grid, density))
            written.append(path)
        return written

    if which == "trajectory_band":
        bands = _require_bundle_file(bundle, "bands.csv")
        plots.mkdir(exist_ok=True)
        path = plots / "trajectory_band.csv"
        path.write_bytes(bands.read_bytes())
        return [path]

    if which == "entropy_curve":
        config_path = _require_bundle_file(bundle, "config.json")
        cfg = json.loads(config_path.read_text())
        if cfg.get("experiment") != "toy" or len(cfg["prior"]["mean"]) != 1:
            raise ValueError("entropy_curve needs a 1-D toy bundle (missing toy prior)")
        prior_mean = float(cfg["prior"]["mean"][0])
        prior_var = float(cfg["prior"]["variance"][0])
        plots.mkdir(exist_ok=True)
        path = plots / "entropy_curve.csv"
        rows = []
        # Bayes entropy uses the noise variance needed to pull the posterior
        # mean within 0.25 of each target; targets closer than that need no
        # evidence and keep the prior entropy.
        delta = 0.25
        for target in range(0, 11):
            maxent = maxent_toy_posterior(prior_mean, prior_var, float(target))
            gap = abs(target - prior_mean)
            if gap <= delta:
                bayes_entropy = maxent_toy_posterior(prior_mean, prior_var, prior_mean).entropy
            else:
                noise_var = prior_var * delta / (gap - delta)
                bayes_entropy = bayes_toy_posterior(prior_mean, prior_var, float(target), noise_var).entropy
            rows.append((float(target), maxent.entropy, bayes_entropy))
        _write_csv(path, ("target", "maxent_entropy", "bayes_entropy"), rows)
        return [path]

    raise ValueError(f"unknown plot data kind '{which}'")


def _require_bundle_file(bundle: Path, name: str) -> Path:
    path = bundle / name
    if not path.exists():
        raise ValueError(f"bundle is missing component '{name}'")
    return path


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _cmd_run(args) -> int:
    bundle, code = run_experiment(args.config)
    print(f"bundle written to {bundle}")
    if code == EXIT_NOT_CONVERGED:
        print("warning: solve did not converge; results are flagged", file=sys.stderr)
    return code


def _cmd_reweight(args) -> int:
    bundle, code = run_external(args.observables_csv, args.restraints)
    print(f"weights written to {bundle}")
    if code == EXIT_NOT_CONVERGED:
        print("warning: solve did not converge; results are flagged", file=sys.stderr)
    return code


def _cmd_plotdata(args) -> int:
    for path in emit_plot_data(args.bundle, args.which):
        print(path)
    return EXIT_OK


def _cmd_validate(args) -> int:
    load_config(args.config)
    print("ok")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxentfit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config end to end")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.set_defaults(func=_cmd_run)

    p_rew = sub.add_parser("reweight", help="reweight an external observable matrix CSV")
    p_rew.add_argument("observables_csv", help="CSV with a header row; rows are samples")
    p_rew.add_argument("restraints", help="JSON file with restraints and output_dir")
    p_rew.set_defaults(func=_cmd_reweight)

    p_plot = sub.add_parser("plotdata", help="emit plot-ready CSVs from a bundle")
    p_plot.add_argument("bundle", help="bundle directory produced by 'run'")
    p_plot.add_argument(
        "which", choices=("posterior_kde", "trajectory_band", "entropy_curve")
    )
    p_plot.set_defaults(func=_cmd_plotdata)

    p_val = sub.add_parser("validate", help="validate a config without running it")
    p_val.add_argument("config", help="path to a JSON experiment config")
    p_val.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
