"""Sampler adaptation, importance correction, and the full variational loop."""

import json

import numpy as np
import pytest

from maxentfit.core import Ensemble, OptimizerOptions, Restraint, effective_sample_size, solve_lambda
from maxentfit.distributions import DiagonalGaussianPrior
from maxentfit.variational import (
    SamplerState,
    importance_correction,
    variational_fit,
    variational_step,
)


def make_state(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    from maxentfit.core import LagrangeState

    return LagrangeState(
        lam=np.zeros(1),
        log_weights=lw,
        residuals=np.zeros(1),
        loss=0.0,
        converged=True,
        epochs_run=0,
    )


class TestVariationalStep:
    def test_uniform_weights_fixed_point(self):
        # with the sampler parameters set to the sample moments, the
        # cross-entropy gradient vanishes exactly
        rng = np.random.default_rng(0)
        samples = rng.standard_normal((4000, 1))
        sampler = DiagonalGaussianPrior([samples.mean()], [samples.var()])
        ens = Ensemble(samples, samples)
        lw = np.full(4000, -np.log(4000.0))
        new = variational_step(SamplerState(sampler), ens, make_state(lw), learning_rate=0.7)
        np.testing.assert_allclose(new.sampler.mean, sampler.mean, atol=1e-10)
        np.testing.assert_allclose(new.sampler.variance, sampler.variance, atol=1e-10)
        assert new.iteration == 1

    def test_mean_moves_toward_weighted_mass(self):
        rng = np.random.default_rng(1)
        samples = rng.standard_normal((5000, 1))
        sampler = DiagonalGaussianPrior([0.0], [1.0])
        ens = Ensemble(samples, samples)
        # concentrate weight on samples near theta = 2
        lw = -0.5 * ((samples[:, 0] - 2.0) / 0.3) ** 2
        lw -= np.log(np.sum(np.exp(lw)))
        weighted_mean = np.exp(lw) @ samples[:, 0]
        new = variational_step(SamplerState(sampler), ens, make_state(lw), learning_rate=0.5)
        assert 0.0 < new.sampler.mean[0] < weighted_mean

    def test_zero_learning_rate_is_identity(self):
        rng = np.random.default_rng(2)
        samples = rng.standard_normal((100, 1))
        sampler = DiagonalGaussianPrior([0.3], [1.7])
        new = variational_step(
            SamplerState(sampler), Ensemble(samples, samples), make_state(np.full(100, -np.log(100.0))), 0.0
        )
        np.testing.assert_array_equal(new.sampler.mean, sampler.mean)
        np.testing.assert_array_equal(new.sampler.variance, sampler.variance)

    def test_variance_collapse_rejected_by_halving(self):
        # a single dominant weight drives the variance update negative at
        # large learning rates; the step must shrink instead of going invalid
        samples = np.array([[0.0], [5.0]])
        sampler = DiagonalGaussianPrior([0.0], [0.05])
        lw = np.log([0.999999, 0.000001])
        new = variational_step(SamplerState(sampler), Ensemble(samples, samples), make_state(lw), 100.0)
        assert np.all(new.sampler.variance > 0.0)


class TestImportanceCorrection:
    def test_sampler_equals_prior_is_identity(self):
        prior = DiagonalGaussianPrior([0.0], [1.0])
        samples = prior.sample(500, seed=3)
        lw = np.log(np.full(500, 1.0 / 500))
        out = importance_correction(lw, prior, prior, samples)
        np.testing.assert_allclose(out, lw, atol=1e-12)

    def test_recovers_prior_mean(self):
        prior = DiagonalGaussianPrior([0.0], [1.0])
        sampler = DiagonalGaussianPrior([1.0], [1.0])
        samples = sampler.sample(10_000, seed=4)
        lw = np.full(10_000, -np.log(10_000.0))
        out = importance_correction(lw, prior, sampler, samples)
        mean = np.exp(out) @ samples[:, 0]
        assert abs(mean) < 0.05

    def test_output_normalized(self):
        prior = DiagonalGaussianPrior([0.0], [2.0])
        sampler = DiagonalGaussianPrior([0.5], [1.0])
        samples = sampler.sample(256, seed=5)
        out = importance_correction(np.zeros(256), prior, sampler, samples)
        assert abs(np.exp(out).sum() - 1.0) < 1e-12


class TestVariationalFit:
    def test_well_supported_target_ends_in_first_round(self):
        prior = DiagonalGaussianPrior([0.0], [1.0])
        result = variational_fit(
            prior,
            lambda t: t,
            [Restraint(0, 0.3)],
            rounds=10,
            ensemble_size=5000,
            solver_options=OptimizerOptions(learning_rate=0.05, epochs=3000, tolerance=1e-5),
            seed=6,
        )
        assert result.converged
        assert result.rounds_run == 1
        np.testing.assert_allclose(result.sampler_state.sampler.mean, [0.0])

    def test_single_round_matches_plain_solve(self):
        prior = DiagonalGaussianPrior([0.0], [1.0])
        opts = OptimizerOptions(learning_rate=0.05, epochs=3000, tolerance=1e-5)
        result = variational_fit(
            prior, lambda t: t, [Restraint(0, 0.3)], rounds=1, ensemble_size=4000,
            solver_options=opts, seed=7,
        )
        thetas = result.ensemble.samples
        plain = solve_lambda(Ensemble(thetas, thetas), [Restraint(0, 0.3)], opts)
        np.testing.assert_allclose(result.lagrange_state.lam, plain.lam, atol=1e-12)
        np.testing.assert_allclose(result.lagrange_state.log_weights, plain.log_weights, atol=1e-10)

    def test_far_target_rescued(self):
        # the core acceptance scenario: target ten prior sigmas out
        prior = DiagonalGaussianPrior([0.0], [1.0])
        opts = OptimizerOptions(learning_rate=0.1, epochs=2000, tolerance=1e-4)
        plain_thetas = prior.sample(10_000, seed=42)
        plain = solve_lambda(Ensemble(plain_thetas, plain_thetas), [Restraint(0, 10.0)], opts)
        plain_ess = effective_sample_size(plain.log_weights)
        assert (not plain.converged and np.abs(plain.residuals).max() > 0.1) or plain_ess < 10

        result = variational_fit(
            prior, lambda t: t, [Restraint(0, 10.0)], rounds=30, ensemble_size=10_000,
            solver_options=opts, sampler_learning_rate=0.5, seed=42,
        )
        assert result.converged
        assert np.abs(result.lagrange_state.residuals).max() < 0.05
        ess = effective_sample_size(result.lagrange_state.log_weights)
        assert ess > 500
        w = np.exp(result.lagrange_state.log_weights)
        theta = result.ensemble.samples[:, 0]
        mean = w @ theta
        var = w @ (theta - mean) ** 2
        assert mean == pytest.approx(10.0, abs=0.05)
        assert var == pytest.approx(1.0, abs=0.1)

    def test_posterior_invariance_on_supported_target(self):
        # plain and variational posteriors must agree for a well-supported target
        prior = DiagonalGaussianPrior([0.0], [1.0])
        opts = OptimizerOptions(learning_rate=0.05, epochs=4000, tolerance=1e-5)
        thetas = prior.sample(20_000, seed=8)
        plain = solve_lambda(Ensemble(thetas, thetas), [Restraint(0, 0.5)], opts)
        w = np.exp(plain.log_weights)
        plain_mean = w @ thetas[:, 0]
        plain_var = w @ (thetas[:, 0] - plain_mean) ** 2

        result = variational_fit(
            prior, lambda t: t, [Restraint(0, 0.5)], rounds=10, ensemble_size=20_000,
            solver_options=opts, seed=9,
        )
        w2 = np.exp(result.lagrange_state.log_weights)
        theta2 = result.ensemble.samples[:, 0]
        var_mean = w2 @ theta2
        var_var = w2 @ (theta2 - var_mean) ** 2
        # agreement within a few Monte Carlo standard errors
        assert var_mean == pytest.approx(plain_mean, abs=0.05)
        assert var_var == pytest.approx(plain_var, abs=0.1)

    def test_round_log_written(self, tmp_path):
        prior = DiagonalGaussianPrior([0.0], [1.0])
        log_path = tmp_path / "rounds.jsonl"
        variational_fit(
            prior, lambda t: t, [Restraint(0, 2.5)], rounds=4, ensemble_size=2000,
            solver_options=OptimizerOptions(learning_rate=0.1, epochs=1000, tolerance=1e-4),
            seed=10, log_path=log_path,
        )
        lines = log_path.read_text().strip().splitlines()
        assert len(lines) >= 1
        record = json.loads(lines[0])
        assert {"round", "ess", "max_residual", "sampler_mean", "sampler_variance"} <= set(record)

    def test_budget_exhaustion_flagged(self):
        prior = DiagonalGaussianPrior([0.0], [1.0])
        result = variational_fit(
            prior, lambda t: t, [Restraint(0, 40.0)], rounds=2, ensemble_size=500,
            solver_options=OptimizerOptions(learning_rate=0.1, epochs=200, tolerance=1e-6),
            seed=11,
        )
        assert not result.converged
        assert result.rounds_run == 2
