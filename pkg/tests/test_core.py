"""Weight computation and the multiplier solve against independent oracles."""

import math

import numpy as np
import pytest

from maxentfit.core import (
    Ensemble,
    LagrangeState,
    OptimizerOptions,
    Restraint,
    compute_log_weights,
    constraint_residuals,
    effective_sample_size,
    loss_and_gradient,
    solve_lambda,
    weighted_expectation,
)
from maxentfit.distributions import DeltaError, GaussianError, LaplaceError, TiltDomainError

from oracles import central_difference_gradient, kl_minimal_weights


def standard_normal_ensemble(m=100_000, seed=1):
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((m, 1))
    return Ensemble(theta, theta)


class TestComputeLogWeights:
    def test_zero_multipliers_give_uniform(self):
        g = np.arange(12.0).reshape(6, 2)
        lw = compute_log_weights(g, [0.0, 0.0])
        np.testing.assert_allclose(np.exp(lw), np.full(6, 1.0 / 6.0))

    def test_two_sample_hand_computation(self):
        # e^0 : e^{-ln 3} = 1 : 1/3 -> [3/4, 1/4]
        lw = compute_log_weights(np.array([[0.0], [1.0]]), [math.log(3.0)])
        np.testing.assert_allclose(np.exp(lw), [0.75, 0.25], rtol=1e-12)

    def test_normalization_contract(self):
        rng = np.random.default_rng(2)
        g = rng.normal(size=(500, 3))
        lam = rng.normal(size=3) * 5.0
        lw = compute_log_weights(g, lam)
        assert abs(np.exp(lw).sum() - 1.0) < 1e-12

    def test_base_log_weights_shift(self):
        g = np.array([[0.0], [0.0]])
        lw = compute_log_weights(g, [0.0], base_log_weights=np.log([0.9, 0.1]))
        np.testing.assert_allclose(np.exp(lw), [0.9, 0.1], rtol=1e-12)

    def test_extreme_multipliers_stay_finite(self):
        g = np.array([[0.0], [100.0], [200.0]])
        lw = compute_log_weights(g, [50.0])
        assert np.all(np.isfinite(np.exp(lw).sum()))
        assert abs(np.exp(lw).sum() - 1.0) < 1e-12


class TestWeightedExpectation:
    def test_uniform_mean(self):
        lw = compute_log_weights(np.zeros((3, 1)), [0.0])
        assert weighted_expectation([1.0, 2.0, 3.0], lw) == pytest.approx(2.0)

    def test_hand_weights(self):
        lw = np.log([0.75, 0.25])
        assert weighted_expectation([0.0, 1.0], lw) == pytest.approx(0.25)

    def test_tilted_normal_mean(self):
        # tilt by lam=-0.5 moves a standard normal's mean to +0.5
        ens = standard_normal_ensemble()
        lw = compute_log_weights(ens.observables, [-0.5])
        assert weighted_expectation(ens.observables[:, 0], lw) == pytest.approx(0.5, abs=0.02)

    def test_matrix_values(self):
        lw = np.log([0.5, 0.5])
        out = weighted_expectation(np.array([[1.0, 3.0], [3.0, 5.0]]), lw)
        np.testing.assert_allclose(out, [2.0, 4.0])


class TestConstraintResiduals:
    def test_zero_at_prior_mean_target(self):
        ens = standard_normal_ensemble(m=5000, seed=3)
        target = float(ens.observables[:, 0].mean())
        res = constraint_residuals(ens, [Restraint(0, target)], [0.0])
        np.testing.assert_allclose(res, [0.0], atol=1e-12)

    def test_delta_reduces_to_mean_gap(self):
        ens = standard_normal_ensemble(m=5000, seed=4)
        res = constraint_residuals(ens, [Restraint(0, 0.7)], [0.0])
        assert res[0] == pytest.approx(0.7 - ens.observables[:, 0].mean())

    def test_gaussian_error_analytic_balance(self):
        # with sigma=1 the solution of -lam - lam*sigma^2 = 0.5 is lam=-0.25
        ens = standard_normal_ensemble()
        res = constraint_residuals(ens, [Restraint(0, 0.5, GaussianError(1.0))], [-0.25])
        assert res[0] == pytest.approx(0.0, abs=0.02)


class TestLossAndGradient:
    def test_zero_gradient_at_solution(self):
        g = np.array([[1.0], [3.0]])
        # weights [0.5, 0.5] give mean 2.0; target 2.0 -> residual 0
        loss, grad = loss_and_gradient(Ensemble(None, g), [Restraint(0, 2.0)], [0.0])
        assert loss == pytest.approx(0.0, abs=1e-24)
        np.testing.assert_allclose(grad, [0.0], atol=1e-12)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(10, 200))
        n = int(rng.integers(1, 5))
        g = rng.normal(size=(m, n)) * rng.uniform(0.5, 2.0)
        errors = [DeltaError(), GaussianError(0.8), LaplaceError(0.05)]
        restraints = [
            Restraint(k, float(rng.normal()), errors[k % 3]) for k in range(n)
        ]
        ens = Ensemble(None, g)
        lam = rng.uniform(-0.5, 0.5, n)
        _, grad = loss_and_gradient(ens, restraints, lam)
        fd = central_difference_gradient(
            lambda l: loss_and_gradient(ens, restraints, l)[0], lam, h=1e-5
        )
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-8)

    def test_correlated_observables(self):
        rng = np.random.default_rng(9)
        col = rng.normal(size=(10, 1))
        g = np.hstack([col, 2.0 * col])  # perfectly correlated
        ens = Ensemble(None, g)
        opts = OptimizerOptions(learning_rate=0.05, epochs=4000, tolerance=1e-6)
        mean = float(col.mean())
        compatible = solve_lambda(
            ens, [Restraint(0, mean + 0.1), Restraint(1, 2.0 * (mean + 0.1))], opts
        )
        assert compatible.converged
        incompatible = solve_lambda(
            ens, [Restraint(0, mean + 0.1), Restraint(1, 2.0 * mean - 0.3)], opts
        )
        assert not incompatible.converged
        assert incompatible.loss > 0.01


class TestSolveLambda:
    def test_prior_mean_target_converges_immediately(self):
        ens = standard_normal_ensemble(m=1000, seed=5)
        target = float(ens.observables[:, 0].mean())
        state = solve_lambda(ens, [Restraint(0, target)])
        assert state.converged
        assert state.epochs_run == 0
        np.testing.assert_allclose(state.lam, [0.0])
        np.testing.assert_allclose(np.exp(state.log_weights), np.full(1000, 1e-3), rtol=1e-12)

    def test_delta_error_tilted_normal(self):
        ens = standard_normal_ensemble()
        opts = OptimizerOptions(learning_rate=0.05, epochs=5000, tolerance=1e-6)
        state = solve_lambda(ens, [Restraint(0, 0.5)], opts)
        assert state.converged
        assert state.lam[0] == pytest.approx(-0.5, abs=0.02)
        mean = weighted_expectation(ens.observables[:, 0], state.log_weights)
        assert mean == pytest.approx(0.5, abs=1e-3)

    def test_gaussian_error_splits_constraint(self):
        ens = standard_normal_ensemble()
        opts = OptimizerOptions(learning_rate=0.05, epochs=5000, tolerance=1e-6)
        state = solve_lambda(ens, [Restraint(0, 0.5, GaussianError(1.0))], opts)
        assert state.converged
        assert state.lam[0] == pytest.approx(-0.25, abs=0.02)
        mean = weighted_expectation(ens.observables[:, 0], state.log_weights)
        xi = GaussianError(1.0).tilted_mean(state.lam[0])
        assert mean == pytest.approx(0.25, abs=0.02)
        assert mean + xi == pytest.approx(0.5, abs=1e-3)

    def test_moment_preservation(self):
        # a mean restraint moves only the first moment of a normal prior
        ens = standard_normal_ensemble()
        opts = OptimizerOptions(learning_rate=0.05, epochs=5000, tolerance=1e-6)
        state = solve_lambda(ens, [Restraint(0, 0.5)], opts)
        w = np.exp(state.log_weights)
        values = ens.observables[:, 0]
        mean = w @ values
        var = w @ (values - mean) ** 2
        assert var == pytest.approx(1.0, abs=0.02)

    def test_unreachable_target_flagged_not_raised(self):
        ens = standard_normal_ensemble(m=200, seed=6)
        opts = OptimizerOptions(learning_rate=0.1, epochs=300, tolerance=1e-6)
        state = solve_lambda(ens, [Restraint(0, 50.0)], opts)
        assert not state.converged
        assert state.epochs_run == 300
        assert np.isfinite(state.loss)

    def test_laplace_domain_respected_under_pressure(self):
        # an unreachable target pushes lam toward the divergence bound;
        # the solve must stay inside and remain finite
        ens = standard_normal_ensemble(m=500, seed=7)
        opts = OptimizerOptions(learning_rate=0.5, epochs=500, tolerance=1e-8)
        state = solve_lambda(ens, [Restraint(0, 30.0, LaplaceError(0.05))], opts)
        assert np.isfinite(state.loss)
        assert abs(state.lam[0]) < 20.0

    def test_determinism(self):
        ens = standard_normal_ensemble(m=3000, seed=8)
        opts = OptimizerOptions(learning_rate=0.05, epochs=500, tolerance=1e-9)
        a = solve_lambda(ens, [Restraint(0, 0.3)], opts)
        b = solve_lambda(ens, [Restraint(0, 0.3)], opts)
        assert np.array_equal(a.lam, b.lam)
        assert np.array_equal(a.log_weights, b.log_weights)
        assert a.loss == b.loss

    def test_plain_gradient_descent_also_solves(self):
        ens = standard_normal_ensemble(m=20_000, seed=9)
        opts = OptimizerOptions(learning_rate=0.2, epochs=4000, tolerance=1e-5, method="gd")
        state = solve_lambda(ens, [Restraint(0, 0.4)], opts)
        assert state.converged
        assert state.lam[0] == pytest.approx(-0.4, abs=0.03)

    def test_requires_restraints(self):
        ens = standard_normal_ensemble(m=10, seed=10)
        with pytest.raises(ValueError):
            solve_lambda(ens, [])

    def test_observable_index_validated(self):
        ens = standard_normal_ensemble(m=10, seed=11)
        with pytest.raises(ValueError):
            solve_lambda(ens, [Restraint(3, 0.0)])


class TestKlMinimality:
    """The dual tilt solve must find the KL-minimal feasible weights."""

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_projected_gradient_oracle(self, seed):
        rng = np.random.default_rng(1000 + seed)
        m = int(rng.integers(10, 51))
        n = int(rng.integers(1, 3))
        g = rng.normal(size=(m, n))
        # targets generated from a strictly positive weight vector are
        # feasible in the interior of the simplex
        w_ref = np.exp(0.5 * rng.normal(size=m))
        w_ref /= w_ref.sum()
        targets = g.T @ w_ref
        restraints = [Restraint(k, float(t)) for k, t in enumerate(targets)]
        opts = OptimizerOptions(learning_rate=0.02, epochs=30_000, tolerance=1e-10)
        state = solve_lambda(Ensemble(None, g), restraints, opts)
        assert state.converged
        oracle = kl_minimal_weights(g, targets)
        np.testing.assert_allclose(np.exp(state.log_weights), oracle, atol=1e-4)


class TestEffectiveSampleSize:
    def test_uniform(self):
        assert effective_sample_size(np.log(np.full(100, 0.01))) == pytest.approx(100.0)

    def test_single_atom(self):
        lw = np.full(10, -np.inf)
        lw[3] = 0.0
        assert effective_sample_size(lw) == pytest.approx(1.0)

    def test_hand_value(self):
        assert effective_sample_size(np.log([0.75, 0.25])) == pytest.approx(1.6)

    def test_range(self):
        rng = np.random.default_rng(12)
        lw = rng.normal(size=500)
        ess = effective_sample_size(lw)
        assert 1.0 <= ess <= 500.0


class TestEnsembleValidation:
    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            Ensemble(None, np.array([[1.0]]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Ensemble(None, np.array([[1.0], [np.nan]]))

    def test_entropy_flatness_of_weights_is_kl(self):
        # relative weight entropy after a mean tilt approaches -target^2/2,
        # the KL divergence between the shifted and original normal
        ens = standard_normal_ensemble(m=200_000, seed=13)
        opts = OptimizerOptions(learning_rate=0.05, epochs=5000, tolerance=1e-6)
        for target in (-1.0, 1.0):
            state = solve_lambda(ens, [Restraint(0, target)], opts)
            w = np.exp(state.log_weights)
            rel_entropy = -np.sum(w * np.log(w * w.size))
            assert rel_entropy == pytest.approx(-0.5 * target**2, abs=0.03)
