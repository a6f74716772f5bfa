import numpy as np
import pytest

from flowuq import (
    Collinear,
    DistanceMatrix,
    EstimatorResult,
    FlowMatrix,
    InsufficientData,
    NotPSD,
    Separation,
    dyadic_variance,
    fit_log_gravity,
    fit_ppml,
    independent_variance,
    sample_theta,
)
from flowuq.gravity import dyad_indices, twoway_design

from .oracles import dyadic_meat_enumeration, normal_equations_ols


def gravity_flows(n, epsilon, rng, noise_sd=0.0, include_diagonal=False):
    """Flows generated from the two-way multiplicative model with random
    log costs; returns (FlowMatrix, log_costs)."""
    fe_o = rng.normal(0.0, 0.4, size=n)
    fe_d = rng.normal(0.0, 0.4, size=n)
    log_costs = rng.uniform(0.0, 0.5, size=(n, n))
    np.fill_diagonal(log_costs, 0.0)
    log_mu = fe_o[:, None] + fe_d[None, :] - epsilon * log_costs
    noise = noise_sd * rng.standard_normal((n, n))
    values = np.exp(log_mu + noise)
    if not include_diagonal:
        np.fill_diagonal(values, 0.0)
    return FlowMatrix(values), log_costs


class TestPpml:
    def test_exact_recovery(self):
        rng = np.random.default_rng(11)
        flows, log_costs = gravity_flows(8, 5.0, rng)
        fit = fit_ppml(flows, log_costs)
        assert abs(fit.epsilon_hat - 5.0) < 1e-6
        assert fit.variance < 1e-10
        # Noiseless fit: per-dyad scores vanish too.
        assert np.max(np.abs(fit.scores)) < 1e-6

    def test_collinear_costs(self):
        rng = np.random.default_rng(1)
        flows, _ = gravity_flows(5, 2.0, rng, noise_sd=0.1)
        with pytest.raises(Collinear):
            fit_ppml(flows, np.full((5, 5), 0.7))

    def test_first_order_conditions(self):
        rng = np.random.default_rng(2)
        flows, log_costs = gravity_flows(7, 3.0, rng, noise_sd=0.5)
        fit = fit_ppml(flows, log_costs)
        foc = np.abs(fit.scores.sum(axis=0)).max()
        assert foc <= 1e-8 * max(1.0, float(np.max(flows.values)))

    def test_rescaling_invariance(self):
        rng = np.random.default_rng(3)
        flows, log_costs = gravity_flows(6, 4.0, rng, noise_sd=0.3)
        fit1 = fit_ppml(flows, log_costs)
        fit2 = fit_ppml(
            FlowMatrix(flows.values * 1e6, flows.labels), log_costs
        )
        assert abs(fit1.epsilon_hat - fit2.epsilon_hat) < 1e-8
        # Only the destination fixed effects absorb the scale shift.
        assert np.allclose(fit2.fe_dest - fit1.fe_dest, np.log(1e6), atol=1e-7)
        assert np.allclose(fit2.fe_origin, fit1.fe_origin, atol=1e-7)

    def test_zeros_handled(self):
        rng = np.random.default_rng(4)
        flows, log_costs = gravity_flows(6, 3.0, rng, noise_sd=0.4)
        values = np.array(flows.values)
        oidx, didx = dyad_indices(6)
        drop = rng.choice(len(oidx), size=5, replace=False)
        values[oidx[drop], didx[drop]] = 0.0
        fit = fit_ppml(FlowMatrix(values), log_costs)
        assert np.isfinite(fit.epsilon_hat)
        assert np.all(fit.mu_hat > 0)

    def test_separation(self):
        # One destination attracts astronomically more flow than the rest;
        # its fixed effect runs away past the divergence bound.
        n = 5
        rng = np.random.default_rng(5)
        flows, log_costs = gravity_flows(n, 2.0, rng, noise_sd=0.1)
        values = np.array(flows.values)
        values[:, 2] *= np.exp(40.0)
        with pytest.raises(Separation):
            fit_ppml(FlowMatrix(values), log_costs)

    def test_fe_normalization_is_inert(self):
        # Re-solving with a different dropped origin dummy moves the fixed
        # effects but not the elasticity.
        rng = np.random.default_rng(6)
        flows, log_costs = gravity_flows(6, 3.5, rng, noise_sd=0.2)
        fit = fit_ppml(flows, log_costs)
        relabel = list(reversed(range(6)))
        flows_r = FlowMatrix(flows.values[np.ix_(relabel, relabel)])
        fit_r = fit_ppml(flows_r, log_costs[np.ix_(relabel, relabel)])
        assert abs(fit.epsilon_hat - fit_r.epsilon_hat) < 1e-7


class TestDyadicVariance:
    def test_matches_enumeration_small_n(self):
        for n, seed in ((3, 0), (4, 1)):
            rng = np.random.default_rng(seed)
            flows, log_costs = gravity_flows(n, 2.0, rng, noise_sd=0.6)
            fit = fit_ppml(flows, log_costs)
            meat = dyadic_meat_enumeration(fit.scores, fit.oidx, fit.didx)
            var_oracle = max(float((fit.bread @ meat @ fit.bread)[0, 0]), 0.0)
            assert abs(dyadic_variance(fit) - var_oracle) < 1e-12 * max(
                1.0, var_oracle
            )
            assert dyadic_variance(fit) >= 0.0
            from flowuq.gravity import _dyadic_meat

            meat_fast = _dyadic_meat(fit.scores, fit.oidx, fit.didx, fit.n)
            assert np.max(np.abs(meat_fast - meat)) < 1e-10 * max(
                1.0, np.max(np.abs(meat))
            )

    def test_includes_diagonal_dyads(self):
        rng = np.random.default_rng(7)
        flows, log_costs = gravity_flows(4, 2.0, rng, noise_sd=0.5, include_diagonal=True)
        fit = fit_ppml(flows, log_costs, include_diagonal=True)
        meat = dyadic_meat_enumeration(fit.scores, fit.oidx, fit.didx)
        from flowuq.gravity import _dyadic_meat

        meat_fast = _dyadic_meat(fit.scores, fit.oidx, fit.didx, fit.n)
        assert np.max(np.abs(meat_fast - meat)) < 1e-10 * max(1.0, np.max(np.abs(meat)))

    def test_zero_residuals_zero_variance(self):
        rng = np.random.default_rng(8)
        flows, log_costs = gravity_flows(6, 3.0, rng)
        fit = fit_ppml(flows, log_costs)
        assert dyadic_variance(fit) < 1e-12
        assert independent_variance(fit) < 1e-12

    def test_close_to_independent_variance_under_independence(self):
        # With independent noise the node-sharing cross terms average out:
        # the two variance estimates agree within 25% relative once averaged
        # over replications.
        rng = np.random.default_rng(9)
        dyadic_avg, indep_avg = 0.0, 0.0
        reps = 20
        for _ in range(reps):
            flows, log_costs = gravity_flows(14, 3.0, rng, noise_sd=0.3)
            fit = fit_ppml(flows, log_costs)
            dyadic_avg += dyadic_variance(fit) / reps
            indep_avg += independent_variance(fit) / reps
        assert abs(dyadic_avg - indep_avg) < 0.25 * indep_avg


class TestLogGravity:
    def exact_fit(self, n=7, beta=-1.0, seed=10):
        rng = np.random.default_rng(seed)
        dist = np.exp(rng.uniform(0.0, 2.0, size=(n, n)))
        np.fill_diagonal(dist, 1.0)
        fe_o = rng.normal(2.0, 0.5, size=n)
        fe_d = rng.normal(2.0, 0.5, size=n)
        values = np.exp(beta * np.log(dist) + fe_o[:, None] + fe_d[None, :])
        np.fill_diagonal(values, 0.0)
        return FlowMatrix(values), DistanceMatrix(dist)

    def test_exact_log_linear(self):
        flows, dist = self.exact_fit(beta=-1.0)
        fit = fit_log_gravity(flows, dist)
        assert abs(fit.beta_hat + 1.0) < 1e-10
        assert fit.residual_variance < 1e-20
        assert abs(fit.adj_r2 - 1.0) < 1e-12

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(12)
        flows, dist = self.exact_fit(seed=12)
        values = np.array(flows.values)
        off = ~np.eye(flows.n, dtype=bool)
        # heteroskedastic multiplicative noise
        values[off] *= np.exp(0.3 * rng.standard_normal(off.sum()) * rng.uniform(0.5, 1.5, off.sum()))
        flows = FlowMatrix(values)
        fit = fit_log_gravity(flows, dist)
        oidx, didx = np.nonzero(off & (values > 0))
        x = twoway_design(oidx, didx, flows.n, extra=np.log(dist.values[oidx, didx]))
        beta_oracle = normal_equations_ols(x, np.log(values[oidx, didx]))
        assert abs(fit.beta_hat - beta_oracle[0]) < 1e-10

    def test_residuals_orthogonal_to_design(self):
        rng = np.random.default_rng(13)
        flows, dist = self.exact_fit(seed=13)
        values = np.array(flows.values)
        off = ~np.eye(flows.n, dtype=bool)
        values[off] *= np.exp(0.4 * rng.standard_normal(off.sum()))
        flows = FlowMatrix(values)
        fit = fit_log_gravity(flows, dist)
        oidx, didx = np.nonzero(off & (values > 0))
        x = twoway_design(oidx, didx, flows.n, extra=np.log(dist.values[oidx, didx]))
        fitted = (
            fit.beta_hat * np.log(dist.values[oidx, didx])
            + fit.fe_origin[oidx]
            + fit.fe_dest[didx]
        )
        resid = np.log(values[oidx, didx]) - fitted
        assert np.max(np.abs(x.T @ resid)) < 1e-10 * max(1.0, np.abs(resid).sum())

    def test_prior_variance_decomposition_anchor(self):
        # Residual variance 0.151 with ME variance 0.05 leaves 0.101 for the
        # prior; the decomposition is a plain subtraction with a zero floor.
        assert abs(max(0.151 - 0.05, 0.0) - 0.101) < 1e-12
        assert max(0.04 - 0.05, 0.0) == 0.0
        assert max(0.151 - 0.0, 0.0) == 0.151

    def test_insufficient_data(self):
        flows, dist = self.exact_fit()
        values = np.array(flows.values)
        values[3, :] = 0.0  # origin 3 exports nothing
        with pytest.raises(InsufficientData):
            fit_log_gravity(FlowMatrix(values), dist)

    def test_positive_flows_only(self):
        # Zeros are excluded, not log-transformed.
        flows, dist = self.exact_fit()
        values = np.array(flows.values)
        values[0, 1] = 0.0
        fit = fit_log_gravity(FlowMatrix(values), dist)
        assert np.isfinite(fit.beta_hat)
        assert fit.n_obs == np.count_nonzero(values[~np.eye(7, dtype=bool)])


class TestSampleTheta:
    def test_degenerate_variance(self):
        est = EstimatorResult(theta_hat=[2.26], sigma_hat=[[0.0]])
        rng = np.random.default_rng(0)
        assert sample_theta(est, rng) == pytest.approx(2.26)

    def test_moments_match_paper_scale_estimate(self):
        est = EstimatorResult(theta_hat=[2.26], sigma_hat=[[0.52**2]])
        rng = np.random.default_rng(123)
        draws = np.array([sample_theta(est, rng)[0] for _ in range(100_000)])
        assert abs(draws.mean() - 2.26) < 0.01
        assert abs(draws.std() - 0.52) < 0.01

    def test_seed_determinism(self):
        est = EstimatorResult(theta_hat=[1.0, 2.0], sigma_hat=np.eye(2) * 0.25)
        a = [sample_theta(est, np.random.default_rng(42)) for _ in range(3)]
        b = [sample_theta(est, np.random.default_rng(42)) for _ in range(3)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_lognormal_median(self):
        est = EstimatorResult(theta_hat=[2.0], sigma_hat=[[0.5]])
        rng = np.random.default_rng(7)
        draws = np.array([sample_theta(est, rng, positive=True)[0] for _ in range(40_001)])
        assert np.all(draws > 0)
        assert abs(np.median(draws) - 2.0) < 0.05

    def test_not_psd(self):
        est = EstimatorResult(theta_hat=[1.0], sigma_hat=[[1.0]])
        object.__setattr__(est, "sigma_hat", np.array([[-1.0]]))
        rng = np.random.default_rng(0)
        with pytest.raises(NotPSD):
            sample_theta(est, rng)
