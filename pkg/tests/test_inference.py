import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from oracles import nll_oracle, numeric_hessian, spectral_dof
from pandagm import (Bridge, NodeFamily, PandaConfig, ValidationError, confidence_intervals, fisher_augmented,
                     infer_glm, linear_sigma2, run_panda_glm, sandwich_covariance)


def design(n, q, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, q))
    return X - X.mean(0), rng


class TestFisher:
    def test_gaussian_expected(self):
        X, _ = design(30, 3, 0)
        th = np.array([0.5, -1.0, 2.0])
        M = fisher_augmented(NodeFamily.gaussian(), X, Bridge(0.01), th, 50)
        np.testing.assert_allclose(M, X.T @ X + 50 * np.diag(0.01 / np.abs(th)), atol=1e-12)

    def test_no_noise_is_plain_information(self):
        X, _ = design(30, 2, 1)
        M = fisher_augmented(NodeFamily.gaussian(), X, Bridge(0.01), np.ones(2), 0)
        np.testing.assert_allclose(M, X.T @ X)

    def test_poisson_intercept_block(self):
        X, _ = design(20, 2, 2)
        th = np.array([0.3, 0.5, -0.5])
        M = fisher_augmented(NodeFamily.poisson(), X, Bridge(0.1, 0.0), th, 10, intercept=True)
        Xd = np.column_stack([np.ones(20), X])
        w = np.exp(Xd @ th)
        expected = (Xd * w[:, None]).T @ Xd + 10 * np.exp(0.3) * np.diag([1.0, 0.1, 0.1])
        np.testing.assert_allclose(M, expected, rtol=1e-12)

    @pytest.mark.parametrize("kind", ["bernoulli", "poisson", "exponential"])
    def test_observed_is_hessian_of_augmented_nll(self, kind):
        fam = NodeFamily.parse(kind)
        X, rng = design(25, 2, 3)
        y = {"bernoulli": rng.integers(0, 2, 25), "poisson": rng.poisson(1.5, 25),
             "exponential": rng.exponential(1.0, 25)}[kind].astype(float)
        N = rng.normal(0, 0.3, (10, 2))
        c = y.mean()
        th = np.array([0.1, 0.4, -0.3])

        def f(t):
            return (nll_oracle(kind, y, t[0] + X @ t[1:]) + nll_oracle(kind, np.full(10, c), t[0] + N @ t[1:]))

        M = fisher_augmented(fam, X, None, th, 10, intercept=True, noise=N, y=y, aug_value=c, observed=True)
        np.testing.assert_allclose(M, numeric_hessian(f, th, 1e-4), rtol=1e-5, atol=1e-6)


class TestSandwich:
    def test_logistic_against_finite_differences(self):
        X, rng = design(60, 2, 4)
        y = rng.integers(0, 2, 60).astype(float)
        th = np.array([0.2, 0.7, -0.4])
        spec, n_e = Bridge(0.02), 30
        Ix = numeric_hessian(lambda t: nll_oracle("bernoulli", y, t[0] + X @ t[1:]), th, 1e-4)
        C = np.diag([1.0, 0.02 / 0.7, 0.02 / 0.4])
        w0 = np.exp(0.2) / (1 + np.exp(0.2)) ** 2
        Minv = np.linalg.inv(Ix + n_e * w0 * C)
        S = sandwich_covariance(NodeFamily.bernoulli(), X, spec, th, n_e, intercept=True)
        np.testing.assert_allclose(S, Minv @ Ix @ Minv, rtol=1e-5)

    def test_gaussian_zero_noise_is_ols_covariance(self):
        X, _ = design(40, 3, 5)
        S = sandwich_covariance(NodeFamily.gaussian(), X, Bridge(0.1), np.ones(3), 0, sigma2=2.0)
        np.testing.assert_allclose(S, 2.0 * np.linalg.inv(X.T @ X), rtol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(1e-3, 1.0))
    def test_psd(self, seed, lam):
        X, rng = design(30, 3, seed)
        th = rng.normal(0, 1, 3)
        S = sandwich_covariance(NodeFamily.gaussian(), X, Bridge(lam), th, 20)
        assert np.min(np.linalg.eigvalsh(S)) >= -1e-10 * np.max(np.abs(S))


class TestDegreesOfFreedom:
    def test_zero_noise_gives_q(self):
        X, rng = design(30, 4, 6)
        y = rng.standard_normal(30)
        s2, nu = linear_sigma2(X, y, np.zeros(4), X.T @ X)
        assert nu == pytest.approx(4.0)
        assert s2 == pytest.approx(y @ y / 26)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(1e-3, 10.0))
    def test_matches_spectral_form(self, seed, lam):
        X, rng = design(25, 3, seed)
        M = X.T @ X + lam * np.diag(rng.uniform(0.1, 2.0, 3))
        _, nu = linear_sigma2(X, rng.standard_normal(25), np.zeros(3), M)
        assert nu == pytest.approx(spectral_dof(X, M), rel=1e-9)
        assert 0 < nu < 3

    def test_no_residual_df(self):
        X = np.random.default_rng(7).standard_normal((3, 3))
        with pytest.raises(ValidationError):
            linear_sigma2(X, np.ones(3), np.zeros(3), 0.5 * X.T @ X)


class TestIntervals:
    def test_hand_example(self):
        # mean covariance 0.5, between variance 2, inflation 1 + 1/2
        rep = confidence_intervals(np.array([[1.0], [3.0]]), np.full((2, 1, 1), 0.5), 0.95)
        assert rep.total[0, 0] == pytest.approx(3.5)
        half = norm.ppf(0.975) * np.sqrt(3.5)
        np.testing.assert_allclose(rep.intervals[0], [2 - half, 2 + half])

    def test_identical_snapshots(self):
        rep = confidence_intervals(np.ones((5, 2)), np.tile(np.diag([0.04, 0.09]), (5, 1, 1)), 0.9)
        np.testing.assert_allclose(rep.se, [0.2, 0.3])
        np.testing.assert_allclose(rep.lambda_between, 0.0)

    def test_validation(self):
        with pytest.raises(ValidationError):
            confidence_intervals(np.ones((1, 2)), np.ones((1, 2, 2)))
        with pytest.raises(ValidationError):
            confidence_intervals(np.ones((3, 1)), np.ones((3, 1, 1)), level=1.5)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 20))
    def test_total_psd_and_contains_mean(self, seed, r):
        rng = np.random.default_rng(seed)
        snaps = rng.standard_normal((r, 3))
        A = rng.standard_normal((r, 3, 3))
        covs = A @ np.transpose(A, (0, 2, 1))
        rep = confidence_intervals(snaps, covs)
        assert np.min(np.linalg.eigvalsh(rep.total)) >= -1e-10
        assert np.all(rep.intervals[:, 0] <= rep.theta_bar) and np.all(rep.theta_bar <= rep.intervals[:, 1])


class TestInferGlm:
    def test_gaussian_report(self):
        X, rng = design(200, 3, 8)
        y = X @ np.array([1.0, 0.0, -0.5]) + rng.standard_normal(200)
        fit = run_panda_glm(X, y, "gaussian", Bridge(0.05), PandaConfig(n_e=20, T=30, m=10, r=30, convergence="none"))
        rep = infer_glm(fit)
        assert [r["coefficient"] for r in rep.rows()] == ["x1", "x2", "x3"]
        assert 0 < rep.df_nu < 3
        lo, hi = rep.intervals[0]
        assert lo < 1.0 < hi
        assert np.all(rep.se > 0)

    def test_poisson_has_intercept_row(self):
        X, rng = design(150, 2, 9)
        y = rng.poisson(np.exp(0.3 + 0.5 * X[:, 0])).astype(float)
        fit = run_panda_glm(X, y, "poisson", Bridge(0.05), PandaConfig(n_e=15, T=30, m=10, r=30, convergence="none"))
        rep = infer_glm(fit, names=["b0", "a", "b"])
        assert rep.names == ["b0", "a", "b"] and rep.df_nu is None
        assert rep.intervals.shape == (3, 2)
