import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import newton_logistic, nll_oracle, normal_equations
from pandagm import AugmentedDesign, NodeFamily, ValidationError, fit_glm, fit_ols, neg_log_likelihood
from pandagm.errors import FitDivergenceError, NumericalRankError


class TestNodeFamily:
    @pytest.mark.parametrize("text,kind", [("gaussian", "gaussian"), ("normal", "gaussian"), ("logistic", "bernoulli"),
                                           ("poisson", "poisson"), ("exponential", "exponential")])
    def test_parse(self, text, kind):
        assert NodeFamily.parse(text).kind == kind

    def test_negbinomial_needs_r(self):
        assert NodeFamily.parse("negbinomial:5").r == 5
        with pytest.raises(ValidationError):
            NodeFamily("negbinomial")
        with pytest.raises(ValidationError):
            NodeFamily("poisson", r=3)

    def test_unknown(self):
        with pytest.raises(ValidationError):
            NodeFamily.parse("gamma")

    @pytest.mark.parametrize("kind,bad", [("bernoulli", [0, 2]), ("poisson", [1.5]), ("poisson", [-1]),
                                          ("exponential", [-0.5]), ("negbinomial:3", [0.5])])
    def test_validate_rejects(self, kind, bad):
        with pytest.raises(ValidationError):
            NodeFamily.parse(kind).validate(np.array(bad, dtype=float))

    @pytest.mark.parametrize("kind", ["gaussian", "bernoulli", "poisson", "exponential", "negbinomial:3"])
    def test_score_is_nll_derivative(self, kind):
        fam = NodeFamily.parse(kind)
        y = {"bernoulli": np.array([0.0, 1.0]), "exponential": np.array([0.4, 2.0])}.get(fam.kind, np.array([1.0, 3.0]))
        eta = np.array([0.2, -0.3])
        h = 1e-6
        num = (fam.nll_terms(y, eta + h) - fam.nll_terms(y, eta - h)) / (2 * h)
        # score_eta is minus the derivative of the NLL
        np.testing.assert_allclose(-fam.score_eta(y, eta), num, rtol=1e-6, atol=1e-8)


class TestNegLogLikelihood:
    def test_bernoulli_log2(self):
        v = neg_log_likelihood(NodeFamily.bernoulli(), np.zeros((1, 1)), np.array([1.0]), np.zeros(1))
        assert v == pytest.approx(math.log(2))

    def test_poisson_hand_value(self):
        # -(2 * 1 - e - log 2!) evaluated by hand
        v = neg_log_likelihood(NodeFamily.poisson(), np.ones((1, 1)), np.array([2.0]), np.ones(1))
        assert v == pytest.approx(1.4114290, abs=1e-6)

    def test_gaussian_half_sse(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((12, 3))
        y = rng.standard_normal(12)
        th = rng.standard_normal(3)
        const = neg_log_likelihood(NodeFamily.gaussian(), X, X @ th, th)
        v = neg_log_likelihood(NodeFamily.gaussian(), X, y, th) - const
        assert v == pytest.approx(0.5 * np.sum((y - X @ th) ** 2))

    @pytest.mark.parametrize("kind", ["bernoulli", "poisson", "exponential", "negbinomial:2"])
    def test_matches_density_oracle_up_to_constant(self, kind):
        fam = NodeFamily.parse(kind)
        rng = np.random.default_rng(1)
        X = rng.uniform(-1, 1, (8, 2))
        y = {"bernoulli": rng.integers(0, 2, 8), "exponential": rng.uniform(0.1, 3, 8)}.get(fam.kind, rng.integers(0, 5, 8))
        y = np.asarray(y, dtype=float)
        a, b = np.array([0.3, -0.2]), np.array([-0.5, 0.7])
        d_pkg = neg_log_likelihood(fam, X, y, a) - neg_log_likelihood(fam, X, y, b)
        d_orc = nll_oracle(fam.kind, y, X @ a, fam.r) - nll_oracle(fam.kind, y, X @ b, fam.r)
        assert d_pkg == pytest.approx(d_orc, rel=1e-10)


class TestFitOls:
    def test_identity_case(self):
        d = AugmentedDesign(np.eye(4), np.zeros((2, 4)), np.ones(4))
        np.testing.assert_allclose(fit_ols(d), np.ones(4))

    def test_constant_noise_is_ridge(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((15, 4))
        y = rng.standard_normal(15)
        lam = 0.7
        d = AugmentedDesign(x, np.sqrt(lam) * np.eye(4), y)
        np.testing.assert_allclose(fit_ols(d), np.linalg.solve(x.T @ x + lam * np.eye(4), x.T @ y), atol=1e-12)

    def test_normal_equations_oracle(self):
        rng = np.random.default_rng(3)
        x, e, y = rng.standard_normal((20, 3)), rng.standard_normal((10, 3)), rng.standard_normal(20)
        np.testing.assert_allclose(fit_ols(AugmentedDesign(x, e, y)), normal_equations(x, e, y), atol=1e-10)

    def test_augmented_value_enters_rhs(self):
        rng = np.random.default_rng(4)
        x, e, y = rng.standard_normal((20, 3)), rng.standard_normal((10, 3)), rng.standard_normal(20)
        np.testing.assert_allclose(fit_ols(AugmentedDesign(x, e, y, 0.5)), normal_equations(x, e, y, 0.5), atol=1e-10)

    def test_rank_deficient(self):
        x = np.ones((5, 2))
        with pytest.raises(NumericalRankError):
            fit_ols(AugmentedDesign(x, np.zeros((0, 2)), np.arange(5.0)))

    def test_too_few_rows(self):
        with pytest.raises(ValidationError):
            AugmentedDesign(np.ones((2, 3)), np.ones((1, 3)), np.ones(2))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (12, 3), elements=st.floats(-5, 5)),
           arrays(np.float64, (6, 3), elements=st.floats(-5, 5)),
           arrays(np.float64, 12, elements=st.floats(-5, 5)))
    def test_normal_equation_residual(self, x, e, y):
        A = x.T @ x + e.T @ e
        if np.linalg.cond(A) > 1e8:
            return
        th = fit_ols(AugmentedDesign(x, e, y))
        b = x.T @ y
        assert np.max(np.abs(A @ th - b)) <= 1e-8 * max(np.max(np.abs(b)), 1.0)


class TestFitGlm:
    def test_gaussian_dispatches_to_ols(self):
        rng = np.random.default_rng(5)
        d = AugmentedDesign(rng.standard_normal((10, 2)), rng.standard_normal((3, 2)), rng.standard_normal(10))
        np.testing.assert_array_equal(fit_glm(NodeFamily.gaussian(), d), fit_ols(d))

    def test_poisson_intercept_only(self):
        y = np.array([0, 1, 3, 2, 4, 1.0])
        d = AugmentedDesign(np.ones((6, 1)), np.zeros((0, 1)), y)
        assert fit_glm(NodeFamily.poisson(), d)[0] == pytest.approx(np.log(y.mean()), abs=1e-8)

    def test_logistic_newton_oracle(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((50, 2))
        y = (rng.random(50) < 1 / (1 + np.exp(-(X @ np.array([1.0, -0.7]))))).astype(float)
        d = AugmentedDesign(X, np.zeros((0, 2)), y)
        assert np.max(np.abs(fit_glm(NodeFamily.bernoulli(), d) - newton_logistic(X, y))) < 1e-6

    def test_zero_noise_is_mle(self):
        rng = np.random.default_rng(7)
        X = np.column_stack([np.ones(40), rng.uniform(-1, 1, (40, 2))])
        y = rng.poisson(np.exp(X @ np.array([0.5, 0.3, -0.4]))).astype(float)
        th = fit_glm(NodeFamily.poisson(), AugmentedDesign(X, np.zeros((0, 3)), y))
        score = X.T @ (y - np.exp(X @ th))
        assert np.max(np.abs(score)) < 1e-6

    def test_noise_shrinks(self):
        rng = np.random.default_rng(8)
        X = np.column_stack([np.ones(40), rng.uniform(-1, 1, (40, 2))])
        y = rng.poisson(np.exp(X @ np.array([0.5, 1.0, -1.0]))).astype(float)
        free = fit_glm(NodeFamily.poisson(), AugmentedDesign(X, np.zeros((0, 3)), y))
        E = np.column_stack([np.ones(30), rng.normal(0, 2.0, (30, 2))])
        pen = fit_glm(NodeFamily.poisson(), AugmentedDesign(X, E, y, y.mean()))
        assert np.all(np.abs(pen[1:]) < np.abs(free[1:]))

    def test_iteration_budget_exhausted(self):
        rng = np.random.default_rng(11)
        X = np.column_stack([np.ones(30), rng.standard_normal((30, 2))])
        y = (rng.random(30) < 0.5).astype(float)
        with pytest.raises(FitDivergenceError) as info:
            fit_glm(NodeFamily.bernoulli(), AugmentedDesign(X, np.zeros((0, 3)), y), max_iter=1)
        assert info.value.theta.shape == (3,)

    def test_bad_warm_start_is_ignored(self):
        rng = np.random.default_rng(9)
        X = np.column_stack([np.ones(30), rng.uniform(-1, 1, (30, 2))])
        y = rng.poisson(2.0, 30).astype(float)
        d = AugmentedDesign(X, np.zeros((0, 3)), y)
        np.testing.assert_allclose(fit_glm(NodeFamily.poisson(), d, theta0=np.array([40.0, 40, 40])),
                                   fit_glm(NodeFamily.poisson(), d), atol=1e-7)

    def test_iterations_decrease_nll(self):
        rng = np.random.default_rng(10)
        X = np.column_stack([np.ones(60), rng.standard_normal((60, 3))])
        y = (rng.random(60) < 0.4).astype(float)
        d = AugmentedDesign(X, np.zeros((0, 4)), y)
        fam = NodeFamily.bernoulli()
        losses = []
        for k in range(1, 8):
            try:
                th = fit_glm(fam, d, max_iter=k, tol=1e-300)
            except FitDivergenceError as exc:
                th = exc.theta
            losses.append(neg_log_likelihood(fam, X, y, th))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
