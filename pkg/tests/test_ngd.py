import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pandagm import (AdaptiveLasso, Bridge, ElasticNet, FusedRidge, GroupLasso, Scad, ValidationError,
                     expected_penalty, noise_variance, parse_noise, sample_noise)
from pandagm.ngd import VAR_CAP, fused_transform, with_lambda

coef = arrays(np.float64, st.integers(1, 6), elements=st.floats(-10, 10).filter(lambda v: abs(v) > 1e-3))


class TestVariance:
    def test_bridge_lasso(self):
        assert noise_variance(Bridge(2.0), [0.5], 10)[0] == pytest.approx(4.0)

    def test_elastic_net(self):
        assert noise_variance(ElasticNet(1.0, sigma2=0.5), [2.0], 10)[0] == pytest.approx(1.0)

    def test_scad_first_branch(self):
        s = Scad(0.1, a=3.0)
        assert s.branch(np.array([0.5]), 10)[0] == 0
        assert noise_variance(s, [0.5], 10)[0] == pytest.approx(0.2)

    def test_scad_boundaries(self):
        # lam n_e = 1, a = 3: values at |theta| = 1 and 3 worked out by hand from the three branches
        s = Scad(0.1, a=3.0)
        np.testing.assert_array_equal(s.branch(np.array([1.0, 3.0, 3.5]), 10), [1, 1, 2])
        v = noise_variance(s, [1.0, 3.0], 10)
        np.testing.assert_allclose(v, [0.1, 0.0222222222], rtol=1e-8)

    @pytest.mark.parametrize("t", [0.3, 1.0, 2.0, 3.0, 5.0])
    def test_scad_variance_matches_penalty(self, t):
        s = Scad(0.1, a=3.0)
        assert 10 * noise_variance(s, [t], 10)[0] * t**2 == pytest.approx(s.penalty([t], 10))

    def test_scad_continuous(self):
        s = Scad(0.05, a=3.7)
        for b in (0.05 * 20, 3.7 * 0.05 * 20):
            lo, hi = noise_variance(s, [b - 1e-9, b + 1e-9], 20)
            assert lo == pytest.approx(hi, rel=1e-6)

    def test_adaptive_lasso(self):
        s = AdaptiveLasso(0.2, gamma=1.0, consistent_estimate=np.array([0.5, 2.0]))
        np.testing.assert_allclose(noise_variance(s, [1.0, 0.5], 10), [0.4, 0.2])

    def test_adaptive_lasso_needs_estimate(self):
        with pytest.raises(ValidationError):
            noise_variance(AdaptiveLasso(0.2), [1.0], 10)

    def test_group_lasso(self):
        s = GroupLasso(0.1, groups=((0, 1), (2,)))
        v = noise_variance(s, [3.0, 4.0, 2.0], 10)
        np.testing.assert_allclose(v, [0.1 * np.sqrt(2) / 5, 0.1 * np.sqrt(2) / 5, 0.05])

    def test_group_lasso_without_size_factor(self):
        s = GroupLasso(0.1, groups=((0, 1),), size_factor=False)
        np.testing.assert_allclose(noise_variance(s, [3.0, 4.0], 10), [0.02, 0.02])

    def test_groups_must_partition(self):
        with pytest.raises(ValidationError):
            noise_variance(GroupLasso(0.1, groups=((0,),)), [1.0, 2.0], 10)
        with pytest.raises(ValidationError):
            GroupLasso(0.1, groups=((0, 1), (1,)))

    def test_floor_and_cap(self):
        v = noise_variance(Bridge(1.0), [0.0], 10)
        assert np.isfinite(v[0]) and v[0] <= VAR_CAP

    def test_nonfinite_theta(self):
        with pytest.raises(ValidationError):
            noise_variance(Bridge(1.0), [np.nan], 10)

    @pytest.mark.parametrize("lam", [0.0, -1.0, np.inf])
    def test_lambda_must_be_positive(self, lam):
        with pytest.raises(ValidationError):
            Bridge(lam)

    @given(coef)
    def test_ridge_variance_ignores_theta(self, theta):
        v = noise_variance(Bridge(0.3, gamma=0.0), theta, 10)
        np.testing.assert_array_equal(v, np.full(theta.size, 0.3))

    @given(coef, st.floats(0.01, 5))
    def test_variance_positive(self, theta, lam):
        for spec in (Bridge(lam), ElasticNet(lam, 0.1), Scad(lam / 100), GroupLasso(lam, groups=(tuple(range(theta.size)),))):
            assert np.all(noise_variance(spec, theta, 50) > 0)


class TestPenalty:
    def test_bridge_lasso_hand(self):
        assert expected_penalty(Bridge(0.1), [0.5, -0.5], 10) == pytest.approx(1.0)

    def test_bridge_ridge_hand(self):
        assert expected_penalty(Bridge(0.2, gamma=0.0), [1.0, 2.0], 10) == pytest.approx(10.0)

    def test_fused_pair(self):
        s = FusedRidge(0.5, groups=((0, 1),))
        assert expected_penalty(s, [1.0, 3.0], 4) == pytest.approx(4 * 0.5 * 2 * (1 - 3) ** 2)

    @settings(max_examples=30)
    @given(coef)
    def test_penalty_is_nV_theta_squared(self, theta):
        for spec in (Bridge(0.3), Bridge(0.3, gamma=0.5), ElasticNet(0.3, 0.2),
                     GroupLasso(0.3, groups=(tuple(range(theta.size)),))):
            direct = 7 * np.sum(noise_variance(spec, theta, 7) * theta**2)
            assert expected_penalty(spec, theta, 7) == pytest.approx(direct, rel=1e-9)


class TestSampling:
    def test_bridge_moment(self):
        e = sample_noise(Bridge(1.0), [0.5], 100_000, np.random.default_rng(0))
        assert e.var() == pytest.approx(2.0, rel=0.02)

    def test_large_theta_gives_small_noise(self):
        e = sample_noise(Bridge(1.0), [1e6], 1000, np.random.default_rng(1))
        assert e.var() < 1e-5

    def test_fused_transform_pair(self):
        np.testing.assert_array_equal(fused_transform(2), [[1, -1], [-1, 1]])

    def test_fused_covariance(self):
        s = FusedRidge(0.7, groups=((0, 1),))
        e = sample_noise(s, [1.0, 2.0], 100_000, np.random.default_rng(2))
        target = 0.7 * np.array([[2.0, -2.0], [-2.0, 2.0]])
        assert np.linalg.norm(e.T @ e / len(e) - target) / np.linalg.norm(target) < 0.03

    @pytest.mark.parametrize("spec", [Bridge(0.2), ElasticNet(0.1, 0.3), Scad(0.01, 3.7),
                                      AdaptiveLasso(0.1, 1.0, np.array([0.7, 1.5, 2.0])),
                                      GroupLasso(0.1, groups=((0, 1), (2,)))], ids=lambda s: type(s).__name__)
    def test_second_moments(self, spec):
        theta = np.array([0.8, -1.2, 0.4])
        e = sample_noise(spec, theta, 100_000, np.random.default_rng(3))
        np.testing.assert_allclose(e.var(axis=0), noise_variance(spec, theta, 100_000), rtol=0.03)

    def test_seeded(self):
        a = sample_noise(Bridge(0.2), [1.0, 2.0], 5, np.random.default_rng(4))
        b = sample_noise(Bridge(0.2), [1.0, 2.0], 5, np.random.default_rng(4))
        np.testing.assert_array_equal(a, b)


class TestParse:
    @pytest.mark.parametrize("text,expected", [
        ("bridge:lambda=0.01,gamma=1", Bridge(0.01, 1.0)),
        ("lasso:lambda=0.5", Bridge(0.5, 1.0)),
        ("ridge:lambda=0.5", Bridge(0.5, 0.0)),
        ("elastic-net:lambda=0.1,sigma2=0.2", ElasticNet(0.1, 0.2)),
        ("scad:lambda=0.1,a=3", Scad(0.1, 3.0)),
        ('{"type": "bridge", "lambda": 0.2}', Bridge(0.2)),
    ])
    def test_strings(self, text, expected):
        assert parse_noise(text) == expected

    def test_groups(self):
        s = parse_noise("group-lasso:lambda=0.1,groups=0-1|2")
        assert s.groups == ((0, 1), (2,))

    def test_dict(self):
        assert parse_noise({"type": "fused_ridge", "lambda": 1, "groups": [[0, 1, 2]]}).groups == ((0, 1, 2),)

    @pytest.mark.parametrize("bad", ["bridge", "wavelet:lambda=1", "bridge:lambda=1,foo=2", "bridge:lambda=-1"])
    def test_errors(self, bad):
        with pytest.raises(ValidationError):
            parse_noise(bad)

    def test_with_lambda(self):
        assert with_lambda(Bridge(0.1, 0.5), 0.3) == Bridge(0.3, 0.5)


class TestRestrictAndScale:
    def test_group_restrict(self):
        s = GroupLasso(0.1, groups=((0, 1), (2, 3))).restrict([0, 2, 3])
        assert s.groups == ((0,), (1, 2))

    def test_adaptive_restrict(self):
        s = AdaptiveLasso(0.1, consistent_estimate=np.array([1.0, 2.0, 3.0])).restrict([2, 0])
        np.testing.assert_array_equal(s.consistent_estimate, [3.0, 1.0])

    @pytest.mark.parametrize("spec,expected", [(Bridge(0.1), 1.0), (Scad(0.1), 1.0),
                                               (GroupLasso(0.1, groups=((0, 1, 2, 3),)), 2.0),
                                               (FusedRidge(0.1, groups=((0, 1),)), 2.0)])
    def test_scale(self, spec, expected):
        assert spec.scale(10) == pytest.approx(expected)
