import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import (
    AMPLIFY_PORTO,
    ANALYTIC_SIGMA_E1_D1E5,
    BESSEL_RATIO_D8_K100,
    max_likelihood_ratio_slack,
)
from trajpriv.dp import (
    NoiseSpec,
    PrivacyBudget,
    amplify_by_subsampling,
    analytic_gaussian_sigma,
    calibrate_base_epsilon,
    classical_gaussian_sigma,
    clip_norm,
    gaussian_curve_delta,
    laplace_sample,
    laplace_scale,
    scale_to_norm,
    vmf_sample,
)


class TestClipNorm:
    def test_l2_clipping(self):
        np.testing.assert_allclose(clip_norm([3.0, 4.0], 1.0, p=2), [0.6, 0.8])

    def test_under_bound_unchanged(self):
        np.testing.assert_array_equal(clip_norm([0.1, 0.2], 1.0, p=2), [0.1, 0.2])

    def test_l1_clipping(self):
        np.testing.assert_allclose(clip_norm([1.0, 1.0, 1.0, 1.0], 2.0, p=1),
                                   [0.5, 0.5, 0.5, 0.5])

    def test_zero_vector_unchanged(self):
        np.testing.assert_array_equal(clip_norm([0.0, 0.0], 1.0), [0.0, 0.0])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8),
           st.floats(1e-3, 1e3), st.sampled_from([1, 2]))
    @settings(max_examples=100, deadline=None)
    def test_never_increases_and_idempotent(self, v, c, p):
        v = np.asarray(v)
        out = clip_norm(v, c, p=p)
        assert np.linalg.norm(out, ord=p) <= c * (1 + 1e-12)
        assert np.linalg.norm(out, ord=p) <= np.linalg.norm(v, ord=p) * (1 + 1e-12)
        np.testing.assert_allclose(clip_norm(out, c, p=p), out, rtol=1e-12, atol=0)

    def test_direction_preserved(self, rng):
        v = rng.normal(size=6) * 100
        out = clip_norm(v, 1.0, p=2)
        cos = v @ out / (np.linalg.norm(v) * np.linalg.norm(out))
        assert cos == pytest.approx(1.0, abs=1e-12)


class TestScaleToNorm:
    def test_basic(self):
        np.testing.assert_allclose(scale_to_norm([0.0, 2.0], 1.0), [0.0, 1.0])

    def test_unit_unchanged(self):
        np.testing.assert_allclose(scale_to_norm([1.0, 0.0], 1.0), [1.0, 0.0])

    def test_already_at_target(self):
        np.testing.assert_allclose(scale_to_norm([3.0, 4.0], 5.0), [3.0, 4.0])

    def test_exact_norm(self, rng):
        for _ in range(50):
            v = rng.normal(size=5)
            out = scale_to_norm(v, 2.5)
            assert np.linalg.norm(out) == pytest.approx(2.5, rel=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="zero vector"):
            scale_to_norm([0.0, 0.0], 1.0)


class TestLaplace:
    def test_scale_formula(self):
        assert laplace_scale(1.0, 10.0) == 0.2
        assert laplace_scale(0.5, 1.0) == 1.0

    def test_mean_absolute_deviation(self):
        # Laplace(b) has E|X| = b.
        rng = np.random.default_rng(1)
        lam = laplace_scale(1.0, 10.0)
        x = laplace_sample(1_000_000, lam, rng)
        assert np.abs(x).mean() == pytest.approx(lam, rel=0.01)

    def test_variance(self):
        rng = np.random.default_rng(2)
        lam = 0.7
        x = laplace_sample(1_000_000, lam, rng)
        assert x.var() == pytest.approx(2 * lam**2, rel=0.02)

    def test_tiny_scale_vanishes(self):
        rng = np.random.default_rng(3)
        x = laplace_sample(1000, 1e-9, rng)
        assert np.abs(x).max() < 1e-6

    def test_zero_scale_exact_zeros(self):
        rng = np.random.default_rng(4)
        assert np.all(laplace_sample((3, 3), 0.0, rng) == 0.0)

    def test_deterministic_given_seed(self):
        a = laplace_sample((4, 5), 1.0, np.random.default_rng(9))
        b = laplace_sample((4, 5), 1.0, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)

    def test_empirical_privacy_loss_bounded(self):
        # Scalar mechanism on adjacent values +1/-1 at eps=2 and C=1.
        eps = 2.0
        lam = laplace_scale(1.0, eps)
        rng = np.random.default_rng(5)
        n = 1_000_000
        out1 = 1.0 + laplace_sample(n, lam, rng)
        out2 = -1.0 + laplace_sample(n, lam, rng)
        edges = np.linspace(-10, 10, 81)
        slack = max_likelihood_ratio_slack(out1, out2, math.exp(eps), edges)
        assert slack <= 0.0, f"likelihood ratio exceeds e^eps by {slack}"


class TestAnalyticGaussian:
    def test_pinned_value(self):
        sigma = analytic_gaussian_sigma(1.0, 1e-5, 1.0)
        assert 3.0 < sigma < 4.85
        assert sigma == pytest.approx(ANALYTIC_SIGMA_E1_D1E5, rel=1e-9)

    @pytest.mark.parametrize("eps", [0.25, 0.5, 1.0])
    @pytest.mark.parametrize("delta", [1e-5, 1e-6])
    def test_below_classical_bound(self, eps, delta):
        assert analytic_gaussian_sigma(eps, delta) < classical_gaussian_sigma(eps, delta)

    def test_monotone_in_epsilon(self):
        assert analytic_gaussian_sigma(1.0, 1e-5) > analytic_gaussian_sigma(2.0, 1e-5)

    def test_curve_equality(self):
        for eps, delta in [(0.3, 1e-6), (1.0, 1e-5), (4.0, 1e-7), (10.0, 1e-9)]:
            sigma = analytic_gaussian_sigma(eps, delta, 2.0)
            achieved = gaussian_curve_delta(sigma, eps, 2.0)
            assert achieved <= delta
            assert achieved == pytest.approx(delta, abs=1e-6)

    def test_scales_linearly_with_sensitivity(self):
        s1 = analytic_gaussian_sigma(1.0, 1e-5, 1.0)
        s2 = analytic_gaussian_sigma(1.0, 1e-5, 2.0)
        assert s2 == pytest.approx(2 * s1, rel=1e-9)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            analytic_gaussian_sigma(0.0, 1e-5)
        with pytest.raises(ValueError):
            analytic_gaussian_sigma(1.0, 0.0)


class TestVMF:
    def test_kappa_zero_uniform(self):
        rng = np.random.default_rng(6)
        mu = np.array([0.0, 0.0, 1.0])
        x = vmf_sample(mu, 0.0, rng, size=100_000)
        assert np.linalg.norm(x.mean(axis=0)) < 0.02

    def test_high_concentration(self):
        rng = np.random.default_rng(7)
        mu = np.zeros(5)
        mu[0] = 1.0
        x = vmf_sample(mu, 1e6, rng, size=2000)
        assert (x @ mu).mean() > 0.999

    def test_unit_norm_outputs(self):
        rng = np.random.default_rng(8)
        mu = np.ones(4) / 2.0
        x = vmf_sample(mu, 3.0, rng, size=5000)
        assert np.abs(np.linalg.norm(x, axis=1) - 1.0).max() < 1e-12

    def test_mean_dot_matches_bessel_ratio(self):
        rng = np.random.default_rng(9)
        mu = np.zeros(8)
        mu[-1] = 1.0
        x = vmf_sample(mu, 100.0, rng, size=30_000)
        assert (x @ mu).mean() == pytest.approx(BESSEL_RATIO_D8_K100, rel=0.01)

    def test_non_unit_mu_rejected(self):
        with pytest.raises(ValueError, match="unit"):
            vmf_sample([1.0, 1.0], 1.0, np.random.default_rng(0))

    def test_dimension_two_works(self):
        rng = np.random.default_rng(10)
        x = vmf_sample([0.0, 1.0], 5.0, rng, size=1000)
        assert np.abs(np.linalg.norm(x, axis=1) - 1.0).max() < 1e-12

    def test_single_sample_shape(self):
        out = vmf_sample([1.0, 0.0, 0.0], 2.0, np.random.default_rng(11))
        assert out.shape == (3,)


class TestAmplification:
    def test_identity_when_m_equals_n(self):
        b = amplify_by_subsampling(10.0, 1e-5, 500, 500)
        assert b.epsilon == 10.0 and b.delta == 1e-5

    def test_zero_epsilon(self):
        assert amplify_by_subsampling(0.0, 0.0, 3, 100).epsilon == 0.0

    def test_porto_fold_value(self):
        b = amplify_by_subsampling(10.0, 0.0, 3000, 311_842)
        assert b.epsilon == pytest.approx(AMPLIFY_PORTO, rel=1e-12)
        assert 5.30 <= b.epsilon <= 5.42

    def test_delta_scaling(self):
        b = amplify_by_subsampling(1.0, 0.5, 1, 4)
        assert b.delta == 0.125

    def test_never_exceeds_base(self, rng):
        for _ in range(200):
            eps = rng.uniform(0.01, 20)
            n = int(rng.integers(2, 10_000))
            m = int(rng.integers(1, n + 1))
            assert amplify_by_subsampling(eps, 0, m, n).epsilon <= eps + 1e-12

    @given(eps=st.floats(0.01, 20), n=st.integers(2, 100_000),
           frac=st.floats(0.001, 1.0))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_m(self, eps, n, frac):
        m = max(1, int(n * frac))
        smaller = amplify_by_subsampling(eps, 0, max(1, m // 2), n).epsilon
        larger = amplify_by_subsampling(eps, 0, m, n).epsilon
        assert smaller <= larger + 1e-12

    def test_monotone_in_eps(self):
        es = [amplify_by_subsampling(e, 0, 10, 100).epsilon for e in (0.1, 1.0, 5.0, 10.0)]
        assert es == sorted(es)

    def test_m_larger_than_n_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            amplify_by_subsampling(1.0, 0.0, 5, 4)

    def test_huge_epsilon_stable(self):
        b = amplify_by_subsampling(800.0, 0.0, 10, 1000)
        assert b.epsilon == pytest.approx(800.0 + math.log(0.01), rel=1e-12)


class TestCalibration:
    def test_identity_when_m_equals_n(self):
        assert calibrate_base_epsilon(3.7, 10, 10) == 3.7

    def test_round_trip_randomized(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            target = rng.uniform(0.01, 20)
            n = int(rng.integers(2, 1_000_000))
            m = int(rng.integers(1, n + 1))
            base = calibrate_base_epsilon(target, m, n)
            back = amplify_by_subsampling(base, 0.0, m, n).epsilon
            assert abs(back - target) < 1e-9

    def test_porto_inverse(self):
        assert calibrate_base_epsilon(AMPLIFY_PORTO, 3000, 311_842) == pytest.approx(
            10.0, abs=1e-9)


class TestBudgetTypes:
    def test_budget_json_round_trip(self):
        b = PrivacyBudget(1.5, 1e-6, adjacency="add-or-remove")
        again = PrivacyBudget.from_dict(json.loads(json.dumps(b.to_dict())))
        assert again == b

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            PrivacyBudget(-1.0)
        with pytest.raises(ValueError):
            PrivacyBudget(1.0, 1.0)
        with pytest.raises(ValueError):
            PrivacyBudget(1.0, 0.0, adjacency="bogus")

    def test_zero_epsilon_budget_allowed(self):
        assert PrivacyBudget(0.0).epsilon == 0.0

    def test_noise_spec_invariants(self):
        NoiseSpec("laplace", 1.0, "l1", 1.0)
        NoiseSpec("gaussian", 1.0, "l2", 1.0)
        NoiseSpec("vmf", 1.0, "l2", 1.0)
        with pytest.raises(ValueError):
            NoiseSpec("laplace", 1.0, "l2", 1.0)
        with pytest.raises(ValueError):
            NoiseSpec("gaussian", 1.0, "l1", 1.0)
        with pytest.raises(ValueError):
            NoiseSpec("vmf", 1.0, "l2", 2.0)


class TestEmpiricalApproximateDP:
    def test_gaussian_tail_sets_respect_hockey_stick(self):
        # (eps, delta)-DP on threshold sets: P[M(+1) >= t] <= e^eps P[M(-1) >= t] + delta.
        # Half-lines are the worst-case events for the Gaussian mechanism, and
        # adjacent clipped scalars at C=1 differ by exactly the sensitivity 2.
        eps, delta = 1.0, 1e-2
        sigma = analytic_gaussian_sigma(eps, delta, 2.0)
        rng = np.random.default_rng(21)
        n = 2_000_000
        out_hi = 1.0 + rng.normal(0.0, sigma, n)
        out_lo = -1.0 + rng.normal(0.0, sigma, n)
        for t in np.linspace(-3 * sigma, 3 * sigma, 61):
            p_hi = (out_hi >= t).mean()
            p_lo = (out_lo >= t).mean()
            se = math.sqrt(p_hi * (1 - p_hi) / n + p_lo * (1 - p_lo) / n)
            assert p_hi <= math.exp(eps) * p_lo + delta + 3 * se, f"t={t}"

    def test_vmf_likelihood_ratio_bounded(self):
        # Pure eps-DP of the direction mechanism at kappa = eps/2 between
        # antipodal unit means (the farthest adjacent pair at C=1).
        eps = 2.0
        kappa = eps / 2.0
        rng = np.random.default_rng(22)
        n = 1_000_000
        s1 = vmf_sample(np.array([1.0, 0.0]), kappa, rng, size=n)
        s2 = vmf_sample(np.array([-1.0, 0.0]), kappa, rng, size=n)
        angles1 = np.arctan2(s1[:, 1], s1[:, 0])
        angles2 = np.arctan2(s2[:, 1], s2[:, 0])
        edges = np.linspace(-math.pi, math.pi, 73)
        slack = max_likelihood_ratio_slack(angles1, angles2, math.exp(eps), edges)
        assert slack <= 0.0, f"vmf likelihood ratio exceeds e^eps by {slack}"
