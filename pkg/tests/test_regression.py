import math

import numpy as np
import pytest

from regress.baselines import ols
from regress.core import Dataset, ModelSpec, NoiseFamily, SubWeibullParams, sigma_norm_error
from regress.datagen import sample_linear_model
from regress.privacy import PrivacyBudget, derive_round_budget
from regress.regression import (
    GDConfig,
    HeavyTailConfig,
    IterateOverflowError,
    best_iterate,
    compute_norm_threshold,
    compute_residual_threshold,
    compute_residual_threshold_ht,
    default_iterations,
    dp_robust_gd,
    dp_robust_gd_ht,
    gd_step,
    noise_scale,
)
from regress.rng import make_rng

ORACLE = PrivacyBudget(math.inf, 1e-6)
SUBG = SubWeibullParams(1.0, 0.5)


def gaussian_data(n, d, sigma, seed, w_star=None):
    rng = make_rng(seed)
    w = np.full(d, 1.0 / math.sqrt(d)) if w_star is None else w_star
    spec = ModelSpec(
        w_star=w, sigma=sigma, covariance=np.eye(d), noise_family=NoiseFamily.gaussian()
    )
    return sample_linear_model(spec, n, rng), w


class TestThresholdFormulas:
    def test_norm_threshold_log_power_zero(self):
        assert math.isclose(compute_norm_threshold(2.0, 1.0, 0.0, 100, 0.5), 2.0)

    def test_norm_threshold_value(self):
        got = compute_norm_threshold(5.0, 1.0, 0.5, 1000, 0.1)
        assert math.isclose(got, 9.597051824376164, rel_tol=1e-12)

    def test_norm_threshold_sqrt_homogeneity(self):
        a = compute_norm_threshold(3.0, 1.2, 0.7, 500, 0.05)
        b = compute_norm_threshold(6.0, 1.2, 0.7, 500, 0.05)
        assert math.isclose(b, math.sqrt(2) * a, rel_tol=1e-12)

    def test_norm_threshold_domain(self):
        with pytest.raises(ValueError):
            compute_norm_threshold(1.0, 1.0, 0.5, 1, 1.0)

    def test_residual_threshold_value(self):
        got = compute_residual_threshold(2.0, 0.1, 1.0, 0.5, 1.0, 1.0)
        assert math.isclose(got, 15.223634894154236, rel_tol=1e-12)

    def test_residual_threshold_clip_scale_linear(self):
        full = compute_residual_threshold(2.0, 0.1, 1.0, 0.5, 1.0, 1.0)
        half = compute_residual_threshold(2.0, 0.1, 1.0, 0.5, 1.0, 0.5)
        assert math.isclose(half, full / 2, rel_tol=1e-12)

    def test_residual_threshold_log_power_zero(self):
        got = compute_residual_threshold(2.0, 0.1, 1.5, 0.0, 4.0, 1.0)
        assert math.isclose(got, 2 * math.sqrt(4.0) * 3 * math.sqrt(4.0) * 1.5, rel_tol=1e-12)

    def test_residual_threshold_alpha_domain(self):
        with pytest.raises(ValueError):
            compute_residual_threshold(1.0, 0.5, 1.0, 0.5, 1.0, 1.0)

    def test_ht_threshold_floor(self):
        assert math.isclose(
            compute_residual_threshold_ht(2.0, 0.1, 0.0, 0.0, 1.0),
            2.0 * math.sqrt(4.0),
            rel_tol=1e-12,
        )

    def test_ht_threshold_value(self):
        got = compute_residual_threshold_ht(2.0, 0.1, 0.05, 0.2, 1.0)
        assert math.isclose(got, 16.492422502470642, rel_tol=1e-12)

    def test_ht_threshold_gamma_scaling(self):
        a = compute_residual_threshold_ht(1.0, 0.2, 0.1, 0.1, 1.0)
        b = compute_residual_threshold_ht(4.0, 0.2, 0.1, 0.1, 1.0)
        assert math.isclose(b, 2 * a, rel_tol=1e-12)

    def test_noise_scale_constructed_value(self):
        delta0 = 1.25 / math.exp(2.0)
        assert math.isclose(noise_scale(1.0, 1.0, 1.0, delta0, 2), 1.0, rel_tol=1e-12)

    def test_noise_scale_scalings(self):
        base = noise_scale(1.0, 2.0, 0.5, 1e-7, 100)
        assert math.isclose(noise_scale(1.0, 2.0, 0.5, 1e-7, 200), base / 2, rel_tol=1e-12)
        assert math.isclose(noise_scale(2.0, 2.0, 0.5, 1e-7, 100), 2 * base, rel_tol=1e-12)


class TestGDStep:
    def test_zero_residual_fixed_point(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        w = np.array([2.0, -1.0])
        data = Dataset(X, X @ w)
        out = gd_step(w, data, 10.0, 10.0, 0.5, 0.0, make_rng(0))
        assert np.array_equal(out, w)

    def test_single_sample_step(self):
        data = Dataset(np.array([[1.0, 0.0]]), np.array([0.0]))
        out = gd_step(np.array([1.0, 0.0]), data, 1.0, 1.0, 0.5, 0.0, make_rng(0))
        assert np.allclose(out, [0.5, 0.0])

    def test_single_sample_step_residual_clipped(self):
        data = Dataset(np.array([[1.0, 0.0]]), np.array([0.0]))
        out = gd_step(np.array([1.0, 0.0]), data, 1.0, 0.5, 0.5, 0.0, make_rng(0))
        assert np.allclose(out, [0.75, 0.0])

    def test_empty_batch_rejected(self):
        data = Dataset(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(ValueError):
            gd_step(np.zeros(2), data, 1.0, 1.0, 0.5, 0.0, make_rng(0))


class TestEngine:
    def make_config(self, T=40, clip_scale=1e9, budget=ORACLE, **kw):
        kwargs = dict(
            T=T,
            budget=budget,
            subweibull=SUBG,
            alpha=0.1,
            lambda_max=1.0,
            clip_scale=clip_scale,
            zeta=0.05,
        )
        kwargs.update(kw)
        return GDConfig(**kwargs)

    def test_oracle_mode_matches_ols_on_s3(self):
        data, w_star = gaussian_data(9000, 5, 1.0, 1)
        w, trace = dp_robust_gd(data, self.make_config(T=60), make_rng(2))
        s3 = data.subset(trace.split_indices[2])
        w_ols = ols(s3)
        gap = sigma_norm_error(w, w_ols, np.eye(5))
        assert gap <= 1e-3 * (1 + np.linalg.norm(w_ols))

    def test_trace_shape_and_invariants(self):
        data, _ = gaussian_data(3000, 4, 1.0, 3)
        w, trace = dp_robust_gd(data, self.make_config(T=12), make_rng(4))
        assert len(trace) == 12
        assert len(trace.iterates) == 12
        assert all(t > 0 for t in trace.theta)
        assert all(p >= 0 for p in trace.phi)
        assert trace.Theta > 0

    def test_sensitivity_bound_on_trace(self):
        data, _ = gaussian_data(4000, 4, 1.0, 5)
        cfg = self.make_config(T=15, clip_scale=0.05, budget=PrivacyBudget(40.0, 1e-6))
        w, trace = dp_robust_gd(data, cfg, make_rng(6))
        for g_max, theta in zip(trace.max_clipped_grad_norm, trace.theta):
            assert g_max <= trace.Theta * theta + 1e-9

    def test_phi_matches_formula(self):
        data, _ = gaussian_data(4000, 3, 1.0, 7)
        budget = PrivacyBudget(20.0, 1e-6)
        cfg = self.make_config(T=9, clip_scale=1.0, budget=budget)
        w, trace = dp_robust_gd(data, cfg, make_rng(8))
        rb = derive_round_budget(budget, 9)
        n3 = len(trace.split_indices[2])
        for theta, phi in zip(trace.theta, trace.phi):
            expect = (
                math.sqrt(2 * math.log(1.25 / rb.delta0))
                * trace.Theta
                * theta
                / (rb.epsilon0 * n3)
            )
            assert math.isclose(phi, expect, rel_tol=1e-12)

    def test_deterministic(self):
        data, _ = gaussian_data(3000, 3, 1.0, 9)
        cfg = self.make_config(T=8, clip_scale=1.0, budget=PrivacyBudget(30.0, 1e-6))
        w1, t1 = dp_robust_gd(data, cfg, make_rng(10))
        w2, t2 = dp_robust_gd(data, cfg, make_rng(10))
        assert np.array_equal(w1, w2)
        assert t1.gamma == t2.gamma and t1.theta == t2.theta
        assert all(np.array_equal(a, b) for a, b in zip(t1.iterates, t2.iterates))

    def test_zero_noise_error_non_increasing(self):
        # kappa = 1: error must not increase once contraction starts
        data, w_star = gaussian_data(9000, 5, 1.0, 11)
        w, trace = dp_robust_gd(data, self.make_config(T=25), make_rng(12))
        errors = [sigma_norm_error(wt, w_star, np.eye(5)) for wt in trace.iterates]
        for a, b in zip(errors[1:], errors[2:]):
            assert b <= a + 1e-9

    def test_clean_mask_counts_recorded(self):
        data, _ = gaussian_data(3000, 3, 1.0, 13)
        mask = np.ones(data.n, dtype=bool)
        w, trace = dp_robust_gd(data, self.make_config(T=5), make_rng(14), clean_mask=mask)
        assert len(trace.clipped_clean_count) == 5
        assert all(c >= 0 for c in trace.clipped_clean_count)

    def test_overflow_guard_names_round(self):
        data, _ = gaussian_data(300, 2, 1.0, 15)
        cfg = self.make_config(T=200, eta=2.5e7, lambda_max=None)
        with pytest.raises(IterateOverflowError, match="round"):
            dp_robust_gd(data, cfg, make_rng(16))

    def test_best_iterate_selects_smallest_gamma(self):
        data, w_star = gaussian_data(6000, 4, 1.0, 17)
        w, trace = dp_robust_gd(data, self.make_config(T=30), make_rng(18))
        chosen = best_iterate(trace)
        gammas = np.array(trace.gamma)
        last_min = int(np.flatnonzero(gammas == gammas.min())[-1])
        assert np.array_equal(chosen, trace.iterates[last_min])

    def test_partition_fraction_validation(self):
        with pytest.raises(ValueError):
            self.make_config(partition_fractions=(0.5, 0.5, 0.5))
        with pytest.raises(ValueError):
            self.make_config(partition_fractions=(0.0, 0.5, 0.5))  # needs known_trace
        self.make_config(partition_fractions=(0.0, 0.5, 0.5), known_trace=5.0)

    def test_step_size_resolution(self):
        cfg = self.make_config()
        assert math.isclose(cfg.step_size, 0.5)
        cfg2 = self.make_config(eta=0.3, lambda_max=None)
        assert cfg2.step_size == 0.3
        with pytest.raises(ValueError):
            self.make_config(lambda_max=1.0, C_step=1.0)


class TestHeavyTailEngine:
    def test_reduction_matches_light_engine_bitwise(self):
        # rho2 = rho3 = 0 gives theta = 2 sqrt(2 gamma); the light engine
        # reproduces that schedule when its threshold multiplier equals 1
        d = 4
        rng = make_rng(19)
        spec = ModelSpec(
            w_star=np.full(d, 0.5),
            sigma=1.0,
            covariance=np.eye(d),
            noise_family=NoiseFamily.heavy_tailed(k=4),
        )
        data = sample_linear_model(spec, 6000, rng)
        budget = PrivacyBudget(20.0, 1e-6)
        alpha = 0.1
        C2 = 1.0 / (9.0 * math.log(1.0 / (2 * alpha)))  # multiplier == 1
        light = GDConfig(
            T=10, budget=budget, subweibull=SUBG, alpha=alpha,
            lambda_max=1.0, C2=C2, clip_scale=0.7, zeta=0.05,
        )
        heavy = HeavyTailConfig(
            T=10, budget=budget, subweibull=SUBG, alpha=alpha,
            lambda_max=1.0, clip_scale=0.7, zeta=0.05,
            rho2=0.0, rho3=0.0, moment_k=4,
        )
        w1, t1 = dp_robust_gd(data, light, make_rng(20))
        w2, t2 = dp_robust_gd_ht(data, heavy, make_rng(20))
        assert np.array_equal(w1, w2)
        assert t1.theta == t2.theta and t1.gamma == t2.gamma

    def test_heavy_tailed_run_completes(self):
        d = 5
        rng = make_rng(21)
        spec = ModelSpec(
            w_star=np.full(d, 1.0 / math.sqrt(d)),
            sigma=1.0,
            covariance=np.eye(d),
            noise_family=NoiseFamily.heavy_tailed(k=4),
        )
        data = sample_linear_model(spec, 30000, rng)
        heavy = HeavyTailConfig(
            T=20, budget=PrivacyBudget(5.0, 1e-6), subweibull=SUBG,
            alpha=0.1, lambda_max=1.0, clip_scale=0.5, zeta=0.05,
            rho2=0.1, rho3=0.1,
        )
        w, trace = dp_robust_gd_ht(data, heavy, make_rng(22))
        err = sigma_norm_error(w, spec.w_star, np.eye(d))
        assert np.isfinite(err) and err <= 10.0

    def test_zero_noise_fixed_point(self):
        X = np.eye(3)
        w = np.array([1.0, 2.0, 3.0])
        data = Dataset(X, X @ w)
        heavy = HeavyTailConfig(
            T=1, budget=ORACLE, subweibull=SUBG, alpha=0.1,
            lambda_max=1.0, zeta=0.05, rho2=0.0, rho3=0.0,
        )
        out = gd_step(w, data, 10.0, 10.0, 0.5, 0.0, make_rng(0))
        assert np.array_equal(out, w)

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            HeavyTailConfig(
                T=1, budget=ORACLE, subweibull=SUBG, alpha=0.1,
                lambda_max=1.0, zeta=0.05, rho2=-0.1,
            )
        with pytest.raises(ValueError):
            HeavyTailConfig(
                T=1, budget=ORACLE, subweibull=SUBG, alpha=0.1,
                lambda_max=1.0, zeta=0.05, moment_k=3,
            )


class TestDefaultIterations:
    def test_examples(self):
        assert default_iterations(1.0, 20) == 9
        assert default_iterations(10.0, 100_000) == 346
        assert default_iterations(1.0, 2) == 3

    def test_domain(self):
        with pytest.raises(ValueError):
            default_iterations(0.5, 100)
        with pytest.raises(ValueError):
            default_iterations(1.0, 1)
