import math

import numpy as np
import pytest

from regress.privacy import (
    BinFamily,
    PrivacyBudget,
    ZERO_BIN,
    compose_parallel,
    compose_serial,
    derive_round_budget,
    gaussian_mechanism,
    gaussian_noise_std,
    geometric_bin_index,
    laplace_noise,
    stable_histogram,
)
from regress.rng import make_rng


class TestBudgets:
    def test_validation(self):
        with pytest.raises(ValueError):
            PrivacyBudget(0.0, 1e-6)
        with pytest.raises(ValueError):
            PrivacyBudget(1.0, 0.0)
        with pytest.raises(ValueError):
            PrivacyBudget(1.0, 1.0)

    def test_delta0_rule(self):
        rb = derive_round_budget(PrivacyBudget(1.0, 1e-6), 10)
        assert rb.delta0 == 5e-8
        assert rb.rounds == 10

    def test_single_round_values(self):
        rb = derive_round_budget(PrivacyBudget(1.0, 1e-6), 1)
        assert rb.delta0 == 5e-7
        assert math.isclose(rb.epsilon0, 0.065633624913777, rel_tol=1e-12)

    def test_linear_in_epsilon(self):
        rb1 = derive_round_budget(PrivacyBudget(1.0, 1e-6), 7)
        rb2 = derive_round_budget(PrivacyBudget(2.0, 1e-6), 7)
        assert math.isclose(rb2.epsilon0, 2 * rb1.epsilon0, rel_tol=1e-12)

    def test_monotone_in_rounds(self):
        budget = PrivacyBudget(1.0, 1e-6)
        prev = derive_round_budget(budget, 1)
        for T in (2, 5, 20, 100):
            cur = derive_round_budget(budget, T)
            assert cur.epsilon0 < prev.epsilon0
            assert cur.delta0 < prev.delta0
            prev = cur

    def test_deterministic(self):
        budget = PrivacyBudget(0.7, 1e-7)
        assert derive_round_budget(budget, 13) == derive_round_budget(budget, 13)

    def test_composition_helpers(self):
        budgets = [PrivacyBudget(0.5, 1e-7), PrivacyBudget(0.25, 1e-8)]
        eps, delta = compose_serial(budgets)
        assert math.isclose(eps, 0.75) and math.isclose(delta, 1.1e-7)
        assert compose_parallel(budgets) == (0.5, 1e-7)


class TestGaussianMechanism:
    def test_zero_sensitivity_is_identity(self):
        rng = make_rng(0)
        v = np.array([1.0, -2.0, 3.0])
        out = gaussian_mechanism(v, 0.0, 1.0, 1e-5, rng)
        assert np.array_equal(out, v)

    def test_infinite_epsilon_is_identity(self):
        rng = make_rng(0)
        v = np.array([1.0, -2.0])
        assert np.array_equal(gaussian_mechanism(v, 1.0, math.inf, 1e-5, rng), v)

    def test_noise_std_formula(self):
        std = gaussian_noise_std(1.0, 1.0, 1e-5)
        assert math.isclose(std, 4.844805262605389, rel_tol=1e-12)
        for sens, eps, delta in [(2.5, 0.3, 1e-7), (0.1, 4.0, 1e-9)]:
            expect = sens * math.sqrt(2 * math.log(1.25 / delta)) / eps
            assert math.isclose(gaussian_noise_std(sens, eps, delta), expect, rel_tol=1e-12)

    def test_empirical_std_within_two_percent(self):
        rng = make_rng(123)
        n = 100_000
        out = gaussian_mechanism(np.zeros(n), 1.0, 1.0, 1e-5, rng)
        target = gaussian_noise_std(1.0, 1.0, 1e-5)
        assert abs(out.std() - target) / target < 0.02

    def test_reproducible(self):
        a = gaussian_mechanism(np.zeros(5), 1.0, 1.0, 1e-6, make_rng(42))
        b = gaussian_mechanism(np.zeros(5), 1.0, 1.0, 1e-6, make_rng(42))
        assert np.array_equal(a, b)


class TestLaplace:
    def test_scale_validation(self):
        with pytest.raises(ValueError):
            laplace_noise(0.0, make_rng(0))

    def test_tail_probabilities(self):
        rng = make_rng(7)
        draws = np.array([laplace_noise(1.0, rng) for _ in range(100_000)])
        p1 = np.mean(np.abs(draws) >= 1.0)
        assert 0.35 <= p1 <= 0.39
        p2 = np.mean(np.abs(draws) >= 2.0)
        assert abs(p2 - math.exp(-2)) <= 0.01
        assert abs(draws.mean()) <= 3.0 * math.sqrt(2 / 100_000)

    def test_reproducible(self):
        assert laplace_noise(2.0, make_rng(5)) == laplace_noise(2.0, make_rng(5))


class TestGeometricBins:
    def test_examples(self):
        assert geometric_bin_index(1.0, 2.0) == 0
        assert geometric_bin_index(0.0, 2.0) is ZERO_BIN
        assert geometric_bin_index(3.0, 2.0) == 1

    def test_bracket_invariant(self):
        rng = np.random.default_rng(8)
        for base in (2.0, 2.0**0.25, 1.5):
            for _ in range(300):
                v = float(np.exp(rng.uniform(-40, 40)))
                i = geometric_bin_index(v, base)
                assert base**i <= v < base ** (i + 1)

    def test_exact_powers_start_their_bin(self):
        # a bin's left endpoint belongs to that bin
        for base in (2.0, 2.0**0.25, 1.5):
            fam = BinFamily.geometric(base)
            for i in range(-30, 31):
                left, right = fam.interval(i)
                assert fam.index_of(left) == i
                assert fam.index_of(right) == i + 1

    def test_powers_of_two_bins_are_exact(self):
        # the quarter-octave family keeps integer powers of two exact
        fam = BinFamily.geometric(2.0**0.25)
        assert fam.interval(8) == (4.0, 2.0**2.25)
        assert fam.index_of(4.0) == 8
        assert BinFamily.geometric(2.0).interval(3) == (8.0, 16.0)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(9)
        fam = BinFamily.geometric(2.0**0.25)
        vals = np.exp(rng.uniform(-30, 30, size=500))
        vec = fam.indices_of(vals)
        for v, i in zip(vals, vec):
            assert fam.index_of(float(v)) == i

    def test_arithmetic_bins(self):
        fam = BinFamily.arithmetic(0.5)
        assert fam.index_of(0.0) is ZERO_BIN
        assert fam.index_of(0.2) == 0
        assert fam.index_of(1.25) == 2
        assert fam.interval(2) == (1.0, 1.5)

    def test_interval_of_zero_bin(self):
        fam = BinFamily.geometric(2.0)
        assert fam.interval(ZERO_BIN) == (0.0, 0.0)


class TestStableHistogram:
    def test_empty_points_absent_argmax(self):
        release = stable_histogram([], BinFamily.geometric(2.0), 1.0, 1e-6, make_rng(0))
        assert release.argmax_bin is None
        assert release.noisy_proportions == {}

    def test_single_bin_mass(self):
        rng = make_rng(1)
        points = np.full(10_000, 3.0)
        release = stable_histogram(points, BinFamily.geometric(2.0), 1.0, 1e-6, rng)
        assert release.argmax_bin == (2.0, 4.0)
        assert abs(release.noisy_proportions[1] - 1.0) < 0.01

    def test_majority_bin_wins(self):
        wins = 0
        for trial in range(1000):
            rng = make_rng(1000 + trial)
            points = np.concatenate([np.full(9000, 1.5), np.full(1000, 3.0)])
            release = stable_histogram(points, BinFamily.geometric(2.0), 1.0, 1e-6, rng)
            if release.argmax_bin == (1.0, 2.0):
                wins += 1
        assert wins >= 990

    def test_small_sample_zeroed_out(self):
        rng = make_rng(2)
        release = stable_histogram(
            np.full(3, 1.5), BinFamily.geometric(2.0), 0.1, 1e-9, rng
        )
        assert release.argmax_bin is None

    def test_neighboring_sensitivity_without_noise(self):
        # raw proportions change in at most two bins, each by exactly 1/m
        rng = np.random.default_rng(10)
        fam = BinFamily.geometric(2.0)
        for _ in range(50):
            m = int(rng.integers(5, 40))
            pts = np.exp(rng.uniform(-3, 3, size=m))
            neighbor = pts.copy()
            neighbor[rng.integers(m)] = float(np.exp(rng.uniform(-3, 3)))
            r1 = stable_histogram(pts, fam, math.inf, 1e-6, make_rng(0))
            r2 = stable_histogram(neighbor, fam, math.inf, 1e-6, make_rng(0))
            keys = set(r1.noisy_proportions) | set(r2.noisy_proportions)
            diffs = []
            for key in keys:
                a = r1.noisy_proportions.get(key, 0.0)
                b = r2.noisy_proportions.get(key, 0.0)
                if a != b:
                    diffs.append(abs(a - b))
            assert len(diffs) <= 2
            assert all(math.isclose(dv, 1.0 / m, rel_tol=1e-12) for dv in diffs)

    def test_accuracy_guarantee(self):
        # |noisy - raw| <= beta on surviving bins with the lemma's sample size
        eps0, beta, delta0, alpha_f = 1.0, 0.05, 1e-6, 0.05
        m = math.ceil(8 / (eps0 * beta) * math.log(4 / (alpha_f * delta0)))
        fam = BinFamily.geometric(2.0)
        base_points = np.exp(np.random.default_rng(11).uniform(-2, 2, size=m))
        raw = stable_histogram(base_points, fam, math.inf, delta0, make_rng(0))
        good = 0
        for trial in range(1000):
            rng = make_rng(5000 + trial)
            rel = stable_histogram(base_points, fam, eps0, delta0, rng)
            ok = all(
                abs(p - raw.noisy_proportions[idx]) <= beta
                for idx, p in rel.noisy_proportions.items()
                if p > 0
            )
            good += ok
        assert good >= 950

    def test_zero_bin_handled(self):
        rng = make_rng(3)
        points = np.concatenate([np.zeros(5000), np.full(100, 1.5)])
        release = stable_histogram(points, BinFamily.geometric(2.0), 1.0, 1e-6, rng)
        assert release.argmax_bin == (0.0, 0.0)

    def test_tie_breaks_toward_smaller_endpoint(self):
        # exact tie without noise: equal mass in two bins
        points = np.concatenate([np.full(50, 1.5), np.full(50, 3.0)])
        release = stable_histogram(points, BinFamily.geometric(2.0), math.inf, 1e-6, make_rng(0))
        assert release.argmax_bin == (1.0, 2.0)

    def test_delta_warning(self):
        with pytest.warns(RuntimeWarning):
            stable_histogram(np.ones(3), BinFamily.geometric(2.0), 1.0, 0.5, make_rng(0))

    def test_reproducible(self):
        pts = np.exp(np.random.default_rng(12).uniform(-2, 2, size=200))
        r1 = stable_histogram(pts, BinFamily.geometric(2.0), 0.5, 1e-7, make_rng(9))
        r2 = stable_histogram(pts, BinFamily.geometric(2.0), 0.5, 1e-7, make_rng(9))
        assert r1.noisy_proportions == r2.noisy_proportions
        assert r1.argmax_bin == r2.argmax_bin
