import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optstop import special_fn as sf
from optstop.families import (
    DegenerateSampleWarning,
    Family,
    Standardizer,
    TestConfig,
    base_block_sums,
    critical_value,
    exponential_from_uniform,
    init_state,
    null_sampler,
    null_scores,
    push,
    push_many,
    rejects,
    standard_normals,
    statistic,
    statistic_batch,
)

Z95 = 1.6448536269514722


def state_from_scores(scores):
    return push_many(init_state(), scores)


class TestState:
    def test_init(self):
        s = init_state()
        assert (s.m, s.s1, s.s2) == (0, 0.0, 0.0)
        assert push_many(init_state(), [1.0, 2.0]) != init_state()
        assert init_state() == init_state()

    def test_statistic_needs_data(self):
        with pytest.raises(ValueError):
            statistic(Family.GAUSS, init_state(), 0.05)
        with pytest.raises(ValueError):
            statistic(Family.STUDENT_T, push(init_state(), 1.0), 0.05)

    def test_push_arithmetic(self):
        s = push_many(init_state(), [1.0, 3.0])
        assert (s.m, s.s1, s.s2) == (2, 4.0, 10.0)

    def test_gauss_standardizer(self):
        s = push(init_state(), 4.0, Standardizer(Family.GAUSS, mu0=2.0, sigma0=2.0))
        assert s.s1 == 1.0

    def test_exponential_standardizer(self):
        std = Standardizer(Family.EXPONENTIAL, lambda0=2.0)
        assert std(1.5) == 2.0

    def test_rejects_non_finite(self):
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(ValueError):
                push(init_state(), bad)

    def test_compensated_sum(self):
        s = init_state()
        for _ in range(10 ** 6):
            s = push(s, 1e-3)
        assert s.s1 == pytest.approx(1000.0, abs=1e-9)
        assert s.s2 == pytest.approx(math.fsum([1e-6] * 10 ** 6), rel=1e-13)

    @pytest.mark.slow
    def test_sum_of_squares_over_ten_million_pushes(self):
        rng = np.random.default_rng(7)
        xs = rng.uniform(-1.0, 1.0, 10 ** 7)
        s = init_state()
        for x in xs.tolist():
            s = push(s, x)
        assert s.m == 10 ** 7
        assert s.s2 == pytest.approx(math.fsum((xs * xs).tolist()), rel=1e-12)
        assert s.s1 == pytest.approx(math.fsum(xs.tolist()), rel=1e-12, abs=1e-9)

    @settings(max_examples=100)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
    def test_cauchy_schwarz(self, xs):
        s = state_from_scores(xs)
        assert s.s2 >= s.s1 ** 2 / s.m - 1e-9 * max(1.0, s.s2)

    @settings(max_examples=100)
    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=30), st.randoms(use_true_random=False))
    def test_order_invariance(self, xs, rnd):
        perm = list(xs)
        rnd.shuffle(perm)
        a, b = state_from_scores(xs), state_from_scores(perm)
        for fam in Family:
            ta = statistic(fam, a, 0.05)
            tb = statistic(fam, b, 0.05)
            assert ta == pytest.approx(tb, rel=1e-12, abs=1e-9)


class TestStatistic:
    def test_gauss_example(self):
        s = init_state().__class__(m=100, sum1=20.0, sum2=100.0)
        assert statistic(Family.GAUSS, s, 0.05) == pytest.approx(2 - Z95, abs=1e-12)
        assert rejects(Family.GAUSS, s, 0.05)

    def test_exponential_example(self):
        s = push(init_state(), 3.0, Standardizer(Family.EXPONENTIAL))
        assert statistic(Family.EXPONENTIAL, s, 0.05) == pytest.approx(2 - (math.log(20) - 1), abs=1e-12)
        assert statistic(Family.EXPONENTIAL, s, 0.05) == pytest.approx(0.0042677, abs=1e-7)

    def test_t_boundary_is_not_rejection(self):
        s = state_from_scores([0.0, 2.0])
        assert statistic(Family.STUDENT_T, s, 0.25) == pytest.approx(0.0, abs=1e-14)
        # T = sqrt(2) - c_2 sqrt(2) with c_2 = tan(pi/4); decide with the exact quantile
        assert critical_value(Family.STUDENT_T, 2, 0.25) == pytest.approx(1.0, abs=1e-15)

    def test_strict_inequality(self):
        s = init_state().__class__(m=100, sum1=Z95 * 10.0, sum2=100.0)
        t = statistic(Family.GAUSS, s, 0.05)
        assert rejects(Family.GAUSS, s, 0.05) == (t > 0)

    @pytest.mark.parametrize("alpha", [0.01, 0.05, 0.2, 0.49])
    def test_zero_sum_never_rejects(self, alpha):
        s = init_state().__class__(m=100, sum1=0.0, sum2=100.0)
        assert not rejects(Family.GAUSS, s, alpha)

    def test_t_equal_observations(self):
        s = state_from_scores([1.5, 1.5])
        assert statistic(Family.STUDENT_T, s, 0.05) == pytest.approx(3.0 / math.sqrt(2), rel=1e-15)

    def test_degenerate_sample_flagged(self):
        # s2 slightly below s1^2/m, as rounding can produce
        s = init_state().__class__(m=2, sum1=2.0, sum2=2.0 - 1e-12)
        with pytest.warns(DegenerateSampleWarning):
            t = statistic(Family.STUDENT_T, s, 0.05)
        assert t == pytest.approx(2.0 / math.sqrt(2))

    def test_binary_data_does_not_crash(self):
        s = state_from_scores([1.0] * 10)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateSampleWarning)
            assert rejects(Family.STUDENT_T, s, 0.05)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal((50, 12))
        for fam in Family:
            s1 = y.sum(axis=1)
            s2 = (y * y).sum(axis=1)
            batch = statistic_batch(fam, 12, s1, s2, 0.05)
            scalar = [statistic(fam, state_from_scores(row), 0.05) for row in y]
            np.testing.assert_allclose(batch, scalar, rtol=1e-12, atol=1e-12)


class TestCriticalValue:
    def test_gauss(self):
        for m in (1, 10, 1000):
            assert critical_value(Family.GAUSS, m, 0.05) == pytest.approx(Z95, abs=1e-12)

    def test_exponential_small_and_large(self):
        assert critical_value(Family.EXPONENTIAL, 1, 0.05) == pytest.approx(math.log(20) - 1, abs=1e-13)
        big = critical_value(Family.EXPONENTIAL, 10 ** 6, 0.05)
        # skewness correction of the gamma quantile is O(1/sqrt(m))
        assert abs(big - Z95) < 2e-3
        assert abs(big - Z95) < abs(critical_value(Family.EXPONENTIAL, 10 ** 4, 0.05) - Z95)

    def test_t_multiplier(self):
        assert critical_value(Family.STUDENT_T, 10, 0.05) == pytest.approx(sf.student_t_quantile(9, 0.95))

    def test_rejects_iff_exceeds(self):
        rng = np.random.default_rng(11)
        for fam in (Family.GAUSS, Family.EXPONENTIAL):
            for _ in range(200):
                m = int(rng.integers(1, 40))
                s1 = float(rng.normal(0, 2 * math.sqrt(m)))
                s = init_state().__class__(m=m, sum1=s1, sum2=s1 * s1)
                assert rejects(fam, s, 0.05) == (s1 / math.sqrt(m) > critical_value(fam, m, 0.05))

    def test_domain(self):
        with pytest.raises(ValueError):
            critical_value(Family.STUDENT_T, 1, 0.05)
        with pytest.raises(ValueError):
            critical_value(Family.GAUSS, 5, 1.5)


class TestConfigValidation:
    def test_valid(self):
        c = TestConfig("t", 0.05, 2, 3)
        assert c.family is Family.STUDENT_T

    @pytest.mark.parametrize("kwargs", [
        dict(family="t", alpha=0.05, n=1),
        dict(family="gauss", alpha=0.05, n=0),
        dict(family="gauss", alpha=0.05, n=10, k=-1),
        dict(family="gauss", alpha=1.0, n=10),
        dict(family="gauss", alpha=0.05, n=10, sigma0=0.0),
        dict(family="exp", alpha=0.05, n=10, lambda0=-1.0),
        dict(family="binomial", alpha=0.05, n=10),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TestConfig(**kwargs)


class TestNullSampling:
    def test_exponential_inverse_transform(self):
        assert exponential_from_uniform(0.5, 1.0) == pytest.approx(math.log(2))

    def test_normal_mean(self):
        x = standard_normals(np.random.default_rng(1), 10 ** 6)
        assert abs(x.mean()) < 0.004

    def test_exponential_score_variance(self):
        y = null_scores(Family.EXPONENTIAL, np.random.default_rng(2), 10 ** 6)
        assert y.var() == pytest.approx(1.0, abs=0.01)
        assert abs(y.mean()) < 0.004

    def test_box_muller_consumes_fixed_uniforms(self):
        a, b = np.random.default_rng(5), np.random.default_rng(5)
        standard_normals(a, 7)
        b.random(8)
        assert a.random() == b.random()

    def test_null_sampler_raw_scale(self):
        rng = np.random.default_rng(9)
        cfg = TestConfig("gauss", 0.05, 5, mu0=10.0, sigma0=3.0)
        xs = np.array([null_sampler(Family.GAUSS, rng, cfg) for _ in range(20_000)])
        assert xs.mean() == pytest.approx(10.0, abs=0.1)
        assert xs.std() == pytest.approx(3.0, abs=0.1)
        assert null_sampler(Family.EXPONENTIAL, rng) > 0.0

    @pytest.mark.parametrize("family", list(Family))
    def test_base_block_matches_streamed_moments(self, family):
        # exact draw of (sum y, sum y^2) over n scores vs brute-force summation
        n, size = 6, 200_000
        rng = np.random.default_rng(21)
        s1, s2 = base_block_sums(family, rng, n, size)
        y = null_scores(family, np.random.default_rng(22), n * size).reshape(size, n)
        b1 = y.sum(axis=1)
        for a, b in ((s1, b1),):
            assert a.mean() == pytest.approx(b.mean(), abs=0.03)
            assert a.var() == pytest.approx(b.var(), rel=0.02)
            skew_a = ((a - a.mean()) ** 3).mean() / a.std() ** 3
            skew_b = ((b - b.mean()) ** 3).mean() / b.std() ** 3
            assert skew_a == pytest.approx(skew_b, abs=0.05)
        if family is Family.STUDENT_T:
            spread = s2 - s1 ** 2 / n
            brute = (y * y).sum(axis=1) - b1 ** 2 / n
            assert spread.mean() == pytest.approx(n - 1, rel=0.01)
            assert spread.var() == pytest.approx(brute.var(), rel=0.03)


def test_gauss_and_t_statistics_agree_for_large_m():
    rng = np.random.default_rng(17)
    m, reps = 10 ** 4, 10 ** 3
    diffs = np.empty(reps)
    for r in range(reps):
        y = standard_normals(rng, m)
        s1, s2 = y.sum(), (y * y).sum()
        g = statistic_batch(Family.GAUSS, m, np.array([s1]), None, 0.05)[0]
        t = statistic_batch(Family.STUDENT_T, m, np.array([s1]), np.array([s2]), 0.05)[0]
        diffs[r] = abs(t - g)
    assert np.quantile(diffs, 0.9) < 0.1
