import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from optstop import asymptotics as asy
from optstop import mc_engine as mc
from optstop.families import Family, TestConfig

SMALL_CHUNKS = mc.RngSpec(20240607, chunk_size=4096)


def covers(est, alpha, widths=3.0):
    lo, hi = est.ci95
    return abs(est.alpha_hat_nk - alpha) <= widths * 0.5 * (hi - lo)


class TestRng:
    def test_mix_distinct(self):
        seen = {mc.mix64(12345, r) for r in range(100_000)}
        assert len(seen) == 100_000
        assert mc.mix64(1, 0) != mc.mix64(2, 0)

    def test_streams_differ(self):
        streams = mc.RngSpec(7)
        assert streams.stream(0).random() != streams.stream(1).random()
        assert streams.stream(3).random() == streams.stream(3).random()

    def test_chunks_cover_reps(self):
        streams = mc.RngSpec(0, chunk_size=1000)
        jobs = streams.chunks(4500)
        assert [c for c, _ in jobs] == [0, 1, 2, 3, 4]
        assert sum(size for _, size in jobs) == 4500

    def test_seed_masked_to_64_bits(self):
        assert mc.RngSpec(-1).master_seed == (1 << 64) - 1


class TestHelpers:
    def test_wilson_contains_estimate(self):
        lo, hi = mc.wilson_interval(50, 1000)
        assert lo < 0.05 < hi
        lo0, hi0 = mc.wilson_interval(0, 100)
        assert lo0 == pytest.approx(0.0, abs=1e-15) and hi0 > 0

    def test_moments_merge(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(10_001) * 3 + 5
        parts = [mc.Moments.of(x[i:i + 997]) for i in range(0, x.size, 997)]
        merged = mc._merge_all(parts)
        assert merged.count == x.size
        assert merged.mean == pytest.approx(x.mean(), rel=1e-13)
        assert merged.variance == pytest.approx(x.var(ddof=1), rel=1e-12)


class TestSimulate:
    def test_reps_validation(self):
        cfg = TestConfig("gauss", 0.05, 10, 1)
        with pytest.raises(ValueError):
            mc.simulate_alpha_nk(cfg, 0)
        with pytest.raises(ValueError):
            mc.simulate_alpha_nk(cfg, 10, workers=0)
        with pytest.raises(ValueError):
            mc.simulate_alpha_nk(cfg, 10, base="other")

    @pytest.mark.parametrize("family", list(Family))
    def test_deterministic_across_workers(self, family):
        cfg = TestConfig(family, 0.05, 30, 4)
        runs = [mc.simulate_alpha_nk(cfg, 50_000, SMALL_CHUNKS, w, base="stream") for w in (1, 2, 8)]
        assert runs[0] == runs[1] == runs[2]

    def test_esl_deterministic_across_workers(self):
        a = mc.estimate_esl_plus(Family.EXPONENTIAL, 6, 50_000, SMALL_CHUNKS, 1)
        b = mc.estimate_esl_plus(Family.EXPONENTIAL, 6, 50_000, SMALL_CHUNKS, 8)
        assert a == b

    def test_concurrent_callers(self):
        cfgs = [TestConfig(f, 0.1, 20, 3) for f in Family]
        serial = [mc.simulate_alpha_nk(c, 30_000, 5) for c in cfgs]
        with ThreadPoolExecutor(3) as pool:
            parallel = list(pool.map(lambda c: mc.simulate_alpha_nk(c, 30_000, 5, 2), cfgs))
        assert serial == parallel

    @pytest.mark.parametrize("family", list(Family))
    def test_monotone_in_budget_exactly(self, family):
        big = mc.simulate_alpha_nk(TestConfig(family, 0.05, 40, 12), 100_000, 99)
        by_budget = big.alpha_hat_by_budget()
        assert np.all(np.diff(by_budget) >= 0)
        assert by_budget[-1] == big.alpha_hat_nk
        # shorter budgets on the same seed see a prefix of the same paths
        for k in (0, 1, 5):
            small = mc.simulate_alpha_nk(TestConfig(family, 0.05, 40, k), 100_000, 99)
            assert small.alpha_hat_nk == by_budget[k]

    def test_decomposition_identity(self):
        est = mc.simulate_alpha_nk(TestConfig("exp", 0.05, 25, 7), 200_000, 3)
        hist = est.first_rejection_histogram
        assert len(hist) == 8
        assert sum(hist) == est.rejections
        assert est.alpha_hat_n == hist[0] / est.reps
        assert est.alpha_hat_nk == pytest.approx(est.alpha_hat_n + sum(hist[1:]) / est.reps, abs=1e-15)
        assert est.alpha_hat_n <= est.alpha_hat_nk <= 1.0
        assert est.rho_hat == pytest.approx(est.alpha_hat_nk / 0.05 - 1)
        assert est.sample_sizes == tuple(range(25, 33))

    def test_gauss_level_n50(self):
        est = mc.simulate_alpha_nk(TestConfig("gauss", 0.05, 50, 0), 10 ** 6, 1)
        assert abs(est.alpha_hat_nk - 0.05) <= 3 * est.se
        assert 3 * est.se == pytest.approx(0.00065, abs=2e-5)

    @pytest.mark.parametrize("family", list(Family))
    @pytest.mark.parametrize("m", [10, 50, 200])
    def test_level_exact_base(self, family, m):
        est = mc.simulate_alpha_nk(TestConfig(family, 0.05, m, 0), 10 ** 6, 1000 + m)
        assert covers(est, 0.05)

    @pytest.mark.parametrize("family", list(Family))
    @pytest.mark.parametrize("m", [10, 50])
    def test_level_streamed(self, family, m):
        est = mc.simulate_alpha_nk(TestConfig(family, 0.05, m, 0), 10 ** 6, 2000 + m, base="stream")
        assert covers(est, 0.05)

    @pytest.mark.parametrize("family", list(Family))
    def test_stream_and_exact_base_agree(self, family):
        cfg = TestConfig(family, 0.1, 20, 5)
        a = mc.simulate_alpha_nk(cfg, 400_000, 11, base="exact")
        b = mc.simulate_alpha_nk(cfg, 400_000, 12, base="stream")
        assert abs(a.alpha_hat_nk - b.alpha_hat_nk) <= 4 * math.hypot(a.se, b.se)

    def test_agrees_with_quadrature_small_n(self):
        exact = asy.exact_gauss_k1(10, 0.05).value
        est = mc.simulate_alpha_nk(TestConfig("gauss", 0.05, 10, 1), 10 ** 6, 77, base="stream")
        assert abs(est.alpha_hat_nk - exact) <= 3 * est.se


class TestEsl:
    def test_gauss_l1(self):
        est = mc.estimate_esl_plus(Family.GAUSS, 1, 10 ** 6, 4)
        assert abs(est.means[0] - 1 / math.sqrt(2 * math.pi)) <= 3 * est.ses[0]

    @pytest.mark.parametrize("ell, expected", [(1, 1 / math.e), (2, 4 / math.e ** 2)])
    def test_exponential(self, ell, expected):
        est = mc.estimate_esl_plus(Family.EXPONENTIAL, 2, 10 ** 6, 5)
        assert abs(est.means[ell - 1] - expected) <= 3 * est.ses[ell - 1]

    def test_shape(self):
        est = mc.estimate_esl_plus(Family.GAUSS, 30, 100_000, 6)
        assert est.l_max == 30
        assert all(m >= 0 for m in est.means)
        # grows like sqrt(l): compare well-separated l to stay clear of noise
        assert est.means[0] < est.means[9] < est.means[29]

    def test_validation(self):
        with pytest.raises(ValueError):
            mc.estimate_esl_plus(Family.GAUSS, 0, 10)


class TestKacMonteCarlo:
    @pytest.mark.parametrize("k", [5, 20])
    def test_gauss_sides_agree(self, k):
        est = mc.estimate_kac_sides(Family.GAUSS, k, 10 ** 6, 31 + k)
        assert abs(est.diff_mean) <= 3 * est.diff_se
        assert abs(est.max_mean - est.sum_mean) <= 3 * math.hypot(est.max_se, est.sum_se)
        closed = sum(asy.esl_plus_closed_form(Family.GAUSS, ell) / ell for ell in range(1, k + 1))
        assert abs(est.max_mean - closed) <= 3 * est.max_se

    def test_validation(self):
        with pytest.raises(ValueError):
            mc.estimate_kac_sides(Family.GAUSS, 0, 10)


class TestVbe:
    def test_second_moment_case(self):
        r = mc.vbe_bound_check("normal_product", 5, 2.0, 200_000, 8)
        assert abs(r.lhs - 10.0) <= 3 * r.lhs_se
        assert abs(r.rhs - 40.0) <= 3 * r.rhs_se
        assert r.lhs < r.rhs

    @pytest.mark.parametrize("kernel", mc.VBE_KERNELS)
    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_single_pair_ratio(self, kernel, p):
        r = mc.vbe_bound_check(kernel, 2, p, 20_000, 9)
        assert r.lhs / r.rhs == pytest.approx(0.25, rel=1e-12)

    def test_margin(self):
        r = mc.vbe_bound_check("normal_product", 10, 1.5, 200_000, 10)
        assert r.margin_in_se > 5

    @pytest.mark.parametrize("kwargs", [
        dict(kernel="normal_product", n=5, p=0.5),
        dict(kernel="normal_product", n=5, p=2.5),
        dict(kernel="normal_product", n=1, p=1.0),
        dict(kernel="cubic", n=5, p=1.0),
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            mc.vbe_bound_check(reps=10, **kwargs)
