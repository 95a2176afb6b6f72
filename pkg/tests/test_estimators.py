import math

import numpy as np
import pytest

import scanmix as sm
from scanmix import estimators as est
from scanmix import kernels as kn
from scanmix.rng import RngStream


class TestSampleMagChain:
    def test_matches_exact_kernel_standard(self):
        p = sm.make_params(6, 2, 0.8)
        K = kn.build_mag_kernel(p)
        finals = est.sample_mag_chain_batch(p, 3, 1, 100_000, RngStream(1))
        counts = np.bincount(finals, minlength=7)
        assert est.chisquare_pvalue(counts, K.row(3)) > 1e-3

    def test_matches_exact_kernel_restricted(self):
        p = sm.make_params(6, 2, 1.5, "restricted")
        K = kn.build_restricted_mag_kernel(p)
        finals = est.sample_mag_chain_batch(p, 4, 1, 100_000, RngStream(2))
        counts = np.bincount(finals - int(K.states[0]), minlength=K.states.shape[0])
        assert est.chisquare_pvalue(counts, K.row(4)) > 1e-3

    def test_beta0_full_resample_binomial(self):
        from scipy.stats import binom

        p = sm.make_params(10, 10, 0.0)
        finals = est.sample_mag_chain_batch(p, 10, 1, 50_000, RngStream(3))
        counts = np.bincount(finals, minlength=11)
        assert est.chisquare_pvalue(counts, binom.pmf(np.arange(11), 10, 0.5)) > 1e-3

    def test_restricted_never_negative(self):
        p = sm.make_params(9, 3, 1.5, "restricted")
        finals = est.sample_mag_chain_batch(p, 5, 40, 2000, RngStream(4))
        assert finals.min() >= 5  # ceil(9/2)

    def test_multi_step_matches_evolved_kernel(self):
        p = sm.make_params(8, 2, 0.9)
        K = kn.build_mag_kernel(p)
        t = 5
        target = kn.evolve(kn.Distribution.point_mass(K.states, 8), K, t)
        finals = est.sample_mag_chain_batch(p, 8, t, 50_000, RngStream(5))
        counts = np.bincount(finals, minlength=9)
        assert est.chisquare_pvalue(counts, target.weights) > 1e-3

    def test_single_chain_wrapper(self):
        p = sm.make_params(12, 3, 0.7)
        out = est.sample_mag_chain(p, 6, 10, RngStream(6))
        assert 0 <= out <= 12

    def test_invalid_m0(self):
        p = sm.make_params(10, 2, 1.5, "restricted")
        with pytest.raises(ValueError):
            est.sample_mag_chain(p, 3, 1, RngStream(7))


class TestTvLowerBound:
    def test_t0_from_all_plus_near_one(self):
        p = sm.make_params(200, 2, 0.5)
        e = est.mc_tv_lower_bound(p, 200, 0, 1_000_000, RngStream(8))
        assert e.value >= 0.99

    def test_large_t_consistent_with_zero(self):
        p = sm.make_params(60, 2, 0.5)
        e = est.mc_tv_lower_bound(p, 60, 2000, 20_000, RngStream(9))
        assert e.value <= 3 * max(e.std_error, 1e-3)

    def test_below_exact_full_chain(self):
        p = sm.make_params(8, 2, 0.8)
        F = kn.full_config_kernel(p)
        pi = kn.gibbs_full_weights(p)
        w = np.zeros(2**8)
        w[-1] = 1.0
        prev = 0
        for t in [0, 1, 2, 4, 6, 9, 13, 18, 25, 34]:
            for _ in range(t - prev):
                w = w @ F.matrix
            prev = t
            d_full = 0.5 * np.abs(w - pi).sum()
            e = est.mc_tv_lower_bound(p, 8, t, 10_000, RngStream(10, t))
            assert e.value <= d_full + 3 * e.std_error

    def test_lower_below_upper(self):
        # sanity ordering of the two d(t) bounds on a shared grid
        p = sm.make_params(40, 2, 0.5)
        gen_lo = RngStream(11)
        uppers = est.coupling_upper_curve(p, [5, 20, 60, 150], 4000, RngStream(12))
        for t, up in zip([5, 20, 60, 150], uppers):
            lo = est.mc_tv_lower_bound(p, 40, t, 4000, gen_lo.child(t))
            combined = 3 * math.hypot(lo.std_error, up.std_error)
            assert lo.value <= up.value + combined


class TestCouplingUpperBound:
    def test_beta0_full_scan_zero(self):
        p = sm.make_params(12, 12, 0.0)
        e = est.mc_coupling_upper_bound(p, 1, 2000, RngStream(13))
        assert e.value == 0.0

    def test_exact_d_below_estimate(self):
        # the uncoalescence probability dominates exact full-chain d(t)
        p = sm.make_params(8, 2, 0.5)
        F = kn.full_config_kernel(p)
        pi = kn.gibbs_full_weights(p)
        w = np.zeros(2**8)
        w[-1] = 1.0
        ests = est.coupling_upper_curve(p, [1, 3, 6, 10, 16, 24], 10_000, RngStream(14))
        prev = 0
        for t, e in zip([1, 3, 6, 10, 16, 24], ests):
            for _ in range(t - prev):
                w = w @ F.matrix
            prev = t
            d_full = 0.5 * np.abs(w - pi).sum()
            assert d_full <= e.value + 3 * max(e.std_error, 1e-3)

    def test_monotone_in_t(self):
        p = sm.make_params(30, 3, 0.6)
        grid = [2, 10, 30, 80, 160]
        ests = est.coupling_upper_curve(p, grid, 4000, RngStream(15))
        for a, b in zip(ests, ests[1:]):
            assert b.value <= a.value + 3 * math.hypot(a.std_error, b.std_error)

    def test_requires_standard_mode(self):
        p = sm.make_params(10, 2, 1.5, "restricted")
        with pytest.raises(ValueError):
            est.mc_coupling_upper_bound(p, 1, 100, RngStream(16))


class TestHittingTimes:
    def test_starts_below_threshold_hit_immediately(self):
        # beta=2, n=400: s* + 1/sqrt(n) exceeds 1, so the all-plus start has
        # already hit
        p = sm.make_params(400, 2, 2.0, "restricted")
        rec = est.hitting_time_tau_star_above(p, 1.0, RngStream(17), t_max=100)
        assert rec.hit and rec.tau == 0

    def test_above_within_theory_scale(self):
        p = sm.make_params(400, 2, 1.5, "restricted")
        bound = int(20 * 400 * math.log(400) / 2)
        taus = est.hitting_times_batch(p, 1.0, "above", 1000, RngStream(18), t_max=bound)
        assert np.mean(taus <= bound) >= 0.95

    def test_above_median_grows_with_n(self):
        from scipy.stats import spearmanr

        medians = []
        for n in [100, 200, 400, 800]:
            p = sm.make_params(n, 2, 1.5, "restricted")
            taus = est.hitting_times_batch(
                p, 1.0, "above", 200, RngStream(19, n), t_max=int(40 * n * math.log(n) / 2)
            )
            medians.append(float(np.median(taus)))
        rho, _ = spearmanr([100, 200, 400, 800], medians)
        assert rho > 0

    def test_below_threshold_nonpositive_hits_at_zero(self):
        p = sm.make_params(100, 1, 1.5, "restricted")
        s_star = est.fixed_point_s_star(1.5)
        rec = est.hitting_time_tau_star_below(
            p, -s_star * math.sqrt(100), RngStream(20), t_max=10
        )
        assert rec.hit and rec.tau == 0

    def test_below_scale_band(self):
        # mean tau_* / (n ln n) within a factor 4 band across sizes
        ratios = []
        for n in [128, 256, 512]:
            p = sm.make_params(n, 1, 1.5, "restricted")
            taus = est.hitting_times_batch(
                p, 0.25, "below", 400, RngStream(21, n), t_max=int(60 * n * math.log(n))
            )
            ratios.append(taus.mean() / (n * math.log(n)))
        assert max(ratios) / min(ratios) <= 4.0

    def test_below_k_doubling_halves(self):
        means = {}
        for k in [1, 2]:
            p = sm.make_params(256, k, 1.5, "restricted")
            taus = est.hitting_times_batch(
                p, 0.25, "below", 400, RngStream(22, k), t_max=int(60 * 256 * math.log(256))
            )
            means[k] = taus.mean()
        assert 1.5 <= means[1] / means[2] <= 3.0

    def test_beta_at_most_one_rejected(self):
        p = sm.make_params(100, 1, 0.9, "restricted")
        with pytest.raises(ValueError):
            est.hitting_time_tau_star_above(p, 1.0, RngStream(23), 10)

    def test_reproducible_records(self):
        p = sm.make_params(128, 2, 1.5, "restricted")
        a = est.hitting_time_tau_star_below(p, 0.5, RngStream(24, 7), t_max=50_000)
        b = est.hitting_time_tau_star_below(p, 0.5, RngStream(24, 7), t_max=50_000)
        assert a == b


class TestFixedPoint:
    def test_residuals(self):
        for beta in [1.2, 1.5, 2.0, 3.0]:
            s = est.fixed_point_s_star(beta)
            assert abs(math.tanh(beta * s) - s) < 1e-12
            assert 0 < s < 1

    def test_beta2_value(self):
        assert est.fixed_point_s_star(2.0) == pytest.approx(0.957504, abs=1e-6)

    def test_near_critical(self):
        assert est.fixed_point_s_star(1.0001) < 0.025

    def test_beta_at_most_one_rejected(self):
        for beta in [0.5, 1.0]:
            with pytest.raises(ValueError):
                est.fixed_point_s_star(beta)


class TestFitPowerLaw:
    def test_identity(self):
        xs = np.array([1.0, 2.0, 4.0, 8.0])
        fit = est.fit_power_law(xs, xs)
        assert fit.exponent == pytest.approx(1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_square(self):
        xs = np.array([1.0, 3.0, 9.0, 27.0])
        fit = est.fit_power_law(xs, xs**2)
        assert fit.exponent == pytest.approx(2.0, abs=1e-12)

    def test_noisy_three_halves(self):
        gen = RngStream(25).generator()
        xs = np.array([10.0, 20, 40, 80, 160, 320])
        ys = 3.0 * xs**1.5 * (1 + 0.01 * gen.standard_normal(xs.shape[0]))
        fit = est.fit_power_law(xs, ys)
        assert fit.exponent == pytest.approx(1.5, abs=0.05)
        assert fit.prefactor == pytest.approx(3.0, rel=0.2)

    def test_errors(self):
        with pytest.raises(ValueError):
            est.fit_power_law([1.0, 2.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            est.fit_power_law([1.0, -2.0, 3.0], [1.0, 2.0, 3.0])


class TestContraction:
    def test_t0_equals_start(self):
        p = sm.make_params(100, 2, 0.5)
        report = est.contraction_test(p, [0], 500, RngStream(26))
        t, mean, se, bound, passed = report.mag_rows[0]
        assert t == 0 and mean == 2.0 and bound == 2.0 and passed

    def test_hamming_and_magnetization_bounds(self):
        p = sm.make_params(500, 5, 0.5)
        report = est.contraction_test(p, [10, 50, 100], 10_000, RngStream(27))
        assert report.hamming_pass
        assert report.hamming_bound == pytest.approx(
            (1 / 0.5) * (1 + (0.5 - 1) * (1 + 0.5 / 500) ** 5), rel=1e-12
        )
        assert report.hamming_bound_linear == pytest.approx(1 - 5 * 0.5 / 500)
        assert report.passed

    def test_requires_high_temperature(self):
        with pytest.raises(ValueError):
            est.contraction_test(sm.make_params(50, 2, 1.0), [1], 10, RngStream(28))


class TestSupermartingaleBound:
    def test_precondition(self):
        with pytest.raises(ValueError):
            est.supermartingale_hitting_bound(1.0, 1.0, 0.01, 10.0)

    def test_value(self):
        b = est.supermartingale_hitting_bound(2.0, 0.1, 0.01, 1000.0)
        assert b == pytest.approx(4 * 2.0 / (0.1 * math.sqrt(1000.0)))

    def test_predicate_on_independent_magnetization_crossing(self):
        # two independent chains started 4/n apart: the signed gap is a
        # non-negative supermartingale until it crosses; its crossing-time
        # tail respects the bound, with the variance floor from the exact
        # kernel at the balanced count
        n, k, beta = 200, 2, 0.5
        p = sm.make_params(n, k, beta)
        K = kn.build_mag_kernel(p)
        _, var_floor = kn.one_step_moments(K, n // 2)
        sigma2 = 2 * var_floor  # independent pair
        B = 4 * k / n
        u = 2000
        w0 = 4 / n
        gen = RngStream(29).generator()
        reps = 400
        crossed_late = 0
        for _ in range(reps):
            m1 = np.array([n // 2 + 1], dtype=np.int64)
            m2 = np.array([n // 2 - 1], dtype=np.int64)
            for t in range(1, u + 1):
                m1 = est._mag_batch_steps(p, m1, 1, gen)
                m2 = est._mag_batch_steps(p, m2, 1, gen)
                if m1[0] <= m2[0]:
                    break
            else:
                crossed_late += 1
        bound = est.supermartingale_hitting_bound(w0, B, sigma2, u)
        se = math.sqrt(max(crossed_late / reps * (1 - crossed_late / reps), 1e-12) / reps)
        assert crossed_late / reps <= bound + 3 * max(se, 1e-3)


class TestClosingStats:
    def test_supermartingale_and_move_freq(self):
        p = sm.make_params(200, 3, 0.5)
        stats = est.closing_supermartingale_stats(p, RngStream(30), n_subupdates=10_000)
        assert stats["mean_increment"] <= 3 * stats["std_error"]
        assert stats["move_frequency"] >= 0.01
        assert stats["subupdates"] == 10_000
