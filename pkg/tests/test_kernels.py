import math

import numpy as np
import pytest

import scanmix as sm
from scanmix import kernels as kn
from scanmix.kernels import Distribution, KernelBudgetError


def power_iteration_stationary(matrix, iters=200_000, tol=1e-14):
    """Independent stationary oracle: repeated multiplication from uniform."""
    size = matrix.shape[0]
    w = np.full(size, 1.0 / size)
    for _ in range(iters):
        nxt = w @ matrix
        nxt /= nxt.sum()
        if np.abs(nxt - w).sum() < tol:
            return nxt
        w = nxt
    return w


class TestBuildMagKernel:
    def test_n2_k1_beta0_row(self):
        K = kn.build_mag_kernel(sm.make_params(2, 1, 0.0))
        assert K.row(2) == pytest.approx([0.0, 0.5, 0.5], abs=1e-15)

    def test_rows_sum_to_one(self):
        for n, k, beta in [(17, 3, 0.7), (40, 8, 1.4), (5, 5, 0.0)]:
            K = kn.build_mag_kernel(sm.make_params(n, k, beta))
            assert np.abs(K.matrix.sum(axis=1) - 1).max() < 1e-12

    def test_support_band(self):
        K = kn.build_mag_kernel(sm.make_params(20, 3, 0.9))
        for m in range(21):
            for mp in range(21):
                if abs(mp - m) > 3:
                    assert K.matrix[m, mp] == 0.0

    def test_flip_symmetry(self):
        K = kn.build_mag_kernel(sm.make_params(11, 4, 1.1))
        n = 11
        for m in range(n + 1):
            for mp in range(n + 1):
                assert K.matrix[m, mp] == pytest.approx(K.matrix[n - m, n - mp], abs=1e-14)

    def test_matches_full_kernel_projection(self):
        p = sm.make_params(6, 2, 0.8)
        lumped = kn.build_mag_kernel(p)
        projected = kn.project_full_kernel(kn.full_config_kernel(p))
        assert np.abs(lumped.matrix - projected.matrix).max() < 1e-12

    def test_budget(self):
        with pytest.raises(KernelBudgetError):
            kn.build_mag_kernel(sm.make_params(4096, 2, 0.5))
        with pytest.raises(KernelBudgetError):
            kn.build_mag_kernel(sm.make_params(2048, 9, 0.5))
        # small-n full scans are cheap and stay inside the work budget
        kn.build_mag_kernel(sm.make_params(12, 12, 0.5))


class TestRestrictedKernel:
    def test_fold_hand_computed_beta0(self):
        # n=4, k=1, beta=0: K(m,m-1)=m/8, K(m,m)=1/2, K(m,m+1)=(4-m)/8
        p = sm.make_params(4, 1, 0.0, "restricted")
        K = kn.build_restricted_mag_kernel(p)
        assert K.states.tolist() == [2, 3, 4]
        # row m=2: fold of (1/4, 1/2, 1/4) at columns 1,2,3
        assert K.row(2) == pytest.approx([0.5, 0.5, 0.0], abs=1e-15)
        # row m=3: standard (0,0,3/8,1/2,1/8) -> folded: m'=2:3/8, 3:1/2+0, 4:1/8
        assert K.row(3) == pytest.approx([3 / 8, 1 / 2, 1 / 8], abs=1e-15)
        assert K.row(4) == pytest.approx([0.0, 0.5, 0.5], abs=1e-15)

    def test_rows_sum_and_states(self):
        for n in [9, 10]:
            p = sm.make_params(n, 3, 1.5, "restricted")
            K = kn.build_restricted_mag_kernel(p)
            assert np.abs(K.matrix.sum(axis=1) - 1).max() < 1e-12
            assert K.states[0] == (n + 1) // 2
            assert 2 * K.states.min() >= n

    def test_requires_restricted_mode(self):
        with pytest.raises(ValueError):
            kn.build_restricted_mag_kernel(sm.make_params(10, 2, 1.5))

    def test_stationary_matches_power_iteration(self):
        p = sm.make_params(24, 2, 1.5, "restricted")
        K = kn.build_restricted_mag_kernel(p)
        mu = kn.stationary_magnetization(p)
        oracle = power_iteration_stationary(K.matrix)
        assert 0.5 * np.abs(mu.weights - oracle).sum() < 1e-10


class TestStationaryMagnetization:
    def test_beta_zero_is_binomial(self):
        from scipy.stats import binom

        mu = kn.stationary_magnetization(sm.make_params(12, 1, 0.0))
        assert mu.weights == pytest.approx(binom.pmf(np.arange(13), 12, 0.5), abs=1e-14)

    def test_n2_beta1_closed_form(self):
        mu = kn.stationary_magnetization(sm.make_params(2, 1, 1.0))
        e = math.e
        assert mu.weights == pytest.approx(np.array([e, 2, e]) / (2 * e + 2), abs=1e-15)

    def test_invariance_under_kernel(self):
        for beta in [0.5, 1.0, 1.5]:
            p = sm.make_params(100, 3, beta)
            mu = kn.stationary_magnetization(p)
            K = kn.build_mag_kernel(p)
            assert 0.5 * np.abs(mu.weights @ K.matrix - mu.weights).sum() < 1e-10

    def test_log_space_no_overflow(self):
        mu = kn.stationary_magnetization(sm.make_params(2000, 1, 1.5))
        assert np.isfinite(mu.weights).all()
        assert mu.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_restricted_fold(self):
        n = 10
        std = kn.stationary_magnetization(sm.make_params(n, 1, 1.5))
        res = kn.stationary_magnetization(sm.make_params(n, 1, 1.5, "restricted"))
        for j, m in enumerate(res.states):
            expected = std.weights[m] if 2 * m == n else std.weights[m] + std.weights[n - m]
            assert res.weights[j] == pytest.approx(expected, rel=1e-12)


class TestFullKernel:
    def test_detailed_balance_single_site(self):
        for beta in [0.0, 0.5, 1.0, 1.7]:
            p = sm.make_params(4, 1, beta)
            F = kn.full_config_kernel(p)
            pi = kn.gibbs_full_weights(p)
            flux = pi[:, None] * F.matrix
            # k=1 averages single-site kernels, each reversible for pi
            assert np.abs(flux - flux.T).max() < 1e-12

    def test_gibbs_invariant_full_scan(self):
        p = sm.make_params(6, 2, 0.9)
        F = kn.full_config_kernel(p)
        pi = kn.gibbs_full_weights(p)
        assert np.abs(pi @ F.matrix - pi).max() < 1e-12

    def test_rows_sum(self):
        F = kn.full_config_kernel(sm.make_params(5, 3, 1.2))
        assert np.abs(F.matrix.sum(axis=1) - 1).max() < 1e-12

    def test_budget(self):
        with pytest.raises(KernelBudgetError):
            kn.full_config_kernel(sm.make_params(11, 2, 0.5))

    def test_lumping_grid(self):
        for n in [4, 6]:
            for k in [1, 2, 3]:
                for beta in [0.0, 1.0]:
                    p = sm.make_params(n, k, beta)
                    lumped = kn.build_mag_kernel(p)
                    proj = kn.project_full_kernel(kn.full_config_kernel(p))
                    assert np.abs(lumped.matrix - proj.matrix).max() < 1e-12


class TestEvolveAndTV:
    def test_t0_identity(self):
        p = sm.make_params(10, 2, 0.5)
        K = kn.build_mag_kernel(p)
        d = Distribution.point_mass(K.states, 10)
        out = kn.evolve(d, K, 0)
        assert np.array_equal(out.weights, d.weights)

    def test_stationary_fixed(self):
        p = sm.make_params(60, 2, 0.8)
        K = kn.build_mag_kernel(p)
        mu = kn.stationary_magnetization(p)
        out = kn.evolve(mu, K, 1000)
        assert kn.tv_distance(out, mu) < 1e-10

    def test_point_mass_full_resample(self):
        from scipy.stats import binom

        p = sm.make_params(9, 9, 0.0)
        K = kn.build_mag_kernel(p)
        out = kn.evolve(Distribution.point_mass(K.states, 9), K, 1)
        assert out.weights == pytest.approx(binom.pmf(np.arange(10), 9, 0.5), abs=1e-13)

    def test_tv_examples(self):
        s = np.arange(2)
        assert kn.tv_distance(Distribution(s, [0.5, 0.5]), Distribution(s, [0.5, 0.5])) == 0.0
        assert kn.tv_distance(Distribution(s, [1.0, 0.0]), Distribution(s, [0.0, 1.0])) == 1.0
        assert kn.tv_distance(Distribution(s, [0.5, 0.5]), Distribution(s, [0.75, 0.25])) == 0.25

    def test_tv_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kn.tv_distance(
                Distribution(np.arange(2), [0.5, 0.5]), Distribution(np.arange(3), [0.4, 0.3, 0.3])
            )

    def test_evolve_dimension_mismatch(self):
        p = sm.make_params(10, 2, 0.5)
        K = kn.build_mag_kernel(p)
        with pytest.raises(ValueError):
            kn.evolve(Distribution(np.arange(3), [0.4, 0.3, 0.3]), K, 1)


class TestDProfile:
    def test_t0_near_one(self):
        for n in [50, 100, 200]:
            p = sm.make_params(n, 2, 0.5)
            profile = kn.exact_d_profile(p, n, [0])
            assert profile[0][1] >= 0.99

    def test_large_t_small(self):
        p = sm.make_params(30, 3, 0.5)
        profile = kn.exact_d_profile(p, 30, [4000])
        assert profile[0][1] < 1e-6

    def test_beta0_full_scan_one_step(self):
        p = sm.make_params(12, 12, 0.0)
        profile = kn.exact_d_profile(p, 12, [0, 1])
        assert profile[1][1] < 1e-14

    def test_nonincreasing_in_practice(self):
        p = sm.make_params(40, 2, 0.8)
        curve = kn.exact_d_curve(p, 40, 600)
        assert np.all(np.diff(curve) <= 1e-9)

    def test_projection_below_full_chain(self):
        # lumping never increases TV: magnetization d(t) <= full-chain d(t)
        p = sm.make_params(8, 2, 0.9)
        F = kn.full_config_kernel(p)
        pi = kn.gibbs_full_weights(p)
        K = kn.build_mag_kernel(p)
        mu = kn.stationary_magnetization(p)
        w_full = np.zeros(2**8)
        w_full[2**8 - 1] = 1.0  # all-plus
        w_mag = Distribution.point_mass(K.states, 8).weights
        for t in range(1, 40):
            w_full = w_full @ F.matrix
            w_mag = w_mag @ K.matrix
            d_full = 0.5 * np.abs(w_full - pi).sum()
            d_mag = 0.5 * np.abs(w_mag - mu.weights).sum()
            assert d_mag <= d_full + 1e-12

    def test_all_plus_extremal_full_chain(self):
        # max over all starts of full-chain d(t) is attained at all-(pm) for
        # every t >= 2; at t = 1 an interior start can exceed it by a few
        # percent, which never touches the d = 1/4 crossing
        for n, k, beta in [(6, 2, 0.8), (8, 2, 0.5), (8, 3, 1.0)]:
            p = sm.make_params(n, k, beta)
            F = kn.full_config_kernel(p)
            pi = kn.gibbs_full_weights(p)
            size = 2**n
            W = F.matrix.copy()
            for t in range(2, 25):
                W = W @ F.matrix
                dvals = 0.5 * np.abs(W - pi).sum(axis=1)
                assert dvals.max() <= max(dvals[size - 1], dvals[0]) + 1e-12

    def test_all_plus_extremal_lumped_chain(self):
        # the magnetization chain's worst start is all-plus at every t >= 1
        # in the regimes the profiles run (beta <= 1 standard)
        for n, k, beta in [(50, 2, 0.5), (64, 3, 1.0)]:
            p = sm.make_params(n, k, beta)
            K = kn.build_mag_kernel(p)
            mu = kn.stationary_magnetization(p)
            W = np.eye(n + 1)
            for t in range(1, 200):
                W = W @ K.matrix
                dvals = 0.5 * np.abs(W - mu.weights).sum(axis=1)
                assert dvals.max() <= max(dvals[-1], dvals[0]) + 1e-12

    def test_restricted_extreme_starts_dominate(self):
        # d(t) maximum over all restricted starts sits at the flattest or the
        # all-plus count
        p = sm.make_params(64, 2, 1.5, "restricted")
        K = kn.build_restricted_mag_kernel(p)
        mu = kn.stationary_magnetization(p)
        W = np.eye(K.states.shape[0])
        for t in range(1, 200):
            W = W @ K.matrix
            dvals = 0.5 * np.abs(W - mu.weights).sum(axis=1)
            assert dvals.max() <= max(dvals[0], dvals[-1]) + 1e-12


class TestMixingTime:
    def test_from_profile(self):
        profile = [(0, 1.0), (1, 0.5), (2, 0.2)]
        assert kn.mixing_time_from_profile(profile, 0.25) == 2
        assert kn.mixing_time_from_profile(profile, 0.6) == 1

    def test_not_bracketed(self):
        with pytest.raises(ValueError):
            kn.mixing_time_from_profile([(0, 1.0), (1, 0.5)], 0.25)

    def test_beta0_full_scan(self):
        p = sm.make_params(10, 10, 0.0)
        assert kn.exact_mixing_time(p) == 1


class TestOneStepMoments:
    def test_mean_zero_at_balanced(self):
        K = kn.build_mag_kernel(sm.make_params(20, 3, 1.2))
        mean, var = kn.one_step_moments(K, 10)
        assert mean == pytest.approx(0.0, abs=1e-14)
        assert var > 0

    def test_drift_bound_grid(self):
        for n in [50, 100]:
            for k in [1, 3, 5]:
                for beta in [0.5, 1.0, 1.5]:
                    p = sm.make_params(n, k, beta)
                    K = kn.build_mag_kernel(p)
                    S = (2 * np.arange(n + 1) - n) / n
                    means = K.matrix @ S
                    target = (1 - k / n) * S + (k / n) * np.tanh(beta * S)
                    bound = (2 * k / n) * math.tanh(beta * 2 * k / n)
                    assert np.abs(means - target).max() <= bound

    def test_variance_band(self):
        from scanmix.constants import VARIANCE_BAND

        lo, hi = VARIANCE_BAND
        for n in [50, 100, 200]:
            for k in [1, 2, 4]:
                for beta in [0.5, 1.0]:
                    K = kn.build_mag_kernel(sm.make_params(n, k, beta))
                    _, var = kn.one_step_moments(K, n // 2)
                    assert lo <= var * n * n / k <= hi


class TestKernelExport:
    def test_round_trip_bit_identical(self, tmp_path):
        p = sm.make_params(15, 3, 0.85)
        K = kn.build_mag_kernel(p)
        path = tmp_path / "kernel.txt"
        kn.save_kernel(K, path)
        K2 = kn.load_kernel(path)
        assert K2.n == K.n and K2.k == K.k and K2.beta == K.beta and K2.mode == K.mode
        assert np.array_equal(K.matrix, K2.matrix)

    def test_round_trip_restricted(self, tmp_path):
        p = sm.make_params(11, 2, 1.4, "restricted")
        K = kn.build_restricted_mag_kernel(p)
        path = tmp_path / "kernel.txt"
        kn.save_kernel(K, path)
        K2 = kn.load_kernel(path)
        assert np.array_equal(K.states, K2.states)
        assert np.array_equal(K.matrix, K2.matrix)

    def test_reject_foreign_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("not a kernel\n")
        with pytest.raises(ValueError):
            kn.load_kernel(path)
