"""Large-n Monte Carlo machinery.

The hot paths are vectorized across replicas:

* a magnetization-only simulator whose per-replica law equals the exact
  lumped kernel (it tracks plus-count, scanned-plus and scanned-total, the
  sufficient statistics of a scan step in progress),
* a shared-draw pair simulator for coupling experiments on full spin arrays,
* a rematched-pair simulator that keeps magnetizations equal and re-pairs
  disagreeing vertices at every step boundary.

Estimators built on top: a conservative total-variation lower bound from
plus-count histograms, a coalescence-probability upper bound, hitting times
of the restricted chain, the positive fixed point of tanh(beta*s) = s, and
log-log power-law fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps
from scipy.optimize import brentq

from .kernels import MagKernel, stationary_magnetization
from .model import Mode, ModelParams, SpinConfig
from .rng import RngStream, as_generator

__all__ = [
    "MagSimState",
    "EstimateWithCI",
    "HittingRecord",
    "PowerLawFit",
    "sample_mag_chain",
    "sample_mag_chain_batch",
    "mc_tv_lower_bound",
    "mc_tv_lower_curve",
    "mc_coupling_upper_bound",
    "coupling_upper_curve",
    "coalescence_times_batch",
    "hitting_time_tau_star_above",
    "hitting_time_tau_star_below",
    "hitting_times_batch",
    "fixed_point_s_star",
    "fit_power_law",
    "contraction_test",
    "ContractionReport",
    "chisquare_pvalue",
    "supermartingale_hitting_bound",
    "closing_supermartingale_stats",
    "GrandPairBatch",
    "RematchedPairBatch",
]


@dataclass
class MagSimState:
    """Sufficient statistics of a scan step in progress: current plus-count,
    scanned vertices currently +1, and scanned total (resets each step)."""

    m: int
    scanned_plus: int = 0
    scanned_total: int = 0

    def check(self, k: int) -> None:
        assert 0 <= self.scanned_plus <= self.scanned_total <= k
        assert self.scanned_plus <= self.m


@dataclass
class EstimateWithCI:
    value: float
    std_error: float
    replicas: int
    seed: int = 0

    def __post_init__(self):
        if self.std_error < 0 or self.replicas < 1:
            raise ValueError("std_error must be >= 0 and replicas >= 1")


@dataclass
class HittingRecord:
    tau: int
    threshold: float
    hit: bool
    t_max: int

    def __post_init__(self):
        if self.hit and self.tau > self.t_max:
            raise ValueError("hit implies tau <= t_max")


def _seed_of(rng) -> int:
    return rng.seed if isinstance(rng, RngStream) else 0


# ---------------------------------------------------------------------------
# Fast magnetization-only chain
# ---------------------------------------------------------------------------

def _mag_batch_steps(params: ModelParams, m: np.ndarray, t: int, gen) -> np.ndarray:
    """Advance a batch of plus-counts t whole steps; exact lumped law."""
    n, k, beta = params.n, params.k, params.beta
    restricted = params.mode is Mode.RESTRICTED
    m = m.astype(np.int64, copy=True)
    R = m.shape[0]
    for _ in range(t):
        a = np.zeros(R, dtype=np.int64)
        for i in range(k):
            sel_plus = gen.random(R) < (m - a) / (n - i)
            s = np.where(sel_plus, 1, -1)
            thr = 0.5 * (1.0 + np.tanh(beta * (2 * m - n - s) / n))
            new_plus = gen.random(R) <= thr
            m += new_plus.astype(np.int64) - sel_plus.astype(np.int64)
            a += new_plus.astype(np.int64)
        if restricted:
            m = np.where(2 * m < n, n - m, m)
    return m


def sample_mag_chain_batch(params: ModelParams, m0: int, t: int, replicas: int, rng) -> np.ndarray:
    """Final plus-counts of `replicas` independent chains started at m0."""
    _validate_m0(params, m0)
    gen = as_generator(rng)
    m = np.full(replicas, int(m0), dtype=np.int64)
    return _mag_batch_steps(params, m, t, gen)


def sample_mag_chain(params: ModelParams, m0: int, t: int, rng) -> int:
    """Final plus-count of one chain; O(t*k) time, O(1) memory."""
    return int(sample_mag_chain_batch(params, m0, t, 1, rng)[0])


def _validate_m0(params: ModelParams, m0: int) -> None:
    if not (0 <= m0 <= params.n):
        raise ValueError(f"m0={m0} outside [0, {params.n}]")
    if params.mode is Mode.RESTRICTED and 2 * m0 < params.n:
        raise ValueError("restricted chain requires a start with S >= 0")


# ---------------------------------------------------------------------------
# TV lower bound
# ---------------------------------------------------------------------------

def _tv_lower_from_counts(mu_weights, counts, replicas, gen, bootstrap_rounds, allowance):
    emp = counts / replicas
    tv_hat = 0.5 * float(np.abs(emp - mu_weights).sum())
    boot = np.empty(bootstrap_rounds)
    for b in range(bootstrap_rounds):
        cb = gen.multinomial(replicas, emp) / replicas
        boot[b] = 0.5 * np.abs(cb - mu_weights).sum()
    return max(0.0, tv_hat - allowance), float(np.std(boot))


def _null_tv_allowance(mu_weights, replicas, gen, bootstrap_rounds):
    """95th percentile of the TV between two independent stationary samples
    of the given replica count."""
    null_tv = np.empty(bootstrap_rounds)
    for b in range(bootstrap_rounds):
        c1 = gen.multinomial(replicas, mu_weights) / replicas
        c2 = gen.multinomial(replicas, mu_weights) / replicas
        null_tv[b] = 0.5 * np.abs(c1 - c2).sum()
    return float(np.percentile(null_tv, 95))


def mc_tv_lower_bound(
    params: ModelParams,
    m0: int,
    t: int,
    replicas: int,
    rng,
    *,
    bootstrap_rounds: int = 100,
) -> EstimateWithCI:
    """Conservative lower bound on d(t) via the plus-count projection.

    Plug-in TV between the empirical time-t histogram and the exact
    stationary projection, minus a null allowance: the 95th percentile of
    the TV between two independent stationary samples of the same replica
    count. The plug-in statistic is upward biased, so the subtraction keeps
    the estimate a statistically conservative lower bound.
    """
    return mc_tv_lower_curve(
        params, m0, [t], replicas, rng, bootstrap_rounds=bootstrap_rounds
    )[0]


def mc_tv_lower_curve(
    params: ModelParams,
    m0: int,
    times,
    replicas: int,
    rng,
    *,
    bootstrap_rounds: int = 100,
) -> list[EstimateWithCI]:
    """TV lower bounds on a whole time grid from one pass of the batch
    simulator; estimates at different times share replicas."""
    times = [int(t) for t in times]
    if any(t < 0 for t in times) or times != sorted(times):
        raise ValueError("times must be a sorted non-negative grid")
    _validate_m0(params, m0)
    gen = as_generator(rng)
    seed = _seed_of(rng)
    mu = stationary_magnetization(params)
    allowance = _null_tv_allowance(mu.weights, replicas, gen, bootstrap_rounds)
    m = np.full(replicas, int(m0), dtype=np.int64)
    offset = int(mu.states[0])
    out = []
    t_now = 0
    for t in times:
        m = _mag_batch_steps(params, m, t - t_now, gen)
        t_now = t
        counts = np.bincount(m - offset, minlength=mu.states.shape[0]).astype(float)
        value, se = _tv_lower_from_counts(
            mu.weights, counts, replicas, gen, bootstrap_rounds, allowance
        )
        out.append(EstimateWithCI(value=value, std_error=se, replicas=replicas, seed=seed))
    return out


# ---------------------------------------------------------------------------
# Shared-draw pair simulator on full spin arrays
# ---------------------------------------------------------------------------

class GrandPairBatch:
    """Batch of coupled pairs sharing scan order and uniforms per replica.

    Starts from given (R, n) spin arrays. The per-replica scan order is a
    partial Fisher-Yates shuffle of a persistent index pool.
    """

    def __init__(self, params: ModelParams, spins_x: np.ndarray, spins_y: np.ndarray):
        if spins_x.shape != spins_y.shape:
            raise ValueError("batch spin arrays must share shape")
        self.params = params
        self.sx = spins_x.astype(np.int8, copy=True)
        self.sy = spins_y.astype(np.int8, copy=True)
        self.R, n = self.sx.shape
        if n != params.n:
            raise ValueError("spin arrays do not match params.n")
        self.mx = (self.sx == 1).sum(axis=1).astype(np.int64)
        self.my = (self.sy == 1).sum(axis=1).astype(np.int64)
        self.pool = np.tile(np.arange(n, dtype=np.int32), (self.R, 1))
        self._rows = np.arange(self.R)

    def step(self, gen) -> None:
        n, k, beta = self.params.n, self.params.k, self.params.beta
        rows = self._rows
        for j in range(k):
            r = gen.integers(j, n, size=self.R)
            pj = self.pool[rows, j].copy()
            self.pool[rows, j] = self.pool[rows, r]
            self.pool[rows, r] = pj
            v = self.pool[:, j].astype(np.int64)
            u = gen.random(self.R)
            for spins, m_name in ((self.sx, "mx"), (self.sy, "my")):
                m = getattr(self, m_name)
                s = spins[rows, v].astype(np.int64)
                thr = 0.5 * (1.0 + np.tanh(beta * (2 * m - n - s) / n))
                new = np.where(u <= thr, 1, -1).astype(np.int8)
                setattr(self, m_name, m + (new == 1).astype(np.int64) - (s == 1).astype(np.int64))
                spins[rows, v] = new

    def hamming(self) -> np.ndarray:
        return (self.sx != self.sy).sum(axis=1)

    def mag_gap(self) -> np.ndarray:
        return np.abs(self.mx - self.my) * 2.0 / self.params.n

    def counts_equal(self) -> np.ndarray:
        return self.mx == self.my


def mc_coupling_upper_bound(params: ModelParams, t: int, replicas: int, rng) -> EstimateWithCI:
    """P[all-plus and all-minus chains uncoalesced at t] under the shared-draw
    coupling, with a binomial standard error; an upper bound on d(t)."""
    return coupling_upper_curve(params, [t], replicas, rng)[0]


def coupling_upper_curve(params: ModelParams, times, replicas: int, rng) -> list[EstimateWithCI]:
    """Uncoalescence probabilities on a whole time grid in one pass."""
    if params.mode is not Mode.STANDARD:
        raise ValueError("the coupling bound runs the standard dynamics")
    times = [int(t) for t in times]
    if any(t < 0 for t in times) or times != sorted(times):
        raise ValueError("times must be a sorted non-negative grid")
    gen = as_generator(rng)
    n = params.n
    batch = GrandPairBatch(
        params,
        np.ones((replicas, n), dtype=np.int8),
        -np.ones((replicas, n), dtype=np.int8),
    )
    seed = _seed_of(rng)
    out = []
    t_now = 0
    for t in times:
        while t_now < t:
            batch.step(gen)
            t_now += 1
        # order preservation makes equal plus-counts equivalent to equality
        p = float(np.mean(~batch.counts_equal()))
        se = math.sqrt(max(p * (1 - p), 1e-300) / replicas)
        out.append(EstimateWithCI(value=p, std_error=se, replicas=replicas, seed=seed))
    return out


def coalescence_times_batch(params: ModelParams, replicas: int, rng, t_max: int) -> np.ndarray:
    """Per-replica first step at which the extreme chains meet; t_max + 1
    marks a timeout."""
    gen = as_generator(rng)
    n = params.n
    batch = GrandPairBatch(
        params,
        np.ones((replicas, n), dtype=np.int8),
        -np.ones((replicas, n), dtype=np.int8),
    )
    taus = np.full(replicas, t_max + 1, dtype=np.int64)
    pending = np.ones(replicas, dtype=bool)
    for t in range(1, t_max + 1):
        batch.step(gen)
        met = batch.counts_equal() & pending
        taus[met] = t
        pending &= ~met
        if not pending.any():
            break
    return taus


# ---------------------------------------------------------------------------
# Rematched-pair simulator
# ---------------------------------------------------------------------------

class RematchedPairBatch:
    """Equal-magnetization pairs updated through a spin rematch each step.

    Matched vertices always carry equal spins, so one plus-count array
    serves both chains and magnetizations stay equal for all time.
    """

    def __init__(self, params: ModelParams, spins_x: np.ndarray, spins_y: np.ndarray):
        self.params = params
        self.sx = spins_x.astype(np.int8, copy=True)
        self.sy = spins_y.astype(np.int8, copy=True)
        self.R, n = self.sx.shape
        mx = (self.sx == 1).sum(axis=1)
        my = (self.sy == 1).sum(axis=1)
        if not np.array_equal(mx, my):
            raise ValueError("rematched pairs require equal magnetizations")
        self.m = mx.astype(np.int64)
        self.pool = np.tile(np.arange(n, dtype=np.int32), (self.R, 1))
        self._rows = np.arange(self.R)
        self.matching = np.tile(np.arange(n, dtype=np.int32), (self.R, 1))

    def rematch(self) -> None:
        """Pair (+,-) disagreements with (-,+) disagreements, rank by rank."""
        n = self.params.n
        pm = (self.sx == 1) & (self.sy == -1)
        mp = (self.sx == -1) & (self.sy == 1)
        matching = np.tile(np.arange(n, dtype=np.int32), (self.R, 1))
        rank_pm = np.cumsum(pm, axis=1)
        rank_mp = np.cumsum(mp, axis=1)
        idx_by_rank_mp = np.zeros((self.R, n), dtype=np.int32)
        r1, c1 = np.nonzero(mp)
        idx_by_rank_mp[r1, rank_mp[r1, c1] - 1] = c1
        idx_by_rank_pm = np.zeros((self.R, n), dtype=np.int32)
        r2, c2 = np.nonzero(pm)
        idx_by_rank_pm[r2, rank_pm[r2, c2] - 1] = c2
        matching[r2, c2] = idx_by_rank_mp[r2, rank_pm[r2, c2] - 1]
        matching[r1, c1] = idx_by_rank_pm[r1, rank_mp[r1, c1] - 1]
        self.matching = matching

    def step(self, gen) -> None:
        n, k, beta = self.params.n, self.params.k, self.params.beta
        rows = self._rows
        for j in range(k):
            r = gen.integers(j, n, size=self.R)
            pj = self.pool[rows, j].copy()
            self.pool[rows, j] = self.pool[rows, r]
            self.pool[rows, r] = pj
            v = self.pool[:, j].astype(np.int64)
            w = self.matching[rows, v].astype(np.int64)
            s = self.sx[rows, v].astype(np.int64)
            thr = 0.5 * (1.0 + np.tanh(beta * (2 * self.m - n - s) / n))
            new = np.where(gen.random(self.R) <= thr, 1, -1).astype(np.int8)
            self.m += (new == 1).astype(np.int64) - (s == 1).astype(np.int64)
            self.sx[rows, v] = new
            self.sy[rows, w] = new

    def hamming(self) -> np.ndarray:
        return (self.sx != self.sy).sum(axis=1)


# ---------------------------------------------------------------------------
# Hitting times of the restricted chain
# ---------------------------------------------------------------------------

def _hitting_setup(params: ModelParams, alpha: float, direction: str):
    if params.mode is not Mode.RESTRICTED:
        raise ValueError("hitting times are defined for the restricted dynamics")
    s_star = fixed_point_s_star(params.beta)
    threshold = s_star + alpha / math.sqrt(params.n)
    if direction == "above":
        m0 = params.n
    elif direction == "below":
        m0 = (params.n + 1) // 2
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return m0, threshold


def hitting_times_batch(
    params: ModelParams, alpha: float, direction: str, replicas: int, rng, t_max: int
) -> np.ndarray:
    """Whole-step hitting times; t_max + 1 marks a timeout.

    direction 'above': start all-plus, hit when S <= s* + alpha/sqrt(n).
    direction 'below': start at the flattest S >= 0 count, hit when
    S >= s* + alpha/sqrt(n).
    """
    m0, threshold = _hitting_setup(params, alpha, direction)
    n = params.n
    gen = as_generator(rng)

    def hit(mvals: np.ndarray) -> np.ndarray:
        s = (2 * mvals - n) / n
        return s <= threshold if direction == "above" else s >= threshold

    taus = np.full(replicas, t_max + 1, dtype=np.int64)
    m = np.full(replicas, m0, dtype=np.int64)
    alive = np.arange(replicas)
    done0 = hit(m)
    taus[done0] = 0
    alive = alive[~done0]
    m = m[~done0]
    for t in range(1, t_max + 1):
        if alive.size == 0:
            break
        m = _mag_batch_steps(params, m, 1, gen)
        h = hit(m)
        taus[alive[h]] = t
        alive = alive[~h]
        m = m[~h]
    return taus


def hitting_time_tau_star_above(params: ModelParams, alpha: float, rng, t_max: int) -> HittingRecord:
    """First whole step at which the all-plus restricted chain drops to
    s* + alpha/sqrt(n)."""
    taus = hitting_times_batch(params, alpha, "above", 1, rng, t_max)
    _, threshold = _hitting_setup(params, alpha, "above")
    tau = int(taus[0])
    hit = tau <= t_max
    return HittingRecord(tau=tau if hit else t_max, threshold=threshold, hit=hit, t_max=t_max)


def hitting_time_tau_star_below(params: ModelParams, alpha: float, rng, t_max: int) -> HittingRecord:
    """First whole step at which the restricted chain started at S ~ 0 climbs
    to s* + alpha/sqrt(n)."""
    taus = hitting_times_batch(params, alpha, "below", 1, rng, t_max)
    _, threshold = _hitting_setup(params, alpha, "below")
    tau = int(taus[0])
    hit = tau <= t_max
    return HittingRecord(tau=tau if hit else t_max, threshold=threshold, hit=hit, t_max=t_max)


# ---------------------------------------------------------------------------
# Fixed point, fits, assorted statistics
# ---------------------------------------------------------------------------

def fixed_point_s_star(beta: float) -> float:
    """Unique positive root of tanh(beta*s) = s, for beta > 1.

    Bracketed root-finding on (0, 1]; the residual is below 1e-12.
    """
    if beta <= 1.0:
        raise ValueError(f"the positive fixed point requires beta > 1, got beta={beta}")

    def f(s):
        return math.tanh(beta * s) - s

    root = brentq(f, 1e-300, 1.0, xtol=1e-16, rtol=8.9e-16, maxiter=200)
    return float(root)


@dataclass
class PowerLawFit:
    exponent: float
    intercept: float  # log-log intercept; prefactor = exp(intercept)
    r_squared: float
    exponent_se: float

    @property
    def prefactor(self) -> float:
        return math.exp(self.intercept)


def fit_power_law(xs, ys) -> PowerLawFit:
    """Least squares on log-log values; needs at least 3 positive points."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d sequences of equal length")
    if x.shape[0] < 3:
        raise ValueError("power-law fit needs at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive inputs")
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, residuals, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    fitted = A @ coef
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    npts = x.shape[0]
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    se = math.sqrt(ss_res / (npts - 2) / sxx) if npts > 2 and sxx > 0 else 0.0
    return PowerLawFit(exponent=slope, intercept=intercept, r_squared=r2, exponent_se=se)


def chisquare_pvalue(counts: np.ndarray, probs: np.ndarray, min_expected: float = 5.0) -> float:
    """Chi-square goodness-of-fit p-value with adjacent-bin merging so every
    expected count reaches min_expected."""
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if counts.shape != probs.shape:
        raise ValueError("counts and probs must align")
    total = counts.sum()
    expected = probs * total
    merged_o, merged_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            merged_o.append(acc_o)
            merged_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        if merged_e:
            merged_o[-1] += acc_o
            merged_e[-1] += acc_e
        else:
            merged_o.append(acc_o)
            merged_e.append(acc_e)
    if len(merged_e) < 2:
        return 1.0
    o = np.array(merged_o)
    e = np.array(merged_e)
    e *= o.sum() / e.sum()
    stat = float(np.sum((o - e) ** 2 / e))
    return float(sps.chi2.sf(stat, df=len(merged_e) - 1))


def supermartingale_hitting_bound(w0: float, max_increment: float, variance_lb: float, u: float) -> float:
    """Tail bound P(tau > u) <= 4*w0 / (sigma*sqrt(u)) for a non-negative
    supermartingale started at w0, increments bounded by max_increment and
    one-step conditional variance at least variance_lb before tau.

    Requires u > 4*max_increment^2 / (3*variance_lb).
    """
    if variance_lb <= 0:
        raise ValueError("variance lower bound must be positive")
    u_min = 4.0 * max_increment**2 / (3.0 * variance_lb)
    if u <= u_min:
        raise ValueError(f"bound needs u > {u_min:.6g}, got u={u}")
    return 4.0 * w0 / (math.sqrt(variance_lb) * math.sqrt(u))


# ---------------------------------------------------------------------------
# Contraction experiments
# ---------------------------------------------------------------------------

@dataclass
class ContractionReport:
    hamming_mean: float
    hamming_se: float
    hamming_bound: float
    hamming_bound_linear: float
    hamming_pass: bool
    mag_rows: list  # (t, mean, se, bound, passed)

    @property
    def passed(self) -> bool:
        return self.hamming_pass and all(r[4] for r in self.mag_rows)


def hamming_contraction_bound(params: ModelParams) -> float:
    """One-step bound for distance-1 starts under the shared-draw coupling:
    (1/beta) * [1 + (beta-1)(1+beta/n)^k]."""
    n, k, beta = params.n, params.k, params.beta
    if beta == 0:
        raise ValueError("the displayed bound needs beta > 0")
    return (1.0 / beta) * (1.0 + (beta - 1.0) * (1.0 + beta / n) ** k)


def contraction_test(params: ModelParams, t_grid, replicas: int, rng) -> ContractionReport:
    """Monte Carlo check of the one-step Hamming contraction (distance-1
    starts) and the magnetization contraction E|S_t - S~_t| <= 2*rho^t with
    rho = 1 - k(1-beta)/n, each at 3 standard errors of slack."""
    if not (0 < params.beta < 1):
        raise ValueError("contraction bounds apply for 0 < beta < 1")
    gen = as_generator(rng)
    n, k, beta = params.n, params.k, params.beta
    rho = 1.0 - k * (1.0 - beta) / n

    # distance-1 starts: balanced configuration vs the same flipped at 0
    base = np.ones(n, dtype=np.int8)
    base[n // 2 :] = -1
    x0 = np.tile(base, (replicas, 1))
    y0 = x0.copy()
    y0[:, 0] = -1
    x0[:, 0] = 1
    batch = GrandPairBatch(params, x0, y0)
    batch.step(gen)
    ham = batch.hamming().astype(float)
    h_mean = float(ham.mean())
    h_se = float(ham.std(ddof=1) / math.sqrt(replicas))
    h_bound = hamming_contraction_bound(params)
    h_bound_lin = rho
    h_pass = h_mean <= min(h_bound, h_bound_lin) + 3 * h_se

    # extreme starts for the magnetization bound
    batch2 = GrandPairBatch(
        params,
        np.ones((replicas, n), dtype=np.int8),
        -np.ones((replicas, n), dtype=np.int8),
    )
    rows = []
    t_now = 0
    for t in sorted(int(t) for t in t_grid):
        while t_now < t:
            batch2.step(gen)
            t_now += 1
        gaps = batch2.mag_gap()
        mean = float(gaps.mean())
        se = float(gaps.std(ddof=1) / math.sqrt(replicas))
        bound = 2.0 * rho**t
        rows.append((t, mean, se, bound, mean <= bound + 3 * se))
    return ContractionReport(
        hamming_mean=h_mean,
        hamming_se=h_se,
        hamming_bound=h_bound,
        hamming_bound_linear=h_bound_lin,
        hamming_pass=h_pass,
        mag_rows=rows,
    )


# ---------------------------------------------------------------------------
# Two-coordinate closing statistics
# ---------------------------------------------------------------------------

def closing_supermartingale_stats(
    params: ModelParams,
    rng,
    n_subupdates: int = 10_000,
    flips_tilde: int | None = None,
    flips_x: int | None = None,
) -> dict:
    """Drive the closing coupling and collect per-sub-update increments of
    R = U(x_tilde) - U(x) during whole steps that begin with R >= k, plus the
    move frequency on states where both chains are interior.

    Fresh pairs are restarted whenever R drops below k at a step boundary.
    """
    from .couplings import ClosingCoupling, CoupledPair

    n, k = params.n, params.k
    if n % 4 != 0:
        raise ValueError("this driver uses a balanced reference; need n % 4 == 0")
    if flips_tilde is None:
        flips_tilde = int(round(n * 0.075))
    if flips_x is None:
        flips_x = int(round(n * 0.225))
    gen = as_generator(rng)

    ref = np.ones(n, dtype=np.int8)
    ref[n // 2 :] = -1
    sigma0 = SpinConfig.from_spins(ref)

    def fresh_pair() -> CoupledPair:
        # flip equally many reference-plus and reference-minus sites so
        # magnetizations agree while agreement counts differ
        def flipped_config(per_class: int) -> SpinConfig:
            s = ref.copy()
            plus_sites = gen.permutation(n // 2)[:per_class]
            minus_sites = n // 2 + gen.permutation(n // 2)[:per_class]
            s[plus_sites] *= -1
            s[minus_sites] *= -1
            return SpinConfig.from_spins(s)

        return CoupledPair.identity(flipped_config(flips_x), flipped_config(flips_tilde))

    increments = []
    interior_moves = 0
    interior_total = 0
    state = ClosingCoupling(params, fresh_pair(), sigma0)
    while len(increments) < n_subupdates:
        if state.r < k:
            state = ClosingCoupling(params, fresh_pair(), sigma0)
            continue
        state.begin_step()
        for _ in range(k):
            interior = state.in_xi1_interior()
            d = state.substep(gen)
            increments.append(d)
            if interior:
                interior_total += 1
                interior_moves += int(d != 0)
    inc = np.asarray(increments[:n_subupdates], dtype=float)
    return {
        "mean_increment": float(inc.mean()),
        "std_error": float(inc.std(ddof=1) / math.sqrt(inc.shape[0])),
        "move_frequency": interior_moves / max(interior_total, 1),
        "interior_subupdates": interior_total,
        "subupdates": int(inc.shape[0]),
    }
