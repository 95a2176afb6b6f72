"""Exact transition kernels of the scan dynamics.

Three kernels are built here:

* the lumped plus-count kernel of one full scan step (any n up to the
  configured budget),
* its folded variant for the restricted dynamics (states with S >= 0),
* the full 2^n configuration kernel for tiny n, used as an oracle.

The lumped kernel is exact because on the complete graph the one-step law of
the plus-count only depends on counts. Within a step, though, already
scanned vertices cannot be selected again, and what matters about them is
their *current* spin: it is excluded from re-selection and it contributes to
the running magnetization. The dynamic program therefore tracks
(sub-update index i, current plus-count, number of scanned vertices that are
currently +1). With a = scanned-plus and i vertices scanned in total, the
available pool holds (m - a) plus and (n - m - (i - a)) minus vertices, which
pins down the selection law; the update law then only needs the selected
vertex's current spin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .model import Mode, ModelParams, update_prob_plus

__all__ = [
    "KernelBudgetError",
    "MagKernel",
    "Distribution",
    "FullKernel",
    "build_mag_kernel",
    "build_restricted_mag_kernel",
    "stationary_magnetization",
    "full_config_kernel",
    "gibbs_full_weights",
    "project_full_kernel",
    "evolve",
    "tv_distance",
    "exact_d_profile",
    "exact_d_curve",
    "exact_mixing_time",
    "mixing_time_from_profile",
    "one_step_moments",
    "distribution_moments",
    "save_kernel",
    "load_kernel",
]

# Default construction budgets; override per call when deliberately exceeding.
# The lumped DP costs ~n*k^3 units; the default work cap corresponds to
# n = 2048 with k = 8.
MAX_LUMPED_N = 2048
MAX_LUMPED_WORK = 2048 * 8**3
MAX_FULL_N = 10
MAX_FULL_SEQUENCES = 200_000


class KernelBudgetError(ValueError):
    """Requested kernel exceeds the configured construction budget."""


@dataclass
class Distribution:
    """Probability weights over an explicit finite index set."""

    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.states.shape != self.weights.shape:
            raise ValueError("states and weights must have equal shape")
        if np.any(self.weights < -1e-15):
            raise ValueError("weights must be non-negative")
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 within 1e-12, got {total}")

    def copy(self) -> "Distribution":
        return Distribution(self.states.copy(), self.weights.copy())

    @classmethod
    def point_mass(cls, states, at) -> "Distribution":
        states = np.asarray(states, dtype=np.int64)
        w = np.zeros(states.shape[0])
        idx = np.flatnonzero(states == at)
        if idx.size != 1:
            raise ValueError(f"state {at} not in index set")
        w[idx[0]] = 1.0
        return cls(states, w)


@dataclass
class MagKernel:
    """Row-stochastic one-full-step kernel of the plus-count chain.

    ``states[i]`` is the plus-count of row/column i; standard kernels carry
    all of 0..n, restricted kernels only the counts with S >= 0. Entries
    vanish outside |m' - m| <= k.
    """

    n: int
    k: int
    beta: float
    mode: Mode
    states: np.ndarray
    matrix: np.ndarray
    _band: np.ndarray | None = field(default=None, repr=False)

    def index_of(self, m: int) -> int:
        i = int(m) - int(self.states[0])
        if not (0 <= i < self.states.shape[0]) or self.states[i] != m:
            raise ValueError(f"plus-count {m} not a state of this kernel")
        return i

    def row(self, m: int) -> np.ndarray:
        return self.matrix[self.index_of(m)]

    def entry(self, m: int, m_prime: int) -> float:
        try:
            j = self.index_of(m_prime)
        except ValueError:
            return 0.0
        return float(self.matrix[self.index_of(m), j])

    def band(self) -> np.ndarray:
        """(len(states), 2k+1) view of the kernel: column j holds the mass
        sent from state index i to state index i + j - k."""
        if self._band is None:
            size = self.states.shape[0]
            k = self.k
            band = np.zeros((size, 2 * k + 1))
            for j in range(2 * k + 1):
                off = j - k
                lo, hi = max(0, -off), min(size, size - off)
                band[lo:hi, j] = self.matrix[np.arange(lo, hi), np.arange(lo, hi) + off]
            self._band = band
        return self._band


@dataclass
class FullKernel:
    """One-full-step kernel over all 2^n configurations (bit v set = spin +1)."""

    n: int
    k: int
    beta: float
    matrix: np.ndarray


def _check_lumped_budget(params: ModelParams, max_n: int, max_work: int) -> None:
    if params.n > max_n or params.n * params.k**3 > max_work:
        raise KernelBudgetError(
            f"lumped kernel budget exceeded: n={params.n} (max {max_n}), "
            f"n*k^3={params.n * params.k**3} (max {max_work})"
        )


def build_mag_kernel(
    params: ModelParams,
    *,
    max_n: int = MAX_LUMPED_N,
    max_work: int = MAX_LUMPED_WORK,
    _include_self_spin: bool = False,
) -> MagKernel:
    """Exact plus-count kernel of one standard scan step.

    Dynamic program over (i, current plus-count, scanned-plus count),
    vectorized over all rows at once; the scan-order randomness is
    integrated out exactly. ``_include_self_spin`` is a fault-injection
    switch for the property suite: it makes the update threshold use the full
    magnetization instead of excluding the updated vertex's own spin.
    """
    _check_lumped_budget(params, max_n, max_work)
    n, k, beta = params.n, params.k, params.beta

    # P[m, o, a]: mass with current plus-count m + o - k and a scanned-plus
    # vertices, starting from plus-count m. Offsets stay inside [0, 2k].
    P = np.zeros((n + 1, 2 * k + 1, k + 1))
    P[:, k, 0] = 1.0

    m0 = np.arange(n + 1)[:, None, None]
    off = np.arange(2 * k + 1)[None, :, None]
    a = np.arange(k + 1)[None, None, :]
    m_cur = m0 + off - k  # broadcasts to (n+1, 2k+1, k+1)

    for i in range(k):
        avail = n - i
        plus_avail = np.clip(m_cur - a, 0, None)
        minus_avail = np.clip((n - m_cur) - (i - a), 0, None)
        p_sel_plus = plus_avail / avail
        p_sel_minus = minus_avail / avail
        if _include_self_spin:
            x_from_plus = (2 * m_cur - n) / n
            x_from_minus = x_from_plus
        else:
            x_from_plus = (2 * m_cur - n - 1) / n
            x_from_minus = (2 * m_cur - n + 1) / n
        t_plus = update_prob_plus(beta, x_from_plus)
        t_minus = update_prob_plus(beta, x_from_minus)

        w_plus = P * p_sel_plus
        w_minus = P * p_sel_minus
        new = np.zeros_like(P)
        # selected +: stays + (a+1), or flips - (count down)
        new[:, :, 1:] += (w_plus * t_plus)[:, :, :-1]
        new[:, :-1, :] += (w_plus * (1.0 - t_plus))[:, 1:, :]
        # selected -: flips + (count up, a+1), or stays -
        new[:, 1:, 1:] += (w_minus * t_minus)[:, :-1, :-1]
        new += w_minus * (1.0 - t_minus)
        P = new

    band = P.sum(axis=2)  # (n+1, 2k+1)
    matrix = np.zeros((n + 1, n + 1))
    for j in range(2 * k + 1):
        offset = j - k
        lo, hi = max(0, -offset), min(n + 1, n + 1 - offset)
        matrix[np.arange(lo, hi), np.arange(lo, hi) + offset] = band[lo:hi, j]
    return MagKernel(
        n=n, k=k, beta=beta, mode=Mode.STANDARD, states=np.arange(n + 1), matrix=matrix
    )


def restricted_states(n: int) -> np.ndarray:
    """Plus-counts with non-negative magnetization."""
    return np.arange((n + 1) // 2, n + 1)


def build_restricted_mag_kernel(
    params: ModelParams,
    *,
    max_n: int = MAX_LUMPED_N,
    max_work: int = MAX_LUMPED_WORK,
) -> MagKernel:
    """Folded plus-count kernel of the restricted dynamics.

    The standard kernel's columns with m' below n/2 are folded onto n - m';
    for even n the boundary column n/2 maps to itself once.
    """
    if params.mode is not Mode.RESTRICTED:
        raise ValueError("restricted kernel requires mode=restricted")
    std = build_mag_kernel(
        ModelParams(params.n, params.k, params.beta, Mode.STANDARD),
        max_n=max_n,
        max_work=max_work,
    )
    n, k = params.n, params.k
    states = restricted_states(n)
    size = states.shape[0]
    matrix = np.zeros((size, size))
    for i, m in enumerate(states):
        row = std.matrix[m]
        for j, mp in enumerate(states):
            if 2 * mp == n:
                matrix[i, j] = row[mp]
            else:
                matrix[i, j] = row[mp] + row[n - mp]
    return MagKernel(
        n=n, k=k, beta=params.beta, mode=Mode.RESTRICTED, states=states, matrix=matrix
    )


def _log_gibbs_counts(n: int, beta: float) -> np.ndarray:
    m = np.arange(n + 1)
    return (
        gammaln(n + 1)
        - gammaln(m + 1)
        - gammaln(n - m + 1)
        + (beta / (2.0 * n)) * (2.0 * m - n) ** 2
    )


def stationary_magnetization(params: ModelParams) -> Distribution:
    """Gibbs measure projected to plus-counts.

    weight(m) proportional to C(n,m) * exp((beta/(2n)) (2m-n)^2), accumulated
    in log space; restricted mode returns the folded measure on the S >= 0
    counts.
    """
    n, beta = params.n, params.beta
    logw = _log_gibbs_counts(n, beta)
    w = np.exp(logw - logsumexp(logw))
    w /= w.sum()
    if params.mode is Mode.STANDARD:
        return Distribution(states=np.arange(n + 1), weights=w)
    states = restricted_states(n)
    folded = np.empty(states.shape[0])
    for j, m in enumerate(states):
        folded[j] = w[m] if 2 * m == n else w[m] + w[n - m]
    folded /= folded.sum()
    return Distribution(states=states, weights=folded)


def _popcounts(n: int) -> np.ndarray:
    idx = np.arange(2**n, dtype=np.uint32)
    counts = np.zeros(2**n, dtype=np.int64)
    for v in range(n):
        counts += (idx >> v) & 1
    return counts


def gibbs_full_weights(params: ModelParams) -> np.ndarray:
    """Gibbs probabilities over all 2^n configurations (unit edge weight 1/n)."""
    n, beta = params.n, params.beta
    if n > MAX_FULL_N:
        raise KernelBudgetError(f"full-space Gibbs weights need n <= {MAX_FULL_N}, got n={n}")
    m = _popcounts(n)
    logw = (beta / (2.0 * n)) * (2.0 * m - n) ** 2
    w = np.exp(logw - logsumexp(logw))
    return w / w.sum()


def _apply_site_kernel(A: np.ndarray, v: int, n: int, beta: float) -> np.ndarray:
    """Right-multiply A by the single-site heat-bath kernel at vertex v.

    The site kernel has two entries per row, so each output column combines
    the two columns of A that differ only in bit v.
    """
    idx = np.arange(2**n)
    flip = idx ^ (1 << v)
    m = _popcounts(n)
    s = np.where((idx >> v) & 1 == 1, 1, -1)
    p_plus = update_prob_plus(beta, (2 * m - n - s) / n)  # P(new spin at v = +1 | state)
    bit_set = ((idx >> v) & 1) == 1
    w_self = np.where(bit_set, p_plus, 1.0 - p_plus)
    w_flip = np.where(bit_set, p_plus[flip], 1.0 - p_plus[flip])
    return A * w_self[None, :] + A[:, flip] * w_flip[None, :]


def full_config_kernel(
    params: ModelParams, *, max_sequences: int = MAX_FULL_SEQUENCES
) -> FullKernel:
    """Exact one-full-step kernel over all 2^n configurations.

    Averages the product of single-site kernels over every ordered k-subset
    of vertices; computed by a dynamic program over scanned subsets, which
    needs sum_j j*C(n,j) site multiplications instead of k * n!/(n-k)!.
    """
    n, k, beta = params.n, params.k, params.beta
    if n > MAX_FULL_N:
        raise KernelBudgetError(f"full kernel needs n <= {MAX_FULL_N}, got n={n}")
    n_sequences = 1
    for j in range(k):
        n_sequences *= n - j
    if n_sequences > max_sequences:
        raise KernelBudgetError(
            f"full kernel needs C(n,k)*k! <= {max_sequences}, got {n_sequences}"
        )

    size = 2**n
    # level[frozenset as bitmask] = sum over orderings of that subset of the
    # product of site kernels, un-normalized.
    level = {0: np.eye(size)}
    for _ in range(k):
        nxt: dict[int, np.ndarray] = {}
        for mask, A in level.items():
            for v in range(n):
                if mask & (1 << v):
                    continue
                B = _apply_site_kernel(A, v, n, beta)
                key = mask | (1 << v)
                if key in nxt:
                    nxt[key] += B
                else:
                    nxt[key] = B
        level = nxt
    total = sum(level.values())
    return FullKernel(n=n, k=k, beta=beta, matrix=total / n_sequences)


def project_full_kernel(full: FullKernel) -> MagKernel:
    """Lump the full kernel to plus-counts (rows averaged within a count class)."""
    n = full.n
    counts = _popcounts(n)
    size = n + 1
    matrix = np.zeros((size, size))
    for m in range(size):
        rows = np.flatnonzero(counts == m)
        block = full.matrix[rows]  # identical rows up to permutation symmetry
        col = np.zeros((rows.shape[0], size))
        for mp in range(size):
            col[:, mp] = block[:, counts == mp].sum(axis=1)
        matrix[m] = col.mean(axis=0)
    return MagKernel(
        n=n, k=full.k, beta=full.beta, mode=Mode.STANDARD, states=np.arange(size), matrix=matrix
    )


def evolve(dist: Distribution, kernel: MagKernel, t: int) -> Distribution:
    """dist . K^t by banded vector-matrix products, renormalized each step."""
    if dist.states.shape != kernel.states.shape or not np.array_equal(dist.states, kernel.states):
        raise ValueError("distribution and kernel index sets differ")
    if t < 0:
        raise ValueError("t must be a non-negative integer")
    w = dist.weights.copy()
    band = kernel.band()
    k = kernel.k
    for _ in range(t):
        w = _band_step(w, band, k)
    return Distribution(states=kernel.states.copy(), weights=w)


def _band_step(w: np.ndarray, band: np.ndarray, k: int) -> np.ndarray:
    size = w.shape[0]
    out = np.zeros(size)
    for j in range(2 * k + 1):
        off = j - k
        lo, hi = max(0, -off), min(size, size - off)
        out[lo + off : hi + off] += w[lo:hi] * band[lo:hi, j]
    total = out.sum()
    return out / total


def tv_distance(d1: Distribution, d2: Distribution) -> float:
    """Half the L1 distance between two distributions on the same index set."""
    if d1.states.shape != d2.states.shape or not np.array_equal(d1.states, d2.states):
        raise ValueError("total variation needs a common index set")
    return 0.5 * float(np.abs(d1.weights - d2.weights).sum())


def exact_d_curve(
    params: ModelParams,
    m0: int,
    t_max: int,
    kernel: MagKernel | None = None,
    stationary: Distribution | None = None,
) -> np.ndarray:
    """d(t) for t = 0..t_max from the single start m0, one banded step at a time."""
    if kernel is None:
        kernel = _kernel_for(params)
    if stationary is None:
        stationary = stationary_magnetization(params)
    mu = stationary.weights
    band = kernel.band()
    k = kernel.k
    w = Distribution.point_mass(kernel.states, m0).weights
    out = np.empty(t_max + 1)
    out[0] = 0.5 * np.abs(w - mu).sum()
    for t in range(1, t_max + 1):
        w = _band_step(w, band, k)
        out[t] = 0.5 * np.abs(w - mu).sum()
    return out


def _kernel_for(params: ModelParams, **kwargs) -> MagKernel:
    if params.mode is Mode.RESTRICTED:
        return build_restricted_mag_kernel(params, **kwargs)
    return build_mag_kernel(params, **kwargs)


def exact_d_profile(
    params: ModelParams,
    m0: int,
    times,
    kernel: MagKernel | None = None,
) -> list[tuple[int, float]]:
    """(t, d(t)) on the given time grid for the lumped chain from start m0.

    Callers use m0 = n (the all-plus configuration), extremal by
    monotonicity of the shared-uniform coupling.
    """
    times = sorted(int(t) for t in times)
    if times and times[0] < 0:
        raise ValueError("times must be non-negative")
    if kernel is None:
        kernel = _kernel_for(params)
    stationary = stationary_magnetization(params)
    curve = exact_d_curve(params, m0, times[-1] if times else 0, kernel, stationary)
    return [(t, float(curve[t])) for t in times]


def mixing_time_from_profile(profile, eps: float = 0.25) -> int:
    """Smallest listed t with d(t) <= eps; raises if the profile never crosses."""
    for t, d in sorted(profile):
        if d <= eps:
            return int(t)
    raise ValueError(f"profile does not bracket the d <= {eps} crossing")


def exact_mixing_time(
    params: ModelParams,
    eps: float = 0.25,
    m0s=None,
    t_cap: int | None = None,
    kernel: MagKernel | None = None,
) -> int:
    """First t at which max over the given starts of d(t) drops to eps.

    Defaults to the extremal starts: all-plus for the standard chain, and
    both all-plus and the flattest S >= 0 count for the restricted chain.
    """
    if kernel is None:
        kernel = _kernel_for(params)
    stationary = stationary_magnetization(params)
    mu = stationary.weights
    if m0s is None:
        if params.mode is Mode.RESTRICTED:
            m0s = [int(kernel.states[0]), params.n]
        else:
            m0s = [params.n]
    if t_cap is None:
        t_cap = 1000 * params.n * max(1, int(np.log(params.n) + 1))
    band = kernel.band()
    k = kernel.k
    ws = [Distribution.point_mass(kernel.states, m0).weights for m0 in m0s]
    t = 0
    while True:
        d = max(0.5 * np.abs(w - mu).sum() for w in ws)
        if d <= eps:
            return t
        t += 1
        if t > t_cap:
            raise RuntimeError(f"mixing time exceeded cap {t_cap}")
        ws = [_band_step(w, band, k) for w in ws]


def one_step_moments(kernel: MagKernel, m: int) -> tuple[float, float]:
    """Exact conditional mean and variance of the post-step magnetization
    given the pre-step plus-count m."""
    row = kernel.row(m)
    s = (2.0 * kernel.states - kernel.n) / kernel.n
    mean = float(row @ s)
    var = float(row @ s**2) - mean**2
    return mean, max(var, 0.0)


def distribution_moments(dist: Distribution, n: int) -> tuple[float, float]:
    """Mean and variance of the magnetization under a plus-count distribution."""
    s = (2.0 * dist.states - n) / n
    mean = float(dist.weights @ s)
    var = float(dist.weights @ s**2) - mean**2
    return mean, max(var, 0.0)


def save_kernel(kernel: MagKernel, path) -> None:
    """Portable text export: a header line plus one 'm m_prime value' triple
    per stored entry, 17 significant digits."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("scanmix-kernel v1\n")
        fh.write(
            f"n={kernel.n} k={kernel.k} beta={kernel.beta:.17g} mode={kernel.mode.value}\n"
        )
        for i, m in enumerate(kernel.states):
            row = kernel.matrix[i]
            nz = np.flatnonzero(row)
            for j in nz:
                fh.write(f"{m} {kernel.states[j]} {row[j]:.17g}\n")


def load_kernel(path) -> MagKernel:
    with open(path, "r", encoding="ascii") as fh:
        magic = fh.readline().strip()
        if magic != "scanmix-kernel v1":
            raise ValueError(f"not a kernel file: header {magic!r}")
        header = dict(item.split("=", 1) for item in fh.readline().split())
        n, k = int(header["n"]), int(header["k"])
        beta, mode = float(header["beta"]), Mode(header["mode"])
        states = restricted_states(n) if mode is Mode.RESTRICTED else np.arange(n + 1)
        size = states.shape[0]
        lookup = {int(m): i for i, m in enumerate(states)}
        matrix = np.zeros((size, size))
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            m, mp, v = int(parts[0]), int(parts[1]), float(parts[2])
            matrix[lookup[m], lookup[mp]] = v
    return MagKernel(n=n, k=k, beta=beta, mode=mode, states=states, matrix=matrix)
