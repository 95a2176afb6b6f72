"""Model parameters, spin configurations, and the randomized scan update.

The chain lives on {-1,+1}^n over the complete graph. One time step picks k
distinct vertices uniformly at random, orders them uniformly, and updates
them one by one: the new spin at v is +1 with probability
``(1 + tanh(beta * x)) / 2`` where x is the average spin of the other n-1
vertices, i.e. ``S(sigma) - sigma(v)/n``. The restricted variant (used for
beta > 1) globally flips any proposed state with negative magnetization.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import as_generator

__all__ = [
    "Mode",
    "ModelParams",
    "SpinConfig",
    "ScanOrder",
    "IntermediateTrace",
    "make_params",
    "magnetization",
    "update_prob_plus",
    "single_site_update",
    "sample_scan_order",
    "scan_apply",
    "scan_step",
    "restricted_scan_step",
    "flipped",
]


class Mode(str, Enum):
    STANDARD = "standard"
    RESTRICTED = "restricted"


@dataclass(frozen=True)
class ModelParams:
    """Vertex count n, scan width k, inverse temperature beta, dynamics mode.

    ``warn_restricted_beta`` is set when restricted mode is requested with
    beta <= 1; the combination is accepted but the folding is only meaningful
    in the low temperature regime.
    """

    n: int
    k: int
    beta: float
    mode: Mode = Mode.STANDARD
    warn_restricted_beta: bool = False


def make_params(n: int, k: int, beta: float, mode: str | Mode = Mode.STANDARD) -> ModelParams:
    """Validate and build ModelParams.

    Raises ValueError for n < 2, k outside [1, n], or beta < 0.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if k > n:
        raise ValueError(f"k exceeds n: k={k}, n={n}")
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be a finite non-negative real, got {beta!r}")
    mode = Mode(mode)
    warn = mode is Mode.RESTRICTED and beta <= 1.0
    return ModelParams(n=int(n), k=int(k), beta=beta, mode=mode, warn_restricted_beta=warn)


@dataclass
class SpinConfig:
    """A configuration sigma in {-1,+1}^n with a cached count of +1 spins."""

    spins: np.ndarray
    plus_count: int

    @classmethod
    def from_spins(cls, spins) -> "SpinConfig":
        arr = np.asarray(spins, dtype=np.int8)
        if arr.ndim != 1 or not np.all(np.abs(arr) == 1):
            raise ValueError("spins must be a 1-d sequence of -1/+1 values")
        return cls(spins=arr, plus_count=int(np.sum(arr == 1)))

    @classmethod
    def all_plus(cls, n: int) -> "SpinConfig":
        return cls(spins=np.ones(n, dtype=np.int8), plus_count=n)

    @classmethod
    def all_minus(cls, n: int) -> "SpinConfig":
        return cls(spins=-np.ones(n, dtype=np.int8), plus_count=0)

    @classmethod
    def random(cls, n: int, rng) -> "SpinConfig":
        gen = as_generator(rng)
        spins = np.where(gen.random(n) < 0.5, 1, -1).astype(np.int8)
        return cls(spins=spins, plus_count=int(np.sum(spins == 1)))

    @property
    def n(self) -> int:
        return self.spins.shape[0]

    def copy(self) -> "SpinConfig":
        return SpinConfig(spins=self.spins.copy(), plus_count=self.plus_count)

    def check(self) -> None:
        assert self.plus_count == int(np.sum(self.spins == 1)), "plus_count cache out of sync"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpinConfig):
            return NotImplemented
        return self.plus_count == other.plus_count and np.array_equal(self.spins, other.spins)


@dataclass(frozen=True)
class ScanOrder:
    """An ordered k-subset of [0, n): the update permutation of one step.

    The prefix of length i is the set of vertices that are no longer
    available after the i-th sub-update of the step.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.int64)
        object.__setattr__(self, "vertices", v)
        if len(np.unique(v)) != v.shape[0]:
            raise ValueError("scan order must contain distinct vertices")

    @property
    def k(self) -> int:
        return self.vertices.shape[0]


@dataclass(frozen=True)
class IntermediateTrace:
    """Plus-counts after each sub-update of one scan step.

    ``states`` has k+1 entries; states[0] is the pre-step plus-count and
    consecutive entries differ by at most 1. For the restricted step the
    trace records the unfolded candidate path, so the final output count is
    max(states[k], n - states[k]).
    """

    states: np.ndarray
    order: ScanOrder


def magnetization(config: SpinConfig) -> float:
    """Average spin S(sigma) = (2 * plus_count - n) / n, in [-1, 1]."""
    n = config.n
    return (2 * config.plus_count - n) / n


def update_prob_plus(beta: float, x: float):
    """Probability (1 + tanh(beta*x)) / 2 that an updated spin becomes +1.

    Accepts scalars or arrays; satisfies p(x) + p(-x) = 1 and is
    nondecreasing in x for beta >= 0.
    """
    return 0.5 * (1.0 + np.tanh(beta * x))


def _threshold(beta: float, n: int, plus_count: int, spin_v: int) -> float:
    # x = S(sigma) - sigma(v)/n via the exact integer numerator 2m - n - s
    return update_prob_plus(beta, (2 * plus_count - n - spin_v) / n)


def single_site_update(params: ModelParams, config: SpinConfig, v: int, u: float) -> SpinConfig:
    """Update the spin at vertex v using the unit uniform u.

    The new spin is +1 iff u <= p_plus(S(sigma) - sigma(v)/n); ties go to +1.
    All other spins are unchanged.
    """
    n = params.n
    if not (0 <= v < n):
        raise ValueError(f"vertex index {v} out of range [0, {n})")
    out = config.copy()
    s = int(out.spins[v])
    new = 1 if u <= _threshold(params.beta, n, out.plus_count, s) else -1
    if new != s:
        out.spins[v] = new
        out.plus_count += (new - s) // 2
    return out


def sample_scan_order(params: ModelParams, rng) -> ScanOrder:
    """Uniform ordered k-subset of [0, n).

    Partial Fisher-Yates shuffle of an index array: consumes exactly k
    bounded-range integer draws.
    """
    gen = as_generator(rng)
    n, k = params.n, params.k
    pool = np.arange(n, dtype=np.int64)
    for j in range(k):
        r = int(gen.integers(j, n))
        pool[j], pool[r] = pool[r], pool[j]
    return ScanOrder(vertices=pool[:k].copy())


def scan_apply(
    params: ModelParams, config: SpinConfig, order: ScanOrder, uniforms: np.ndarray
) -> tuple[SpinConfig, IntermediateTrace]:
    """Deterministic core of one scan step: update along ``order`` using the
    given k uniforms. Shared by the plain step and by every coupling that
    reuses one draw across chains."""
    n, beta = params.n, params.beta
    k = order.k
    uniforms = np.asarray(uniforms, dtype=np.float64)
    if uniforms.shape != (k,):
        raise ValueError(f"expected {k} uniforms, got shape {uniforms.shape}")
    out = config.copy()
    states = np.empty(k + 1, dtype=np.int64)
    states[0] = out.plus_count
    spins = out.spins
    m = out.plus_count
    for i in range(k):
        v = order.vertices[i]
        s = int(spins[v])
        new = 1 if uniforms[i] <= _threshold(beta, n, m, s) else -1
        if new != s:
            spins[v] = new
            m += (new - s) // 2
        states[i + 1] = m
    out.plus_count = m
    return out, IntermediateTrace(states=states, order=order)


def scan_step(params: ModelParams, config: SpinConfig, rng) -> tuple[SpinConfig, IntermediateTrace]:
    """One step of the standard dynamics: sample a scan order and k uniforms,
    then update sequentially."""
    gen = as_generator(rng)
    order = sample_scan_order(params, gen)
    uniforms = gen.random(params.k)
    return scan_apply(params, config, order, uniforms)


def flipped(config: SpinConfig) -> SpinConfig:
    """The globally spin-reversed configuration."""
    return SpinConfig(spins=(-config.spins).astype(np.int8), plus_count=config.n - config.plus_count)


def restricted_scan_step(
    params: ModelParams, config: SpinConfig, rng
) -> tuple[SpinConfig, IntermediateTrace]:
    """One step of the restricted dynamics.

    Requires S(config) >= 0. Generates the standard candidate; if the
    candidate magnetization is negative the whole candidate is negated, so
    the output always has S >= 0. The trace keeps the unfolded candidate
    path.
    """
    if params.mode is not Mode.RESTRICTED:
        raise ValueError("restricted_scan_step requires mode=restricted")
    if 2 * config.plus_count < params.n:
        raise ValueError("restricted dynamics requires a starting state with S >= 0")
    candidate, trace = scan_step(params, config, rng)
    if 2 * candidate.plus_count < params.n:
        candidate = flipped(candidate)
    return candidate, trace
