"""Coupling constructions for pairs (and families) of scan-dynamics chains.

Three named couplings are provided:

* grand/monotone: every chain shares one scan order and one uniform per
  sub-update; coordinatewise order between comparable starts is preserved.
* rematched monotone: for two chains with equal magnetization, vertices are
  re-paired by current spin before each step and matched pairs update
  together, so magnetizations stay equal and the positional disagreement
  count is a supermartingale.
* two-coordinate closing: for equal-magnetization chains with an agreement
  gap R measured against a reference configuration, the second chain updates
  a uniformly chosen available vertex of the same current spin class as the
  first chain's selection, sharing the new spin. R then has non-positive
  drift while it stays at least k.

When a rule's precondition breaks mid-step the pair finishes the step with
independent updates and the event is counted in the returned stats.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import (
    Mode,
    ModelParams,
    ScanOrder,
    SpinConfig,
    magnetization,
    sample_scan_order,
    scan_apply,
    update_prob_plus,
)
from .rng import as_generator

__all__ = [
    "Rule",
    "CoupledPair",
    "CouplingStats",
    "TwoCoordState",
    "hamming",
    "grand_coupling_step",
    "monotone_pair_step",
    "rematch_by_spin",
    "rematched_monotone_step",
    "two_coordinate",
    "ClosingCoupling",
    "two_coord_closing_step",
    "coalescence_time",
    "pair_stats",
]


class Rule(str, Enum):
    GRAND_MONOTONE = "grand_monotone"
    REMATCHED_MONOTONE = "rematched_monotone"
    INDEPENDENT = "independent"
    TWO_COORD_CLOSING = "two_coord_closing"


@dataclass
class CoupledPair:
    """Two configurations plus a vertex matching.

    ``matching[v]`` is the vertex of x_tilde paired with vertex v of x; the
    matching is a permutation (identity unless a rematch has been applied).
    """

    x: SpinConfig
    x_tilde: SpinConfig
    matching: np.ndarray
    rule: Rule = Rule.GRAND_MONOTONE

    @classmethod
    def identity(cls, x: SpinConfig, x_tilde: SpinConfig, rule: Rule = Rule.GRAND_MONOTONE):
        if x.n != x_tilde.n:
            raise ValueError("configurations must share n")
        return cls(x=x, x_tilde=x_tilde, matching=np.arange(x.n, dtype=np.int64), rule=rule)

    def check_matching(self) -> None:
        m = np.asarray(self.matching)
        assert np.array_equal(np.sort(m), np.arange(self.x.n)), "matching is not a bijection"


@dataclass
class CouplingStats:
    """Per-step observables of a coupled pair.

    ``hamming`` is the positional disagreement count, ``mag_gap`` the
    absolute magnetization difference, ``r_value`` the agreement gap
    U(x_tilde) - U(x) against a reference configuration (0 when no reference
    is in play), and ``stop_events`` counts mid-step falls back to
    independent updates.
    """

    hamming: int
    mag_gap: float
    r_value: int
    coalesced: bool
    step: int
    stop_events: int = 0


def hamming(x: SpinConfig, x_tilde: SpinConfig, matching=None) -> int:
    """Number of pairs (v, matching[v]) with differing spins; identity
    matching compares positions directly."""
    if x.n != x_tilde.n:
        raise ValueError("configurations must share n")
    if matching is None:
        return int(np.sum(x.spins != x_tilde.spins))
    matching = np.asarray(matching, dtype=np.int64)
    if matching.shape != (x.n,):
        raise ValueError("matching must be a permutation of [0, n)")
    return int(np.sum(x.spins != x_tilde.spins[matching]))


def pair_stats(
    pair: CoupledPair, step: int, reference: SpinConfig | None = None, stop_events: int = 0
) -> CouplingStats:
    ham = hamming(pair.x, pair.x_tilde)
    r = 0
    if reference is not None:
        r = two_coordinate(reference, pair.x_tilde).u - two_coordinate(reference, pair.x).u
    return CouplingStats(
        hamming=ham,
        mag_gap=abs(magnetization(pair.x) - magnetization(pair.x_tilde)),
        r_value=int(r),
        coalesced=ham == 0,
        step=step,
        stop_events=stop_events,
    )


def grand_coupling_step(params: ModelParams, configs, rng) -> list[SpinConfig]:
    """Advance every configuration one step with one shared scan order and
    shared per-sub-update uniforms; each coordinate keeps the scan_step law."""
    gen = as_generator(rng)
    order = sample_scan_order(params, gen)
    uniforms = gen.random(params.k)
    return [scan_apply(params, c, order, uniforms)[0] for c in configs]


def monotone_pair_step(
    params: ModelParams, pair: CoupledPair, rng, step: int = 0
) -> tuple[CoupledPair, CouplingStats]:
    """Shared-draw update of a pair through its matching.

    With the identity matching this is the two-chain projection of the grand
    coupling; with a spin rematch it is the magnetization-preserving coupling.
    """
    gen = as_generator(rng)
    order = sample_scan_order(params, gen)
    uniforms = gen.random(params.k)
    x, _ = scan_apply(params, pair.x, order, uniforms)
    tilde_order = ScanOrder(vertices=pair.matching[order.vertices])
    x_tilde, _ = scan_apply(params, pair.x_tilde, tilde_order, uniforms)
    out = CoupledPair(x=x, x_tilde=x_tilde, matching=pair.matching, rule=pair.rule)
    return out, pair_stats(out, step)


def independent_pair_step(
    params: ModelParams, pair: CoupledPair, rng, step: int = 0
) -> tuple[CoupledPair, CouplingStats]:
    gen = as_generator(rng)
    from .model import scan_step

    x, _ = scan_step(params, pair.x, gen)
    x_tilde, _ = scan_step(params, pair.x_tilde, gen)
    out = CoupledPair(x=x, x_tilde=x_tilde, matching=pair.matching, rule=Rule.INDEPENDENT)
    return out, pair_stats(out, step)


def rematch_by_spin(pair: CoupledPair, reference: SpinConfig | None = None) -> CoupledPair:
    """Re-pair vertices so that matched spins agree.

    Requires equal magnetizations. Agreeing positions are matched to
    themselves; the (+,-) positional disagreements are paired with the
    (-,+) ones (an involution), both sides taken in ascending index order.
    With a reference configuration, each spin class is additionally split by
    the reference's sign and same-class vertices are paired first; the
    leftovers cross classes, which makes the agreement gap R non-increasing
    under the subsequent matched update.
    """
    x, xt = pair.x, pair.x_tilde
    if x.plus_count != xt.plus_count:
        raise ValueError("rematch_by_spin requires equal magnetizations")
    n = x.n
    matching = np.arange(n, dtype=np.int64)
    if reference is None:
        plus_minus = np.flatnonzero((x.spins == 1) & (xt.spins == -1))
        minus_plus = np.flatnonzero((x.spins == -1) & (xt.spins == 1))
        matching[plus_minus] = minus_plus
        matching[minus_plus] = plus_minus
    else:
        if reference.n != n:
            raise ValueError("reference must share n")
        matching = np.empty(n, dtype=np.int64)
        for spin in (1, -1):
            for ref_sign in (1, -1):
                x_cls = np.flatnonzero((x.spins == spin) & (reference.spins == ref_sign))
                t_cls = np.flatnonzero((xt.spins == spin) & (reference.spins == ref_sign))
                shared = min(x_cls.size, t_cls.size)
                matching[x_cls[:shared]] = t_cls[:shared]
                if x_cls.size > shared:
                    # leftover pairs cross to the other reference class
                    t_other = np.flatnonzero(
                        (xt.spins == spin) & (reference.spins == -ref_sign)
                    )
                    extra = x_cls.size - shared
                    matching[x_cls[shared:]] = t_other[-extra:]
        assert np.array_equal(np.sort(matching), np.arange(n)), "rematch produced a non-bijection"
    return CoupledPair(x=x, x_tilde=xt, matching=matching, rule=Rule.REMATCHED_MONOTONE)


def rematched_monotone_step(
    params: ModelParams, pair: CoupledPair, rng, step: int = 0, reference: SpinConfig | None = None
) -> tuple[CoupledPair, CouplingStats]:
    """One matched update of a spin-rematched pair.

    Matched vertices carry equal spins, so the shared uniform gives both
    chains the identical new spin: magnetizations remain equal for the whole
    step and the disagreement count has non-positive drift.
    """
    if pair.x.plus_count != pair.x_tilde.plus_count:
        raise ValueError("rematched_monotone_step requires equal magnetizations")
    if np.any(pair.x.spins != pair.x_tilde.spins[pair.matching]):
        raise ValueError("matching does not pair equal spins; apply rematch_by_spin first")
    out, stats = monotone_pair_step(params, pair, rng, step)
    out.rule = Rule.REMATCHED_MONOTONE
    if reference is not None:
        stats = pair_stats(out, step, reference=reference)
    return out, stats


@dataclass(frozen=True)
class TwoCoordState:
    """Agreement counts against a reference: u on its plus sites, v on its
    minus sites, with u0 + v0 = n."""

    u: int
    v: int
    u0: int
    v0: int

    def __post_init__(self):
        if not (0 <= self.u <= self.u0 and 0 <= self.v <= self.v0):
            raise ValueError("two-coordinate counts out of range")


def two_coordinate(sigma0: SpinConfig, sigma: SpinConfig) -> TwoCoordState:
    """Counts of agreements with sigma0 on its plus and minus vertex sets."""
    if sigma0.n != sigma.n:
        raise ValueError("configurations must share n")
    ref_plus = sigma0.spins == 1
    u = int(np.sum(ref_plus & (sigma.spins == 1)))
    v = int(np.sum(~ref_plus & (sigma.spins == -1)))
    return TwoCoordState(u=u, v=v, u0=int(np.sum(ref_plus)), v0=int(np.sum(~ref_plus)))


class ClosingCoupling:
    """Stateful driver of the two-coordinate closing coupling.

    Tracks both chains' spins, per-chain availability within the current
    step, the shared plus-count, and the agreement counts against the
    reference. ``substep`` performs one shared sub-update and returns the
    change of R = U(x_tilde) - U(x).
    """

    def __init__(self, params: ModelParams, pair: CoupledPair, reference: SpinConfig):
        if pair.x.plus_count != pair.x_tilde.plus_count:
            raise ValueError("closing coupling requires equal magnetizations")
        self.params = params
        self.n = params.n
        self.spins_x = pair.x.spins.copy()
        self.spins_y = pair.x_tilde.spins.copy()
        self.ref_plus = reference.spins == 1
        self.u0 = int(np.sum(self.ref_plus))
        self.v0 = self.n - self.u0
        self.m = pair.x.plus_count
        self.avail_x = np.ones(self.n, dtype=bool)
        self.avail_y = np.ones(self.n, dtype=bool)
        self.sub_index = 0
        self.stop_events = 0
        self._recount()

    def _recount(self):
        self.U_x = int(np.sum(self.ref_plus & (self.spins_x == 1)))
        self.U_y = int(np.sum(self.ref_plus & (self.spins_y == 1)))
        self.V_x = int(np.sum(~self.ref_plus & (self.spins_x == -1)))
        self.V_y = int(np.sum(~self.ref_plus & (self.spins_y == -1)))

    @property
    def r(self) -> int:
        return self.U_y - self.U_x

    def in_xi1_interior(self) -> bool:
        bound = self.n / 16.0
        vals = [
            self.U_x, self.u0 - self.U_x, self.V_x, self.v0 - self.V_x,
            self.U_y, self.u0 - self.U_y, self.V_y, self.v0 - self.V_y,
        ]
        return min(vals) >= bound

    def begin_step(self):
        self.avail_x[:] = True
        self.avail_y[:] = True
        self.sub_index = 0

    def substep(self, rng) -> int:
        """One shared sub-update; returns the increment of R."""
        gen = as_generator(rng)
        n, beta = self.n, self.params.beta
        cand_x = np.flatnonzero(self.avail_x)
        v = int(cand_x[gen.integers(cand_x.size)])
        s = int(self.spins_x[v])
        new = 1 if gen.random() <= update_prob_plus(beta, (2 * self.m - n - s) / n) else -1

        cand_y = np.flatnonzero(self.avail_y & (self.spins_y == s))
        r_before = self.r
        if cand_y.size == 0:
            # Degenerate fallback: update the second chain independently.
            self.stop_events += 1
            cand_y_all = np.flatnonzero(self.avail_y)
            w = int(cand_y_all[gen.integers(cand_y_all.size)])
            sw = int(self.spins_y[w])
            my = int(np.sum(self.spins_y == 1))
            new_w = 1 if gen.random() <= update_prob_plus(beta, (2 * my - n - sw) / n) else -1
            self._apply(v, new, w, new_w)
        else:
            w = int(cand_y[gen.integers(cand_y.size)])
            self._apply(v, new, w, new)
        self.sub_index += 1
        return self.r - r_before

    def _apply(self, v: int, new_x: int, w: int, new_y: int):
        if int(self.spins_x[v]) != new_x:
            self.m += (new_x - int(self.spins_x[v])) // 2
            self.spins_x[v] = new_x
            if self.ref_plus[v]:
                self.U_x += 1 if new_x == 1 else -1
            else:
                self.V_x += 1 if new_x == -1 else -1
        if int(self.spins_y[w]) != new_y:
            self.spins_y[w] = new_y
            if self.ref_plus[w]:
                self.U_y += 1 if new_y == 1 else -1
            else:
                self.V_y += 1 if new_y == -1 else -1
        self.avail_x[v] = False
        self.avail_y[w] = False

    def to_pair(self) -> CoupledPair:
        x = SpinConfig(spins=self.spins_x.copy(), plus_count=int(np.sum(self.spins_x == 1)))
        y = SpinConfig(spins=self.spins_y.copy(), plus_count=int(np.sum(self.spins_y == 1)))
        return CoupledPair.identity(x, y, rule=Rule.TWO_COORD_CLOSING)


def two_coord_closing_step(
    params: ModelParams, pair: CoupledPair, rng, reference: SpinConfig, step: int = 0
) -> tuple[CoupledPair, CouplingStats]:
    """One whole step (k sub-updates) of the closing coupling.

    Requires equal magnetizations and R = U(x_tilde) - U(x) > 0; with R = 0
    the caller should switch to the rematched monotone rule instead.
    """
    state = ClosingCoupling(params, pair, reference)
    if state.r <= 0:
        raise ValueError("closing coupling requires R = U(x_tilde) - U(x) > 0")
    gen = as_generator(rng)
    state.begin_step()
    for _ in range(params.k):
        state.substep(gen)
    out = state.to_pair()
    stats = pair_stats(out, step, reference=reference, stop_events=state.stop_events)
    return out, stats


def coalescence_time(params: ModelParams, rng, t_max: int) -> int | None:
    """First step at which the grand-coupled chains from all-plus and
    all-minus agree, or None if they have not met by t_max.

    Order preservation makes equal plus-counts equivalent to equality.
    """
    if params.mode is not Mode.STANDARD:
        raise ValueError("coalescence_time runs the standard dynamics")
    gen = as_generator(rng)
    top = SpinConfig.all_plus(params.n)
    bot = SpinConfig.all_minus(params.n)
    for t in range(1, t_max + 1):
        order = sample_scan_order(params, gen)
        uniforms = gen.random(params.k)
        top, _ = scan_apply(params, top, order, uniforms)
        bot, _ = scan_apply(params, bot, order, uniforms)
        if top.plus_count == bot.plus_count:
            return t
    return None
