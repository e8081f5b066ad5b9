"""Static orthogonal sharing with trigger punishment.

In the cooperation state every operator transmits on its fixed block and the
blocks tile the band.  Any support mismatch observed in the previous slot
sends everyone (deviator included) to full-band transmission: forever under
the grim variant, otherwise for exactly `punishment_slots` slots, counting
the slot in which the deviation is first answered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .spectrum import SpectrumAllocation
from .traffic import TrafficSpec, expectation
from .utility import UtilityModel

_SHARE_TOL = 1e-12

COOPERATION = "cooperation"
PUNISHMENT = "punishment"


class InfeasiblePunishmentError(ValueError):
    """Orthogonal sharing does not beat full-spectrum sharing, so no finite
    punishment length can deter deviation."""


@dataclass(frozen=True)
class StaticParams:
    n: int
    band_mhz: float
    punishment_slots: int = 1
    grim: bool = False
    shares: tuple[float, ...] | None = None  # None means uniform

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one operator")
        if self.shares is not None:
            if len(self.shares) != self.n:
                raise ValueError("one share per operator required")
            if any(s <= 0 for s in self.shares):
                raise ValueError("shares must be positive")
            if abs(sum(self.shares) - 1.0) > _SHARE_TOL:
                raise ValueError("shares must sum to 1")
        if not self.grim and self.punishment_slots < 1:
            raise ValueError("punishment length must be at least 1 slot")

    def share_of(self, operator: int) -> float:
        if self.shares is None:
            return 1.0 / self.n
        return self.shares[operator]

    def block_width(self, operator: int) -> float:
        return self.share_of(operator) * self.band_mhz


@dataclass(frozen=True)
class PhaseState:
    """Phase of the trigger profile plus what was prescribed last slot.

    `expect_full_band` marks the first cooperation slot after punishment:
    the previous slot's prescribed supports were full band, not the blocks,
    and detection must compare against what was actually prescribed.
    """

    phase: str = COOPERATION
    remaining: int = 0
    expect_full_band: bool = False

    def in_punishment(self) -> bool:
        return self.phase == PUNISHMENT


def static_allocation(params: StaticParams, operator: int) -> SpectrumAllocation:
    """Contiguous block of operator `operator` (blocks tile the band in index order)."""
    if not 0 <= operator < params.n:
        raise ValueError("operator index out of range")
    lo = sum(params.share_of(j) for j in range(operator)) * params.band_mhz
    hi = lo + params.block_width(operator)
    return SpectrumAllocation.block(lo, min(hi, params.band_mhz), params.band_mhz)


def prescribed_allocations(params: StaticParams, state: PhaseState) -> list[SpectrumAllocation]:
    if state.in_punishment():
        full = SpectrumAllocation.full_band(params.band_mhz)
        return [full] * params.n
    return [static_allocation(params, i) for i in range(params.n)]


def _conforming(params: StaticParams, state: PhaseState, observed) -> bool:
    if state.expect_full_band:
        full = SpectrumAllocation.full_band(params.band_mhz)
        return all(a == full for a in observed)
    return all(
        a == static_allocation(params, i) for i, a in enumerate(observed)
    )


def _enter_punishment(params: StaticParams) -> PhaseState:
    # The answering slot is itself the first punishment slot.
    if params.grim:
        return PhaseState(PUNISHMENT, remaining=-1)
    if params.punishment_slots == 1:
        return PhaseState(COOPERATION, expect_full_band=True)
    return PhaseState(PUNISHMENT, remaining=params.punishment_slots - 1)


def step(
    params: StaticParams,
    state: PhaseState,
    observed_allocs,
    operator: int = 0,
) -> tuple[PhaseState, SpectrumAllocation]:
    """Advance one slot: returns (state for next slot, this slot's support).

    `observed_allocs` are the previous slot's supports of all operators
    (None on the very first slot).
    """
    full = SpectrumAllocation.full_band(params.band_mhz)
    if state.in_punishment():
        if params.grim:
            return state, full
        if state.remaining <= 1:
            return PhaseState(COOPERATION, expect_full_band=True), full
        return PhaseState(PUNISHMENT, remaining=state.remaining - 1), full
    if observed_allocs is not None:
        if len(observed_allocs) != params.n:
            raise ValueError("need one observed support per operator")
        if not _conforming(params, state, observed_allocs):
            return _enter_punishment(params), full
    return PhaseState(COOPERATION), static_allocation(params, operator)


def smallest_deterring_length(gap: float, per_slot_loss: float) -> int:
    """Smallest integer T with T * per_slot_loss > gap (at least 1)."""
    if per_slot_loss <= 0:
        raise InfeasiblePunishmentError(
            "per-slot punishment loss is not positive; deviation cannot be deterred"
        )
    if gap <= 0:
        return 1
    t = math.floor(gap / per_slot_loss) + 1
    # guard the floating boundary: need strict T * loss > gap
    while (t - 1) * per_slot_loss > gap:
        t -= 1
    while t * per_slot_loss <= gap:
        t += 1
    return max(t, 1)


def min_punishment_length(
    model: UtilityModel, traffic_specs: list[TrafficSpec], params: StaticParams
) -> int:
    """Smallest T such that, for every operator and traffic level, the best
    one-shot deviation gain is smaller than T times the operator's per-slot
    punishment loss (orthogonal minus full-spectrum expected utility)."""
    if len(traffic_specs) != params.n:
        raise ValueError("need one traffic spec per operator")
    if params.n == 1:
        return 1  # nothing to deter
    t_needed = 1
    for i, spec in enumerate(traffic_specs):
        w_i = params.block_width(i)
        u_orth = expectation(spec, lambda lam: model.pi(w_i, lam))
        u_full = expectation(spec, lambda lam: model.full_spectrum_utility(params.n, lam))
        if u_orth <= u_full:
            raise InfeasiblePunishmentError(
                f"operator {i}: orthogonal sharing does not beat full-spectrum sharing"
            )
        gap = max(model.max_utility(lam) - model.pi(w_i, lam) for lam in spec.levels)
        t_needed = max(t_needed, smallest_deterring_length(gap, u_orth - u_full))
    return t_needed
