"""One-shot-deviation certification for the borrow/lend profile.

The whole memory of the conforming system is the balance vector, so expected
discounted revenue is a function of balance alone and solves a small linear
fixed point exactly.  A profile is subgame perfect iff no single-slot
deviation (a misreport, or occupying the wrong support) beats conformance in
any reachable state; this module enumerates those comparisons exactly, and
falls back to paired common-random-number Monte Carlo when the joint balance
chain of many operators is too large to enumerate.

Deviation findings use value conventions:
  gain  - one-slot advantage of the deviation, (1-d) normalized
  loss  - discounted future disadvantage of the deviation
  profitable  iff  gain > loss + tol
Detectable-deviation findings price the deviation slot at the best utility
physically possible (exclusive full band).  That upper bound makes
certification sound; a "profitable" detectable finding means the deterrence
sizing fails, not that an actual deviation necessarily attains the bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .dynamic_sharing import (
    BalanceLedger,
    DynamicParams,
    apply_trades,
    trading_policy,
    widths_after_trades,
)
from .static_sharing import InfeasiblePunishmentError, smallest_deterring_length
from .utility import UtilityModel

PROFIT_TOL = 1e-9
RESIDUAL_TOL = 1e-10


class HypothesisViolationError(ValueError):
    """The traffic distribution cannot exercise the trades the equilibrium
    argument relies on (some operator never borrows or never lends)."""


@dataclass(frozen=True)
class DeviationFinding:
    operator: int
    balances_mhz: tuple[float, ...]
    traffic: tuple[int, ...]
    kind: str  # "lie_high" | "lie_low" | "detectable"
    gain: float
    loss: float
    profitable: bool
    estimate_se: float | None = None  # standard error when estimated by Monte Carlo
    note: str = ""

    def state_label(self) -> str:
        bal = ",".join(f"{b:g}" for b in self.balances_mhz)
        tr = ",".join(str(t) for t in self.traffic)
        return f"b=[{bal}] traffic=[{tr}]"


def _require_two_level(traffic_specs):
    for spec in traffic_specs:
        if not spec.is_two_level:
            raise ValueError("dynamic profiles require two-level traffic")


def two_op_joint_probs(traffic_specs, joint_probs=None) -> dict:
    """Joint law of (op0, op1) traffic; product of marginals unless overridden."""
    _require_two_level(traffic_specs)
    if joint_probs is not None:
        total = sum(joint_probs.values())
        if abs(total - 1.0) > 1e-9 or any(p < 0 for p in joint_probs.values()):
            raise ValueError("joint probabilities must be a distribution")
        return {
            (l0, l1): float(joint_probs.get((l0, l1), 0.0))
            for l0 in (0, 1)
            for l1 in (0, 1)
        }
    p0, p1 = traffic_specs[0].p_high, traffic_specs[1].p_high
    return {
        (l0, l1): (p0 if l0 else 1 - p0) * (p1 if l1 else 1 - p1)
        for l0 in (0, 1)
        for l1 in (0, 1)
    }


def _two_op_outcome(params: DynamicParams, b_units: int, reports: tuple[int, int]):
    """Width (MHz) of operator 0 of the pair and its next balance, given its
    current balance `b_units` (operator 1 of the pair holds the negative)."""
    ledger = BalanceLedger((b_units, -b_units))
    trades = trading_policy(params, list(reports), ledger)
    widths = widths_after_trades(params, trades)
    nxt = apply_trades(ledger, trades)
    return widths[0], nxt.units[0]


@dataclass(frozen=True)
class BalanceChain:
    """Single-operator view of the two-operator balance process.

    States are the viewed operator's balance in trade units, -k..k.  The
    transition kernel and one-slot rewards follow from conforming play under
    the viewed operator's own joint traffic law (own level first).
    """

    params: DynamicParams
    probs: dict  # (own, other) -> probability
    rewards: np.ndarray  # expected one-slot utility per state
    transitions: np.ndarray  # row-stochastic (2k+1) x (2k+1)
    width_of: dict  # (b, own, other) -> width in MHz
    next_of: dict  # (b, own, other) -> next balance units
    util_of: dict  # (b, own, other) -> one-slot utility of the viewed operator

    @property
    def k(self) -> int:
        return self.params.cap_units

    def state_index(self, b_units: int) -> int:
        return b_units + self.k

    def balances_mhz(self) -> list[float]:
        return [b * self.params.trade_mhz for b in range(-self.k, self.k + 1)]


def build_balance_chain(
    params: DynamicParams,
    model: UtilityModel,
    traffic_specs,
    operator: int = 0,
    joint_probs=None,
) -> BalanceChain:
    if params.n != 2:
        raise ValueError("the balance chain view covers two operators")
    joint = two_op_joint_probs(traffic_specs, joint_probs)
    if operator == 1:
        joint = {(l1, l0): p for (l0, l1), p in joint.items()}
    k = params.cap_units
    size = 2 * k + 1
    rewards = np.zeros(size)
    trans = np.zeros((size, size))
    width_of, next_of, util_of = {}, {}, {}
    for b in range(-k, k + 1):
        i = b + k
        for (own, other), p in joint.items():
            width, nxt = _two_op_outcome(params, b, (own, other))
            util = model.pi(width, own)
            width_of[(b, own, other)] = width
            next_of[(b, own, other)] = nxt
            util_of[(b, own, other)] = util
            rewards[i] += p * util
            trans[i, nxt + k] += p
    return BalanceChain(params, joint, rewards, trans, width_of, next_of, util_of)


@dataclass(frozen=True)
class ValueTable:
    balances_mhz: tuple[float, ...]
    values: tuple[float, ...]
    residual: float

    def value_at(self, index: int) -> float:
        return self.values[index]


def value_function(chain: BalanceChain, discount: float) -> ValueTable:
    """Expected discounted revenue under conformance, (1-d) normalized.

    Solves V = (1-d) R + d P V directly; the system is small (2k+1 states)
    and strictly diagonally dominant for d < 1.
    """
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    size = len(chain.rewards)
    a = np.eye(size) - discount * chain.transitions
    rhs = (1.0 - discount) * chain.rewards
    values = np.linalg.solve(a, rhs)
    residual = float(np.max(np.abs(a @ values - rhs)))
    if residual > RESIDUAL_TOL * max(1.0, float(np.max(np.abs(rhs)))):
        raise ArithmeticError(f"value solve residual {residual} too large")
    return ValueTable(
        balances_mhz=tuple(chain.balances_mhz()),
        values=tuple(float(v) for v in values),
        residual=residual,
    )


def lying_gain(
    traffic_pair: tuple[int, int],
    balance_units: int,
    params: DynamicParams,
    model: UtilityModel,
) -> float:
    """One-slot utility change for the viewed operator misreporting its level.

    `traffic_pair` is (own, other) truth; the lie is the flipped own report.
    Positive when the lie grabs or retains spectrum now (e.g. feigning high
    traffic); negative for lies that give spectrum up now in exchange for a
    better balance."""
    own, other = traffic_pair
    w_truth, _ = _two_op_outcome(params, balance_units, (own, other))
    w_lie, _ = _two_op_outcome(params, balance_units, (1 - own, other))
    return model.pi(w_lie, own) - model.pi(w_truth, own)


def borrow_repay_margin_ok(model: UtilityModel, share_mhz: float, trade_mhz: float) -> bool:
    """Lending a quantum at low traffic must cost less than borrowing one at
    high traffic gains; this is what makes a borrow/repay cycle worthwhile."""
    if not 0 < trade_mhz <= share_mhz:
        raise ValueError("trade size must lie in (0, share]")
    give_up = model.pi(share_mhz, 0.0) - model.pi(share_mhz - trade_mhz, 0.0)
    get_back = model.pi(share_mhz + trade_mhz, 1.0) - model.pi(share_mhz, 1.0)
    return give_up < get_back


def _gate_two_op(joint: dict):
    if joint.get((1, 0), 0.0) <= 0.0 or joint.get((0, 1), 0.0) <= 0.0:
        raise HypothesisViolationError(
            "need both one-sided high-traffic events to have positive "
            "probability for balances to move in both directions"
        )


def verify_truthfulness_exact(
    params: DynamicParams,
    model: UtilityModel,
    traffic_specs,
    discount: float,
    joint_probs=None,
    tol: float = PROFIT_TOL,
) -> list[DeviationFinding]:
    """Exact one-shot misreport check over every reachable state.

    For each operator, balance, and positive-probability traffic pair, the
    value of lying once (then conforming) is compared against truthful play
    via the exact value function.  Returns every comparison as a finding;
    the profile is truthful iff none is profitable.
    """
    joint_global = two_op_joint_probs(traffic_specs, joint_probs)
    _gate_two_op(joint_global)
    findings = []
    delta = params.trade_mhz
    for op in (0, 1):
        chain = build_balance_chain(params, model, traffic_specs, op, joint_probs)
        table = value_function(chain, discount)
        values = np.asarray(table.values)
        k = chain.k
        for b in range(-k, k + 1):
            for (own, other), p in chain.probs.items():
                if p <= 0.0:
                    continue
                w_truth = chain.width_of[(b, own, other)]
                b_truth = chain.next_of[(b, own, other)]
                w_lie, b_lie = _two_op_outcome(params, b, (1 - own, other))
                if w_lie == w_truth and b_lie == b_truth:
                    continue  # the lie changes nothing (caps bind)
                gain = (1 - discount) * (model.pi(w_lie, own) - model.pi(w_truth, own))
                loss = float(discount * (values[b_truth + k] - values[b_lie + k]))
                findings.append(
                    DeviationFinding(
                        operator=op,
                        balances_mhz=(b * delta, -b * delta)
                        if op == 0
                        else (-b * delta, b * delta),
                        traffic=(own, other) if op == 0 else (other, own),
                        kind="lie_high" if own == 0 else "lie_low",
                        gain=gain,
                        loss=loss,
                        profitable=gain > loss + tol,
                    )
                )
    return findings


def verify_detectable_exact(
    params: DynamicParams,
    model: UtilityModel,
    traffic_specs,
    discount: float,
    joint_probs=None,
    tol: float = PROFIT_TOL,
) -> list[DeviationFinding]:
    """Exact check that the punishment length deters support deviations.

    Prices the deviation slot at the exclusive-full-band bound, then T slots
    of full-spectrum sharing with the ledger frozen, then conformance from
    the balance the executed trades left behind.  Deviating during
    punishment is never profitable and is not enumerated: against everyone
    else on the full band, the full band is the single-slot best response,
    and deviating in the final punishment slot only restarts punishment.
    """
    joint_global = two_op_joint_probs(traffic_specs, joint_probs)
    findings = []
    t_len = params.punishment_slots
    delta = params.trade_mhz
    for op in (0, 1):
        chain = build_balance_chain(params, model, traffic_specs, op, joint_probs)
        table = value_function(chain, discount)
        values = np.asarray(table.values)
        u_full = sum(
            p * model.full_spectrum_utility(params.n, own)
            for (own, other), p in chain.probs.items()
        )
        punish_factor = discount - discount ** (t_len + 1)
        k = chain.k
        for b in range(-k, k + 1):
            for (own, other), p in chain.probs.items():
                if p <= 0.0:
                    continue
                w_truth = chain.width_of[(b, own, other)]
                b_next = chain.next_of[(b, own, other)]
                conform_future = discount * values[b_next + k]
                deviate_future = (
                    punish_factor * u_full + discount ** (t_len + 1) * values[b_next + k]
                )
                gain = (1 - discount) * (model.max_utility(own) - model.pi(w_truth, own))
                loss = float(conform_future - deviate_future)
                findings.append(
                    DeviationFinding(
                        operator=op,
                        balances_mhz=(b * delta, -b * delta)
                        if op == 0
                        else (-b * delta, b * delta),
                        traffic=(own, other) if op == 0 else (other, own),
                        kind="detectable",
                        gain=gain,
                        loss=loss,
                        profitable=gain > loss + tol,
                        note="deviation slot priced at the exclusive-band bound",
                    )
                )
    return findings


def verify_dynamic_profile(
    params: DynamicParams,
    model: UtilityModel,
    traffic_specs,
    discount: float,
    joint_probs=None,
    tol: float = PROFIT_TOL,
) -> list[DeviationFinding]:
    """Misreport and support-deviation findings combined."""
    return verify_truthfulness_exact(
        params, model, traffic_specs, discount, joint_probs, tol
    ) + verify_detectable_exact(params, model, traffic_specs, discount, joint_probs, tol)


@dataclass(frozen=True)
class LossBound:
    value: float  # discounted expected repayment loss
    undiscounted: float  # same with no discounting (the d -> 1 limit)
    horizon: int  # slots of hitting-time mass accumulated
    tail_mass: float  # probability not yet absorbed at the horizon
    tail_bound: float  # largest additional loss the tail could contribute


def lying_loss_bound(
    params: DynamicParams,
    model: UtilityModel,
    traffic_specs,
    discount: float,
    balance_units: int,
    joint_probs=None,
    mass_tol: float = 1e-12,
    max_horizon: int = 2_000_000,
) -> LossBound:
    """Expected future repayment cost of a lie that grabbed one quantum now.

    After such a lie the liar's balance trails the truthful trajectory by one
    unit until the first slot where the truthful path borrows at the floor
    (the liar cannot follow) or the liar lends at the ceiling (the truthful
    path cannot).  The hitting-time law of that coupling is computed by
    dynamic programming on the shared trajectory, with the horizon extended
    until the un-absorbed mass is below `mass_tol`.
    """
    joint = two_op_joint_probs(traffic_specs, joint_probs)
    _gate_two_op(joint)
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    k = params.cap_units
    if balance_units - 1 < -k:
        raise ValueError("a lie cannot gain a quantum at the balance floor")
    w = params.share_mhz
    d = params.trade_mhz
    borrow_margin = model.pi(w + d, 1.0) - model.pi(w, 1.0)  # loss when closing at the floor
    lend_margin = model.pi(w, 0.0) - model.pi(w - d, 0.0)  # loss when closing at the ceiling
    p_borrow = joint[(1, 0)]
    p_lend = joint[(0, 1)]
    # truthful-path balance after the lie slot ranges over [-k+1, k]
    size = 2 * k  # states -k+1 .. k
    dist = np.zeros(size)
    dist[balance_units - (-k + 1)] = 1.0
    loss = 0.0
    undiscounted = 0.0
    disc = discount
    tau = 0
    while dist.sum() > mass_tol and tau < max_horizon:
        tau += 1
        new = np.zeros(size)
        p_mass = 0.0
        q_mass = 0.0
        for idx in range(size):
            m = dist[idx]
            if m == 0.0:
                continue
            b = idx + (-k + 1)
            # own high, other low: both borrow unless the liar is at the floor
            if b == -k + 1:
                p_mass += m * p_borrow
            else:
                new[idx - 1] += m * p_borrow
            # own low, other high: both lend unless the truthful path is capped
            if b == k:
                q_mass += m * p_lend
            else:
                new[idx + 1] += m * p_lend
            new[idx] += m * (1.0 - p_borrow - p_lend)
        step_loss = p_mass * borrow_margin + q_mass * lend_margin
        loss += disc**tau * step_loss
        undiscounted += step_loss
        dist = new
    tail_mass = float(dist.sum())
    tail_bound = tail_mass * max(borrow_margin, lend_margin) * (disc ** (tau + 1) if disc > 0 else 0.0)
    return LossBound(
        value=float(loss),
        undiscounted=float(undiscounted),
        horizon=tau,
        tail_mass=tail_mass,
        tail_bound=float(tail_bound),
    )


def min_punishment_slots(
    params: DynamicParams, model: UtilityModel, traffic_specs
) -> int:
    """Smallest punishment length whose guaranteed loss beats the best
    possible one-shot gain of a support deviation.

    The gain is capped by the worst-case one-slot advantage plus the largest
    possible value swing across the ledger range; each punishment slot costs
    at least the smallest conforming-versus-full-spectrum utility margin,
    which must be positive for deterrence to work at all.
    """
    _require_two_level(traffic_specs)
    w = params.share_mhz
    d = params.trade_mhz
    k = params.cap_units
    gain_cap = max(
        model.max_utility(lam) - model.pi(w - d, lam) for lam in (0.0, 1.0)
    )
    value_span = 2 * k * (model.pi(w + d, 1.0) - model.pi(w, 1.0))
    floor_margin = model.pi(w - d, 0.0) - model.full_spectrum_utility(params.n, 0.0)
    if floor_margin <= 0:
        raise InfeasiblePunishmentError(
            "full-spectrum sharing is not worse than the narrowest conforming "
            "slot at low traffic; the trade size leaves no deterrence margin"
        )
    return smallest_deterring_length(gain_cap + value_span, floor_margin)


def verify_static_profile(
    params, model: UtilityModel, traffic_specs, discount: float, tol: float = PROFIT_TOL
) -> list[DeviationFinding]:
    """Deterrence check for the static blocks profile.

    Under conformance the value is the constant expected block utility, so
    the one-shot comparison per operator and traffic level is closed form:
    the deviation slot is priced at the exclusive-band bound, followed by
    the punishment window of full-spectrum sharing (everlasting under the
    grim variant)."""
    from .traffic import expectation

    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    findings = []
    for i, spec in enumerate(traffic_specs):
        w_i = params.block_width(i)
        u_orth = expectation(spec, lambda lam: model.pi(w_i, lam))
        u_full = expectation(spec, lambda lam: model.full_spectrum_utility(params.n, lam))
        if params.grim:
            punish_factor = discount
        else:
            punish_factor = discount - discount ** (params.punishment_slots + 1)
        for lam in spec.levels:
            gain = (1 - discount) * (model.max_utility(lam) - model.pi(w_i, lam))
            loss = punish_factor * (u_orth - u_full)
            findings.append(
                DeviationFinding(
                    operator=i,
                    balances_mhz=(),
                    traffic=(lam,),
                    kind="detectable",
                    gain=gain,
                    loss=loss,
                    profitable=gain > loss + tol,
                    note="deviation slot priced at the exclusive-band bound",
                )
            )
    return findings


def stationary_sum_revenue(
    params: DynamicParams, model: UtilityModel, traffic_specs, joint_probs=None
) -> float:
    """Long-run per-slot total utility of both operators under conformance."""
    joint = two_op_joint_probs(traffic_specs, joint_probs)
    k = params.cap_units
    size = 2 * k + 1
    trans = np.zeros((size, size))
    sums = np.zeros(size)
    for b in range(-k, k + 1):
        i = b + k
        for (l0, l1), p in joint.items():
            if p <= 0:
                continue
            ledger = BalanceLedger((b, -b))
            trades = trading_policy(params, [l0, l1], ledger)
            widths = widths_after_trades(params, trades)
            nxt = apply_trades(ledger, trades)
            trans[i, nxt.units[0] + k] += p
            sums[i] += p * (model.pi(widths[0], l0) + model.pi(widths[1], l1))
    mu = stationary_distribution(trans, start_index=k)
    return float(mu @ sums)


def discounted_sum_revenue(
    params: DynamicParams,
    model: UtilityModel,
    traffic_specs,
    discount: float,
    joint_probs=None,
) -> float:
    """Expected discounted total utility of both operators from zero balances."""
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    joint = two_op_joint_probs(traffic_specs, joint_probs)
    k = params.cap_units
    size = 2 * k + 1
    trans = np.zeros((size, size))
    sums = np.zeros(size)
    for b in range(-k, k + 1):
        i = b + k
        for (l0, l1), p in joint.items():
            if p <= 0:
                continue
            ledger = BalanceLedger((b, -b))
            trades = trading_policy(params, [l0, l1], ledger)
            widths = widths_after_trades(params, trades)
            nxt = apply_trades(ledger, trades)
            trans[i, nxt.units[0] + k] += p
            sums[i] += p * (model.pi(widths[0], l0) + model.pi(widths[1], l1))
    values = np.linalg.solve(np.eye(size) - discount * trans, (1.0 - discount) * sums)
    return float(values[k])


def stationary_distribution(trans: np.ndarray, start_index: int = 0) -> np.ndarray:
    """Long-run occupancy of the chain started at `start_index`.

    Solves the stationary equations directly; if the chain is reducible the
    linear system degenerates, and the occupancy is taken as the Cesaro
    average of the empirical distribution from the given start instead.
    """
    size = trans.shape[0]
    a = trans.T - np.eye(size)
    a[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    try:
        mu = np.linalg.solve(a, rhs)
        if np.all(mu >= -1e-12) and abs(mu.sum() - 1.0) < 1e-9:
            mu = np.clip(mu, 0.0, None)
            resid = np.max(np.abs(mu @ trans - mu))
            if resid < 1e-9:
                return mu / mu.sum()
    except np.linalg.LinAlgError:
        pass
    dist = np.zeros(size)
    dist[start_index] = 1.0
    acc = np.zeros(size)
    for _ in range(20_000):
        dist = dist @ trans
        acc += dist
    return acc / acc.sum()


def mc_value_estimate(
    chain: BalanceChain,
    discount: float,
    replications: int,
    seed: int,
    horizon: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimate of the value function, one batch per start state.

    Returns (means, standard errors) indexed like the chain states.  The
    rollout uses the same counter-based generator as the simulator, keyed by
    (seed, state, replication, slot)."""
    if horizon is None:
        horizon = default_horizon(discount)
    size = len(chain.rewards)
    k = chain.k
    pairs = [pair for pair, p in chain.probs.items() if p > 0]
    probs = np.array([chain.probs[pair] for pair in pairs])
    cdf = np.cumsum(probs)
    next_tab = np.zeros((size, len(pairs)), dtype=np.int64)
    util_tab = np.zeros((size, len(pairs)))
    for i, b in enumerate(range(-k, k + 1)):
        for j, (own, other) in enumerate(pairs):
            next_tab[i, j] = chain.next_of[(b, own, other)] + k
            util_tab[i, j] = chain.util_of[(b, own, other)]
    means = np.zeros(size)
    ses = np.zeros(size)
    for start in range(size):
        states = np.full(replications, start, dtype=np.int64)
        acc = np.zeros(replications)
        weight = 1.0 - discount
        for t in range(horizon):
            u = rng.uniform01_array(seed, start, t, counters=np.arange(replications))
            idx = np.searchsorted(cdf, u, side="right")
            idx = np.minimum(idx, len(pairs) - 1)
            acc += weight * util_tab[states, idx]
            states = next_tab[states, idx]
            weight *= discount
        means[start] = acc.mean()
        ses[start] = acc.std(ddof=1) / math.sqrt(replications)
    return means, ses


def default_horizon(discount: float, tail: float = 1e-8) -> int:
    """Slots needed so the remaining discounted weight is below `tail`."""
    if discount <= 0.0:
        return 1
    return max(1, math.ceil(math.log(tail) / math.log(discount)))


# --- many-operator verification -------------------------------------------


def count_balance_states(n: int, k: int) -> int:
    """Number of integer balance vectors in [-k, k]^n that sum to zero."""
    counts = {0: 1}
    for _ in range(n):
        new: dict[int, int] = {}
        for s, c in counts.items():
            for v in range(-k, k + 1):
                new[s + v] = new.get(s + v, 0) + c
        counts = new
    return counts.get(0, 0)


def enumerate_balance_states(n: int, k: int) -> list[tuple[int, ...]]:
    """All integer balance vectors in [-k, k]^n summing to zero."""
    states: list[tuple[int, ...]] = []
    vec = [0] * n

    def rec(i: int, total: int):
        tail = n - 1 - i
        if tail == 0:
            last = -total
            if -k <= last <= k:
                vec[i] = last
                states.append(tuple(vec))
            return
        for v in range(-k, k + 1):
            if abs(total + v) <= k * tail:
                vec[i] = v
                rec(i + 1, total + v)

    rec(0, 0)
    return states


def _gate_n_op(traffic_specs):
    _require_two_level(traffic_specs)
    highs = [spec.p_high for spec in traffic_specs]
    for i, p in enumerate(highs):
        if p <= 0 or all(highs[j] >= 1.0 for j in range(len(highs)) if j != i):
            raise HypothesisViolationError(
                f"operator {i} can never be the sole high-traffic reporter; "
                "its balance cannot move both ways"
            )


def _traffic_vectors(traffic_specs):
    n = len(traffic_specs)
    highs = [spec.p_high for spec in traffic_specs]
    vectors, probs = [], []
    for tv in itertools.product((0, 1), repeat=n):
        p = 1.0
        for lam, ph in zip(tv, highs):
            p *= ph if lam else 1.0 - ph
        if p > 0.0:
            vectors.append(tv)
            probs.append(p)
    return vectors, probs


def _n_op_outcome(params: DynamicParams, units: tuple[int, ...], reports):
    ledger = BalanceLedger(units)
    trades = trading_policy(params, list(reports), ledger)
    widths = widths_after_trades(params, trades)
    nxt = apply_trades(ledger, trades)
    return widths, nxt.units


def _n_op_values(params, model, traffic_specs, discount, states, index):
    """Per-operator value tables over the joint balance states."""
    n = params.n
    size = len(states)
    vectors, probs = _traffic_vectors(traffic_specs)
    t_count = len(vectors)
    next_idx = np.zeros((size, t_count), dtype=np.int64)
    rewards = np.zeros((size, n))
    for si, units in enumerate(states):
        for ti, tv in enumerate(vectors):
            widths, nxt = _n_op_outcome(params, units, tv)
            next_idx[si, ti] = index[nxt]
            p = probs[ti]
            for op in range(n):
                rewards[si, op] += p * model.pi(widths[op], tv[op])
    p_arr = np.asarray(probs)
    if size <= 2000:
        trans = np.zeros((size, size))
        for ti in range(t_count):
            np.add.at(trans, (np.arange(size), next_idx[:, ti]), p_arr[ti])
        a = np.eye(size) - discount * trans
        values = np.linalg.solve(a, (1.0 - discount) * rewards)
    else:
        values = (1.0 - discount) * rewards.copy()
        scale = max(1.0, float(np.max(np.abs(rewards))))
        for _ in range(200_000):
            nxt_val = np.zeros_like(values)
            for ti in range(t_count):
                nxt_val += p_arr[ti] * values[next_idx[:, ti], :]
            new = (1.0 - discount) * rewards + discount * nxt_val
            if float(np.max(np.abs(new - values))) < 1e-11 * scale:
                values = new
                break
            values = new
    return values, vectors, probs, next_idx


def verify_truthfulness_n_ops(
    params: DynamicParams,
    model: UtilityModel,
    traffic_specs,
    discount: float,
    exact_limit: int = 200_000,
    tol: float = PROFIT_TOL,
    seed: int = 0,
    mc_states: int = 12,
    mc_replications: int = 1000,
    mc_horizon: int | None = None,
) -> list[DeviationFinding]:
    """One-shot misreport check for n operators on the joint balance chain.

    When the joint state space fits within `exact_limit` the check is the
    exact Bellman comparison over every (state, traffic vector, operator).
    Otherwise deviation values are estimated by paired rollouts driven by
    common random numbers, and a finding is profitable only when its 99%
    lower confidence bound clears the tolerance (the confidence margin is
    reported in the `loss` field, the paired standard error in
    `estimate_se`).
    """
    if len(traffic_specs) != params.n:
        raise ValueError("need one traffic spec per operator")
    _gate_n_op(traffic_specs)
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    if count_balance_states(params.n, params.cap_units) <= exact_limit:
        return _exact_n_op_findings(params, model, traffic_specs, discount, tol)
    return _mc_n_op_findings(
        params,
        model,
        traffic_specs,
        discount,
        tol,
        seed,
        mc_states,
        mc_replications,
        mc_horizon,
    )


def _exact_n_op_findings(params, model, traffic_specs, discount, tol):
    n = params.n
    delta = params.trade_mhz
    states = enumerate_balance_states(n, params.cap_units)
    index = {s: i for i, s in enumerate(states)}
    values, vectors, probs, _ = _n_op_values(
        params, model, traffic_specs, discount, states, index
    )
    findings = []
    for si, units in enumerate(states):
        for tv, p in zip(vectors, probs):
            widths_truth, next_truth = _n_op_outcome(params, units, tv)
            truth_idx = index[next_truth]
            for op in range(n):
                lie_reports = list(tv)
                lie_reports[op] = 1 - lie_reports[op]
                widths_lie, next_lie = _n_op_outcome(params, units, lie_reports)
                lie_idx = index[next_lie]
                if widths_lie[op] == widths_truth[op] and lie_idx == truth_idx:
                    continue
                gain = (1 - discount) * (
                    model.pi(widths_lie[op], tv[op]) - model.pi(widths_truth[op], tv[op])
                )
                loss = float(discount * (values[truth_idx, op] - values[lie_idx, op]))
                swing = widths_lie[op] - widths_truth[op]
                note = ""
                if tv[op] == 0 and abs(swing - 2 * delta) < 1e-12:
                    note = "borrow-instead-of-lend double swing"
                findings.append(
                    DeviationFinding(
                        operator=op,
                        balances_mhz=tuple(u * delta for u in units),
                        traffic=tv,
                        kind="lie_high" if tv[op] == 0 else "lie_low",
                        gain=gain,
                        loss=loss,
                        profitable=gain > loss + tol,
                        note=note,
                    )
                )
    return findings


def _vector_policy_step(units, reports, k, share, trade):
    """Vectorized trading step: units/reports are (R, n) arrays.

    Returns (next units, widths).  Mirrors trading_policy exactly: eligible
    high reporters sorted by descending balance (index breaking ties) borrow
    from eligible low reporters sorted ascending, one quantum each.
    """
    reps, n = units.shape
    idx = np.arange(n)
    big = (2 * k + 2) * n
    can_borrow = (reports == 1) & (units - 1 >= -k)
    can_lend = (reports == 0) & (units + 1 <= k)
    m = np.minimum(can_borrow.sum(axis=1), can_lend.sum(axis=1))[:, None]
    bkey = np.where(can_borrow, -units * n + idx, big)
    border = np.argsort(bkey, axis=1, kind="stable")
    brank = np.empty_like(border)
    np.put_along_axis(brank, border, np.broadcast_to(idx, (reps, n)).copy(), axis=1)
    borrows = can_borrow & (brank < m)
    lkey = np.where(can_lend, units * n + idx, big)
    lorder = np.argsort(lkey, axis=1, kind="stable")
    lrank = np.empty_like(lorder)
    np.put_along_axis(lrank, lorder, np.broadcast_to(idx, (reps, n)).copy(), axis=1)
    lends = can_lend & (lrank < m)
    next_units = units - borrows.astype(np.int64) + lends.astype(np.int64)
    widths = share + trade * (borrows.astype(np.float64) - lends.astype(np.float64))
    return next_units, widths


def _mc_n_op_findings(
    params,
    model,
    traffic_specs,
    discount,
    tol,
    seed,
    mc_states,
    mc_replications,
    mc_horizon,
):
    n = params.n
    k = params.cap_units
    share = params.share_mhz
    trade = params.trade_mhz
    highs = np.array([spec.p_high for spec in traffic_specs])
    horizon = mc_horizon if mc_horizon is not None else default_horizon(discount, 1e-6)
    z99 = 2.3263478740408408  # one-sided 99% normal quantile

    # burn-in walk to find the commonly visited states
    units = np.zeros((1, n), dtype=np.int64)
    visits: dict[tuple[int, ...], int] = {}
    burn = 4000
    for t in range(burn):
        u = rng.uniform01_array(seed, 101, t, counters=np.arange(n))
        reports = (u < highs).astype(np.int64)[None, :]
        units, _ = _vector_policy_step(units, reports, k, share, trade)
        key = tuple(int(v) for v in units[0])
        visits[key] = visits.get(key, 0) + 1
    chosen = sorted(visits, key=visits.get, reverse=True)[:mc_states]

    findings = []
    batch = 0
    for state in chosen:
        for op in range(n):
            for own in (0, 1):
                p_own = highs[op] if own else 1.0 - highs[op]
                if p_own <= 0.0:
                    continue
                batch += 1
                est, se = _paired_lie_batch(
                    params,
                    model,
                    highs,
                    discount,
                    np.array(state, dtype=np.int64),
                    op,
                    own,
                    mc_replications,
                    horizon,
                    rng.key_hash(seed, 77, batch),
                )
                margin = z99 * se
                traffic_label = [-1] * n  # -1: averaged over that operator's law
                traffic_label[op] = own
                findings.append(
                    DeviationFinding(
                        operator=op,
                        balances_mhz=tuple(v * trade for v in state),
                        traffic=tuple(traffic_label),
                        kind="lie_high" if own == 0 else "lie_low",
                        gain=est,
                        loss=margin,
                        profitable=est > margin + tol,
                        estimate_se=se,
                        note=(
                            "paired Monte Carlo net lie value over others' traffic; "
                            "loss holds the one-sided 99% confidence margin"
                        ),
                    )
                )
    return findings


def _paired_lie_batch(
    params, model, highs, discount, state, op, own, reps, horizon, key
):
    """Net value of one misreport by `op` (own level fixed) versus truth.

    Both branches share every traffic draw; the misreport happens in slot 0
    only.  The accumulation stops once every replication's branches hold
    identical ledgers (their futures coincide from there on)."""
    n = params.n
    k = params.cap_units
    share = params.share_mhz
    trade = params.trade_mhz
    units_t = np.tile(state, (reps, 1))
    units_l = units_t.copy()
    diff = np.zeros(reps)
    weight = 1.0 - discount
    for t in range(horizon):
        u = rng.uniform01_array(key, t, counters=np.arange(reps * n)).reshape(reps, n)
        traffic = (u < highs[None, :]).astype(np.int64)
        if t == 0:
            traffic[:, op] = own
        reports_t = traffic
        next_t, widths_t = _vector_policy_step(units_t, reports_t, k, share, trade)
        if t == 0:
            reports_l = traffic.copy()
            reports_l[:, op] = 1 - own
            next_l, widths_l = _vector_policy_step(units_l, reports_l, k, share, trade)
        else:
            next_l, widths_l = _vector_policy_step(units_l, reports_t, k, share, trade)
        lam = traffic[:, op].astype(np.float64)
        u_t = model.family.value(model.peak_rate * widths_t[:, op], lam)
        u_l = model.family.value(model.peak_rate * widths_l[:, op], lam)
        diff += weight * (u_l - u_t)
        units_t, units_l = next_t, next_l
        weight *= discount
        if t > 0 and np.array_equal(units_t, units_l):
            break
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(reps))
