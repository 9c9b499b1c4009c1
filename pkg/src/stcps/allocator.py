"""Per-epoch joint subcarrier assignment and power allocation.

The weighted objective a*P_ul + (1-a)*P_bs is driven down by alternating
two steps until the objective stalls: an exclusive subcarrier assignment
evaluated at frozen candidate powers (greedy construction plus move/swap
local search, with an exhaustive mode for small grids), and an exact
per-user minimum-power water-filling for the resulting assignment.  Each
registered plant's end-to-end delay budget is split between uplink and
downlink by a golden-section search, which turns the delay constraint
into a pair of rate targets.

``brute_force_allocation`` certifies the optimum on small instances by
enumerating every exclusive assignment per direction and joining the two
directions over the distinct tuples of plant subcarrier sets.  It is a
test oracle, not a production path.
"""
from __future__ import annotations

import dataclasses
import itertools
import math
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import Infeasible, TooLarge
from .network import (
    ChannelState,
    UserPopulation,
    link_rate,
    total_bs_power,
    total_uplink_power,
    transmission_delay,
)

Array = np.ndarray
LN2 = float(np.log(2.0))
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_RATE_RTOL = 1e-9


@dataclasses.dataclass(eq=False)
class AllocationProblem:
    """One communication epoch's allocation instance."""

    channel: ChannelState
    users: UserPopulation
    active_plants: Tuple[int, ...]
    delay_budget_s: Dict[int, float]  # per active plant, already net of compute delay
    payload_bits: float
    weight_ul: float = 0.5

    def __post_init__(self):
        self.active_plants = tuple(self.active_plants)
        if not 0.0 <= self.weight_ul <= 1.0:
            raise ValueError("weight_ul must lie in [0, 1]")
        for plant in self.active_plants:
            if plant not in self.users.tc_pairs:
                raise ValueError(f"active plant {plant} has no RTU pair")
            budget = self.delay_budget_s.get(plant)
            if budget is None or budget <= 0:
                raise ValueError(f"active plant {plant} needs a positive delay budget")


@dataclasses.dataclass
class SolveOptions:
    max_iters: int = 50
    tol: float = 1e-4
    exhaustive_assign: bool = False


@dataclasses.dataclass(eq=False)
class AllocationSolution:
    """Assignment and power matrices plus solver diagnostics."""

    assignment_ul: Array
    assignment_dl: Array
    powers_ul: Array
    powers_dl: Array
    objective_w: float
    power_ul_w: float
    power_bs_w: float
    iterations: int
    converged: bool
    feasible: bool
    per_user_rates: Dict[Tuple[str, int], float]
    theta: Dict[int, float]
    objective_trace: Tuple[float, ...]
    kkt_residual_max: float
    diagnostics: str = ""


class PowerAllocation(NamedTuple):
    powers_ul: Array
    powers_dl: Array
    theta: Dict[int, float]
    targets_ul: Dict[int, float]
    targets_dl: Dict[int, float]
    rates_ul: Dict[int, float]
    rates_dl: Dict[int, float]
    kkt_residual_max: float


class DelaySplit(NamedTuple):
    rate_ul_bps: float
    rate_dl_bps: float
    theta: float


def waterfill_min_power(gains, rate_target_bps: float, bandwidth_hz: float,
                        noise_w: float, p_cap_w: float) -> Array:
    """Cheapest power vector meeting a Shannon-sum rate target.

    Bisection on the common water level to 1e-10 relative, followed by an
    exact polish of the level on the resulting active set so that the KKT
    stationarity conditions hold to machine precision.  The returned
    powers are scaled up by one part in 1e12 so the achieved rate never
    undershoots the target.  Raises Infeasible when the minimum power
    exceeds p_cap_w.
    """
    g = np.asarray(gains, dtype=float).reshape(-1)
    if g.size == 0:
        raise ValueError("need at least one subcarrier")
    if np.any(g <= 0):
        raise ValueError("gains must be > 0")
    if rate_target_bps <= 0:
        return np.zeros(g.size)
    w = float(bandwidth_hz)
    thr = noise_w / g  # per-subcarrier water threshold
    # Plain-float inner loop: the vectors here are tiny, so numpy dispatch
    # would dominate the cost of the bisection.
    thr_list = thr.tolist()
    log = math.log
    target_nats = rate_target_bps * LN2 / w

    def nats_at(mu: float) -> float:
        total = 0.0
        for t in thr_list:
            if mu > t:
                total += log(mu / t)
        return total

    mu_lo = min(thr_list)
    mu_hi = 2.0 * mu_lo
    for _ in range(2000):
        if nats_at(mu_hi) >= target_nats:
            break
        mu_hi *= 2.0
    else:  # pragma: no cover - target astronomically large
        raise Infeasible("C7", "rate target not reachable at any finite water level")
    for _ in range(200):
        if mu_hi - mu_lo <= 1e-10 * mu_hi:
            break
        mid = 0.5 * (mu_lo + mu_hi)
        if nats_at(mid) >= target_nats:
            mu_hi = mid
        else:
            mu_lo = mid
    mu = mu_hi

    # Exact level for the bisection's active set; keep only if consistent.
    active = [t for t in thr_list if t < mu]
    log_mu = (target_nats + sum(log(t) for t in active)) / len(active)
    mu_star = math.exp(log_mu)
    inactive = [t for t in thr_list if t >= mu]
    if mu_star >= max(active) and (not inactive or mu_star <= min(inactive)):
        mu = mu_star

    powers = np.maximum(0.0, mu - thr)
    # Guarantee the delivered rate in the same log1p metric every consumer
    # uses; log-domain rounding alone can land a few parts in 1e12 short,
    # which matters when a delay budget is ridden with equality.
    for _ in range(8):
        achieved = w * float(np.sum(np.log1p(powers * g / noise_w))) / LN2
        if achieved >= rate_target_bps:
            break
        shortfall = (rate_target_bps - achieved) / rate_target_bps
        powers *= 1.0 + max(4.0 * shortfall, 1e-14)
    if float(powers.sum()) > p_cap_w * (1.0 + 1e-9):
        raise Infeasible(
            "C7", f"minimum power {powers.sum():.3e} W exceeds cap {p_cap_w:.3e} W")
    return powers


def waterfill_max_rate(gains, power_budget_w: float, bandwidth_hz: float,
                       noise_w: float) -> float:
    """Best Shannon-sum rate achievable with the given power budget."""
    g = np.asarray(gains, dtype=float).reshape(-1)
    if g.size == 0 or power_budget_w <= 0:
        return 0.0
    thr = np.sort(noise_w / g)
    mu = thr[0]
    for k in range(1, g.size + 1):
        mu = (power_budget_w + float(thr[:k].sum())) / k
        if k == g.size or mu <= thr[k]:
            break
    active = thr[thr < mu]
    if active.size == 0:
        return 0.0
    return bandwidth_hz * float(np.sum(np.log(mu / active))) / LN2


def waterfill_kkt_residual(gains, rate_target_bps: float, bandwidth_hz: float,
                           noise_w: float, powers) -> float:
    """Max of rate shortfall and water-level stationarity residuals (relative)."""
    g = np.asarray(gains, dtype=float).reshape(-1)
    p = np.asarray(powers, dtype=float).reshape(-1)
    if rate_target_bps <= 0:
        return float(np.max(np.abs(p), initial=0.0))
    thr = noise_w / g
    achieved = bandwidth_hz * float(np.sum(np.log1p(p * g / noise_w))) / LN2
    shortfall = max(0.0, (rate_target_bps - achieved) / rate_target_bps)
    active = p > 0
    if not np.any(active):
        return max(shortfall, 1.0)
    levels = p[active] + thr[active]
    mu = float(levels.mean())
    stationarity = float(np.max(np.abs(levels - mu))) / mu
    slackness = 0.0
    if np.any(~active):
        slackness = max(0.0, (mu - float(thr[~active].min())) / mu)
    return max(shortfall, stationarity, slackness)


def _golden_section(fn, lo: float, hi: float, tol: float,
                    max_iter: int = 200) -> float:
    """Argmin of a unimodal function on [lo, hi]; probes the endpoints too."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    candidates = [(fn(lo), lo), (fc, c), (fd, d), (fn(hi), hi)]
    best = min(candidates, key=lambda item: (item[0], item[1]))
    return best[1]


def _dl_cap_slice(problem: AllocationProblem) -> float:
    """Per-plant share of the base-station power cap.

    The cap is shared by every downlink user, so each registered plant's
    budget split may only ride an equal slice of what remains after the
    rate-constrained users' (relaxed) minimum spend, less a small
    headroom.
    """
    cached = getattr(problem, "_dl_slice_cache", None)
    if cached is not None:
        return cached
    ch = problem.channel
    reserve = 0.0
    for row, floor in problem.users.dl_rc.items():
        if floor > 0:
            reserve += float(waterfill_min_power(
                ch.gains_dl[row], 2.0 * floor, ch.subcarrier_bandwidth_hz,
                ch.noise_power_w, ch.p_max_bs_w).sum())
    slice_w = (ch.p_max_bs_w - reserve) * (1.0 - 1e-6) / max(1, len(problem.active_plants))
    slice_w = max(slice_w, 1e-30)
    object.__setattr__(problem, "_dl_slice_cache", slice_w)
    return slice_w


def _split_weight(weight_ul: float) -> float:
    # Lexicographic tie-break: an endpoint weight would leave one
    # direction unpriced and push it onto the shared cap for no gain.
    return min(max(weight_ul, 1e-9), 1.0 - 1e-9)


def split_delay_budget(problem: AllocationProblem, assignment, plant: int) -> DelaySplit:
    """Split a plant's delay budget between uplink and downlink.

    theta is the uplink share of the budget; the resulting rate targets
    are 2*payload/(theta*budget) uplink and 2*payload/((1-theta)*budget)
    downlink (half-duplex factor folded in).  theta minimizes the weighted
    transmit power over the feasible interval, located by golden-section
    search to 1e-6.  The downlink side of the search is capped at an equal
    slice of the base-station budget, since that cap is shared by every
    registered plant.
    """
    asg_ul, asg_dl = assignment
    ul_row, dl_row = problem.users.tc_pairs[plant]
    ch = problem.channel
    cols_ul = np.flatnonzero(np.asarray(asg_ul)[ul_row] > 0)
    cols_dl = np.flatnonzero(np.asarray(asg_dl)[dl_row] > 0)
    if cols_ul.size == 0 or cols_dl.size == 0:
        raise Infeasible("C11", f"plant {plant}: RTU without subcarriers")
    g_ul = ch.gains_ul[ul_row, cols_ul]
    g_dl = ch.gains_dl[dl_row, cols_dl]
    # A part in 1e9 of the budget is withheld so that share arithmetic can
    # never round the realized delay past the tolerance.
    budget = problem.delay_budget_s[plant] * (1.0 - 1e-9)
    payload = problem.payload_bits
    w, n0 = ch.subcarrier_bandwidth_hz, ch.noise_power_w
    need = 2.0 * payload / budget  # rate if one direction consumed the whole budget

    dl_cap = _dl_cap_slice(problem)
    rmax_ul = waterfill_max_rate(g_ul, ch.p_max_user_w, w, n0)
    rmax_dl = waterfill_max_rate(g_dl, dl_cap, w, n0)
    if rmax_ul <= 0 or rmax_dl <= 0:
        raise Infeasible("C11", f"plant {plant}: dead link")
    lo = max(need / rmax_ul, 1e-9)
    hi = min(1.0 - need / rmax_dl, 1.0 - 1e-9)
    if lo > hi:
        raise Infeasible(
            "C11", f"plant {plant}: budget {budget:.4f}s unreachable at the power caps")

    a = _split_weight(problem.weight_ul)

    def cost(theta: float) -> float:
        r_ul = 2.0 * payload / (theta * budget)
        r_dl = 2.0 * payload / ((1.0 - theta) * budget)
        try:
            p_ul = waterfill_min_power(g_ul, r_ul, w, n0, ch.p_max_user_w).sum()
            p_dl = waterfill_min_power(g_dl, r_dl, w, n0, dl_cap).sum()
        except Infeasible:
            return math.inf
        return a * float(p_ul) + (1.0 - a) * float(p_dl)

    theta = _golden_section(cost, lo, hi, tol=1e-6)
    return DelaySplit(2.0 * payload / (theta * budget),
                      2.0 * payload / ((1.0 - theta) * budget), theta)


def _rate_targets(problem: AllocationProblem,
                  theta: Optional[Dict[int, float]]) -> Tuple[Dict[int, float], Dict[int, float], Dict[int, str], Dict[int, str]]:
    """Per-row Shannon-sum rate targets and their constraint families."""
    targets_ul: Dict[int, float] = {}
    targets_dl: Dict[int, float] = {}
    family_ul: Dict[int, str] = {}
    family_dl: Dict[int, str] = {}
    for row, floor in problem.users.ul_rc.items():
        targets_ul[row] = 2.0 * floor
        family_ul[row] = "C9"
    for row, floor in problem.users.dl_rc.items():
        targets_dl[row] = 2.0 * floor
        family_dl[row] = "C10"
    for plant in problem.active_plants:
        ul_row, dl_row = problem.users.tc_pairs[plant]
        share = 0.5 if theta is None else theta.get(plant, 0.5)
        budget = problem.delay_budget_s[plant]
        targets_ul[ul_row] = 2.0 * problem.payload_bits / (share * budget)
        targets_dl[dl_row] = 2.0 * problem.payload_bits / ((1.0 - share) * budget)
        family_ul[ul_row] = "C11"
        family_dl[dl_row] = "C11"
    return targets_ul, targets_dl, family_ul, family_dl


class _DirectionAssigner:
    """Greedy construction plus move/swap local search for one direction."""

    def __init__(self, gains: Array, cand: Array, targets: Dict[int, float],
                 families: Dict[int, str], bandwidth_hz: float, noise_w: float,
                 personal_cap_w: Optional[float], pool_cap_w: Optional[float]):
        self.gains = gains
        self.cand = cand
        self.targets = targets
        self.families = families
        self.cap = personal_cap_w
        self.pool_cap = pool_cap_w
        self.n_users, self.n_sub = gains.shape
        self.rate = bandwidth_hz * np.log1p(cand * gains / noise_w) / LN2

    def _target(self, u: int) -> float:
        return self.targets.get(u, 0.0)

    def _tol(self, u: int) -> float:
        return max(1e-12, _RATE_RTOL * self._target(u))

    def greedy(self) -> List[set]:
        assigned: List[set] = [set() for _ in range(self.n_users)]
        rate_sum = np.zeros(self.n_users)
        spent = np.zeros(self.n_users)
        pool = 0.0
        owner = [-1] * self.n_sub
        while True:
            needy = [u for u in range(self.n_users)
                     if self._target(u) - rate_sum[u] > self._tol(u)]
            if not needy:
                return assigned
            best = None
            for u in needy:
                for l in range(self.n_sub):
                    if owner[l] >= 0 or self.rate[u, l] <= 0.0:
                        continue
                    if self.cap is not None and spent[u] + self.cand[u, l] > self.cap * (1 + 1e-12):
                        continue
                    if self.pool_cap is not None and pool + self.cand[u, l] > self.pool_cap * (1 + 1e-12):
                        continue
                    score = self.rate[u, l] / max(self.cand[u, l], 1e-300)
                    if best is None or score > best[0] * (1.0 + 1e-15):
                        best = (score, u, l)
            if best is None:
                u = needy[0]
                raise Infeasible(self.families.get(u, "C3"),
                                 f"user row {u} cannot reach its rate at the candidate powers")
            _, u, l = best
            assigned[u].add(l)
            owner[l] = u
            rate_sum[u] += self.rate[u, l]
            spent[u] += self.cand[u, l]
            pool += self.cand[u, l]

    def _feasible_rate(self, u: int, cols: set) -> bool:
        total = float(sum(self.rate[u, l] for l in cols))
        return self._target(u) - total <= self._tol(u)

    def _drop_redundant(self, u: int, cols: set) -> float:
        """Drop the priciest redundant subcarriers of u; returns power saved."""
        saved = 0.0
        while True:
            droppable = None
            for l in sorted(cols, key=lambda l: (-self.cand[u, l], l)):
                if self.cand[u, l] <= 0.0:
                    continue
                if self._feasible_rate(u, cols - {l}):
                    droppable = l
                    break
            if droppable is None:
                return saved
            cols.discard(droppable)
            saved += self.cand[u, droppable]

    def local_search(self, assigned: List[set], max_rounds: int = 100) -> List[set]:
        for _ in range(max_rounds):
            changed = False
            # Beneficial drops.
            for u in range(self.n_users):
                if self._drop_redundant(u, assigned[u]) > 0.0:
                    changed = True
            # Moves: hand subcarrier l from u to v, then drop v's redundancies.
            for u in range(self.n_users):
                for l in sorted(assigned[u]):
                    for v in range(self.n_users):
                        if v == u or self.rate[v, l] <= 0.0:
                            continue
                        if not self._feasible_rate(u, assigned[u] - {l}):
                            continue
                        trial = set(assigned[v])
                        trial.add(l)
                        saved = self._drop_redundant(v, trial)
                        delta = self.cand[v, l] - self.cand[u, l] - saved
                        if delta < -1e-15:
                            assigned[u].discard(l)
                            assigned[v] = trial
                            changed = True
                            break
                    if changed:
                        break
                if changed:
                    break
            if changed:
                continue
            # Swaps: exchange l (of u) with l2 (of v).
            for u in range(self.n_users):
                for l in sorted(assigned[u]):
                    for v in range(u + 1, self.n_users):
                        for l2 in sorted(assigned[v]):
                            u_new = (assigned[u] - {l}) | {l2}
                            v_new = (assigned[v] - {l2}) | {l}
                            if not self._feasible_rate(u, u_new):
                                continue
                            if not self._feasible_rate(v, v_new):
                                continue
                            saved = self._drop_redundant(u, u_new) + self._drop_redundant(v, v_new)
                            delta = (self.cand[u, l2] + self.cand[v, l]
                                     - self.cand[u, l] - self.cand[v, l2] - saved)
                            if delta < -1e-15:
                                assigned[u] = u_new
                                assigned[v] = v_new
                                changed = True
                                break
                        if changed:
                            break
                    if changed:
                        break
                if changed:
                    break
            if not changed:
                break
        return assigned

    def exhaustive(self) -> List[set]:
        if (self.n_users + 1) ** self.n_sub > 2_000_000:
            raise TooLarge("exhaustive assignment mode limited to small grids")
        best_cost = math.inf
        best_map = None
        for mapping in itertools.product(range(self.n_users + 1), repeat=self.n_sub):
            cost = 0.0
            rate_sum = np.zeros(self.n_users)
            spent = np.zeros(self.n_users)
            ok = True
            for l, owner in enumerate(mapping):
                if owner == 0:
                    continue
                u = owner - 1
                cost += self.cand[u, l]
                spent[u] += self.cand[u, l]
                rate_sum[u] += self.rate[u, l]
            if self.cap is not None and np.any(spent > self.cap * (1 + 1e-12)):
                continue
            if self.pool_cap is not None and cost > self.pool_cap * (1 + 1e-12):
                continue
            for u in range(self.n_users):
                if self._target(u) - rate_sum[u] > self._tol(u):
                    ok = False
                    break
            if ok and cost < best_cost - 1e-15:
                best_cost = cost
                best_map = mapping
        if best_map is None:
            raise Infeasible("C3", "no feasible assignment at the candidate powers")
        assigned: List[set] = [set() for _ in range(self.n_users)]
        for l, owner in enumerate(best_map):
            if owner > 0:
                assigned[owner - 1].add(l)
        return assigned

    def solve(self, exhaustive: bool) -> Array:
        if exhaustive:
            assigned = self.exhaustive()
        else:
            assigned = self.local_search(self.greedy())
        out = np.zeros((self.n_users, self.n_sub), dtype=np.int8)
        for u, cols in enumerate(assigned):
            for l in cols:
                out[u, l] = 1
        return out


def assign_subcarriers(problem: AllocationProblem, fixed_powers,
                       theta: Optional[Dict[int, float]] = None,
                       exhaustive: bool = False) -> Tuple[Array, Array]:
    """Exclusive per-direction assignment at frozen candidate powers.

    Minimizes the weighted transmit power the candidates imply while
    meeting every rate need (RC floors and the plants' delay-derived
    targets at the current budget split).  Raises Infeasible when even a
    full assignment cannot cover some user at these powers.
    """
    cand_ul, cand_dl = fixed_powers
    cand_ul = np.asarray(cand_ul, dtype=float)
    cand_dl = np.asarray(cand_dl, dtype=float)
    if np.any(cand_ul < 0) or np.any(cand_dl < 0):
        raise ValueError("candidate powers must be >= 0")
    ch = problem.channel
    targets_ul, targets_dl, fam_ul, fam_dl = _rate_targets(problem, theta)
    asg_ul = _DirectionAssigner(
        ch.gains_ul, cand_ul, targets_ul, fam_ul, ch.subcarrier_bandwidth_hz,
        ch.noise_power_w, personal_cap_w=ch.p_max_user_w,
        pool_cap_w=None).solve(exhaustive)
    asg_dl = _DirectionAssigner(
        ch.gains_dl, cand_dl, targets_dl, fam_dl, ch.subcarrier_bandwidth_hz,
        ch.noise_power_w, personal_cap_w=None,
        pool_cap_w=ch.p_max_bs_w).solve(exhaustive)
    return asg_ul, asg_dl


def allocate_power(problem: AllocationProblem, assignment) -> PowerAllocation:
    """Exact minimum-power allocation for a fixed exclusive assignment.

    RC users are driven to their floors, plant RTU pairs to the targets of
    the optimal delay split; every per-user subproblem is a water-filling
    with the rate constraint active.
    """
    asg_ul = np.asarray(assignment[0], dtype=np.int8)
    asg_dl = np.asarray(assignment[1], dtype=np.int8)
    ch = problem.channel
    w, n0 = ch.subcarrier_bandwidth_hz, ch.noise_power_w
    targets_ul: Dict[int, float] = {row: 2.0 * floor
                                    for row, floor in problem.users.ul_rc.items()}
    targets_dl: Dict[int, float] = {row: 2.0 * floor
                                    for row, floor in problem.users.dl_rc.items()}
    theta: Dict[int, float] = {}
    for plant in problem.active_plants:
        split = split_delay_budget(problem, (asg_ul, asg_dl), plant)
        ul_row, dl_row = problem.users.tc_pairs[plant]
        targets_ul[ul_row] = split.rate_ul_bps
        targets_dl[dl_row] = split.rate_dl_bps
        theta[plant] = split.theta

    powers_ul = np.zeros_like(ch.gains_ul)
    powers_dl = np.zeros_like(ch.gains_dl)
    kkt_max = 0.0

    def fill(row: int, target: float, gains_row: Array, asg_row: Array,
             powers: Array, cap: float, family: str) -> None:
        nonlocal kkt_max
        if target <= 0:
            return
        cols = np.flatnonzero(asg_row > 0)
        if cols.size == 0:
            raise Infeasible(family, f"user row {row} has a rate target but no subcarriers")
        g = gains_row[cols]
        try:
            p = waterfill_min_power(g, target, w, n0, cap)
        except Infeasible as exc:
            raise Infeasible(family, f"user row {row}: {exc.detail}") from exc
        powers[row, cols] = p
        kkt_max = max(kkt_max, waterfill_kkt_residual(g, target, w, n0, p))

    for row, target in targets_ul.items():
        fill(row, target, ch.gains_ul[row], asg_ul[row], powers_ul,
             ch.p_max_user_w, "C9" if row in problem.users.ul_rc else "C11")
    for row, target in targets_dl.items():
        fill(row, target, ch.gains_dl[row], asg_dl[row], powers_dl,
             ch.p_max_bs_w, "C10" if row in problem.users.dl_rc else "C11")

    total_dl = float(powers_dl.sum())
    if total_dl > ch.p_max_bs_w * (1 + 1e-9):
        raise Infeasible("C8", f"downlink needs {total_dl:.3e} W > BS cap {ch.p_max_bs_w:.3e} W")

    rates_ul = {row: link_rate(powers_ul[row], ch.gains_ul[row], asg_ul[row], w, n0)
                for row in targets_ul}
    rates_dl = {row: link_rate(powers_dl[row], ch.gains_dl[row], asg_dl[row], w, n0)
                for row in targets_dl}
    return PowerAllocation(powers_ul, powers_dl, theta, targets_ul, targets_dl,
                           rates_ul, rates_dl, kkt_max)


def awake_uplink_users(problem: AllocationProblem) -> Tuple[int, ...]:
    """Uplink rows drawing circuit power this epoch: RC users plus the
    RTUs of the plants registered to communicate."""
    rows = set(problem.users.ul_rc)
    for plant in problem.active_plants:
        rows.add(problem.users.tc_pairs[plant][0])
    return tuple(sorted(rows))


def power_components(problem: AllocationProblem, assignment,
                     powers) -> Tuple[float, float]:
    """(P_ul, P_bs) totals including circuit terms for the awake users."""
    ch = problem.channel
    p_ul = total_uplink_power(assignment[0], powers[0],
                              awake_uplink_users(problem), ch.p_cst_user_w)
    p_bs = total_bs_power(assignment[1], powers[1], ch.p_cst_bs_w)
    return p_ul, p_bs


def solution_objective(problem: AllocationProblem, assignment, powers) -> float:
    p_ul, p_bs = power_components(problem, assignment, powers)
    return problem.weight_ul * p_ul + (1.0 - problem.weight_ul) * p_bs


def _relaxed_candidates(gains: Array, targets: Dict[int, float],
                        bandwidth_hz: float, noise_w: float,
                        scale: float = 1.0) -> Array:
    """Candidate powers from each user's unconstrained water-fill.

    Every user's rate target is water-filled over the whole grid as if it
    had no competitors, and the resulting level (times ``scale``) is
    projected onto every subcarrier.  Scoring assignments at these powers
    lets the search see the value of spreading a large target over
    several subcarriers, which a minimal cover at uniform powers cannot.
    A coverage floor (the power delivering a 1/L share of the target)
    keeps every subcarrier usable when a collision steals the
    water-filled ones.
    """
    cand = np.zeros_like(gains)
    thr = noise_w / gains
    n_sub = gains.shape[1]
    for row, target in targets.items():
        if target <= 0:
            continue
        relaxed = waterfill_min_power(gains[row], target, bandwidth_hz,
                                      noise_w, math.inf)
        active = relaxed > 0
        mu = scale * float(np.mean(relaxed[active] + thr[row, active]))
        share = math.expm1(target / (n_sub * bandwidth_hz) * LN2)
        cand[row] = np.maximum(mu - thr[row], share * thr[row])
    return cand


def solve_allocation(problem: AllocationProblem,
                     opts: Optional[SolveOptions] = None) -> AllocationSolution:
    """Alternate assignment and power allocation until the objective stalls.

    Candidate powers for the assignment step come from each user's relaxed
    (competition-free) water-fill at the current rate targets.  When no
    exclusive cover exists at those powers, the candidate levels are
    doubled until one does (users with small targets reach solo coverage
    early while demanding users stay spread), with a uniform P_max/L grid
    as the last resort.  The best feasible iterate is kept, so the
    reported objective trace is non-increasing.  Raises Infeasible when no
    feasible point is found at all.
    """
    opts = opts or SolveOptions()
    ch = problem.channel
    L = ch.num_subcarriers
    w, n0 = ch.subcarrier_bandwidth_hz, ch.noise_power_w
    theta: Optional[Dict[int, float]] = None
    uniform = (np.full_like(ch.gains_ul, ch.p_max_user_w / L),
               np.full_like(ch.gains_dl, ch.p_max_bs_w / L))

    def assign_at_levels(theta_now):
        targets_ul, targets_dl, _, _ = _rate_targets(problem, theta_now)
        last_exc = None
        for attempt in range(24):
            cand = (_relaxed_candidates(ch.gains_ul, targets_ul, w, n0, 2.0 ** attempt),
                    _relaxed_candidates(ch.gains_dl, targets_dl, w, n0, 2.0 ** attempt))
            try:
                return assign_subcarriers(problem, cand, theta=theta_now,
                                          exhaustive=opts.exhaustive_assign)
            except Infeasible as exc:
                last_exc = exc
        try:
            return assign_subcarriers(problem, uniform, theta=theta_now,
                                      exhaustive=opts.exhaustive_assign)
        except Infeasible:
            raise last_exc if last_exc is not None else Infeasible("C3", "no cover")

    best = None
    trace: List[float] = []
    prev_obj = None
    converged = False
    iterations = 0
    diagnostics = ""
    for iterations in range(1, opts.max_iters + 1):
        try:
            asg = assign_at_levels(theta)
            pa = allocate_power(problem, asg)
        except Infeasible:
            if best is None:
                raise
            diagnostics = "kept incumbent after a later iterate became infeasible"
            converged = True
            break
        obj = solution_objective(problem, asg, (pa.powers_ul, pa.powers_dl))
        if best is not None and obj > best[0] + 1e-12:
            converged = True  # alternation reached a local optimum
            break
        trace.append(obj)
        if best is None or obj <= best[0]:
            best = (obj, asg, pa)
        if prev_obj is not None and abs(prev_obj - obj) <= opts.tol * max(abs(prev_obj), 1e-12):
            converged = True
            break
        prev_obj = obj
        theta = pa.theta

    obj, asg, pa = best
    p_ul, p_bs = power_components(problem, asg, (pa.powers_ul, pa.powers_dl))
    per_user = {("ul", row): rate for row, rate in pa.rates_ul.items()}
    per_user.update({("dl", row): rate for row, rate in pa.rates_dl.items()})
    return AllocationSolution(
        assignment_ul=asg[0], assignment_dl=asg[1],
        powers_ul=pa.powers_ul, powers_dl=pa.powers_dl,
        objective_w=obj, power_ul_w=p_ul, power_bs_w=p_bs,
        iterations=iterations, converged=converged, feasible=True,
        per_user_rates=per_user, theta=pa.theta,
        objective_trace=tuple(trace), kkt_residual_max=pa.kkt_residual_max,
        diagnostics=diagnostics)


def realized_plant_delays(problem: AllocationProblem,
                          solution: AllocationSolution) -> Dict[int, Tuple[float, float]]:
    """Per-plant (uplink, downlink) transmission delays at the solved rates."""
    out: Dict[int, Tuple[float, float]] = {}
    for plant in problem.active_plants:
        ul_row, dl_row = problem.users.tc_pairs[plant]
        r_ul = solution.per_user_rates[("ul", ul_row)]
        r_dl = solution.per_user_rates[("dl", dl_row)]
        out[plant] = (transmission_delay(problem.payload_bits, r_ul),
                      transmission_delay(problem.payload_bits, r_dl))
    return out


def check_solution(problem: AllocationProblem, solution: AllocationSolution,
                   comp_delay_s: float = 0.0,
                   delay_max_s: Optional[Dict[int, float]] = None) -> List[str]:
    """Independent validator: recompute every constraint from the matrices.

    Returns a list of violation strings (empty when the solution honors
    C3-C11).  When delay tolerances are passed, C11 is checked against
    them including the compute-delay term.
    """
    ch = problem.channel
    w, n0 = ch.subcarrier_bandwidth_hz, ch.noise_power_w
    asg_ul = np.asarray(solution.assignment_ul)
    asg_dl = np.asarray(solution.assignment_dl)
    p_ul = np.asarray(solution.powers_ul)
    p_dl = np.asarray(solution.powers_dl)
    bad: List[str] = []
    if not np.isin(asg_ul, (0, 1)).all() or not np.isin(asg_dl, (0, 1)).all():
        bad.append("C5/C6: assignment entries must be binary")
    if np.any(asg_ul.sum(axis=0) > 1):
        bad.append("C3: a subcarrier is shared by several uplink users")
    if np.any(asg_dl.sum(axis=0) > 1):
        bad.append("C4: a subcarrier is shared by several downlink users")
    if np.any(p_ul < 0) or np.any(p_dl < 0):
        bad.append("powers must be >= 0")
    if np.any(p_ul[asg_ul == 0] != 0) or np.any(p_dl[asg_dl == 0] != 0):
        bad.append("power on an unassigned subcarrier")
    per_user_ul = (asg_ul * p_ul).sum(axis=1)
    if np.any(per_user_ul > ch.p_max_user_w * (1 + 1e-9)):
        bad.append("C7: an uplink user exceeds its power cap")
    if (asg_dl * p_dl).sum() > ch.p_max_bs_w * (1 + 1e-9):
        bad.append("C8: base station exceeds its power cap")
    for row, floor in problem.users.ul_rc.items():
        rate = link_rate(p_ul[row], ch.gains_ul[row], asg_ul[row], w, n0)
        if 0.5 * rate < floor * (1 - _RATE_RTOL):
            bad.append(f"C9: uplink RC row {row} below its floor")
    for row, floor in problem.users.dl_rc.items():
        rate = link_rate(p_dl[row], ch.gains_dl[row], asg_dl[row], w, n0)
        if 0.5 * rate < floor * (1 - _RATE_RTOL):
            bad.append(f"C10: downlink RC row {row} below its floor")
    for plant in problem.active_plants:
        ul_row, dl_row = problem.users.tc_pairs[plant]
        r_ul = link_rate(p_ul[ul_row], ch.gains_ul[ul_row], asg_ul[ul_row], w, n0)
        r_dl = link_rate(p_dl[dl_row], ch.gains_dl[dl_row], asg_dl[dl_row], w, n0)
        if r_ul <= 0 or r_dl <= 0:
            bad.append(f"C11: plant {plant} has a dead direction")
            continue
        delay = (transmission_delay(problem.payload_bits, r_ul)
                 + transmission_delay(problem.payload_bits, r_dl))
        budget = problem.delay_budget_s[plant]
        if delay > budget * (1 + 1e-9):
            bad.append(f"C11: plant {plant} delay {delay:.6f}s over budget {budget:.6f}s")
        if delay_max_s is not None:
            tol = delay_max_s[plant]
            if comp_delay_s + delay > tol * (1 + 1e-9):
                bad.append(f"C11: plant {plant} end-to-end delay over {tol:.6f}s")
    return bad


def _enumerate_direction(gains: Array, user_rows: Sequence[int],
                         rc_targets: Dict[int, float], plant_rows: Sequence[int],
                         bandwidth_hz: float, noise_w: float,
                         personal_cap_w: Optional[float], pool_cap_w: Optional[float]):
    """All exclusive assignments of one direction, grouped by the tuple of
    plant-row subcarrier sets.  Yields {key: (rc_power, mapping)} with the
    cheapest rate-constrained power per group."""
    n_sub = gains.shape[1]
    memo: Dict[Tuple[int, frozenset], Optional[float]] = {}

    def rc_cost(row: int, cols: frozenset) -> Optional[float]:
        key = (row, cols)
        if key in memo:
            return memo[key]
        target = rc_targets[row]
        if target <= 0:
            memo[key] = 0.0
            return 0.0
        if not cols:
            memo[key] = None
            return None
        cap = personal_cap_w if personal_cap_w is not None else (
            pool_cap_w if pool_cap_w is not None else math.inf)
        try:
            p = waterfill_min_power(gains[row, sorted(cols)], target,
                                    bandwidth_hz, noise_w, cap)
            memo[key] = float(p.sum())
        except Infeasible:
            memo[key] = None
        return memo[key]

    groups: Dict[Tuple[frozenset, ...], Tuple[float, tuple]] = {}
    users = list(user_rows)
    for mapping in itertools.product(range(len(users) + 1), repeat=n_sub):
        sets: Dict[int, set] = {row: set() for row in users}
        for l, owner in enumerate(mapping):
            if owner > 0:
                sets[users[owner - 1]].add(l)
        total_rc = 0.0
        ok = True
        for row, target in rc_targets.items():
            cost = rc_cost(row, frozenset(sets[row]))
            if cost is None:
                ok = False
                break
            total_rc += cost
        if not ok:
            continue
        if pool_cap_w is not None and total_rc > pool_cap_w * (1 + 1e-9):
            continue
        key = tuple(frozenset(sets[row]) for row in plant_rows)
        if any(len(k) == 0 for k in key):
            continue
        current = groups.get(key)
        if current is None or total_rc < current[0] - 1e-18:
            groups[key] = (total_rc, mapping)
    return groups, users


def brute_force_allocation(problem: AllocationProblem) -> AllocationSolution:
    """Certified optimum over all exclusive assignments (validation only).

    Enumerates both directions, memoizes per-user water-filling costs, and
    joins the directions over the distinct tuples of plant subcarrier
    sets, scoring each plant pair with the same delay-split machinery the
    production path uses.  Guard rails keep the enumeration tractable.
    """
    ch = problem.channel
    L = ch.num_subcarriers
    users = problem.users
    ul_rows = [users.tc_pairs[p][0] for p in problem.active_plants] + sorted(users.ul_rc)
    dl_rows = [users.tc_pairs[p][1] for p in problem.active_plants] + sorted(users.dl_rc)
    if L > 8:
        raise TooLarge(f"brute force limited to L <= 8, got {L}")
    if len(ul_rows) > 4 or len(dl_rows) > 4:
        raise TooLarge("brute force limited to 4 users per direction")
    w, n0 = ch.subcarrier_bandwidth_hz, ch.noise_power_w
    a = problem.weight_ul

    rc_ul = {row: 2.0 * floor for row, floor in users.ul_rc.items()}
    rc_dl = {row: 2.0 * floor for row, floor in users.dl_rc.items()}
    plant_ul = [users.tc_pairs[p][0] for p in problem.active_plants]
    plant_dl = [users.tc_pairs[p][1] for p in problem.active_plants]

    groups_ul, _ = _enumerate_direction(ch.gains_ul, ul_rows, rc_ul, plant_ul,
                                        w, n0, ch.p_max_user_w, None)
    groups_dl, _ = _enumerate_direction(ch.gains_dl, dl_rows, rc_dl, plant_dl,
                                        w, n0, None, ch.p_max_bs_w)
    if not groups_ul or not groups_dl:
        raise Infeasible("C3", "no feasible assignment in one direction")

    payload = problem.payload_bits
    dl_cap = _dl_cap_slice(problem)
    split_a = _split_weight(a)
    pair_memo: Dict[Tuple[int, frozenset, frozenset], Optional[Tuple[float, float]]] = {}
    side_min_memo: Dict[Tuple[int, str, frozenset], Optional[float]] = {}

    def side_min_power(idx: int, side: str, cols: frozenset) -> Optional[float]:
        """Cheapest transmit power if this side received the whole budget.

        A valid lower bound on the side's share of any feasible split."""
        key = (idx, side, cols)
        if key in side_min_memo:
            return side_min_memo[key]
        plant = problem.active_plants[idx]
        ul_row, dl_row = users.tc_pairs[plant]
        budget = problem.delay_budget_s[plant]
        if side == "ul":
            g = ch.gains_ul[ul_row, sorted(cols)]
            cap = ch.p_max_user_w
        else:
            g = ch.gains_dl[dl_row, sorted(cols)]
            cap = dl_cap
        try:
            value = float(waterfill_min_power(
                g, 2.0 * payload / budget, w, n0, cap).sum())
        except Infeasible:
            value = None
        side_min_memo[key] = value
        return value

    def pair_cost(idx: int, s_ul: frozenset, s_dl: frozenset):
        key = (idx, s_ul, s_dl)
        if key in pair_memo:
            return pair_memo[key]
        plant = problem.active_plants[idx]
        ul_row, dl_row = users.tc_pairs[plant]
        g_ul = ch.gains_ul[ul_row, sorted(s_ul)]
        g_dl = ch.gains_dl[dl_row, sorted(s_dl)]
        budget = problem.delay_budget_s[plant] * (1.0 - 1e-9)  # rounding guard
        need = 2.0 * payload / budget
        rmax_ul = waterfill_max_rate(g_ul, ch.p_max_user_w, w, n0)
        rmax_dl = waterfill_max_rate(g_dl, dl_cap, w, n0)
        result = None
        if rmax_ul > 0 and rmax_dl > 0:
            lo = max(need / rmax_ul, 1e-9)
            hi = min(1.0 - need / rmax_dl, 1.0 - 1e-9)
            if lo <= hi:
                def cost(theta):
                    try:
                        p_u = waterfill_min_power(
                            g_ul, 2.0 * payload / (theta * budget), w, n0,
                            ch.p_max_user_w).sum()
                        p_d = waterfill_min_power(
                            g_dl, 2.0 * payload / ((1.0 - theta) * budget), w,
                            n0, dl_cap).sum()
                    except Infeasible:
                        return math.inf
                    return split_a * float(p_u) + (1.0 - split_a) * float(p_d)

                theta = _golden_section(cost, lo, hi, tol=1e-6)
                try:
                    p_u = float(waterfill_min_power(
                        g_ul, 2.0 * payload / (theta * budget), w, n0,
                        ch.p_max_user_w).sum())
                    p_d = float(waterfill_min_power(
                        g_dl, 2.0 * payload / ((1.0 - theta) * budget), w, n0,
                        dl_cap).sum())
                    result = (p_u, p_d)
                except Infeasible:
                    result = None
        pair_memo[key] = result
        return result

    # Rank all direction combinations by an optimistic bound, then refine in
    # that order with the exact budget split; stop once the bound cannot beat
    # the incumbent.
    n_plants = len(problem.active_plants)
    candidates = []
    for key_ul, (rc_power_ul, map_ul) in groups_ul.items():
        for key_dl, (rc_power_dl, map_dl) in groups_dl.items():
            bound = a * rc_power_ul + (1.0 - a) * rc_power_dl
            ok = True
            for idx in range(n_plants):
                lb_u = side_min_power(idx, "ul", key_ul[idx])
                lb_d = side_min_power(idx, "dl", key_dl[idx])
                if lb_u is None or lb_d is None:
                    ok = False
                    break
                bound += a * lb_u + (1.0 - a) * lb_d
            if ok:
                candidates.append((bound, key_ul, key_dl,
                                   rc_power_ul, rc_power_dl, map_ul, map_dl))
    candidates.sort(key=lambda item: item[0])

    best = None
    for bound, key_ul, key_dl, rc_power_ul, rc_power_dl, map_ul, map_dl in candidates:
        if best is not None and bound >= best[0] - 1e-18:
            break
        tx_ul = rc_power_ul
        tx_dl = rc_power_dl
        ok = True
        for idx in range(n_plants):
            pair = pair_cost(idx, key_ul[idx], key_dl[idx])
            if pair is None:
                ok = False
                break
            tx_ul += pair[0]
            tx_dl += pair[1]
        if not ok:
            continue
        if tx_dl > ch.p_max_bs_w * (1 + 1e-9):
            continue
        weighted = a * tx_ul + (1.0 - a) * tx_dl
        if best is None or weighted < best[0] - 1e-18:
            best = (weighted, map_ul, map_dl)
    if best is None:
        raise Infeasible("C11", "no jointly feasible assignment")

    _, map_ul, map_dl = best
    asg_ul = np.zeros_like(ch.gains_ul, dtype=np.int8)
    asg_dl = np.zeros_like(ch.gains_dl, dtype=np.int8)
    for l, owner in enumerate(map_ul):
        if owner > 0:
            asg_ul[ul_rows[owner - 1], l] = 1
    for l, owner in enumerate(map_dl):
        if owner > 0:
            asg_dl[dl_rows[owner - 1], l] = 1
    pa = allocate_power(problem, (asg_ul, asg_dl))
    obj = solution_objective(problem, (asg_ul, asg_dl), (pa.powers_ul, pa.powers_dl))
    p_ul, p_bs = power_components(problem, (asg_ul, asg_dl), (pa.powers_ul, pa.powers_dl))
    per_user = {("ul", row): rate for row, rate in pa.rates_ul.items()}
    per_user.update({("dl", row): rate for row, rate in pa.rates_dl.items()})
    return AllocationSolution(
        assignment_ul=asg_ul, assignment_dl=asg_dl,
        powers_ul=pa.powers_ul, powers_dl=pa.powers_dl,
        objective_w=obj, power_ul_w=p_ul, power_bs_w=p_bs,
        iterations=1, converged=True, feasible=True,
        per_user_rates=per_user, theta=pa.theta,
        objective_trace=(obj,), kkt_residual_max=pa.kkt_residual_max,
        diagnostics="exhaustive")


def random_problem(seed: int, max_subcarriers: int = 6) -> AllocationProblem:
    """Seeded random small instance for solver-versus-oracle comparisons.

    Frequency-selective gains, one or two plants, one or two RC users per
    direction; regenerated (deterministically) until feasible.
    """
    attempt = 0
    while True:
        rng = np.random.default_rng([seed, attempt])
        L = int(rng.integers(4, max_subcarriers + 1))
        n_plants = int(rng.integers(1, 3))
        n_rc_ul = int(rng.integers(1, 4 - n_plants + 1))
        n_rc_dl = int(rng.integers(1, 4 - n_plants + 1))
        m = n_plants + n_rc_ul
        n = n_plants + n_rc_dl
        gains_ul = 10.0 ** rng.uniform(-6.0, -3.0, (m, L))
        gains_dl = 10.0 ** rng.uniform(-6.0, -3.0, (n, L))
        channel = ChannelState(
            gains_ul=gains_ul, gains_dl=gains_dl,
            subcarrier_bandwidth_hz=180e3, noise_power_w=5.97e-10,
            p_max_user_w=10.0 ** rng.uniform(-3.0, -0.5),
            p_max_bs_w=10.0 ** rng.uniform(-1.0, 1.3),
            p_cst_user_w=1.023e-3, p_cst_bs_w=0.1)
        users = UserPopulation(
            ul_tc=tuple(range(n_plants)), dl_tc=tuple(range(n_plants)),
            ul_rc={n_plants + j: float(10.0 ** rng.uniform(3.0, 5.3))
                   for j in range(n_rc_ul)},
            dl_rc={n_plants + j: float(10.0 ** rng.uniform(3.0, 5.3))
                   for j in range(n_rc_dl)},
            tc_pairs={p + 1: (p, p) for p in range(n_plants)})
        problem = AllocationProblem(
            channel=channel, users=users,
            active_plants=tuple(p + 1 for p in range(n_plants)),
            delay_budget_s={p + 1: float(10.0 ** rng.uniform(-2.5, -0.5))
                            for p in range(n_plants)},
            payload_bits=float(rng.integers(70, 2000)),
            weight_ul=float(rng.uniform(0.05, 0.95)))
        try:
            solve_allocation(problem)
            return problem
        except Infeasible:
            attempt += 1
            if attempt > 50:
                raise RuntimeError(f"seed {seed}: no feasible instance found")
