"""Discrete-event co-simulation loop.

Couples the plants, the self-triggered sampler, and the per-epoch
allocator: every accepted sample wakes the plant's RTUs, triggers an
allocation solve for the registered plants plus the rate-constrained
background users, realizes the end-to-end delay from the solved rates,
schedules the control application and the next sample, and accounts the
consumed energy.  A periodic baseline replaces the sampler with a fixed
sampling grid and leaves everything else untouched.

Event times are kept in integer microseconds so that ordering and
tie-breaking are exact; ties are processed as one batch (epoch solves
first, then samples, then control applications).

Energy accounting (duty-cycled mode): each communication session is
billed at its epoch power for its transmission window (uplink payload
window, then downlink), the RTU circuit power for the wake window, and
the base-station circuit power once per epoch for the busy window.
Rate-constrained users are served continuously: their circuit power and
their transmit power (at the most recent allocation) accrue over wall
time.  In always-on mode the TC RTU and BS circuit terms accrue over
wall time instead of per session.
"""
from __future__ import annotations

import dataclasses
import heapq
import math
import time as _time
from enum import IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import allocator as alloc
from .config import ScenarioConfig
from .errors import (
    DeadlineViolation,
    Infeasible,
    NonFiniteState,
    StabilityViolation,
)
from .network import (
    ChannelState,
    UserPopulation,
    gains_from_distances,
    sample_distances,
)
from .plant import DisturbancePath, PlantModel, dense_propagate, pole_place
from .sampler import (
    DisturbanceEstimate,
    SampleHistory,
    SamplingDecision,
    estimate_disturbance,
    next_sampling_instant,
)

Array = np.ndarray

US = 1_000_000  # microseconds per second


class EventKind(IntEnum):
    """Tie-break order within one instant."""

    EPOCH_SOLVE = 0
    SAMPLE_DUE = 1
    CONTROL_APPLIED = 2
    RUN_END = 3


@dataclasses.dataclass(frozen=True)
class SimEvent:
    time_us: int
    kind: EventKind
    plant_id: int
    payload: object = None


@dataclasses.dataclass(eq=False)
class MetricsReport:
    """Everything a run produces: counters, traces, logs, and violations."""

    mode: str
    duration_s: float
    weight_ul: float
    circuit_power_mode: str
    per_plant_tx_count: Dict[int, int]
    energy_ul_j: float
    energy_bs_j: float
    power_trace_t_s: Array
    power_trace_ul_w: Array
    power_trace_bs_w: Array
    trajectories: Dict[int, Dict[str, Array]]
    samples: List[dict]
    solver_log: List[dict]
    control_events: List[dict]
    violations: List[str]
    per_plant_max_deviation: Dict[int, float]
    per_plant_deviation_bound: Dict[int, float]
    per_plant_delay_max_s: Dict[int, float]
    initial_state_norm: Dict[int, float]
    final_state_norm: Dict[int, float]
    solver_stats: Dict[str, float]
    seeds: Dict[str, int]
    resolved_config: dict
    wall_time_s: float
    schema_version: int = 1

    def summary_dict(self) -> dict:
        """JSON-ready digest (no large arrays)."""
        return {
            "schema_version": self.schema_version,
            "mode": self.mode,
            "duration_s": self.duration_s,
            "weight_ul": self.weight_ul,
            "circuit_power_mode": self.circuit_power_mode,
            "per_plant_tx_count": {str(k): v for k, v in self.per_plant_tx_count.items()},
            "energy_ul_j": self.energy_ul_j,
            "energy_bs_j": self.energy_bs_j,
            "energy_total_j": self.energy_ul_j + self.energy_bs_j,
            "violations": list(self.violations),
            "per_plant_max_deviation": {str(k): v for k, v in self.per_plant_max_deviation.items()},
            "per_plant_deviation_bound": {str(k): v for k, v in self.per_plant_deviation_bound.items()},
            "initial_state_norm": {str(k): v for k, v in self.initial_state_norm.items()},
            "final_state_norm": {str(k): v for k, v in self.final_state_norm.items()},
            "solver_stats": dict(self.solver_stats),
            "seeds": dict(self.seeds),
            "wall_time_s": self.wall_time_s,
            "resolved_config": self.resolved_config,
        }


@dataclasses.dataclass(eq=False)
class _PlantRuntime:
    plant_id: int
    model: PlantModel
    delay_max_s: float
    h_max_s: float
    path: DisturbancePath
    x: Array = dataclasses.field(init=False)
    u_held: Array = dataclasses.field(init=False)
    x_at_sample: Array = dataclasses.field(init=False)
    t_us: int = 0
    history: SampleHistory = dataclasses.field(default_factory=SampleHistory)
    tx_count: int = 0
    sample_index: int = 0
    last_sample: Optional[Tuple[float, Array]] = None
    interval_max_dev: float = 0.0
    max_dev: float = 0.0
    traj_chunks: List[Tuple[Array, Array, Array, Array]] = dataclasses.field(default_factory=list)
    input_changes: List[Tuple[int, Array]] = dataclasses.field(default_factory=list)

    def __post_init__(self):
        self.x = self.model.x0.copy()
        self.u_held = np.zeros(self.model.m)
        self.x_at_sample = self.model.x0.copy()
        self.input_changes.append((0, self.u_held.copy()))

    def input_at(self, t_s: float) -> Array:
        t_us = int(round(t_s * US))
        u = self.input_changes[0][1]
        for change_us, value in self.input_changes:
            if change_us <= t_us:
                u = value
            else:
                break
        return u


@dataclasses.dataclass(eq=False)
class _Runtime:
    config: ScenarioConfig
    plants: Dict[int, _PlantRuntime]
    channel: ChannelState
    users: UserPopulation
    comp_delay_s: float
    payload_bits: float
    weight_ul: float


def build_runtime(config: ScenarioConfig) -> _Runtime:
    """Materialize models, channel, and disturbance paths from a config."""
    sim = config.sim
    plants: Dict[int, _PlantRuntime] = {}
    for spec in config.plants:
        gain = spec.gain
        if gain is None:
            gain = pole_place(spec.a, spec.b, spec.closed_loop_eigs)
        model = PlantModel(
            A=spec.a, B=spec.b, K=gain, C=spec.c,
            d_bound=spec.disturbance_bound,
            deviation_bound=spec.deviation_bound,
            deviation_bound_max=spec.deviation_bound_max,
            x0=spec.x0)
        path = DisturbancePath(
            dim=model.n, bound=model.d_bound, horizon_s=sim.duration_s,
            seed=[sim.seed_disturbance, spec.id],
            resample_s=sim.disturbance_resample_s)
        delay_max = spec.delay_max_s if spec.delay_max_s is not None else config.network.delay_max_s
        h_max = spec.h_max_s if spec.h_max_s is not None else sim.h_max_s
        plants[spec.id] = _PlantRuntime(
            plant_id=spec.id, model=model, delay_max_s=delay_max,
            h_max_s=h_max, path=path)

    n_plants = len(config.plants)
    n_rc = config.users.num_rc
    rng = np.random.default_rng(sim.seed_positions)
    net = config.network
    dist_ul_tc = (np.asarray(config.users.tc_ul_distances_m, dtype=float)
                  if config.users.tc_ul_distances_m is not None
                  else sample_distances(rng, n_plants, net.distance_min_m, net.distance_max_m))
    dist_dl_tc = (np.asarray(config.users.tc_dl_distances_m, dtype=float)
                  if config.users.tc_dl_distances_m is not None
                  else sample_distances(rng, n_plants, net.distance_min_m, net.distance_max_m))
    dist_rc = (np.asarray(config.users.rc_distances_m, dtype=float)
               if config.users.rc_distances_m is not None
               else sample_distances(rng, n_rc, net.distance_min_m, net.distance_max_m))
    gains_ul = gains_from_distances(
        np.concatenate([dist_ul_tc, dist_rc]) if n_rc else dist_ul_tc,
        net.attenuation_factor, net.num_subcarriers)
    gains_dl = gains_from_distances(
        np.concatenate([dist_dl_tc, dist_rc]) if n_rc else dist_dl_tc,
        net.attenuation_factor, net.num_subcarriers)
    channel = ChannelState(
        gains_ul=gains_ul, gains_dl=gains_dl,
        subcarrier_bandwidth_hz=net.subcarrier_bandwidth_hz,
        noise_power_w=net.noise_power_w,
        p_max_user_w=net.p_max_user_w, p_max_bs_w=net.p_max_bs_w,
        p_cst_user_w=net.p_cst_user_w, p_cst_bs_w=net.p_cst_bs_w)
    plant_ids = [spec.id for spec in config.plants]
    users = UserPopulation(
        ul_tc=tuple(range(n_plants)), dl_tc=tuple(range(n_plants)),
        ul_rc={n_plants + j: net.rc_rate_floor_ul_bps for j in range(n_rc)},
        dl_rc={n_plants + j: net.rc_rate_floor_dl_bps for j in range(n_rc)},
        tc_pairs={pid: (i, i) for i, pid in enumerate(plant_ids)})
    return _Runtime(config=config, plants=plants, channel=channel, users=users,
                    comp_delay_s=sim.comp_delay_s,
                    payload_bits=net.payload_tc_bits, weight_ul=sim.weight_ul)


class _PowerLedger:
    """Piecewise-constant power bookkeeping via step deltas.

    All billed contributions are recorded as (time, +level) / (time,
    -level) pairs; the trace and the energy integrals come from one walk
    over the sorted deltas, so they agree by construction.
    """

    def __init__(self, horizon_us: int):
        self.horizon_us = horizon_us
        self.deltas: List[Tuple[int, float, float]] = []

    def add_window(self, t0_us: int, t1_us: int, p_ul: float, p_bs: float) -> None:
        t0 = min(t0_us, self.horizon_us)
        t1 = min(t1_us, self.horizon_us)
        if t1 <= t0 or (p_ul == 0.0 and p_bs == 0.0):
            return
        self.deltas.append((t0, p_ul, p_bs))
        self.deltas.append((t1, -p_ul, -p_bs))

    def finalize(self):
        merged: Dict[int, Tuple[float, float]] = {}
        for t, dul, dbs in self.deltas:
            cur = merged.get(t, (0.0, 0.0))
            merged[t] = (cur[0] + dul, cur[1] + dbs)
        times = sorted(merged)
        if 0 not in merged:
            times.insert(0, 0)
            merged[0] = (0.0, 0.0)
        if self.horizon_us not in merged:
            times.append(self.horizon_us)
            times.sort()
            merged[self.horizon_us] = (0.0, 0.0)
        trace_t = []
        trace_ul = []
        trace_bs = []
        level_ul = 0.0
        level_bs = 0.0
        energy_ul = 0.0
        energy_bs = 0.0
        prev_t = 0
        for t in times:
            if t > prev_t:
                dt = (t - prev_t) / US
                energy_ul += level_ul * dt
                energy_bs += level_bs * dt
            dul, dbs = merged[t]
            level_ul += dul
            level_bs += dbs
            trace_t.append(t / US)
            trace_ul.append(level_ul)
            trace_bs.append(level_bs)
            prev_t = t
        return (np.array(trace_t), np.array(trace_ul), np.array(trace_bs),
                energy_ul, energy_bs)


def run_scenario(config: ScenarioConfig) -> MetricsReport:
    """Self-triggered co-simulation of the configured scenario."""
    return _run(config, mode="self_triggered", period_s=None)


def run_periodic_baseline(config: ScenarioConfig,
                          period_s: Optional[float] = None) -> MetricsReport:
    """Identical loop with sampling on a fixed grid for every plant.

    The number of samples is max(1, floor(duration / period)), which pins
    the count rather than leaving it to floating-point edge effects.
    """
    period = period_s if period_s is not None else config.sim.baseline_period_s
    if period <= 0:
        raise ValueError("period must be > 0")
    return _run(config, mode="periodic", period_s=period)


def sweep_weight(config: ScenarioConfig, a_values) -> List[MetricsReport]:
    """One full self-triggered run per objective weight, same seeds."""
    reports = []
    for a in a_values:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"weight {a} outside [0, 1]")
        reports.append(run_scenario(config.with_weight(a)))
    return reports


def _run(config: ScenarioConfig, mode: str, period_s: Optional[float]) -> MetricsReport:
    t_start = _time.perf_counter()
    rt = build_runtime(config)
    sim = config.sim
    T_us = int(round(sim.duration_s * US))
    dt = sim.dt_s
    duty_cycled = sim.circuit_power_mode == "duty_cycled"
    ledger = _PowerLedger(T_us)
    plants = rt.plants
    plant_ids = sorted(plants)

    heap: List[Tuple[int, int, int, int]] = []
    payloads: Dict[int, object] = {}
    seq = 0

    def push(event: SimEvent) -> None:
        nonlocal seq
        seq += 1
        payloads[seq] = event.payload
        heapq.heappush(heap, (event.time_us, int(event.kind), event.plant_id, seq))

    bg_period_us = int(round(sim.rc_background_period_s * US))
    for k in range(0, T_us // bg_period_us + 1):
        push(SimEvent(k * bg_period_us, EventKind.EPOCH_SOLVE, -1))

    if mode == "periodic":
        count = max(1, int(sim.duration_s / period_s + 1e-9))
        period_us = int(round(period_s * US))
        for pid in plant_ids:
            for k in range(count):
                push(SimEvent(k * period_us, EventKind.SAMPLE_DUE, pid))
    else:
        for pid in plant_ids:
            push(SimEvent(0, EventKind.SAMPLE_DUE, pid))

    solver_log: List[dict] = []
    samples_log: List[dict] = []
    control_log: List[dict] = []
    violations: List[str] = []
    solver_iter_max = 0
    solver_kkt_max = 0.0
    rc_level_ul = 0.0
    rc_level_dl = 0.0
    rc_level_since_us = 0

    # Continuous terms: RC circuit power always accrues; in always-on mode
    # the TC RTU and BS circuit terms accrue over the whole run too.
    n_rc = len(rt.users.ul_rc)
    if n_rc:
        ledger.add_window(0, T_us, n_rc * rt.channel.p_cst_user_w, 0.0)
    if not duty_cycled:
        ledger.add_window(0, T_us, len(plant_ids) * rt.channel.p_cst_user_w,
                          rt.channel.p_cst_bs_w)

    def advance_plants(t_target_us: int) -> None:
        for pid in plant_ids:
            p = plants[pid]
            if t_target_us <= p.t_us:
                continue
            t0 = p.t_us / US
            t1 = t_target_us / US
            try:
                ts, xs = dense_propagate(p.model, p.x, p.u_held, p.path, t0, t1, dt)
            except NonFiniteState as exc:
                raise StabilityViolation(f"plant {pid}: {exc}") from exc
            devs = np.linalg.norm(xs - p.x_at_sample, axis=1)
            p.interval_max_dev = max(p.interval_max_dev, float(devs.max()))
            p.max_dev = max(p.max_dev, p.interval_max_dev)
            us_col = np.tile(p.u_held, (len(ts) - 1, 1))
            p.traj_chunks.append((ts[1:], xs[1:], us_col, devs[1:]))
            p.x = xs[-1]
            p.t_us = t_target_us

    def update_rc_levels(t_us: int, solution: alloc.AllocationSolution,
                         problem: alloc.AllocationProblem) -> None:
        nonlocal rc_level_ul, rc_level_dl, rc_level_since_us
        ledger.add_window(rc_level_since_us, t_us, rc_level_ul, rc_level_dl)
        rc_rows_ul = sorted(problem.users.ul_rc)
        rc_rows_dl = sorted(problem.users.dl_rc)
        rc_level_ul = float(sum(solution.powers_ul[r].sum() for r in rc_rows_ul))
        rc_level_dl = float(sum(solution.powers_dl[r].sum() for r in rc_rows_dl))
        rc_level_since_us = t_us

    def solve_epoch(t_us: int, active: List[int], kind: str):
        nonlocal solver_iter_max, solver_kkt_max
        problem = alloc.AllocationProblem(
            channel=rt.channel, users=rt.users, active_plants=tuple(active),
            delay_budget_s={pid: plants[pid].delay_max_s - rt.comp_delay_s
                            for pid in active},
            payload_bits=rt.payload_bits, weight_ul=rt.weight_ul)
        while True:
            try:
                solution = alloc.solve_allocation(problem)
                break
            except Infeasible as exc:
                bumped = False
                for pid in active:
                    p = plants[pid]
                    bound = p.model.deviation_bound
                    ceiling = p.model.deviation_bound_max
                    if bound < ceiling:
                        p.model = dataclasses.replace(
                            p.model, deviation_bound=min(bound * 1.1, ceiling))
                        bumped = True
                if not bumped:
                    raise DeadlineViolation(
                        f"t={t_us / US:.3f}s: allocation infeasible ({exc}) with "
                        f"deviation bounds at their ceiling") from exc
        solver_iter_max = max(solver_iter_max, solution.iterations)
        solver_kkt_max = max(solver_kkt_max, solution.kkt_residual_max)
        delays = alloc.realized_plant_delays(problem, solution)
        solver_log.append({
            "t_s": t_us / US, "kind": kind, "n_plants": len(active),
            "plants": "|".join(str(p) for p in sorted(active)),
            "iterations": solution.iterations,
            "converged": solution.converged,
            "objective_w": solution.objective_w,
            "power_ul_w": solution.power_ul_w,
            "power_bs_w": solution.power_bs_w,
            "kkt_residual": solution.kkt_residual_max,
        })
        return solution, delays

    def bill_tc_epoch(t_us: int, active: List[int], solution, delays) -> None:
        busy_end = t_us
        for pid in active:
            ul_row, dl_row = rt.users.tc_pairs[pid]
            d_ul, d_dl = delays[pid]
            d_total = d_ul + d_dl + rt.comp_delay_s
            ul_end = t_us + int(round(d_ul * US))
            dl_end = ul_end + int(round(d_dl * US))
            wake_end = t_us + int(round(d_total * US))
            busy_end = max(busy_end, dl_end)
            p_tx_ul = float(solution.powers_ul[ul_row].sum())
            p_tx_dl = float(solution.powers_dl[dl_row].sum())
            ledger.add_window(t_us, ul_end, p_tx_ul, 0.0)
            ledger.add_window(ul_end, dl_end, 0.0, p_tx_dl)
            if duty_cycled:
                ledger.add_window(t_us, wake_end, rt.channel.p_cst_user_w, 0.0)
        if duty_cycled:
            ledger.add_window(t_us, busy_end, 0.0, rt.channel.p_cst_bs_w)

    while heap and heap[0][0] < T_us:
        t_us = heap[0][0]
        batch: List[Tuple[int, int, int]] = []
        while heap and heap[0][0] == t_us:
            _, kind, pid, s = heapq.heappop(heap)
            batch.append((kind, pid, s))
        advance_plants(t_us)

        sampled: List[int] = []
        for kind, pid, s in batch:
            payload = payloads.pop(s)
            if kind == EventKind.EPOCH_SOLVE:
                solution, _ = solve_epoch(t_us, [], "background")
                update_rc_levels(t_us, solution, alloc.AllocationProblem(
                    channel=rt.channel, users=rt.users, active_plants=(),
                    delay_budget_s={}, payload_bits=rt.payload_bits,
                    weight_ul=rt.weight_ul))
            elif kind == EventKind.CONTROL_APPLIED:
                p = plants[pid]
                p.u_held = np.asarray(payload, dtype=float)
                p.input_changes.append((t_us, p.u_held.copy()))
                control_log.append({"t_s": t_us / US, "plant_id": pid})
            elif kind == EventKind.SAMPLE_DUE:
                sampled.append(pid)

        if not sampled:
            continue

        # Register samples: measure, close the previous deviation interval,
        # estimate the disturbance over the last inter-sample interval.
        for pid in sampled:
            p = plants[pid]
            t_s = t_us / US
            bound = p.model.deviation_bound
            if p.last_sample is not None and p.interval_max_dev > 1.05 * bound:
                violations.append(
                    f"plant {pid}: deviation {p.interval_max_dev:.4f} exceeded "
                    f"1.05 * {bound:.4f} in the interval ending {t_s:.3f}s")
            if p.last_sample is None:
                est = DisturbanceEstimate(np.zeros(p.model.n), False)
            else:
                t_prev, x_prev = p.last_sample
                u_mid = p.input_at(0.5 * (t_prev + t_s))
                est = estimate_disturbance(p.model, x_prev, p.x, u_mid, t_s - t_prev)
            p.history.push(t_s, p.x, est.d_hat)
            p.last_sample = (t_s, p.x.copy())
            p.x_at_sample = p.x.copy()
            p.interval_max_dev = 0.0
            p.tx_count += 1

        solution, delays = solve_epoch(t_us, sampled, "tc")
        problem_users = rt.users
        update_rc_levels(t_us, solution, alloc.AllocationProblem(
            channel=rt.channel, users=problem_users, active_plants=(),
            delay_budget_s={}, payload_bits=rt.payload_bits,
            weight_ul=rt.weight_ul))
        bill_tc_epoch(t_us, sampled, solution, delays)

        for pid in sampled:
            p = plants[pid]
            d_ul, d_dl = delays[pid]
            delay_total = d_ul + d_dl + rt.comp_delay_s
            if delay_total > p.delay_max_s:
                violations.append(
                    f"plant {pid}: realized delay {delay_total:.6f}s over "
                    f"{p.delay_max_s:.6f}s at t={t_us / US:.3f}s")
            u_cmd = (p.model.K @ p.x_at_sample).reshape(-1)
            push(SimEvent(t_us + int(round(delay_total * US)),
                          EventKind.CONTROL_APPLIED, pid, u_cmd))
            row = {
                "plant_id": pid, "k": p.sample_index, "t_s": t_us / US,
                "delay_ul_s": d_ul, "delay_dl_s": d_dl,
                "delay_total_s": delay_total,
                "deviation_bound": p.model.deviation_bound,
            }
            p.sample_index += 1
            if mode == "self_triggered":
                decision = next_sampling_instant(
                    p.model, pid, p.history, delay_total, p.delay_max_s,
                    p.h_max_s, sim.h_min_s)
                t_next_us = max(int(round(decision.t_next_s * US)),
                                t_us + int(round(sim.h_min_s * US)))
                push(SimEvent(t_next_us, EventKind.SAMPLE_DUE, pid))
                row.update({
                    "hold_time_raw_s": decision.hold_time_s,
                    "capped_by_hmax": decision.capped_by_hmax,
                    "drift_budget": decision.drift_budget,
                    "initial_drift": decision.initial_drift,
                    "bootstrap": decision.bootstrap,
                })
            else:
                row.update({"hold_time_raw_s": None, "capped_by_hmax": False,
                            "drift_budget": None, "initial_drift": None,
                            "bootstrap": False})
            samples_log.append(row)

    advance_plants(T_us)
    for pid in plant_ids:
        p = plants[pid]
        bound = p.model.deviation_bound
        if p.interval_max_dev > 1.05 * bound:
            violations.append(
                f"plant {pid}: deviation {p.interval_max_dev:.4f} exceeded "
                f"1.05 * {bound:.4f} in the final interval")

    ledger.add_window(rc_level_since_us, T_us, rc_level_ul, rc_level_dl)
    trace_t, trace_ul, trace_bs, energy_ul, energy_bs = ledger.finalize()

    trajectories: Dict[int, Dict[str, Array]] = {}
    for pid in plant_ids:
        p = plants[pid]
        t0 = np.array([0.0])
        x0 = p.model.x0.reshape(1, -1)
        u0 = np.zeros((1, p.model.m))
        d0 = np.array([0.0])
        ts = np.concatenate([t0] + [c[0] for c in p.traj_chunks])
        xs = np.concatenate([x0] + [c[1] for c in p.traj_chunks])
        us = np.concatenate([u0] + [c[2] for c in p.traj_chunks])
        devs = np.concatenate([d0] + [c[3] for c in p.traj_chunks])
        trajectories[pid] = {"t_s": ts, "x": xs, "u": us, "deviation": devs}

    report = MetricsReport(
        mode=mode,
        duration_s=sim.duration_s,
        weight_ul=rt.weight_ul,
        circuit_power_mode=sim.circuit_power_mode,
        per_plant_tx_count={pid: plants[pid].tx_count for pid in plant_ids},
        energy_ul_j=energy_ul,
        energy_bs_j=energy_bs,
        power_trace_t_s=trace_t,
        power_trace_ul_w=trace_ul,
        power_trace_bs_w=trace_bs,
        trajectories=trajectories,
        samples=samples_log,
        solver_log=solver_log,
        control_events=control_log,
        violations=violations,
        per_plant_max_deviation={pid: plants[pid].max_dev for pid in plant_ids},
        per_plant_deviation_bound={pid: plants[pid].model.deviation_bound
                                   for pid in plant_ids},
        per_plant_delay_max_s={pid: plants[pid].delay_max_s for pid in plant_ids},
        initial_state_norm={pid: float(np.linalg.norm(plants[pid].model.x0))
                            for pid in plant_ids},
        final_state_norm={pid: float(np.linalg.norm(plants[pid].x))
                          for pid in plant_ids},
        solver_stats={
            "epochs": float(len(solver_log)),
            "iterations_max": float(solver_iter_max),
            "kkt_residual_max": solver_kkt_max,
        },
        seeds={"positions": sim.seed_positions,
               "disturbance": sim.seed_disturbance},
        resolved_config=config.to_dict(),
        wall_time_s=_time.perf_counter() - t_start,
    )
    return report
