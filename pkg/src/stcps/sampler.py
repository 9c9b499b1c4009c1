"""Self-triggered sampling rule.

Each plant's next sampling instant is computed from its last two sampled
states, disturbance estimates, and the end-to-end delay realized by the
network at the previous sample.  The raw hold time is the log-ratio of a
drift budget (how fast the state may move once the deviation allowance is
spent) to a post-sample drift bound, scaled by 1/||A||, plus the slack
between the realized and the tolerated delay.
"""
from __future__ import annotations

import dataclasses
import math
from typing import List, Optional, Tuple

import numpy as np

from .errors import DelayBudgetExceeded, DimensionMismatch
from .plant import PlantModel

Array = np.ndarray


@dataclasses.dataclass(frozen=True)
class DisturbanceEstimate:
    """Finite-difference disturbance estimate, clipped to the known bound."""

    d_hat: Array
    clipped: bool


@dataclasses.dataclass(frozen=True)
class SamplingDecision:
    """Outcome of one next-sample computation.

    ``hold_time_s`` is the raw (unclamped) hold duration; None on the
    bootstrap decision where no history exists yet.  ``delay_total_s`` is
    the realized end-to-end delay that fed the computation and
    ``delay_max_s`` the plant's tolerance.
    """

    plant_id: int
    t_next_s: float
    hold_time_s: Optional[float]
    drift_budget: float
    initial_drift: float
    capped_by_hmax: bool
    h_max_s: float
    delay_total_s: float
    delay_max_s: float
    bootstrap: bool = False


class SampleHistory:
    """Rolling window of the last two accepted samples of one plant."""

    def __init__(self):
        self._entries: List[Tuple[float, Array, Array]] = []

    def push(self, t: float, x: Array, d_hat: Array) -> None:
        self._entries.append((float(t), np.array(x, dtype=float),
                              np.array(d_hat, dtype=float)))
        if len(self._entries) > 2:
            self._entries.pop(0)

    @property
    def full(self) -> bool:
        return len(self._entries) == 2

    @property
    def latest(self) -> Tuple[float, Array, Array]:
        if not self._entries:
            raise ValueError("history is empty")
        return self._entries[-1]

    @property
    def previous(self) -> Tuple[float, Array, Array]:
        if not self.full:
            raise ValueError("history holds fewer than two samples")
        return self._entries[-2]


def estimate_disturbance(model: PlantModel, x_prev, x_now, u_held,
                         dt: float) -> DisturbanceEstimate:
    """Midpoint finite-difference residual of the model dynamics.

    d_hat = (x_now - x_prev)/dt - A x_mid - B u_held, clipped to the ball
    of radius d_bound.  The estimator is exact for constant disturbances
    under zero dynamics and has O(dt^2) residual on smooth trajectories.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x_prev = np.asarray(x_prev, dtype=float).reshape(-1)
    x_now = np.asarray(x_now, dtype=float).reshape(-1)
    u_held = np.asarray(u_held, dtype=float).reshape(-1)
    if x_prev.size != model.n or x_now.size != model.n:
        raise DimensionMismatch("state dimension mismatch in disturbance estimate")
    if u_held.size != model.m:
        raise DimensionMismatch("input dimension mismatch in disturbance estimate")
    x_mid = 0.5 * (x_prev + x_now)
    residual = (x_now - x_prev) / dt - model.A @ x_mid - model.B @ u_held
    nrm = float(np.linalg.norm(residual))
    if nrm > model.d_bound:
        if model.d_bound == 0.0 or nrm == 0.0:
            d_hat = np.zeros(model.n)
        else:
            d_hat = residual * (model.d_bound / nrm)
        return DisturbanceEstimate(d_hat=d_hat, clipped=True)
    return DisturbanceEstimate(d_hat=residual, clipped=False)


def drift_budget(model: PlantModel, x_k, d_hat_k) -> float:
    """Drift-rate budget at the deviation bound.

    ||A|| * deviation_bound + ||(A + B K) x_k|| + ||d_hat_k||; the matrix
    norm is spectral, matching the Euclidean vector norms.
    """
    x_k = np.asarray(x_k, dtype=float).reshape(-1)
    d_hat_k = np.asarray(d_hat_k, dtype=float).reshape(-1)
    if x_k.size != model.n or d_hat_k.size != model.n:
        raise DimensionMismatch("vector dimension mismatch in drift budget")
    return (model.norm_A * model.deviation_bound
            + float(np.linalg.norm(model.closed_loop @ x_k))
            + float(np.linalg.norm(d_hat_k)))


def initial_drift(model: PlantModel, x_km1, x_k, d_hat_km1, d_hat_k,
                  delay_total_s: float) -> float:
    """Bound on the state drift rate just after a sample.

    ||A x_k - B K x_{k-1}||
      + ||d_hat_k|| * (exp(||A|| * delay_total) - 1) * ||(A + B K) x_k||
      + ||d_hat_k||

    The previous estimate enters the signature for symmetry with the
    hold-time computation but does not appear in the bound itself.
    """
    if delay_total_s < 0:
        raise ValueError("delay_total_s must be >= 0")
    x_km1 = np.asarray(x_km1, dtype=float).reshape(-1)
    x_k = np.asarray(x_k, dtype=float).reshape(-1)
    d_hat_k = np.asarray(d_hat_k, dtype=float).reshape(-1)
    if x_km1.size != model.n or x_k.size != model.n or d_hat_k.size != model.n:
        raise DimensionMismatch("vector dimension mismatch in initial drift")
    del d_hat_km1
    term_state = float(np.linalg.norm(model.A @ x_k - (model.B @ model.K) @ x_km1))
    d_norm = float(np.linalg.norm(d_hat_k))
    growth = math.expm1(model.norm_A * delay_total_s)
    term_delay = d_norm * growth * float(np.linalg.norm(model.closed_loop @ x_k))
    return term_state + term_delay + d_norm


def hold_time(model: PlantModel, x_km1, x_k, d_hat_km1, d_hat_k,
              delay_total_s: float, delay_max_s: float) -> float:
    """Raw next-hold duration before clamping.

    (1/||A||) ln(drift_budget / initial_drift) + delay_total - delay_max.
    Returns +inf when the initial drift vanishes (later capped at h_max);
    may be negative, in which case callers floor it at h_min.
    """
    budget = drift_budget(model, x_k, d_hat_k)
    drift = initial_drift(model, x_km1, x_k, d_hat_km1, d_hat_k, delay_total_s)
    slack = delay_total_s - delay_max_s
    if drift == 0.0:
        return math.inf
    a = model.norm_A
    if a == 0.0:
        # Degenerate A = 0: take the limit of the log-ratio term.
        if budget > drift:
            return math.inf
        if budget == drift:
            return slack
        return -math.inf
    return math.log(budget / drift) / a + slack


def next_sampling_instant(model: PlantModel, plant_id: int,
                          history: SampleHistory, delay_total_s: float,
                          delay_max_s: float, h_max_s: float,
                          h_min_s: float) -> SamplingDecision:
    """Next sampling instant for a plant given its sample history.

    Requires the realized delay within tolerance (the allocator's
    contract); the hold time is clamped into [h_min, h_max].  With fewer
    than two samples of history the bootstrap rule schedules h_min ahead.
    """
    if not 0 < h_min_s <= h_max_s:
        raise ValueError("need 0 < h_min_s <= h_max_s")
    if delay_total_s > delay_max_s:
        raise DelayBudgetExceeded(
            f"plant {plant_id}: realized delay {delay_total_s:.6f}s exceeds "
            f"tolerance {delay_max_s:.6f}s")
    t_k, x_k, d_hat_k = history.latest
    if not history.full:
        return SamplingDecision(
            plant_id=plant_id, t_next_s=t_k + h_min_s, hold_time_s=None,
            drift_budget=drift_budget(model, x_k, d_hat_k),
            initial_drift=0.0, capped_by_hmax=False, h_max_s=h_max_s,
            delay_total_s=delay_total_s, delay_max_s=delay_max_s,
            bootstrap=True)
    _, x_km1, d_hat_km1 = history.previous
    raw = hold_time(model, x_km1, x_k, d_hat_km1, d_hat_k,
                    delay_total_s, delay_max_s)
    interval = min(raw, h_max_s)
    interval = min(max(interval, h_min_s), h_max_s)
    return SamplingDecision(
        plant_id=plant_id, t_next_s=t_k + interval, hold_time_s=raw,
        drift_budget=drift_budget(model, x_k, d_hat_k),
        initial_drift=initial_drift(model, x_km1, x_k, d_hat_km1, d_hat_k,
                                    delay_total_s),
        capped_by_hmax=bool(raw >= h_max_s), h_max_s=h_max_s,
        delay_total_s=delay_total_s, delay_max_s=delay_max_s)
