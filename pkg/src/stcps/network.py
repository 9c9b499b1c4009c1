"""Single-cell OFDMA link model.

Channel gains, Shannon rates, half-duplex transmission delays, and the
uplink/base-station power tallies.  All internal math is in watts and
bits/s; dBm appears only at the configuration boundary.
"""
from __future__ import annotations

import dataclasses
from typing import Dict, Iterable, Tuple

import numpy as np

from .errors import NonPositiveDistance, ZeroRate

Array = np.ndarray
LN2 = float(np.log(2.0))


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((float(dbm) - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    if watt <= 0:
        raise ValueError("power must be > 0 to express in dBm")
    return 10.0 * np.log10(watt) + 30.0


@dataclasses.dataclass(eq=False)
class ChannelState:
    """Static per-(user, subcarrier) gains and cell-wide power parameters."""

    gains_ul: Array  # (M, L)
    gains_dl: Array  # (N, L)
    subcarrier_bandwidth_hz: float
    noise_power_w: float
    p_max_user_w: float
    p_max_bs_w: float
    p_cst_user_w: float
    p_cst_bs_w: float

    def __post_init__(self):
        self.gains_ul = np.atleast_2d(np.asarray(self.gains_ul, dtype=float))
        self.gains_dl = np.atleast_2d(np.asarray(self.gains_dl, dtype=float))
        if self.gains_ul.shape[1] != self.gains_dl.shape[1]:
            raise ValueError("uplink and downlink must share the subcarrier grid")
        if np.any(self.gains_ul <= 0) or np.any(self.gains_dl <= 0):
            raise ValueError("all channel gains must be > 0")
        for name in ("subcarrier_bandwidth_hz", "noise_power_w", "p_max_user_w",
                     "p_max_bs_w", "p_cst_user_w", "p_cst_bs_w"):
            value = float(getattr(self, name))
            if value <= 0:
                raise ValueError(f"{name} must be > 0")
            setattr(self, name, value)

    @property
    def num_subcarriers(self) -> int:
        return self.gains_ul.shape[1]

    @property
    def num_ul_users(self) -> int:
        return self.gains_ul.shape[0]

    @property
    def num_dl_users(self) -> int:
        return self.gains_dl.shape[0]


@dataclasses.dataclass(eq=False)
class UserPopulation:
    """Index bookkeeping for the two user classes in both directions.

    Row indices refer to the gain matrices of ChannelState.  Every plant
    owns one uplink RTU (sensor side) and one downlink RTU (actuator
    side); rate-constrained users carry a minimum-rate floor in bits/s.
    """

    ul_tc: Tuple[int, ...]
    dl_tc: Tuple[int, ...]
    ul_rc: Dict[int, float]
    dl_rc: Dict[int, float]
    tc_pairs: Dict[int, Tuple[int, int]]  # plant_id -> (ul row, dl row)

    def __post_init__(self):
        self.ul_tc = tuple(self.ul_tc)
        self.dl_tc = tuple(self.dl_tc)
        if not (len(self.ul_tc) == len(self.dl_tc) == len(self.tc_pairs)):
            raise ValueError("each plant needs exactly one RTU per direction")
        if set(self.ul_tc) & set(self.ul_rc):
            raise ValueError("uplink RTU and RC indices overlap")
        if set(self.dl_tc) & set(self.dl_rc):
            raise ValueError("downlink RTU and RC indices overlap")
        for floor in list(self.ul_rc.values()) + list(self.dl_rc.values()):
            if floor < 0:
                raise ValueError("rate floors must be >= 0")
        for plant, (u, d) in self.tc_pairs.items():
            if u not in self.ul_tc or d not in self.dl_tc:
                raise ValueError(f"plant {plant} maps to unknown RTU rows")


def channel_gain(distance_m: float, h_bar: float) -> float:
    """Distance-cubed attenuation: gain = distance^-3 * h_bar."""
    if distance_m <= 0:
        raise NonPositiveDistance(f"distance must be > 0, got {distance_m}")
    return float(distance_m) ** -3 * float(h_bar)


def link_rate(powers, gains, assignment, bandwidth_hz: float,
              noise_w: float) -> float:
    """Shannon-sum rate over the assigned subcarriers, in bits/s.

    sum_l alpha_l * w * log2(1 + p_l g_l / N0).  log1p keeps precision at
    the near-zero SNRs typical of minimum-power allocations.
    """
    p = np.asarray(powers, dtype=float).reshape(-1)
    g = np.asarray(gains, dtype=float).reshape(-1)
    a = np.asarray(assignment, dtype=float).reshape(-1)
    if np.any(p < 0):
        raise ValueError("powers must be >= 0")
    snr = p * g / noise_w
    return float(bandwidth_hz * np.sum(a * np.log1p(snr)) / LN2)


def transmission_delay(payload_bits: float, rate_bps: float) -> float:
    """Seconds to move the payload at half-duplex time sharing.

    The link carries traffic half of the time, so the effective rate is
    rate/2.
    """
    if payload_bits == 0:
        return 0.0
    if rate_bps <= 0:
        raise ZeroRate("cannot deliver payload over a zero-rate link")
    return float(payload_bits) / (0.5 * float(rate_bps))


def total_uplink_power(assignment, powers, active_users: Iterable[int],
                       p_cst_user_w: float) -> float:
    """Circuit power of the awake uplink users plus assigned transmit power."""
    a = np.asarray(assignment, dtype=float)
    p = np.asarray(powers, dtype=float)
    if np.any(p < 0):
        raise ValueError("powers must be >= 0")
    active = set(int(u) for u in active_users)
    return len(active) * p_cst_user_w + float(np.sum(a * p))


def total_bs_power(assignment, powers, p_cst_bs_w: float) -> float:
    """Base-station circuit power plus assigned downlink transmit power."""
    a = np.asarray(assignment, dtype=float)
    p = np.asarray(powers, dtype=float)
    if np.any(p < 0):
        raise ValueError("powers must be >= 0")
    return p_cst_bs_w + float(np.sum(a * p))


def gains_from_distances(distances_m, h_bar: float,
                         num_subcarriers: int) -> Array:
    """Per-user gain rows tiled across the (frequency-flat) subcarrier grid."""
    d = np.asarray(distances_m, dtype=float).reshape(-1)
    col = np.array([channel_gain(di, h_bar) for di in d])
    return np.tile(col[:, None], (1, int(num_subcarriers)))


def sample_distances(rng: np.random.Generator, count: int, d_min_m: float,
                     d_max_m: float) -> Array:
    """Uniform user-to-BS distances within the cell annulus."""
    if not 0 < d_min_m <= d_max_m:
        raise ValueError("need 0 < d_min_m <= d_max_m")
    return rng.uniform(d_min_m, d_max_m, int(count))
