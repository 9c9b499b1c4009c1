"""Continuous-time LTI plants under zero-order-hold state feedback.

Trajectories are produced with a fixed-step classical RK4 scheme.  For
affine dynamics xdot = A x + B u + d with u and d frozen over a step, the
four RK4 stages collapse to a constant matrix pair, which is precomputed
per step size and reused; the result is algebraically identical to the
textbook stage-by-stage evaluation.
"""
from __future__ import annotations

import dataclasses
import math
from typing import Callable, List, Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    NonFiniteState,
    UncontrollablePair,
    UnsupportedShape,
)

Array = np.ndarray


def _matrix(value, name: str) -> Array:
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


def _vector(value, name: str, size: Optional[int] = None) -> Array:
    arr = np.array(value, dtype=float).reshape(-1)
    if size is not None and arr.size != size:
        raise DimensionMismatch(f"{name} must have {size} entries, got {arr.size}")
    return arr


@dataclasses.dataclass(eq=False)
class PlantModel:
    """Plant matrices, feedback gain, and the performance limits.

    ``deviation_bound`` is the largest tolerated distance between the state
    and its value at the last accepted sample; ``deviation_bound_max`` is
    the ceiling that bound may be escalated to when the network cannot
    serve the plant.
    """

    A: Array
    B: Array
    K: Array
    C: Optional[Array] = None
    d_bound: float = 0.0
    deviation_bound: float = 1.0
    deviation_bound_max: Optional[float] = None
    x0: Optional[Array] = None

    def __post_init__(self):
        self.A = _matrix(self.A, "A")
        n = self.A.shape[0]
        if self.A.shape[1] != n:
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        self.B = _matrix(self.B, "B")
        if self.B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {self.B.shape}")
        m = self.B.shape[1]
        K = np.array(self.K, dtype=float)
        if K.ndim == 1:
            K = K.reshape(1, -1)
        if K.shape != (m, n):
            raise DimensionMismatch(f"K must be {m}x{n}, got {K.shape}")
        self.K = K
        if self.C is None:
            self.C = np.eye(n)
        else:
            self.C = _matrix(self.C, "C")
            if self.C.shape[1] != n or self.C.shape[0] > n:
                raise DimensionMismatch(
                    f"C must be qx{n} with q <= {n}, got {self.C.shape}"
                )
        if self.x0 is None:
            self.x0 = np.zeros(n)
        else:
            self.x0 = _vector(self.x0, "x0", n)
        self.d_bound = float(self.d_bound)
        if self.d_bound < 0:
            raise ValueError("d_bound must be >= 0")
        self.deviation_bound = float(self.deviation_bound)
        if self.deviation_bound_max is None:
            self.deviation_bound_max = self.deviation_bound
        self.deviation_bound_max = float(self.deviation_bound_max)
        if not 0.0 < self.deviation_bound <= self.deviation_bound_max:
            raise ValueError("need 0 < deviation_bound <= deviation_bound_max")
        closed = self.A + self.B @ self.K
        if np.max(np.linalg.eigvals(closed).real) >= 0.0:
            raise ValueError("A + B K must be Hurwitz (all eigenvalues in the open left half plane)")
        self._closed_loop = closed
        self._norm_A = float(np.linalg.norm(self.A, 2))
        self._propagators: dict = {}

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def closed_loop(self) -> Array:
        """A + B K."""
        return self._closed_loop

    @property
    def norm_A(self) -> float:
        """Spectral norm of A."""
        return self._norm_A

    def propagator(self, dt: float):
        """(R, SB, S) with x(t+dt) = R x + SB u + S d, the RK4 step matrices.

        R and S are the degree-4 truncations of expm(dt*A) and its input
        integral, exactly what classical RK4 produces for affine dynamics.
        """
        cached = self._propagators.get(dt)
        if cached is not None:
            return cached
        n = self.n
        hA = dt * self.A
        hA2 = hA @ hA
        hA3 = hA2 @ hA
        hA4 = hA3 @ hA
        eye = np.eye(n)
        R = eye + hA + hA2 / 2.0 + hA3 / 6.0 + hA4 / 24.0
        S = dt * (eye + hA / 2.0 + hA2 / 6.0 + hA3 / 24.0)
        entry = (R, S @ self.B, S)
        if len(self._propagators) < 4096:
            self._propagators[dt] = entry
        return entry


@dataclasses.dataclass
class PlantState:
    """Snapshot of a simulated plant.

    ``x_at_sample`` anchors the deviation norm: it is the state measured at
    the last accepted sample instant.
    """

    t: float
    x: Array
    u_held: Array
    x_at_sample: Array


class DisturbancePath:
    """Piecewise-constant disturbance drawn uniformly from the bound ball.

    The vector is redrawn on a fixed grid (default every 10 ms) from a
    seeded generator, so the realized path is reproducible and satisfies
    ||d(t)|| <= bound by construction.
    """

    def __init__(self, dim: int, bound: float, horizon_s: float, seed,
                 resample_s: float = 0.01):
        if bound < 0:
            raise ValueError("bound must be >= 0")
        if resample_s <= 0:
            raise ValueError("resample_s must be > 0")
        self.dim = int(dim)
        self.bound = float(bound)
        self.resample_s = float(resample_s)
        cells = int(math.ceil(horizon_s / resample_s)) + 2
        if self.bound == 0.0:
            self._table = np.zeros((cells, self.dim))
        else:
            rng = np.random.default_rng(seed)
            direction = rng.standard_normal((cells, self.dim))
            norms = np.linalg.norm(direction, axis=1)
            norms[norms == 0.0] = 1.0
            radius = self.bound * rng.uniform(0.0, 1.0, cells) ** (1.0 / self.dim)
            self._table = direction / norms[:, None] * radius[:, None]

    def value(self, t: float) -> Array:
        idx = int(t / self.resample_s + 1e-9)
        idx = min(max(idx, 0), len(self._table) - 1)
        return self._table[idx]

    __call__ = value

    @classmethod
    def zero(cls, dim: int) -> "DisturbancePath":
        return cls(dim, 0.0, 1.0, 0)


def pole_place(A, B, desired_eigs) -> Array:
    """Single-input gain K putting the eigenvalues of A + B K at desired_eigs.

    Ackermann's formula; the sign is flipped relative to the classical
    A - B K convention so the result matches the u = K x feedback law used
    throughout.  Returns a length-n row.
    """
    A = _matrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    B = np.array(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if B.shape[0] != n:
        raise DimensionMismatch(f"B must have {n} rows, got {B.shape}")
    if B.shape[1] != 1:
        raise UnsupportedShape(f"pole placement requires a single input, got m={B.shape[1]}")
    eigs = np.atleast_1d(np.asarray(desired_eigs, dtype=complex))
    if eigs.size != n:
        raise DimensionMismatch(f"need {n} desired eigenvalues, got {eigs.size}")
    coeffs = np.poly(eigs)
    if np.max(np.abs(coeffs.imag)) > 1e-9 * max(1.0, np.max(np.abs(coeffs))):
        raise ValueError("desired eigenvalues must be closed under conjugation")
    coeffs = coeffs.real

    ctrb = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(n)])
    if np.linalg.matrix_rank(ctrb) < n:
        raise UncontrollablePair("controllability matrix is rank deficient")

    # phi(A) by Horner's rule on the desired characteristic polynomial
    phi = np.zeros((n, n))
    for c in coeffs:
        phi = phi @ A + c * np.eye(n)

    e_last = np.zeros(n)
    e_last[-1] = 1.0
    row = np.linalg.solve(ctrb.T, e_last)
    return -(row @ phi)


def integrate_step(model: PlantModel, x, u, d, dt: float) -> Array:
    """One RK4 step of xdot = A x + B u + d with u and d held constant."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = _vector(x, "x", model.n)
    u = _vector(u, "u", model.m)
    d = _vector(d, "d", model.n)
    R, SB, S = model.propagator(dt)
    out = R @ x + SB @ u + S @ d
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"state became non-finite after step dt={dt}")
    return out


def dense_propagate(model: PlantModel, x0: Array, u: Array,
                    disturbance: Optional[Callable[[float], Array]],
                    t0: float, t1: float, dt: float):
    """Propagate from t0 to t1 with u held, sampling every dt.

    Returns (ts, xs) including both endpoints; the final step may be
    shorter than dt.  Raises NonFiniteState if any point is non-finite.
    """
    if t1 <= t0:
        raise ValueError("t1 must be > t0")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    n_full = int((t1 - t0) / dt + 1e-9)
    remainder = (t1 - t0) - n_full * dt
    has_partial = remainder > 1e-12
    count = n_full + (1 if has_partial else 0)
    ts = np.empty(count + 1)
    xs = np.empty((count + 1, model.n))
    ts[0] = t0
    xs[0] = x0
    x = np.asarray(x0, dtype=float)
    t = t0
    zero_d = np.zeros(model.n)
    for i in range(count):
        h = dt if i < n_full else remainder
        d = disturbance(t) if disturbance is not None else zero_d
        R, SB, S = model.propagator(h)
        x = R @ x + SB @ u + S @ d
        t = t0 + (i + 1) * dt if i + 1 <= n_full else t1
        ts[i + 1] = min(t, t1)
        xs[i + 1] = x
    ts[-1] = t1
    if not np.all(np.isfinite(xs)):
        raise NonFiniteState(f"trajectory became non-finite in [{t0}, {t1}]")
    return ts, xs


def simulate_hold_interval(model: PlantModel, state: PlantState,
                           disturbance: Optional[Callable[[float], Array]],
                           t_end: float, dt: float) -> List[PlantState]:
    """Trajectory over [state.t, t_end] with the held input unchanged."""
    ts, xs = dense_propagate(model, state.x, state.u_held, disturbance,
                             state.t, t_end, dt)
    u = np.array(state.u_held, dtype=float)
    ref = np.array(state.x_at_sample, dtype=float)
    return [PlantState(t=float(ti), x=xi.copy(), u_held=u.copy(),
                       x_at_sample=ref.copy())
            for ti, xi in zip(ts, xs)]


def error_norm(x_now, x_at_sample) -> float:
    """Euclidean distance between the state and its last sampled value."""
    a = np.asarray(x_now, dtype=float).reshape(-1)
    b = np.asarray(x_at_sample, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))
