import numpy as np
import pytest

from stcps.plant import PlantModel, pole_place

# The three benchmark plants: (A, B, closed-loop eigenvalues,
# disturbance bound, initial state).
BENCH_PLANTS = {
    1: dict(a=[[-0.1, 0.05], [0.2, 0.1]], b=[[0.0], [1.0]],
            eigs=[-0.25, -0.18], d_bound=0.6, x0=[-20.0, 15.0]),
    2: dict(a=[[0.01, 0.2], [0.03, 0.0]], b=[[1.0], [1.0]],
            eigs=[-0.15, -0.3], d_bound=1.2, x0=[-12.0, 12.0]),
    3: dict(a=[[0.2, 0.01], [0.3, -0.8]], b=[[1.0], [2.0]],
            eigs=[-0.4, -0.6], d_bound=0.55, x0=[-5.0, 4.0]),
}


def make_bench_model(pid: int, deviation_bound: float = 10.0,
                     deviation_bound_max: float = None,
                     d_bound: float = None) -> PlantModel:
    spec = BENCH_PLANTS[pid]
    gain = pole_place(spec["a"], spec["b"], spec["eigs"])
    return PlantModel(
        A=spec["a"], B=spec["b"], K=gain,
        d_bound=spec["d_bound"] if d_bound is None else d_bound,
        deviation_bound=deviation_bound,
        deviation_bound_max=deviation_bound_max,
        x0=spec["x0"])


@pytest.fixture
def plant1():
    return make_bench_model(1)


def rk4_reference(A, B, x, u, d, dt):
    """Textbook stage-by-stage RK4 step; the independent integrator oracle."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    x = np.asarray(x, dtype=float)
    c = B @ np.asarray(u, dtype=float) + np.asarray(d, dtype=float)

    def f(state):
        return A @ state + c

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def small_scenario_dict(duration_s: float = 4.0, num_rc: int = 2,
                        plants=(1,), weight_ul: float = 0.5) -> dict:
    """Compact, deterministic scenario for fast engine tests."""
    plant_blocks = []
    for pid in plants:
        spec = BENCH_PLANTS[pid]
        plant_blocks.append({
            "id": pid, "a": spec["a"], "b": spec["b"],
            "closed_loop_eigs": spec["eigs"], "x0": spec["x0"],
            "disturbance_bound": spec["d_bound"],
            "deviation_bound": {1: 14.0, 2: 10.5, 3: 13.0}[pid],
            "deviation_bound_max": {1: 28.0, 2: 21.0, 3: 26.0}[pid],
        })
    return {
        "plants": plant_blocks,
        "network": {"num_subcarriers": 8},
        "users": {
            "num_rc": num_rc,
            "rc_distances_m": [12.0 + 7.0 * j for j in range(num_rc)],
            "tc_ul_distances_m": [15.0 + 5.0 * i for i in range(len(plants))],
            "tc_dl_distances_m": [20.0 + 5.0 * i for i in range(len(plants))],
        },
        "sim": {
            "duration_s": duration_s,
            "weight_ul": weight_ul,
            "rc_background_period_s": 0.5,
            "seed_positions": 3,
            "seed_disturbance": 5,
        },
    }
