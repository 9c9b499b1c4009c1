"""Scenario configuration: schema, parsing, units, defaults.

The canonical on-disk format is YAML (conventionally with a ``.cfg``
extension).  Field names carry their unit as a suffix (``_dbm``, ``_s``,
``_hz``, ``_m``, ``_bps``, ``_bits``); dBm fields additionally accept a
string like ``"23 dBm"``.  Unknown keys are rejected with the offending
path, and every network parameter has a default so a minimal file only
needs the plant list.
"""
from __future__ import annotations

import dataclasses
import math
import re
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from .errors import SchemaError, UnitError
from .network import dbm_to_watt

_DBM_RE = re.compile(r"^\s*([-+]?[0-9.eE]+)\s*(dBm)?\s*$", re.IGNORECASE)


def _parse_dbm(value, path: str) -> float:
    if isinstance(value, bool):
        raise UnitError(f"{path}: expected a dBm value, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _DBM_RE.match(value)
        if match:
            try:
                return float(match.group(1))
            except ValueError:
                pass
        raise UnitError(f"{path}: cannot interpret {value!r} as dBm")
    raise UnitError(f"{path}: expected a number or 'NN dBm' string")


def _need_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(path, "must be finite")
    return value


def _need_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected an integer, got {type(value).__name__}")
    return value


def _need_matrix(value, path: str) -> List[List[float]]:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise SchemaError(path, "expected a list of rows")
    return [[_need_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)]
            for i, row in enumerate(value)]


def _need_vector(value, path: str) -> List[float]:
    if not isinstance(value, list) or not value:
        raise SchemaError(path, "expected a non-empty list of numbers")
    return [_need_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _check_keys(block: dict, allowed, path: str) -> None:
    for key in block:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}" if path else str(key), "unknown key")


@dataclasses.dataclass
class PlantSpec:
    """One plant block: matrices, gain or eigenvalues, bounds, start state."""

    id: int
    a: List[List[float]]
    b: List[List[float]]
    x0: List[float]
    disturbance_bound: float
    deviation_bound: float
    deviation_bound_max: Optional[float] = None
    c: Optional[List[List[float]]] = None
    gain: Optional[List[float]] = None
    closed_loop_eigs: Optional[List[float]] = None
    h_max_s: Optional[float] = None
    delay_max_s: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"id": self.id, "a": self.a, "b": self.b, "x0": self.x0,
               "disturbance_bound": self.disturbance_bound,
               "deviation_bound": self.deviation_bound}
        if self.deviation_bound_max is not None:
            out["deviation_bound_max"] = self.deviation_bound_max
        if self.c is not None:
            out["c"] = self.c
        if self.gain is not None:
            out["gain"] = self.gain
        if self.closed_loop_eigs is not None:
            out["closed_loop_eigs"] = self.closed_loop_eigs
        if self.h_max_s is not None:
            out["h_max_s"] = self.h_max_s
        if self.delay_max_s is not None:
            out["delay_max_s"] = self.delay_max_s
        return out


@dataclasses.dataclass
class NetworkConfig:
    """Cell parameters; dBm fields keep their configured value and expose
    the watt conversion as a property."""

    subcarrier_bandwidth_hz: float = 180e3
    num_subcarriers: int = 16
    p_max_user_dbm: float = 23.0
    p_max_bs_dbm: float = 43.0
    p_cst_user_dbm: float = 0.1
    p_cst_bs_dbm: float = 20.0
    noise_power_dbm: float = -62.24
    distance_min_m: float = 10.0
    distance_max_m: float = 50.0
    attenuation_factor: float = 0.09
    rc_rate_floor_ul_bps: float = 50.0
    rc_rate_floor_dl_bps: float = 100.0
    payload_tc_bits: float = 70.0
    # Declared by the source material but consumed by no constraint;
    # carried for completeness.
    payload_rc_bits: float = 500.0
    delay_max_s: float = 1.0

    @property
    def p_max_user_w(self) -> float:
        return dbm_to_watt(self.p_max_user_dbm)

    @property
    def p_max_bs_w(self) -> float:
        return dbm_to_watt(self.p_max_bs_dbm)

    @property
    def p_cst_user_w(self) -> float:
        return dbm_to_watt(self.p_cst_user_dbm)

    @property
    def p_cst_bs_w(self) -> float:
        return dbm_to_watt(self.p_cst_bs_dbm)

    @property
    def noise_power_w(self) -> float:
        return dbm_to_watt(self.noise_power_dbm)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class UsersConfig:
    num_rc: int = 5
    rc_distances_m: Optional[List[float]] = None
    tc_ul_distances_m: Optional[List[float]] = None
    tc_dl_distances_m: Optional[List[float]] = None

    def to_dict(self) -> dict:
        out = {"num_rc": self.num_rc}
        for key in ("rc_distances_m", "tc_ul_distances_m", "tc_dl_distances_m"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclasses.dataclass
class SimConfig:
    duration_s: float = 50.0
    dt_s: float = 1e-3
    seed_positions: int = 7
    seed_disturbance: int = 11
    baseline_period_s: float = 0.09
    weight_ul: float = 0.5
    circuit_power_mode: str = "duty_cycled"
    comp_delay_s: float = 0.01
    h_max_s: float = 1.0
    h_min_s: float = 1e-3
    rc_background_period_s: float = 0.1
    disturbance_resample_s: float = 0.01

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class ScenarioConfig:
    plants: List[PlantSpec]
    network: NetworkConfig = dataclasses.field(default_factory=NetworkConfig)
    users: UsersConfig = dataclasses.field(default_factory=UsersConfig)
    sim: SimConfig = dataclasses.field(default_factory=SimConfig)
    schema_version: int = 1

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "plants": [p.to_dict() for p in self.plants],
            "network": self.network.to_dict(),
            "users": self.users.to_dict(),
            "sim": self.sim.to_dict(),
        }

    def with_weight(self, weight_ul: float) -> "ScenarioConfig":
        sim = dataclasses.replace(self.sim, weight_ul=float(weight_ul))
        return dataclasses.replace(self, sim=sim)


_PLANT_KEYS = {"id", "a", "b", "c", "x0", "gain", "closed_loop_eigs",
               "disturbance_bound", "deviation_bound", "deviation_bound_max",
               "h_max_s", "delay_max_s"}
_NETWORK_DBM_KEYS = {"p_max_user_dbm", "p_max_bs_dbm", "p_cst_user_dbm",
                     "p_cst_bs_dbm", "noise_power_dbm"}
_NETWORK_KEYS = {f.name for f in dataclasses.fields(NetworkConfig)}
_USERS_KEYS = {f.name for f in dataclasses.fields(UsersConfig)}
_SIM_KEYS = {f.name for f in dataclasses.fields(SimConfig)}
_ROOT_KEYS = {"schema_version", "plants", "network", "users", "sim"}


def _parse_plant(block: dict, path: str) -> PlantSpec:
    if not isinstance(block, dict):
        raise SchemaError(path, "plant entry must be a mapping")
    _check_keys(block, _PLANT_KEYS, path)
    for key in ("id", "a", "b", "x0", "disturbance_bound", "deviation_bound"):
        if key not in block:
            raise SchemaError(f"{path}.{key}", "required key missing")
    gain = block.get("gain")
    eigs = block.get("closed_loop_eigs")
    if (gain is None) == (eigs is None):
        raise SchemaError(path, "exactly one of 'gain' or 'closed_loop_eigs' is required")
    spec = PlantSpec(
        id=_need_int(block["id"], f"{path}.id"),
        a=_need_matrix(block["a"], f"{path}.a"),
        b=_need_matrix(block["b"], f"{path}.b"),
        x0=_need_vector(block["x0"], f"{path}.x0"),
        disturbance_bound=_need_number(block["disturbance_bound"],
                                       f"{path}.disturbance_bound"),
        deviation_bound=_need_number(block["deviation_bound"],
                                     f"{path}.deviation_bound"),
        deviation_bound_max=(_need_number(block["deviation_bound_max"],
                                          f"{path}.deviation_bound_max")
                             if "deviation_bound_max" in block else None),
        c=_need_matrix(block["c"], f"{path}.c") if "c" in block else None,
        gain=_need_vector(gain, f"{path}.gain") if gain is not None else None,
        closed_loop_eigs=(_need_vector(eigs, f"{path}.closed_loop_eigs")
                          if eigs is not None else None),
        h_max_s=_need_number(block["h_max_s"], f"{path}.h_max_s")
        if "h_max_s" in block else None,
        delay_max_s=_need_number(block["delay_max_s"], f"{path}.delay_max_s")
        if "delay_max_s" in block else None,
    )
    if spec.disturbance_bound < 0:
        raise SchemaError(f"{path}.disturbance_bound", "must be >= 0")
    if spec.deviation_bound <= 0:
        raise SchemaError(f"{path}.deviation_bound", "must be > 0")
    if spec.deviation_bound_max is not None and spec.deviation_bound_max < spec.deviation_bound:
        raise SchemaError(f"{path}.deviation_bound_max", "must be >= deviation_bound")
    return spec


def _parse_section(block, cls, allowed, dbm_keys, path: str):
    if block is None:
        return cls()
    if not isinstance(block, dict):
        raise SchemaError(path, "must be a mapping")
    _check_keys(block, allowed, path)
    kwargs = {}
    for key, value in block.items():
        field_path = f"{path}.{key}"
        if key in dbm_keys:
            kwargs[key] = _parse_dbm(value, field_path)
        elif key in ("num_subcarriers", "num_rc", "seed_positions", "seed_disturbance",
                     "schema_version"):
            kwargs[key] = _need_int(value, field_path)
        elif key == "circuit_power_mode":
            if value not in ("duty_cycled", "always_on"):
                raise SchemaError(field_path, "must be 'duty_cycled' or 'always_on'")
            kwargs[key] = value
        elif key in ("rc_distances_m", "tc_ul_distances_m", "tc_dl_distances_m"):
            kwargs[key] = _need_vector(value, field_path)
        else:
            kwargs[key] = _need_number(value, field_path)
    return cls(**kwargs)


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise SchemaError("", "top level must be a mapping")
    _check_keys(data, _ROOT_KEYS, "")
    plants_block = data.get("plants")
    if plants_block is None:
        plants_block = []
    if not isinstance(plants_block, list):
        raise SchemaError("plants", "must be a list (possibly empty)")
    plants = [_parse_plant(b, f"plants[{i}]") for i, b in enumerate(plants_block)]
    ids = [p.id for p in plants]
    if len(set(ids)) != len(ids):
        raise SchemaError("plants", "plant ids must be unique")
    network = _parse_section(data.get("network"), NetworkConfig, _NETWORK_KEYS,
                             _NETWORK_DBM_KEYS, "network")
    users = _parse_section(data.get("users"), UsersConfig, _USERS_KEYS,
                           set(), "users")
    sim = _parse_section(data.get("sim"), SimConfig, _SIM_KEYS, set(), "sim")
    version = data.get("schema_version", 1)
    if not isinstance(version, int):
        raise SchemaError("schema_version", "must be an integer")
    config = ScenarioConfig(plants=plants, network=network, users=users,
                            sim=sim, schema_version=version)
    _validate(config)
    return config


def _validate(config: ScenarioConfig) -> None:
    net, sim, users = config.network, config.sim, config.users
    if net.num_subcarriers < 1:
        raise SchemaError("network.num_subcarriers", "must be >= 1")
    if not 0 < net.distance_min_m <= net.distance_max_m:
        raise SchemaError("network.distance_min_m", "need 0 < min <= max")
    if net.attenuation_factor <= 0:
        raise SchemaError("network.attenuation_factor", "must be > 0")
    if sim.duration_s <= 0 or sim.dt_s <= 0:
        raise SchemaError("sim.duration_s", "duration and dt must be > 0")
    if not 0 <= sim.weight_ul <= 1:
        raise SchemaError("sim.weight_ul", "must lie in [0, 1]")
    if not 0 < sim.h_min_s <= sim.h_max_s:
        raise SchemaError("sim.h_min_s", "need 0 < h_min_s <= h_max_s")
    if users.num_rc < 0:
        raise SchemaError("users.num_rc", "must be >= 0")
    for key, count in (("rc_distances_m", users.num_rc),
                       ("tc_ul_distances_m", len(config.plants)),
                       ("tc_dl_distances_m", len(config.plants))):
        value = getattr(users, key)
        if value is not None and len(value) != count:
            raise SchemaError(f"users.{key}", f"expected {count} entries")
    for i, plant in enumerate(config.plants):
        delay_max = plant.delay_max_s if plant.delay_max_s is not None else net.delay_max_s
        if delay_max <= sim.comp_delay_s:
            raise SchemaError(f"plants[{i}].delay_max_s",
                              "delay tolerance must exceed the compute delay")


def parse_config(path) -> ScenarioConfig:
    """Load and validate a scenario file; units normalized lazily via
    the watt properties."""
    path = Path(path)
    if not path.exists():
        raise SchemaError("", f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SchemaError("", f"not valid YAML: {exc}") from exc
    if data is None:
        raise SchemaError("", "config file is empty")
    return config_from_dict(data)


def emit_config(config: ScenarioConfig) -> str:
    """Serialize back to YAML; parse(emit(c)) round-trips to c."""
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def bundled_scenario(name: str) -> Path:
    """Path of a scenario file shipped inside the package."""
    candidate = resources.files("stcps") / "scenarios" / f"{name}.cfg"
    with resources.as_file(candidate) as concrete:
        if not concrete.exists():
            raise SchemaError("", f"no bundled scenario named {name!r}")
        return Path(concrete)
