"""YAML run configuration with the published table values as defaults.

An empty (or absent) configuration file reproduces the reference setup: every
key is optional, grouped under ``vehicle``, ``mpc``, ``scenario`` and
``sweep``.  Unknown keys are rejected with their full path so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import yaml

from .params import MPCConfig, VehicleParams, default_mpc_config
from .sim import ScenarioConfig

_VEHICLE_KEYS = {"mass", "reference_area", "air_density", "drag_coefficient",
                 "roll_coefficient", "wheel_radius", "gravity", "road_grade"}
_MPC_KEYS = {"horizon", "jerk_weight", "slack_weight", "slack_linear_weight",
             "h_des", "h_min", "v_min", "v_max", "v_des", "u_min", "u_max",
             "du_max", "trust_horizon"}
_SCENARIO_KEYS = {"n_vehicles", "initial_spacing", "duration",
                  "measure_position", "latency", "dt", "topology"}
_SWEEP_KEYS = {"trust_horizons"}

DEFAULT_SWEEP = (0, 5, 10, 15, 20)


class ConfigError(Exception):
    """Invalid run configuration; the message names the offending key or line."""


@dataclass(frozen=True)
class RunConfig:
    vehicle: VehicleParams
    mpc: MPCConfig
    scenario: ScenarioConfig
    sweep_trust_horizons: tuple[int, ...] = DEFAULT_SWEEP

    def to_dict(self) -> dict:
        return {
            "vehicle": asdict(self.vehicle),
            "mpc": asdict(self.mpc),
            "scenario": asdict(self.scenario),
            "sweep": {"trust_horizons": list(self.sweep_trust_horizons)},
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _section(raw: dict, name: str, allowed: set) -> dict:
    section = raw.pop(name, None)
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    unknown = set(section) - allowed
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{name}.{key}'; "
                          f"allowed: {', '.join(sorted(allowed))}")
    for key, value in section.items():
        if isinstance(value, bool) or not isinstance(value, (int, float, str, list)):
            raise ConfigError(f"key '{name}.{key}' has unsupported type "
                              f"{type(value).__name__}")
    return dict(section)


def build_config(raw: dict | None) -> RunConfig:
    """Resolve a parsed YAML mapping (possibly empty) into a RunConfig."""
    raw = dict(raw or {})
    vehicle_kw = _section(raw, "vehicle", _VEHICLE_KEYS)
    mpc_kw = _section(raw, "mpc", _MPC_KEYS)
    scenario_kw = _section(raw, "scenario", _SCENARIO_KEYS)
    sweep_kw = _section(raw, "sweep", _SWEEP_KEYS)
    if raw:
        raise ConfigError(f"unknown top-level section '{sorted(raw)[0]}'")
    try:
        vehicle = VehicleParams(**vehicle_kw)
        mpc = default_mpc_config(vehicle, **mpc_kw)
        scenario = ScenarioConfig(**scenario_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if scenario.initial_spacing < mpc.h_min:
        raise ConfigError(
            f"scenario.initial_spacing = {scenario.initial_spacing} violates "
            f"the minimum distance constraint h_min = {mpc.h_min}")
    sweep = sweep_kw.get("trust_horizons", list(DEFAULT_SWEEP))
    if not isinstance(sweep, list) or not sweep:
        raise ConfigError("sweep.trust_horizons must be a non-empty list")
    for f in sweep:
        if not isinstance(f, int) or not 0 <= f <= mpc.horizon:
            raise ConfigError(f"sweep.trust_horizons entry {f!r} outside "
                              f"[0, {mpc.horizon}]")
    return RunConfig(vehicle=vehicle, mpc=mpc, scenario=scenario,
                     sweep_trust_horizons=tuple(sweep))


def load_config(path: str | None) -> RunConfig:
    """Load a YAML config file; ``None`` yields the all-defaults setup."""
    if path is None:
        return build_config(None)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"malformed YAML{where}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping of sections")
    return build_config(raw)
