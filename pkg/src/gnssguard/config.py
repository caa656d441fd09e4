"""Scenario configuration: nested dataclasses loaded from YAML.

Unknown keys are rejected with the dotted path of the offending field.
Values can be overridden with ``section.field=value`` strings.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError


@dataclass
class TrajectoryConfig:
    kind: str = "static"                      # static | polyline | circular
    site: tuple = (45.0, 7.0, 400.0)          # lat, lon [deg], height [m]
    waypoints: list = field(default_factory=list)   # ENU offsets [m] from site
    speeds: list = field(default_factory=list)      # m/s per leg
    radius: float = 200.0                     # circular [m]
    speed: float = 10.0                       # circular [m/s]


@dataclass
class ConstellationConfig:
    source: str = "synthetic"                 # synthetic | rinex
    n_sats: int = 8
    seed: int = 1
    nav_path: str | None = None
    mask_deg: float = 10.0


@dataclass
class ReceiverConfig:
    clock_class: str = "quartz_commodity"     # quartz_commodity | quartz_stable
    imu_profile: str = "crista_imu15"
    sigma_pr: float = 3.0                     # m
    sigma_doppler: float = 5.0                # Hz
    resync_period: float = 30.0               # s
    t_start: float | None = None              # GPS seconds of week, default 345600


@dataclass
class AttackConfig:
    enabled: bool = False
    jam_start: float | None = 120.0           # s from run start; None: no jamming
    jam_duration: float = 60.0
    spoof: bool = True                        # false: jamming only
    spoof_onset: float | None = None          # default: first epoch after the jam
    t_replay_ms: float = 20.0                 # minimum replay delay
    tau_ms: float = 0.0                       # extra adversary delay
    affected_sats: list | None = None         # ids or an integer count; None: all
    adversary_class: int = 1
    offset_hz: float = 0.0
    residual_hz: float | None = None          # calibrate class 2/3 belief error to this
    vel_error: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    pos_error: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    accumulate: bool = True


@dataclass
class DetectorSettings:
    location: bool = True
    clock: bool = True
    doppler: bool = True
    location_predictor: str = "imu"           # imu | kalman
    location_k_sigma: float = 3.0
    location_floor: float = 15.0
    kalman_q: float = 0.01
    kalman_imu_aiding: bool = False
    dst_k_sigma: float = 5.0
    dst_min_band: float = 20.0                # not a published value; calibrated
    dst_rate_term: float = 40.0 / 60.0
    dst_horizon: float = 300.0
    dst_window: int = 50
    dst_m_of_n: int = 1
    clock_window: int = 60
    verify_epochs: int = 1
    quarantine: int = 10
    discontinuity: bool = True
    discontinuity_factor: float = 3.0


@dataclass
class OutputConfig:
    dir: str | None = None
    format: str = "csv"                       # csv | json


@dataclass
class ScenarioConfig:
    duration: float = 300.0
    step: float = 1.0
    seed: int = 0
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    constellation: ConstellationConfig = field(default_factory=ConstellationConfig)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    detectors: DetectorSettings = field(default_factory=DetectorSettings)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "ScenarioConfig":
        validate(self)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


_CHOICES = {
    "trajectory.kind": ("static", "polyline", "circular"),
    "constellation.source": ("synthetic", "rinex"),
    "receiver.clock_class": ("quartz_commodity", "quartz_stable"),
    "receiver.imu_profile": ("crista_imu15", "tactical"),
    "detectors.location_predictor": ("imu", "kalman"),
    "output.format": ("csv", "json"),
}


def validate(cfg: ScenarioConfig):
    if cfg.step <= 0:
        raise ConfigError("step: must be positive")
    if cfg.duration < cfg.step:
        raise ConfigError("duration: must be at least one step")
    if abs(round(cfg.duration / cfg.step) * cfg.step - cfg.duration) > 1e-9:
        raise ConfigError("duration: must be a whole number of steps")
    for path, allowed in _CHOICES.items():
        section, name = path.split(".")
        value = getattr(getattr(cfg, section), name)
        if value not in allowed:
            raise ConfigError(f"{path}: {value!r} not one of {', '.join(allowed)}")
    tr = cfg.trajectory
    if tr.kind == "polyline":
        if len(tr.waypoints) < 2:
            raise ConfigError("trajectory.waypoints: polyline needs at least two points")
        if len(tr.speeds) != len(tr.waypoints) - 1:
            raise ConfigError("trajectory.speeds: need one speed per leg")
        if any(s <= 0 for s in tr.speeds):
            raise ConfigError("trajectory.speeds: must be positive")
    if tr.kind == "circular" and tr.radius <= 0:
        raise ConfigError("trajectory.radius: must be positive")
    con = cfg.constellation
    if con.source == "rinex" and not con.nav_path:
        raise ConfigError("constellation.nav_path: required for rinex source")
    if con.source == "synthetic" and con.n_sats < 4:
        raise ConfigError("constellation.n_sats: at least 4 satellites")
    if cfg.receiver.sigma_pr < 0 or cfg.receiver.sigma_doppler < 0:
        raise ConfigError("receiver: noise sigmas must be non-negative")
    if cfg.receiver.resync_period <= 0:
        raise ConfigError("receiver.resync_period: must be positive")
    at = cfg.attack
    if at.enabled:
        if at.t_replay_ms <= 0:
            raise ConfigError("attack.t_replay_ms: must be positive")
        if at.tau_ms < 0:
            raise ConfigError("attack.tau_ms: must be non-negative")
        if at.adversary_class not in (1, 2, 3):
            raise ConfigError("attack.adversary_class: must be 1, 2 or 3")
        if at.jam_start is not None:
            if at.jam_duration < 0:
                raise ConfigError("attack.jam_duration: inverted jam window")
            if at.spoof_onset is not None and at.spoof_onset <= at.jam_start + at.jam_duration:
                raise ConfigError("attack.spoof_onset: must follow the jam window")
        elif at.spoof and at.spoof_onset is None:
            raise ConfigError("attack.spoof_onset: required when there is no jam window")
        if at.residual_hz is not None and at.residual_hz < 0:
            raise ConfigError("attack.residual_hz: must be non-negative")
    d = cfg.detectors
    if d.quarantine < 1 or d.verify_epochs < 1 or d.dst_m_of_n < 1:
        raise ConfigError("detectors: quarantine, verify_epochs and dst_m_of_n must be >= 1")
    if d.dst_window < 10:
        raise ConfigError("detectors.dst_window: at least 10 samples")


# ---------------------------------------------------------------------------
# dict <-> dataclass

def _hints(cls):
    return typing.get_type_hints(cls)


def _is_section(tp) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(value, tp, path):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        tp = args[0]
        origin = typing.get_origin(tp)
    if _is_section(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _build(tp, value, path + ".")
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp in (list, tuple) or origin in (list, tuple):
        if isinstance(value, (int, str)) and path.endswith("affected_sats"):
            return value
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return tuple(value) if tp is tuple else list(value)
    return value


def _build(cls, data: dict, prefix: str = ""):
    hints = _hints(cls)
    unknown = sorted(set(data) - set(hints))
    if unknown:
        raise ConfigError(f"unknown key{'s' if len(unknown) > 1 else ''}: "
                          + ", ".join(prefix + k for k in unknown))
    kwargs = {k: _coerce(v, hints[k], prefix + k) for k, v in data.items()}
    return cls(**kwargs)


def from_dict(data: dict | None) -> ScenarioConfig:
    cfg = _build(ScenarioConfig, dict(data or {}))
    return cfg.validate()


def load_config(path) -> ScenarioConfig:
    """Read a YAML scenario file. Raises OSError for I/O, ConfigError otherwise."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(data)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(json.loads(json.dumps(cfg.to_dict())), sort_keys=False)


def _assign(data: dict, path: str, value):
    node = data
    parts = path.split(".")
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown parameter path {path!r}")
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f"unknown parameter path {path!r}")
    node[parts[-1]] = value


def set_path(cfg: ScenarioConfig, path: str, value) -> ScenarioConfig:
    """Copy of cfg with the dotted field `path` set to `value` (validated)."""
    return apply_overrides(cfg, {path: value})


def apply_overrides(cfg: ScenarioConfig, overrides) -> ScenarioConfig:
    """Apply a mapping of dotted paths or a list of 'path=value' strings.

    All overrides are applied before the result is validated.
    """
    if not overrides:
        return cfg
    items = overrides.items() if isinstance(overrides, dict) else (parse_override(o) for o in overrides)
    data = cfg.to_dict()
    for path, value in items:
        _assign(data, path, value)
    return from_dict(data)


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not path=value")
    path, raw = text.split("=", 1)
    return path.strip(), yaml.safe_load(raw)
