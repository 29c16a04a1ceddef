"""Scenario configuration: a small tree of dataclasses loaded from YAML.

Every setting has a dotted key (``channel.macro_tx_dbm``, ``sched``); unknown
keys are rejected with the list of valid ones.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .grid import rbs_for_bandwidth

SEED_ENV = "FEMTOSCHED_SEED"


@dataclass
class GridSection:
    bandwidth_mhz: float = 5.0


@dataclass
class ChannelSection:
    pathloss_a: float = 128.1
    pathloss_b: float = 37.6
    penetration_db: float = 10.0
    shadowing_mean_db: float = 0.0
    shadowing_sigma_db: float = 8.0
    ue_speed_kmh: float = 3.0
    carrier_hz: float = 2e9
    fading: bool = True
    n_sinusoids: int = 16
    macro_tx_dbm: float = 30.0  # calibrated so the macro cell is loaded at 20-30 UEs
    femto_tx_dbm: float = 20.0
    noise_density_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    min_distance_m: float = 10.0
    cqi_table: str = "default"


@dataclass
class TrafficSection:
    video_rate_bps: float = 128e3
    video_delay_s: float = 0.15
    video_trace: str = ""
    voip_delay_s: float = 0.1
    voip_on_mean_s: float = 3.0
    voip_off_mean_s: float = 3.0
    be_rate_bps: float = 1e6
    be_queue_bytes: int = 1 << 20
    rt_queue_bytes: int = 0  # 0 = unbounded
    queue_metric: str = "hol_delay"  # or "queue_bytes"


@dataclass
class TopologySection:
    macro_radius_m: float = 1000.0
    building_rows: int = 7
    building_cols: int = 8
    building_size_m: float = 25.0
    building_spacing_m: float = 200.0
    indoor_fraction: float = 0.5
    min_macro_snr_db: float = -9.0  # coverage: re-drop UEs below this macro-link SNR
    access: str = "closed"  # or "open"


@dataclass
class ScenarioConfig:
    sched: str = "pf"
    seed: int = 1
    n_ues: int = 20
    femto: bool = False
    duration_s: float = 30.0
    warmup_s: float = 1.0
    ema_ttis: int = 1000
    grid: GridSection = field(default_factory=GridSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    traffic: TrafficSection = field(default_factory=TrafficSection)
    topology: TopologySection = field(default_factory=TopologySection)

    def validate(self) -> "ScenarioConfig":
        from .sched import parse_scheduler

        try:
            parse_scheduler(self.sched)
        except ValueError as exc:
            raise ConfigError(str(exc), key="sched") from None
        rbs_for_bandwidth(self.grid.bandwidth_mhz)
        checks = [
            (self.n_ues >= 1, "n_ues", "need at least one UE"),
            (self.duration_s > 0, "duration_s", "must be positive"),
            (0 <= self.warmup_s <= self.duration_s, "warmup_s", "must lie in [0, duration_s]"),
            (self.ema_ttis >= 1, "ema_ttis", "must be >= 1"),
            (self.channel.shadowing_sigma_db >= 0, "channel.shadowing_sigma_db", "must be >= 0"),
            (self.channel.penetration_db >= 0, "channel.penetration_db", "must be >= 0"),
            (self.channel.min_distance_m > 0, "channel.min_distance_m", "must be positive"),
            (self.channel.n_sinusoids >= 1, "channel.n_sinusoids", "must be >= 1"),
            (self.traffic.video_delay_s > 0, "traffic.video_delay_s", "must be positive"),
            (self.traffic.voip_delay_s > 0, "traffic.voip_delay_s", "must be positive"),
            (self.traffic.video_rate_bps > 0, "traffic.video_rate_bps", "must be positive"),
            (self.traffic.be_rate_bps >= 0, "traffic.be_rate_bps", "must be >= 0"),
            (self.traffic.queue_metric in ("hol_delay", "queue_bytes"), "traffic.queue_metric",
             "must be 'hol_delay' or 'queue_bytes'"),
            (self.topology.macro_radius_m > 0, "topology.macro_radius_m", "must be positive"),
            (0 <= self.topology.indoor_fraction <= 1, "topology.indoor_fraction", "must lie in [0, 1]"),
            (self.topology.access in ("closed", "open"), "topology.access", "must be 'closed' or 'open'"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}", key=key)
        n_buildings = self.topology.building_rows * self.topology.building_cols
        if self.femto and n_buildings == 0:
            raise ConfigError("femto mode needs at least one building", key="femto")
        return self


def valid_keys(obj=None, prefix: str = "") -> list[str]:
    obj = obj if obj is not None else ScenarioConfig()
    keys = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            keys.extend(valid_keys(value, f"{prefix}{f.name}."))
        else:
            keys.append(f"{prefix}{f.name}")
    return keys


def _coerce(key: str, current: Any, value: Any) -> Any:
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false", "on", "off", "yes", "no"):
            return value.lower() in ("true", "on", "yes")
        raise ConfigError(f"{key}: expected a boolean, got {value!r}", key=key)
    if isinstance(current, (int, float)) and isinstance(value, str):
        # YAML 1.1 leaves forms like 2.0e9 as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(current, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key}: expected an integer, got {value!r}", key=key)
        return int(value)
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}", key=key)
        return float(value)
    if isinstance(current, str):
        return "" if value is None else str(value)
    return value


def set_key(cfg: ScenarioConfig, dotted: str, value: Any) -> None:
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        child = getattr(node, part, None) if part in _field_names(node) else None
        if not dataclasses.is_dataclass(child):
            _unknown(dotted)
        node = child
    leaf = parts[-1]
    if leaf not in _field_names(node) or dataclasses.is_dataclass(getattr(node, leaf)):
        _unknown(dotted)
    setattr(node, leaf, _coerce(dotted, getattr(node, leaf), value))


def _field_names(obj) -> set[str]:
    return {f.name for f in dataclasses.fields(obj)}


def _unknown(key: str):
    raise ConfigError(f"unknown key {key!r}; valid keys: {', '.join(valid_keys())}", key=key)


def _flatten(tree: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in tree.items():
        if isinstance(v, dict):
            out.update(_flatten(v, f"{prefix}{k}."))
        else:
            out[f"{prefix}{k}"] = v
    return out


def from_dict(tree: dict | None) -> ScenarioConfig:
    cfg = ScenarioConfig()
    for key, value in _flatten(tree or {}).items():
        set_key(cfg, key, value)
    return cfg


def load_scenario(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> ScenarioConfig:
    """Load a scenario file (YAML); ``None`` gives the bundled paper scenario."""
    if path is None:
        text = resources.files("femtosched").joinpath("data/paper.scenario").read_text()
        base = None
    else:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}", key="scenario") from exc
        base = path.parent
    try:
        tree = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario {path}: {exc}", key="scenario") from exc
    if not isinstance(tree, dict):
        raise ConfigError(f"scenario {path}: top level must be a mapping", key="scenario")
    cfg = from_dict(tree)
    for key, value in (overrides or {}).items():
        set_key(cfg, key, value)
    trace = cfg.traffic.video_trace
    if trace and base is not None and not Path(trace).is_absolute():
        cfg.traffic.video_trace = str(base / trace)
    return cfg.validate()


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value", key=text)
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    return key.strip(), value


def default_seed(fallback: int = 1) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer", key=SEED_ENV) from None


def to_dict(cfg: ScenarioConfig) -> dict:
    return dataclasses.asdict(cfg)


def copy_config(cfg: ScenarioConfig, **overrides) -> ScenarioConfig:
    new = from_dict(to_dict(cfg))
    for key, value in overrides.items():
        set_key(new, key.replace("__", "."), value)
    return new
