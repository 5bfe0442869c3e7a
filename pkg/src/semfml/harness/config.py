"""Experiment configuration: YAML with unit-suffixed keys, validated on load.

dBm quantities are converted to linear watts here, once.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import yaml

from ..allocator import ObjectiveWeights
from ..cost_model import NetworkConfig, PayloadSizes, dbm_to_watts, watts_to_dbm
from ..dmib import IBWeights
from ..errors import InvalidParameterError
from ..fml import ChannelSpec, TrainingSchedule

STRATEGIES = ("tasc", "tasc-greedy", "tasc-random", "rus-greedy", "rus-random", "fedavg", "vanilla-fml")
TASK_FAMILIES = ("regression", "quadratic", "classification")


class ConfigError(InvalidParameterError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


# YAML key -> NetworkConfig field
_NETWORK_KEYS = {
    "rb_count": "rb_count",
    "rb_bandwidth_hz": "rb_bandwidth",
    "downlink_bandwidth_hz": "downlink_bandwidth",
    "bs_power_w": "bs_power",
    "bs_cpu_hz": "bs_cpu",
    "bs_intensity_cycles_per_flop": "bs_intensity",
    "bs_capacitance": "bs_capacitance",
    "bs_workload_flops": "bs_workload",
    "downlink_interference_w": "downlink_interference",
}


@dataclass(frozen=True)
class UserSpec:
    count: int = 100
    train_fraction: float = 0.5
    cpu_max_hz: tuple = (0.0, 2e9)
    power_max_w: float = 0.2
    capacitance: tuple = (0.0, 5e-28)
    intensity_cycles_per_flop: tuple = (0.0, 1 / 32)
    workload_flops: float = 2e7
    distance_km: tuple = (0.05, 0.3)
    fading: bool = True

    @property
    def train_count(self) -> int:
        return max(1, int(round(self.count * self.train_fraction)))


@dataclass(frozen=True)
class SelectionSpec:
    max_selected: int | None = None   # K^t budget; None -> rb_count
    eta1: float | None = None         # None -> estimated lower bound
    eta2: float | None = None
    eta_scale: float = 1.0
    probes: int = 3
    score_margin: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkConfig
    users: UserSpec = UserSpec()
    task: dict = field(default_factory=lambda: {"family": "regression"})
    model: dict = field(default_factory=dict)
    schedule: TrainingSchedule = TrainingSchedule()
    weights: ObjectiveWeights = ObjectiveWeights()
    ib: IBWeights = IBWeights()
    channel: ChannelSpec = ChannelSpec()
    selection: SelectionSpec = SelectionSpec()
    payload: PayloadSizes | None = None
    strategy: str = "tasc"
    seed: int = 0

    def with_updates(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(to_dict(self), sort_keys=True).encode()).hexdigest()[:16]


def _section(raw, name):
    sec = raw.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a mapping")
    return sec


def _build(cls, name, kwargs):
    allowed = {f.name for f in fields(cls)}
    unknown = set(kwargs) - allowed
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown key")
    try:
        return cls(**kwargs)
    except InvalidParameterError as exc:
        raise ConfigError(name, str(exc)) from None
    except TypeError as exc:
        raise ConfigError(name, str(exc)) from None


def _network(sec) -> NetworkConfig:
    kw = {}
    for key, value in sec.items():
        if key in _NETWORK_KEYS:
            kw[_NETWORK_KEYS[key]] = value
        elif key == "noise_psd_dbm_hz":
            kw["noise_psd"] = dbm_to_watts(float(value))
        elif key == "uplink_interference_w":
            kw["uplink_interference"] = tuple(value) if isinstance(value, (list, tuple)) else (float(value),) * int(sec.get("rb_count", 1))
        else:
            raise ConfigError(f"network.{key}", "unknown key")
    for key, target in list(_NETWORK_KEYS.items()) + [("noise_psd_dbm_hz", "noise_psd")]:
        if target not in kw and target not in ("downlink_interference",):
            raise ConfigError(f"network.{key}", "missing")
    for key, target in _NETWORK_KEYS.items():
        v = kw.get(target)
        if target == "rb_count":
            continue
        if v is not None and target != "downlink_interference" and not float(v) > 0:
            raise ConfigError(f"network.{key}", f"must be > 0, got {v}")
    return _build(NetworkConfig, "network", kw)


def _range(name, value):
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(name, "expected [low, high]")
    lo, hi = float(value[0]), float(value[1])
    if lo < 0 or hi < lo:
        raise ConfigError(name, f"need 0 <= low <= high, got [{lo}, {hi}]")
    return (lo, hi)


def from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    unknown = set(raw) - {"network", "users", "task", "model", "schedule", "weights", "ib", "channel",
                          "selection", "payload", "strategy", "seed"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    if "network" not in raw:
        raise ConfigError("network", "missing")
    net = _network(_section(raw, "network"))

    u = dict(_section(raw, "users"))
    for key in ("cpu_max_hz", "capacitance", "intensity_cycles_per_flop", "distance_km"):
        if key in u:
            u[key] = _range(f"users.{key}", u[key])
    users = _build(UserSpec, "users", u)
    if users.count < 1:
        raise ConfigError("users.count", "must be >= 1")
    if not 0 < users.train_fraction <= 1:
        raise ConfigError("users.train_fraction", "must be in (0, 1]")
    if not users.power_max_w > 0 or not users.workload_flops > 0:
        raise ConfigError("users", "power_max_w and workload_flops must be > 0")

    task = dict(_section(raw, "task")) or {"family": "regression"}
    if task.get("family", "regression") not in TASK_FAMILIES:
        raise ConfigError("task.family", f"must be one of {TASK_FAMILIES}")
    task.setdefault("family", "regression")

    w = _section(raw, "weights")
    weights = _build(ObjectiveWeights, "weights",
                     {"rho1": w.get("rho1_per_j", 1.0), "rho2": w.get("rho2_per_s", 1.0)})

    payload = raw.get("payload", "auto")
    if payload in (None, "auto"):
        payload = None
    else:
        payload = _build(PayloadSizes, "payload", dict(payload))

    strategy = raw.get("strategy", "tasc")
    if strategy not in STRATEGIES:
        raise ConfigError("strategy", f"must be one of {STRATEGIES}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a nonnegative integer")

    sel = _build(SelectionSpec, "selection", dict(_section(raw, "selection")))
    if sel.max_selected is not None and sel.max_selected < 1:
        raise ConfigError("selection.max_selected", "must be >= 1")

    return ExperimentConfig(
        network=net, users=users, task=task, model=dict(_section(raw, "model")),
        schedule=_build(TrainingSchedule, "schedule", dict(_section(raw, "schedule"))),
        weights=weights,
        ib=_build(IBWeights, "ib", dict(_section(raw, "ib"))),
        channel=_build(ChannelSpec, "channel", dict(_section(raw, "channel"))),
        selection=sel, payload=payload, strategy=strategy, seed=seed,
    )


def to_dict(cfg: ExperimentConfig) -> dict:
    n = cfg.network
    net = {key: getattr(n, target) for key, target in _NETWORK_KEYS.items()}
    net["noise_psd_dbm_hz"] = float(watts_to_dbm(n.noise_psd))
    net["uplink_interference_w"] = list(n.uplink_interference)
    users = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg.users).items()}
    return {
        "seed": cfg.seed,
        "strategy": cfg.strategy,
        "network": net,
        "users": users,
        "task": copy.deepcopy(cfg.task),
        "model": copy.deepcopy(cfg.model),
        "schedule": asdict(cfg.schedule),
        "weights": {"rho1_per_j": cfg.weights.rho1, "rho2_per_s": cfg.weights.rho2},
        "ib": asdict(cfg.ib),
        "channel": asdict(cfg.channel),
        "selection": asdict(cfg.selection),
        "payload": "auto" if cfg.payload is None else asdict(cfg.payload),
    }


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"{path} does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"parse failure: {exc}") from None
    return from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(to_dict(cfg), sort_keys=False))
    return path


def default_config_text() -> str:
    return resources.files("semfml.harness").joinpath("default.yaml").read_text()


def default_config() -> ExperimentConfig:
    return from_dict(yaml.safe_load(default_config_text()))
