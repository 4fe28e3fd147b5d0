"""Experiment configuration: JSON loading, validation and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .control import MCConfig
from .engine import StateCoefficients
from .errors import ConfigError
from .logutility import LogUtilityConfig
from .process import MODES, IntensityModel, MarkKernel

DEFAULTS = {
    "model": {"lambda0": 1.0, "beta": 1.0, "delta": 0.5, "drift": "mean_reverting"},
    "kernel": {"kind": "constant", "c": 0.5, "rate": None, "shift": None, "mode": "predictable"},
    "state": {"form": "loglinear", "alpha": 0.1, "vol": 0.3, "kappa": 0.2, "x0": 1.0, "pi": "optimal"},
    "logutility": {"theta": 1.0, "pi_min": 1e-3, "pi_max": 1e3},
    "grid": {"horizon": 1.0, "base_steps": 256},
    "mc": {"paths": 10000, "inner_paths": 256, "master_seed": 0, "max_events": 10**6},
    "verify": {"checkpoints": 4, "corrupt_scale": 1.1, "y_step": 1e-3, "starts": None,
               "policy_scale": 1.0, "trace_paths": 4},
    "output_dir": "out",
}

def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        name = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(name, "unknown field")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(name, "must be an object")
            out[key] = _merge(base[key], value, name)
        else:
            out[key] = value
    return out


def _number(section: dict, key: str, where: str, kind=float):
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key}", f"must be a number, got {value!r}")
    if kind is int and value != int(value):
        raise ConfigError(f"{where}.{key}", f"must be an integer, got {value!r}")
    return kind(value)


def _scoped(where: str, build):
    """Re-raise a component ConfigError with the section prefix on the field."""
    try:
        return build()
    except ConfigError as err:
        if "." in str(err.field):
            raise
        raise ConfigError(f"{where}.{err.field}", str(err).split(": ", 1)[-1]) from None


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Validated experiment description; ``raw`` holds the merged JSON values."""

    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        # build every component once so errors surface at load time
        self.model, self.kernel, self.coefficients, self.mc, self.logutility

    @classmethod
    def from_dict(cls, data: Optional[dict] = None) -> "ExperimentConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        return cls(_merge(DEFAULTS, data))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError("config", f"{path}: invalid JSON ({err})") from None
        return cls.from_dict(data)

    def with_overrides(self, paths=None, seed=None, out=None, mode=None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if paths is not None:
            raw["mc"]["paths"] = paths
        if seed is not None:
            raw["mc"]["master_seed"] = seed
        if out is not None:
            raw["output_dir"] = str(out)
        if mode is not None:
            raw["kernel"]["mode"] = mode
        return ExperimentConfig(raw)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def dumps(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2) + "\n"

    def experiment_dict(self) -> dict:
        """Everything except ``output_dir``, which does not affect results."""
        raw = self.to_dict()
        raw.pop("output_dir")
        return raw

    def config_hash(self) -> str:
        canon = json.dumps(self.experiment_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @property
    def horizon(self) -> float:
        h = _number(self.raw["grid"], "horizon", "grid")
        if not h > 0:
            raise ConfigError("grid.horizon", f"must be positive, got {h}")
        return h

    @property
    def model(self) -> IntensityModel:
        m = self.raw["model"]
        return _scoped("model", lambda: IntensityModel(
            _number(m, "lambda0", "model"), _number(m, "beta", "model"),
            _number(m, "delta", "model"), m["drift"]))

    @property
    def kernel(self) -> MarkKernel:
        k = self.raw["kernel"]
        if k.get("mode") not in MODES:
            raise ConfigError("kernel.mode", f"must be one of {MODES}, got {k.get('mode')!r}")
        if k.get("kind") == "constant":
            return _scoped("kernel", lambda: MarkKernel.constant(_number(k, "c", "kernel"), k["mode"]))
        if k.get("kind") == "shifted_exponential":
            for key in ("rate", "shift"):
                if k.get(key) is None:
                    raise ConfigError(f"kernel.{key}", "required for shifted_exponential")
            return _scoped("kernel", lambda: MarkKernel.shifted_exponential(k["rate"], k["shift"], k["mode"]))
        raise ConfigError("kernel.kind", f"unknown mark kernel {k.get('kind')!r}")

    @property
    def coefficients(self) -> StateCoefficients:
        s = self.raw["state"]
        if s["form"] != "loglinear":
            raise ConfigError("state.form", "only 'loglinear' coefficients can be read from a config")
        if not _number(s, "x0", "state") > 0:
            raise ConfigError("state.x0", f"must be positive, got {s['x0']}")
        return _scoped("state", lambda: StateCoefficients.loglinear(
            _number(s, "alpha", "state"), _number(s, "vol", "state"), _number(s, "kappa", "state")))

    @property
    def x0(self) -> float:
        return float(self.raw["state"]["x0"])

    @property
    def mc(self) -> MCConfig:
        m, g = self.raw["mc"], self.raw["grid"]
        for key in ("paths", "inner_paths", "master_seed", "max_events"):
            _number(m, key, "mc", int)
        if m["master_seed"] < 0:
            raise ConfigError("mc.master_seed", "must be non-negative")
        if m["inner_paths"] < 2:
            raise ConfigError("mc.inner_paths", "must be at least 2")
        steps = _number(g, "base_steps", "grid", int)
        return _scoped("mc", lambda: MCConfig(
            paths=int(m["paths"]), master_seed=int(m["master_seed"]), horizon=self.horizon,
            base_steps=steps, inner_paths=int(m["inner_paths"]), max_events=int(m["max_events"])))

    @property
    def logutility(self) -> LogUtilityConfig:
        s, lu = self.raw["state"], self.raw["logutility"]
        return _scoped("logutility", lambda: LogUtilityConfig(
            alpha=float(s["alpha"]), vol=float(s["vol"]), kappa=float(s["kappa"]),
            theta=_number(lu, "theta", "logutility"), x0=float(s["x0"]), horizon=self.horizon,
            pi_min=_number(lu, "pi_min", "logutility"), pi_max=_number(lu, "pi_max", "logutility")))

    @property
    def verify(self) -> dict:
        return self.raw["verify"]

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output_dir"])
