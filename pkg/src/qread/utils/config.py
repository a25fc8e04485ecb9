from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Set

import numpy as np
import yaml

from qread.decide.discriminate import ChannelPair
from qread.metrics.manifest import is_manifest
from qread.pipeline.experiment import ExperimentConfig
from qread.sim.montecarlo import SimConfig
from qread.utils.errors import ConfigError, ParameterError

DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "channel": {
        "tau0": 0.995,
        "tau1": 1.0,
        "eta_s": 0.78,
        "eta_i": 0.77,
        "mean_signal_photons": 115000.0,
        "straylight_mean": 0.0,
        "straylight_mean_idler": None,
        "electronic_variance": 10000.0,
    },
    "simulation": {
        "transmitter": "tmsv",
        "frames_per_set": 10000,
        "sampling": "exact-pair",
        "modes": None,
        "workers": 1,
        "max_exact_pair_photons": 1.0e7,
        "truth": "both",
        "classical": False,
        "calibration_frames": False,
    },
    "experiment": {
        "rule": "auto",
        "subsets": 10,
        "classical_reference": "marginal",
    },
    "sweep": {
        "tau0_grid": "0.990:0.999:10",
        "n_list": [115000.0, 310000.0, 520000.0],
        "progress": False,
    },
    "bounds": {"n_grid": "1:1000"},
    "calibration": {"frames": None, "dark_frames": None, "shutter_frames": None},
    "memory": {"bits": None, "cells": 1000},
    "output": {"format": "csv"},
}


def load_yaml(path: str | Path) -> Dict[str, Any]:
    """Load a YAML (or JSON) config into a dict."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged: Dict[str, Any] = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_override(item: str) -> Dict[str, Any]:
    """``section.key=value`` to a nested dict; the value is read as a YAML scalar or list."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    dotted, text = item.split("=", 1)
    keys = [k for k in dotted.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {item!r} has an empty key")
    value: Any = yaml.safe_load(text) if text.strip() else None
    if isinstance(value, int) and ":" in text:
        # YAML 1.1 reads 1:30 as a base-60 integer; grids use that syntax
        value = text.strip()
    for key in reversed(keys):
        value = {key: value}
    return value


def parse_grid(grid: Any, integer: bool = False) -> List[float]:
    """Grid from a list, ``a,b,c``, ``start:stop`` (unit steps) or ``start:stop:count``."""
    if isinstance(grid, (list, tuple)):
        values = [float(v) for v in grid]
    elif isinstance(grid, (int, float)):
        values = [float(grid)]
    elif isinstance(grid, str):
        text = grid.strip()
        try:
            if ":" in text:
                parts = [float(p) for p in text.split(":")]
                if len(parts) == 2:
                    values = list(np.arange(parts[0], parts[1] + 0.5, 1.0))
                elif len(parts) == 3:
                    values = list(np.linspace(parts[0], parts[1], int(parts[2])))
                else:
                    raise ValueError(text)
            else:
                values = [float(p) for p in text.split(",") if p.strip()]
        except ValueError as exc:
            raise ConfigError(f"cannot parse grid {grid!r}") from exc
    else:
        raise ConfigError(f"cannot parse grid {grid!r}")
    if not values:
        raise ConfigError(f"grid {grid!r} is empty")
    if integer:
        return [float(int(round(v))) for v in values]
    return [float(v) for v in values]


def _section(raw: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return value


def _number(section: Dict[str, Any], name: str, key: str, cast=float, optional: bool = False):
    value = section.get(key)
    if value is None and optional:
        return None
    try:
        return cast(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}.{key} must be a number, got {value!r}") from exc


def dotted_keys(tree: Dict[str, Any], prefix: str = "") -> Set[str]:
    """Leaf keys of a nested mapping as ``a.b.c`` strings."""
    keys: Set[str] = set()
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            keys |= dotted_keys(value, f"{name}.")
        else:
            keys.add(name)
    return keys


@dataclass
class AppConfig:
    raw: Dict[str, Any]
    # keys set by a file, an override or a flag rather than by DEFAULTS
    explicit: Set[str] = field(default_factory=set)

    @classmethod
    def from_files(cls, *paths: str | Path, overrides: Iterable[str] = ()) -> "AppConfig":
        """Defaults, then each file in order, then ``key=value`` overrides.

        A run manifest is accepted as a config file; its recorded config is used.
        """
        merged: Dict[str, Any] = copy.deepcopy(DEFAULTS)
        explicit: Set[str] = set()
        for path in paths:
            data = load_yaml(path)
            if is_manifest(data):
                data = data["config"]
            merged = deep_merge(merged, data)
            explicit |= dotted_keys(data)
        for item in overrides:
            override = parse_override(item)
            merged = deep_merge(merged, override)
            explicit |= dotted_keys(override)
        return cls(raw=merged, explicit=explicit)

    def is_explicit(self, dotted: str) -> bool:
        return dotted in self.explicit

    def set(self, dotted: str, value: Any) -> None:
        if value is None:
            return
        self.explicit.add(dotted)
        node = self.raw
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = value

    def get(self, dotted: str, default: Any = None) -> Any:
        node: Any = self.raw
        for key in dotted.split("."):
            if not isinstance(node, dict) or key not in node:
                return default
            node = node[key]
        return node

    @property
    def seed(self) -> int:
        seed = _number(self.raw, "config", "seed", int)
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return seed

    def channel_pair(self) -> ChannelPair:
        ch = _section(self.raw, "channel")
        try:
            return ChannelPair(
                tau0=_number(ch, "channel", "tau0"),
                tau1=_number(ch, "channel", "tau1"),
                eta_s=_number(ch, "channel", "eta_s"),
                eta_i=_number(ch, "channel", "eta_i"),
                mean_signal_photons=_number(ch, "channel", "mean_signal_photons"),
                straylight_mean=_number(ch, "channel", "straylight_mean"),
                electronic_variance=_number(ch, "channel", "electronic_variance"),
                straylight_mean_idler=_number(ch, "channel", "straylight_mean_idler", optional=True),
            )
        except ParameterError as exc:
            raise ConfigError(f"channel: {exc}") from exc

    def experiment_config(self) -> ExperimentConfig:
        sim = _section(self.raw, "simulation")
        exp = _section(self.raw, "experiment")
        try:
            return ExperimentConfig(
                pair=self.channel_pair(),
                transmitter=str(sim.get("transmitter")),
                frames_per_set=_number(sim, "simulation", "frames_per_set", int),
                rule=str(exp.get("rule")),
                subsets=_number(exp, "experiment", "subsets", int),
                seed=self.seed,
                sampling=str(sim.get("sampling")),
                modes=_number(sim, "simulation", "modes", int, optional=True),
                workers=_number(sim, "simulation", "workers", int),
                classical_reference=str(exp.get("classical_reference")),
                max_exact_pair_photons=_number(sim, "simulation", "max_exact_pair_photons"),
            )
        except ParameterError as exc:
            raise ConfigError(f"experiment: {exc}") from exc

    def sim_config(self) -> SimConfig:
        try:
            return self.experiment_config().sim_config()
        except ParameterError as exc:
            raise ConfigError(f"simulation: {exc}") from exc

    def grid(self, dotted: str, integer: bool = False) -> List[float]:
        return parse_grid(self.get(dotted), integer=integer)

    def output_format(self) -> str:
        fmt = self.get("output.format")
        if fmt not in ("csv", "json"):
            raise ConfigError(f"output.format must be csv or json, got {fmt!r}")
        return fmt

    def optional_path(self, dotted: str) -> Optional[Path]:
        value = self.get(dotted)
        return None if value in (None, "") else Path(value)

    def flag(self, dotted: str) -> bool:
        value = self.get(dotted)
        if not isinstance(value, bool):
            raise ConfigError(f"{dotted} must be true or false, got {value!r}")
        return value

    def simulate_truths(self) -> List[int]:
        """Channels written by ``simulate``: ``both``, ``0`` or ``1``."""
        truth = str(self.get("simulation.truth"))
        if truth == "both":
            return [0, 1]
        if truth in ("0", "1"):
            return [int(truth)]
        raise ConfigError(f"simulation.truth must be both, 0 or 1, got {truth!r}")
