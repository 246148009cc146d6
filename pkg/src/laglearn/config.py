"""Run configuration: YAML files, command-line overrides, object construction.

A config file is a nested mapping with a ``format_version`` and optional
``system``, ``data``, ``model``, ``training``, ``generators``, and
``evaluation`` sections.  Command-line flags always win over file values.
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .loss import LossWeights
from .model import SymmetryGenerator
from .systems import System, make_system
from .trainer import TrainConfig

CONFIG_FORMAT_VERSION = 1

DEFAULTS: dict = {
    "format_version": CONFIG_FORMAT_VERSION,
    "system": {"name": None, "params": {}},
    "data": {
        "n": None,
        "dt": None,
        "fine_dt": None,
        "q0": None,
        "p0": None,
        "noise_var": 0.0,
        "seed": 1,
        "trajectories": 1,
        "ic_spread": 0.1,
    },
    "model": {"hidden": [128, 128, 128], "activation": "tanh", "seed": 7},
    "training": {
        "epochs": 100000,
        "learning_rate": 3e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "symmetry_warmup_epochs": 5000,
        "k_generators": 1,
        "checkpoint_interval": 0,
        "weights": {
            "del": 1.0,
            "degeneracy": 1.0,
            "symmetry": 1.0,
            "nontriviality": 1.0,
            "orthogonality": 1.0,
        },
        "degeneracy_exponent": 2,
        "degeneracy_slope": 0.01,
        "degeneracy_form": "logistic",
    },
    "generators": [],
    "evaluation": {"n_extra": 100},
}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path) -> dict:
    """Config file merged over package defaults."""
    path = Path(path)
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as err:
        raise ConfigError(f"could not parse {path}: {err}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    version = raw.get("format_version", CONFIG_FORMAT_VERSION)
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format_version {version!r}")
    return _deep_merge(DEFAULTS, raw)


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def apply_overrides(config: dict, overrides: dict) -> dict:
    """Apply {'section.key': value} overrides, skipping None values."""
    config = copy.deepcopy(config)
    for dotted, value in overrides.items():
        if value is None:
            continue
        parts = dotted.split(".")
        node = config
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config


def dump_config(config: dict) -> str:
    return yaml.safe_dump(config, sort_keys=False, default_flow_style=None)


def build_system(config: dict) -> System:
    name = config["system"].get("name")
    if not name:
        raise ConfigError("system.name is not set")
    try:
        return make_system(name, config["system"].get("params") or {})
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad system section: {err}")


def build_weights(config: dict) -> LossWeights:
    t = config["training"]
    w = t.get("weights", {})
    try:
        return LossWeights(
            w_del=float(w.get("del", 1.0)),
            w_degen=float(w.get("degeneracy", 1.0)),
            w_sym=float(w.get("symmetry", 1.0)),
            w_nontriv=float(w.get("nontriviality", 1.0)),
            w_orth=float(w.get("orthogonality", 1.0)),
            degeneracy_exponent=int(t.get("degeneracy_exponent", 2)),
            degeneracy_slope=float(t.get("degeneracy_slope", 0.01)),
            degeneracy_form=t.get("degeneracy_form", "logistic"),
        )
    except ValueError as err:
        raise ConfigError(f"bad loss weights: {err}")


def build_train_config(config: dict, mode: str = "dlnn") -> TrainConfig:
    t = config["training"]
    if mode == "dlnn":
        k = 0
    elif mode == "symdlnn":
        k = int(t.get("k_generators", 1))
        if k < 1:
            raise ConfigError("symdlnn mode needs training.k_generators >= 1")
    else:
        raise ConfigError(f"unknown training mode {mode!r}")
    try:
        return TrainConfig(
            epochs=int(t["epochs"]),
            learning_rate=float(t["learning_rate"]),
            beta1=float(t["beta1"]),
            beta2=float(t["beta2"]),
            epsilon=float(t["epsilon"]),
            symmetry_warmup_epochs=int(t["symmetry_warmup_epochs"]),
            k_generators=k,
            seed=int(config["model"]["seed"]),
            weights=build_weights(config),
            checkpoint_interval=int(t.get("checkpoint_interval", 0)),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad training section: {err}")


def build_generator_guesses(config: dict, n_q: int):
    """Generator guesses from the config, or None to use seeded noise."""
    entries = config.get("generators") or []
    if not entries:
        return None
    guesses = []
    for i, entry in enumerate(entries):
        try:
            guesses.append(
                SymmetryGenerator(
                    np.asarray(entry["matrix"], dtype=float),
                    np.asarray(entry["vector"], dtype=float),
                )
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"bad generators[{i}]: {err}")
        if guesses[-1].n_q != n_q:
            raise ConfigError(
                f"generators[{i}] has dimension {guesses[-1].n_q}, system needs {n_q}"
            )
    return tuple(guesses)


def require_data_section(config: dict) -> dict:
    d = config["data"]
    missing = [key for key in ("n", "dt", "fine_dt", "q0", "p0") if d.get(key) is None]
    if missing:
        raise ConfigError(f"data section is missing: {', '.join(missing)}")
    return d
