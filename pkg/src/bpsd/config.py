"""INI run configuration: file sections merged with command-line overrides.

Example file::

    [generator]
    seed = 42
    patients = 30
    days = 21

    [framework]
    backbone = ERT
    ensemble = rdg,irg,tcn
    threshold = 0.5

    [forest]
    n_trees = 100

    [tcn]
    epochs = 50
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import asdict, fields, replace
from typing import Any, Mapping

from .framework import MODEL_NAMES, FrameworkConfig
from .learners import ForestParams, LogisticParams
from .synthgen import GeneratorConfig, InfeasibleConfig
from .tcn import TcnConfig


class ConfigError(ValueError):
    pass


GENERATOR_ALIASES = {"patients": "n_patients"}
FRAMEWORK_ALIASES = {"ensemble": "active"}


def read_config_file(path: str | None) -> dict[str, dict[str, str]]:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    try:
        with open(path) as f:
            parser.read_file(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config file {path}: {e}") from e
    return {s: dict(parser[s]) for s in parser.sections()}


def _coerce(raw: Any, current: Any, name: str) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(current, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if current and isinstance(current[0], (int, float)):
                return tuple(type(current[0])(p) for p in parts)
            return tuple(parts)
        if current is None:
            return None if text.lower() in ("", "none") else int(text)
    except ValueError as e:
        raise ConfigError(f"bad value for {name}: {raw!r}") from e
    return text


def _apply(obj, values: Mapping[str, Any], aliases: Mapping[str, str], section: str):
    names = {f.name for f in fields(obj)}
    changes = {}
    for key, raw in values.items():
        name = aliases.get(key, key)
        if name not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        changes[name] = _coerce(raw, getattr(obj, name), f"{section}.{key}")
    try:
        return replace(obj, **changes)
    except (ValueError, TypeError, InfeasibleConfig) as e:
        raise ConfigError(f"invalid [{section}] settings: {e}") from e


def generator_config(file_sections: Mapping[str, Mapping[str, str]], overrides: Mapping[str, Any]) -> GeneratorConfig:
    merged = {**file_sections.get("generator", {}), **{k: v for k, v in overrides.items() if v is not None}}
    return _apply(GeneratorConfig(), merged, GENERATOR_ALIASES, "generator")


def framework_config(file_sections: Mapping[str, Mapping[str, str]], overrides: Mapping[str, Any]) -> FrameworkConfig:
    """FrameworkConfig from [framework], [forest], [logistic] and [tcn] sections plus overrides."""
    unknown = set(file_sections) - {"generator", "framework", "forest", "logistic", "tcn"}
    if unknown:
        raise ConfigError(f"unknown config section(s) {sorted(unknown)}")
    forest = _apply(ForestParams(), file_sections.get("forest", {}), {}, "forest")
    logistic = _apply(LogisticParams(), file_sections.get("logistic", {}), {}, "logistic")
    tcn = _apply(TcnConfig(), file_sections.get("tcn", {}), {}, "tcn")
    base = FrameworkConfig(forest=forest, logistic=logistic, tcn=tcn)
    merged = {**file_sections.get("framework", {}), **{k: v for k, v in overrides.items() if v is not None}}
    cfg = _apply(base, merged, FRAMEWORK_ALIASES, "framework")
    if not cfg.active:
        raise ConfigError("ensemble active set is empty")
    if set(cfg.active) - set(MODEL_NAMES):
        raise ConfigError(f"unknown ensemble members {sorted(set(cfg.active) - set(MODEL_NAMES))}")
    return cfg


def config_to_dict(cfg) -> dict:
    d = asdict(cfg)
    d.pop("signatures", None)
    return d


def framework_config_from_dict(d: Mapping[str, Any]) -> FrameworkConfig:
    d = dict(d)
    d["forest"] = ForestParams(**d["forest"])
    d["logistic"] = LogisticParams(**d["logistic"])
    tcn = dict(d["tcn"])
    tcn["dilations"] = tuple(tcn["dilations"])
    d["tcn"] = TcnConfig(**tcn)
    d["active"] = tuple(d["active"])
    if d.get("cv_grid") is not None:
        d["cv_grid"] = tuple(dict(g) for g in d["cv_grid"])
    known = {f.name for f in dataclasses.fields(FrameworkConfig)}
    return FrameworkConfig(**{k: v for k, v in d.items() if k in known})
