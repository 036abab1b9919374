"""Run configuration: built-in presets plus a YAML override file.

A config document has the sections ``preset``, ``seed``, ``scenario``,
``geometry``, ``model``, ``task``, ``train`` and ``paths``.  Unknown keys are
rejected; :func:`resolve_config` expands the preset into a fully explicit
document that every run echoes next to its outputs.
"""
from __future__ import annotations

import copy
from dataclasses import fields
from pathlib import Path

import yaml

from .channel import Scenario, make_scenario_config
from .dataset import GenerationConfig
from .experiment import TrainConfig
from .model import ArchConfig

PRESETS = {
    "desk": {
        "geometry": {"rows": 2, "cols": 3, "num_subcarriers": 16, "block_steps": 400,
                     "blocks_per_combination": 30, "subsample_stride": 2, "window_stride": 10,
                     "p_time": 30, "l_time": 5, "p_ant": 4, "l_ant": 2, "split_ratio": 0.8},
        "model": {"hidden": 64, "num_layers": 2},
        "train": {"epochs": 60, "batch_size": 64},
    },
    "full": {
        "geometry": {"rows": 2, "cols": 4, "num_subcarriers": 100, "block_steps": 20000,
                     "blocks_per_combination": 1, "subsample_stride": 2, "window_stride": 100,
                     "p_time": 90, "l_time": 10, "p_ant": 4, "l_ant": 2, "split_ratio": 0.8},
        "model": {"hidden": 512, "num_layers": 6},
        "train": {"epochs": 300, "batch_size": 1024},
    },
}

MODEL_KEYS = {"hidden", "num_layers", "reg_readout", "cls_readout", "single_head_joint"}
TASK_KEYS = {"tasks", "loss_weights"}
PATH_KEYS = {"data_dir", "out_dir"}
SCENARIO_KEYS = {"carrier_freq", "bandwidth", "tx_position", "num_clusters", "subpaths_per_cluster",
                 "delay_spread", "angle_spread_deg", "rician_k_db"}
TOP_KEYS = {"preset", "seed", "scenario", "geometry", "model", "task", "train", "paths"}


class ConfigError(ValueError):
    pass


def _defaults(preset: str) -> dict:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[preset]
    gen = {f.name: f.default for f in fields(GenerationConfig)
           if f.name not in ("scenario_overrides", "master_seed")}
    gen.update(p["geometry"])
    train = {f.name: f.default for f in fields(TrainConfig) if f.name != "seed"}
    train.update(p["train"])
    return {
        "preset": preset,
        "seed": 2024,
        "scenario": {s.name: {} for s in Scenario},
        "geometry": gen,
        "model": {**p["model"], "reg_readout": "aligned", "cls_readout": "last", "single_head_joint": False},
        "task": {"tasks": ["prediction", "extrapolation", "nlos", "scenario"],
                 "loss_weights": {"extra": 9.0, "nlos": 1.0, "sce": 1.0}},
        "train": train,
        "paths": {"data_dir": None, "out_dir": None},
    }


def _check_keys(section: str, given: dict, allowed) -> None:
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")


def resolve_config(doc: dict | None = None, preset: str | None = None) -> dict:
    """Merge a (partial) config document over its preset and validate it."""
    doc = copy.deepcopy(doc or {})
    _check_keys("<top>", doc, TOP_KEYS)
    cfg = _defaults(preset or doc.get("preset", "desk"))
    if "seed" in doc:
        cfg["seed"] = int(doc["seed"])
    for section, allowed in (("geometry", cfg["geometry"]), ("model", MODEL_KEYS), ("task", TASK_KEYS),
                             ("train", cfg["train"]), ("paths", PATH_KEYS)):
        given = doc.get(section, {}) or {}
        _check_keys(section, given, allowed)
        cfg[section].update(given)
    scen = doc.get("scenario", {}) or {}
    _check_keys("scenario", scen, [s.name for s in Scenario])
    for name, overrides in scen.items():
        _check_keys(f"scenario.{name}", overrides or {}, SCENARIO_KEYS)
        cfg["scenario"][name].update(overrides or {})
        make_scenario_config(name, **cfg["scenario"][name])  # validates values
    generation_config(cfg)
    train_config(cfg)
    arch_config(cfg)
    return cfg


def load_config(path=None, preset: str | None = None) -> dict:
    doc = {}
    if path is not None:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    return resolve_config(doc, preset)


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def generation_config(cfg: dict) -> GenerationConfig:
    overrides = {k: v for k, v in cfg["scenario"].items() if v}
    return GenerationConfig(**cfg["geometry"], master_seed=int(cfg["seed"]), scenario_overrides=overrides)


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"], seed=int(cfg["seed"]))


def arch_config(cfg: dict) -> ArchConfig:
    return ArchConfig(hidden=cfg["model"]["hidden"], num_layers=cfg["model"]["num_layers"],
                      num_subcarriers=cfg["geometry"]["num_subcarriers"])


def task_options(cfg: dict) -> dict:
    m = cfg["model"]
    return {"reg_readout": m["reg_readout"], "cls_readout": m["cls_readout"],
            "single_head_joint": m["single_head_joint"], "loss_weights": dict(cfg["task"]["loss_weights"])}
