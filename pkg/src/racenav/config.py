"""JSON run configuration.

A config file is a JSON object with optional sections::

    {"sim": {"dt": 0.002, "perception_hz": 30, "camera_uptilt_deg": 15,
             "gains": {...}, "horizon": {...}, "render": {...}},
     "dagger": {"rounds": 6, "epochs": 10, "lr": 0.01, ...}}

Keys mirror the fields of SimConfig, ControllerGains, HorizonParams,
RenderConfig and DaggerConfig. Unknown keys raise ConfigError.
"""

from __future__ import annotations

import json
import math
from dataclasses import fields, replace
from pathlib import Path

from racenav.errors import ConfigError
from racenav.geom import CameraModel
from racenav.local_planner import HorizonParams
from racenav.perception.dagger import DaggerConfig
from racenav.perception.render import RenderConfig
from racenav.sim import SimConfig
from racenav.vehicle import ControllerGains

_SIM_NESTED = {"gains": ControllerGains, "horizon": HorizonParams, "render": RenderConfig}


def _apply(obj, updates: dict, where: str):
    names = {f.name for f in fields(obj)}
    bad = set(updates) - names
    if bad:
        raise ConfigError(f"unknown {where} keys: {sorted(bad)}")
    try:
        return replace(obj, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where} config: {exc}") from exc


def sim_config_from_dict(d: dict) -> SimConfig:
    d = dict(d)
    cfg = SimConfig()
    uptilt = d.pop("camera_uptilt_deg", None)
    for key, cls in _SIM_NESTED.items():
        if key in d:
            d[key] = _apply(cls(), d[key], f"sim.{key}")
    if "camera" in d:
        raise ConfigError("set the camera through sim.camera_uptilt_deg")
    cfg = _apply(cfg, d, "sim")
    if uptilt is not None:
        cfg = replace(cfg, camera=CameraModel.uptilted(math.radians(float(uptilt))))
    if not (cfg.dt > 0 and cfg.perception_hz > 0 and cfg.dt * cfg.perception_hz <= 1.0):
        raise ConfigError("need dt > 0 and perception_hz > 0 with at least one step per tick")
    return cfg


def dagger_config_from_dict(d: dict) -> DaggerConfig:
    d = dict(d)
    if "hidden" in d:
        d["hidden"] = tuple(int(h) for h in d["hidden"])
    return _apply(DaggerConfig(), d, "dagger")


def load_config(path=None):
    """Return ``(SimConfig, DaggerConfig)`` from a JSON file (defaults if None)."""
    if path is None:
        return SimConfig(), DaggerConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict) or set(raw) - {"sim", "dagger"}:
        raise ConfigError("config must be an object with optional 'sim' and 'dagger' sections")
    return sim_config_from_dict(raw.get("sim", {})), dagger_config_from_dict(raw.get("dagger", {}))
