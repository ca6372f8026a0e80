"""Scenario configuration documents.

A scenario is a nested JSON mapping. Anything missing from a user document
falls back to :data:`DEFAULT_CONFIG`, which mirrors the macro/small-cell
setup used throughout the experiments (1 MBS, 15 SBS, 15 users on a
250 m square).
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Mapping

DEFAULT_CONFIG: dict[str, Any] = {
    "area_m": 250.0,
    "counts": {"gw": 1, "mbs": 1, "sbs": 15, "users": 15},
    "power_dbm": {"mbs": 49.0, "sbs": 20.0},
    "noise_dbm_hz": -174.0,
    "bandwidth_hz": 20e6,
    "backhaul_mbps": {"mbs_gw": 100.0, "sbs_mbs": 50.0, "origin_gw": 10_000.0},
    "shadowing_db": 8.0,
    "attach_m": 3,
    "k_max": 3,
    "seed": 0,
    "library": {"files": 1000, "zipf": 0.56, "duration_s": 600.0},
    "ladder": [
        {"q": 1, "v_mbps": 1.0, "score": 1.5},
        {"q": 2, "v_mbps": 2.5, "score": 2.4},
        {"q": 3, "v_mbps": 5.0, "score": 3.2},
        {"q": 4, "v_mbps": 8.0, "score": 3.8},
        {"q": 5, "v_mbps": 16.0, "score": 4.3},
        {"q": 6, "v_mbps": 35.0, "score": 4.6},
    ],
    # ladder level treated as 1080p when reporting the HD-plus share
    "hd_level": 5,
    "cache_files": {"gw": 0, "mbs": 200, "sbs": 100},
    "compute_mbps": {"gw": 0.0, "mbs": 150.0, "sbs": 50.0, "task_cost": 25.0},
}


class ConfigError(ValueError):
    """Raised for malformed or out-of-range scenario documents."""


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(source: str | Path | Mapping | None = None, **overrides) -> dict:
    """Return a validated scenario config.

    ``source`` may be a path to a JSON file, an already-parsed mapping, or
    ``None`` for the defaults. Keyword overrides are merged last.
    """
    if source is None:
        doc: Mapping = {}
    elif isinstance(source, Mapping):
        doc = source
    else:
        with open(source) as fh:
            doc = json.load(fh)
    cfg = _merge(DEFAULT_CONFIG, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: Mapping) -> None:
    counts = cfg["counts"]
    if counts["gw"] != 1:
        raise ConfigError("exactly one gateway is supported")
    if counts["mbs"] < 0 or counts["sbs"] < 0:
        raise ConfigError("base station counts must be non-negative")
    if counts["mbs"] + counts["sbs"] < 1:
        raise ConfigError("at least one base station is required")
    if counts["users"] < 1:
        raise ConfigError("at least one user is required")
    if cfg["area_m"] <= 0:
        raise ConfigError("area_m must be positive")
    if cfg["bandwidth_hz"] <= 0:
        raise ConfigError("bandwidth_hz must be positive")
    for key, cap in cfg["backhaul_mbps"].items():
        if cap <= 0:
            raise ConfigError(f"backhaul capacity {key!r} must be positive")
    if cfg["attach_m"] < 1 or cfg["k_max"] < 1:
        raise ConfigError("attach_m and k_max must be >= 1")
    if cfg["shadowing_db"] < 0:
        raise ConfigError("shadowing_db must be non-negative")

    lib = cfg["library"]
    if lib["files"] < 1 or lib["zipf"] < 0:
        raise ConfigError("library needs files >= 1 and zipf >= 0")

    ladder = cfg["ladder"]
    if not ladder:
        raise ConfigError("quality ladder is empty")
    qs = [lvl["q"] for lvl in ladder]
    if qs != list(range(1, len(ladder) + 1)):
        raise ConfigError("ladder levels must be numbered 1..Q in order")
    rates = [lvl["v_mbps"] for lvl in ladder]
    scores = [lvl["score"] for lvl in ladder]
    if any(b <= a for a, b in zip(rates, rates[1:])) or rates[0] <= 0:
        raise ConfigError("ladder rates must be positive and strictly increasing")
    if any(b <= a for a, b in zip(scores, scores[1:])):
        raise ConfigError("ladder scores must be strictly increasing")
    if not 1 <= cfg["hd_level"] <= len(ladder):
        raise ConfigError("hd_level outside the ladder")

    for key, n in cfg["cache_files"].items():
        if n < 0:
            raise ConfigError(f"cache size {key!r} must be non-negative")
    comp = cfg["compute_mbps"]
    if comp["task_cost"] <= 0:
        raise ConfigError("task_cost must be positive")
    for key in ("gw", "mbs", "sbs"):
        if comp.get(key, 0.0) < 0:
            raise ConfigError(f"compute capacity {key!r} must be non-negative")
