"""Pipeline configuration: a JSON document with every key defaulted.

``default_config()`` is the full schema. Unknown keys are rejected so that
typos fail loudly. Relative input paths resolve against the directory of
the config file.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .mcd import McdConfig
from .econometrics.models import SUITES

_DEFAULTS = {
    "inputs": {
        "returns": "returns.csv",
        "fundamentals": "fundamentals.csv",
    },
    "columns": {
        "returns": {},
        "fundamentals": {},
    },
    "filters": {
        "min_nonzero_frac": 0.10,
        "min_weeks_per_year": 5,
    },
    "market_model": {
        "min_weeks": 8,
    },
    "mcd": {
        "n_starts": 500,
        "max_csteps": 100,
        "exhaustive_threshold": 200000,
        "quantile": 0.975,
        "consistency_correction": True,
    },
    "crash_sigma": 3.2,
    "sentiment": {
        "mode": "fixed_paper",
        "detone": True,
        "winsorize": None,
    },
    "regression": {
        "suites": list(SUITES),
        "robust_se": "hc1",
        "ab_dep_lags": 2,
        "ab_max_instruments": None,
    },
    "output_dir": "out",
    "seed": 0,
    "threads": 1,
}


def default_config():
    return copy.deepcopy(_DEFAULTS)


def _merge(base, override, path=""):
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        # column maps are free-form
        if isinstance(base[key], dict) and base[key] and isinstance(value, dict):
            _merge(base[key], value, where + ".")
        elif isinstance(base[key], dict) and not isinstance(value, dict):
            raise ConfigError(f"config key {where!r} must be an object")
        else:
            base[key] = value


def _validate(cfg):
    f = cfg["filters"]
    if not 0.0 <= f["min_nonzero_frac"] <= 1.0:
        raise ConfigError("filters.min_nonzero_frac must lie in [0, 1]")
    if int(f["min_weeks_per_year"]) < 1:
        raise ConfigError("filters.min_weeks_per_year must be >= 1")
    if cfg["crash_sigma"] <= 0:
        raise ConfigError("crash_sigma must be positive")
    if cfg["sentiment"]["mode"] not in ("fixed_paper", "fitted"):
        raise ConfigError("sentiment.mode must be 'fixed_paper' or 'fitted'")
    w = cfg["sentiment"]["winsorize"]
    if w is not None and (len(w) != 2 or not all(0 <= x < 0.5 for x in w)):
        raise ConfigError("sentiment.winsorize must be null or [lower, upper] tail fractions below 0.5")
    bad = set(cfg["regression"]["suites"]) - set(SUITES)
    if bad:
        raise ConfigError(f"unknown regression suite(s): {', '.join(sorted(bad))}")
    if cfg["regression"]["robust_se"] not in ("none", "hc0", "hc1"):
        raise ConfigError("regression.robust_se must be none, hc0 or hc1")
    if int(cfg["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    seed = cfg["seed"]
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    try:
        mcd_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"mcd: {exc}") from None


def build_config(overrides=None, base_dir=None):
    cfg = default_config()
    if overrides:
        _merge(cfg, overrides)
    if base_dir is not None:
        for key, value in cfg["inputs"].items():
            if value and not Path(value).is_absolute():
                cfg["inputs"][key] = str(Path(base_dir) / value)
    _validate(cfg)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {str(path)!r} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return build_config(data, base_dir=path.parent)


def dump_config(cfg):
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def config_hash(cfg):
    """Hash of everything that can change results (threads and paths excluded)."""
    material = {k: v for k, v in cfg.items() if k not in ("threads", "output_dir", "inputs")}
    blob = json.dumps(material, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def mcd_config(cfg):
    m = cfg["mcd"]
    return McdConfig(
        n_starts=int(m["n_starts"]), max_csteps=int(m["max_csteps"]),
        exhaustive_threshold=int(m["exhaustive_threshold"]), quantile=float(m["quantile"]),
        seed=int(cfg["seed"]), consistency_correction=bool(m["consistency_correction"]),
    )


def check_inputs(cfg):
    """Fail fast when an input file is missing."""
    for key in ("returns", "fundamentals"):
        p = Path(cfg["inputs"][key])
        if not p.is_file():
            raise ConfigError(f"input file not found: {str(p)!r} (inputs.{key})")
