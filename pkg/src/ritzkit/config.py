"""Run configuration: defaults, config files, flag overrides and the resolved echo.

Config files are TOML (or JSON, e.g. a previous run's ``config.resolved``).
Top-level keys are global; each subcommand reads its own table::

    seed = 7
    out = "runs/sine"

    [solve]
    case = "poisson_1d_sine"
    widths = [8, 16, 32]
    lambdas = [10.0, 100.0, 1000.0]
    deltas = [0.01, 0.001, 0.0001]

    [optimizer]
    lr = 0.001

Unknown keys and values of the wrong type are rejected.
"""

from __future__ import annotations

import copy
import json
import os
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
SEED_ENV = "RITZKIT_SEED"


class ConfigError(ValueError):
    pass


_NUM = (int, float)

# key -> (default, accepted types); a default of None means "unset"
SCHEMA: dict = {
    "seed": (0, int),
    "out": ("out", str),
    "jobs": (1, int),
    "record_time": (False, bool),
    "solve": {
        "case": ("poisson_1d_sine", (str, list)),
        "rungs": (None, int),
        "widths": (None, list),
        "lambdas": (None, list),
        "deltas": (None, list),
        "steps": (5000, int),
        "N": (1024, int),
        "M": (256, int),
        "depth": (None, int),
        "window": (200, int),
        "patience": (3, int),
        "kink_width": (0.01, _NUM),
        "eval_N": (65536, int),
        "eval_M": (4096, int),
        "resolution": (256, int),
    },
    "optimizer": {
        "name": ("adam", str),
        "lr": (1e-3, _NUM),
        "beta1": (0.9, _NUM),
        "beta2": (0.999, _NUM),
        "eps": (1e-8, _NUM),
        "final_lr_ratio": (1.0, _NUM),
    },
    "gradcheck": {
        "nets": (20, int),
        "dims": ([1, 2, 3], list),
        "depths": ([2, 3], list),
        "max_width": (32, int),
        "tol": (1e-5, _NUM),
        "inject_bug": (False, bool),
    },
    "mc_check": {
        "case": ("hat_energy", str),
        "n": ([1024, 4096, 16384], list),
        "seeds": (50, int),
    },
    "pwl": {
        "fixtures": (["hat", "sine17", "max3", "min3"], list),
        "points": (10000, int),
    },
    "interp": {
        "deltas": ([0.4, 0.2, 0.1, 0.05], list),
        "p": ([2.0], list),
        "dim": ([1], list),
    },
}


def defaults(schema: dict = SCHEMA) -> dict:
    out = {}
    for key, spec in schema.items():
        out[key] = defaults(spec) if isinstance(spec, dict) else copy.deepcopy(spec[0])
    return out


def _check_type(path: str, value, types):
    if value is None:
        return
    # bool is an int subclass; only accept it where asked for
    if isinstance(value, bool) and types is not bool:
        raise ConfigError(f"{path}: expected {types}, got a boolean")
    if not isinstance(value, types):
        raise ConfigError(f"{path}: expected {types}, got {type(value).__name__}")


def merge(base: dict, update: dict, schema: dict = SCHEMA, prefix: str = "") -> dict:
    """Overlay ``update`` on ``base`` after validating it against ``schema``."""
    out = copy.deepcopy(base)
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown key {path!r}")
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected a table")
            out[key] = merge(out[key], value, spec, path + ".")
        else:
            _check_type(path, value, spec[1])
            out[key] = float(value) if spec[1] is _NUM else value
    return out


def read_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".json", ".resolved") or text.lstrip().startswith("{"):
        doc = json.loads(text)
    else:
        doc = tomllib.loads(text)
    doc.pop("schema_version", None)
    return doc


def resolve(config_path=None, overrides: dict | None = None, env=None) -> dict:
    """Defaults, then the environment seed, then the config file, then flag overrides."""
    env = os.environ if env is None else env
    cfg = defaults()
    if env.get(SEED_ENV):
        try:
            cfg["seed"] = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from exc
    if config_path is not None:
        cfg = merge(cfg, read_file(config_path))
    if overrides:
        cfg = merge(cfg, overrides)
    if cfg["seed"] < 0:
        raise ConfigError("seed must be nonnegative")
    if cfg["jobs"] < 1:
        raise ConfigError("jobs must be at least 1")
    return cfg


def dumps(cfg: dict) -> str:
    return json.dumps({"schema_version": SCHEMA_VERSION, **cfg}, indent=2, sort_keys=True) + "\n"


def write_resolved(cfg: dict, out_dir) -> Path:
    path = Path(out_dir) / "config.resolved"
    path.write_text(dumps(cfg))
    return path
