"""Run configuration as flat dotted keys with one precedence order:
package defaults, then a JSON config file, then command-line flags.
"""

import json
import os

from .errors import ContractError, FormatError

DEFAULTS = {
    "data.path": "",
    "synth.height": 32,
    "synth.width": 32,
    "synth.bands": 16,
    "synth.n_y": 4,
    "synth.noise_sigma": 0.05,
    "synth.seed": 7,
    "synth.out": "scene.hsc",
    "split.m_l": 100,
    "split.m_u": 0,
    "split.seed": 7,
    "model.k": 24,
    "model.arch": "3+3",
    "model.noise_dim": 200,
    "model.w": 0,  # 0 = derive from arch: 2*(spatial layers + 1) + 1
    "train.lr": 0.0007,
    "train.batch": 50,
    "train.epochs": 60,
    "train.noise_samples": 1,
    "crf.c": 3.0,
    "crf.theta_alpha": 5.0,
    "crf.theta_beta": 0.5,
    "crf.iterations": 10,
    "out.dir": "run",
}

SEED_ENV = "HSIGAN_SEED"


def _coerce(key, value):
    """Cast a string override to the type of the key's default."""
    default = DEFAULTS[key]
    if isinstance(value, str) and not isinstance(default, str):
        kind = type(default)
        try:
            return kind(value)
        except ValueError:
            raise ContractError(f"config key {key}: cannot parse {value!r} as "
                                f"{kind.__name__}")
    if isinstance(default, int) and isinstance(value, float):
        if value != int(value):
            raise ContractError(f"config key {key}: {value} is not an integer")
        return int(value)
    if isinstance(default, float) and isinstance(value, int):
        return float(value)
    if not isinstance(value, type(default)):
        raise ContractError(f"config key {key}: expected {type(default).__name__}, "
                            f"got {type(value).__name__}")
    return value


class RunConfig:
    """Resolved dotted-key settings for one command invocation."""

    def __init__(self, values):
        self.values = dict(values)

    def __getitem__(self, key):
        return self.values[key]

    def to_json(self):
        return json.dumps(self.values, sort_keys=True, indent=2) + "\n"


def load_config(path=None, overrides=None, env=None):
    """Merge defaults, an optional JSON file, flag overrides, and the
    seed environment variable into a RunConfig."""
    values = dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                blob = json.load(fh)
        except OSError as exc:
            raise FormatError(f"cannot read config file {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise FormatError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(blob, dict):
            raise FormatError(f"config file {path} must hold a JSON object")
        for key, value in blob.items():
            if key not in DEFAULTS:
                raise ContractError(f"unknown config key {key!r} in {path}")
            values[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ContractError(f"unknown config flag --{key}")
        values[key] = _coerce(key, value)
    env = os.environ if env is None else env
    if SEED_ENV in env:
        try:
            values["split.seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ContractError(f"{SEED_ENV} must be an integer, got "
                                f"{env[SEED_ENV]!r}")
    return RunConfig(values)


def parse_arch(text):
    """Parse a discriminator layout like "3+3" into (spectral, spatial)."""
    parts = text.split("+")
    if len(parts) != 2:
        raise ContractError(f"arch must look like '3+3', got {text!r}")
    try:
        ds, dp = int(parts[0]), int(parts[1])
    except ValueError:
        raise ContractError(f"arch must look like '3+3', got {text!r}")
    if ds < 1 or dp < 1:
        raise ContractError(f"arch needs at least one layer per stage, got {text!r}")
    return ds, dp


def window_for(cfg):
    """Cuboid width: explicit model.w, or the width the arch consumes."""
    w = cfg["model.w"]
    if w:
        return w
    _, dp = parse_arch(cfg["model.arch"])
    return 2 * (dp + 1) + 1

