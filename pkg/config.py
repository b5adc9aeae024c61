from dotenv import load_dotenv
load_dotenv()  # Load environment variables from .env file
"""
Configuration settings for the label-proportion learner
"""
import os
from dataclasses import fields, replace
from pathlib import Path

import pytz

# Application settings
APP_NAME = os.getenv("APP_NAME", "llp-dew")

# Seeds and workers
DEFAULT_SEED = int(os.getenv("LLP_DEW_SEED", "0"))
DEFAULT_WORKERS = int(os.getenv("LLP_DEW_WORKERS", "1"))

# Output and logging
OUTPUT_DIR = Path(os.getenv("LLP_DEW_OUTPUT_DIR", "runs"))
RUN_LOG = Path(os.getenv("LLP_DEW_RUN_LOG", "run.log"))
LOG_LEVEL = os.getenv("LLP_DEW_LOG_LEVEL", "INFO").upper()
RUN_TIMEZONE = pytz.timezone(os.getenv("LLP_DEW_TIMEZONE", "UTC"))

# Result file names
METRICS_FILE = "metrics.jsonl"
SUMMARY_FILE = "summary.csv"
CHECKPOINT_FILE = "checkpoint.txt"
BAGS_FILE = "bags.tsv"
ABLATION_TABLE_FILE = "ablation_table.csv"
BETA_GRID_FILE = "beta_grid.csv"

# Training modes and the config switches they set
MODE_CHOICES = ["dew", "bag-only", "instance-only", "unweighted", "dllp", "supervised"]
ABLATION_MODES = ["dew", "bag-only", "instance-only", "unweighted"]
MODE_SWITCHES = {
    "dew": {"ablation_use_bag_weight": True, "ablation_use_instance_weight": True},
    "bag-only": {"ablation_use_bag_weight": True, "ablation_use_instance_weight": False},
    "instance-only": {"ablation_use_bag_weight": False, "ablation_use_instance_weight": True},
    "unweighted": {"ablation_use_bag_weight": False, "ablation_use_instance_weight": False},
    "dllp": {"lam": 0.0},
    "supervised": {"fully_supervised": True, "lam": 1.0},
}

# Alternate spellings accepted in config files and --set
CONFIG_KEY_ALIASES = {
    "lambda": "lam",
    "M": "bag_size",
    "K": "total_steps",
    "eta0": "lr0",
    "use_bag_weight": "ablation_use_bag_weight",
    "use_instance_weight": "ablation_use_instance_weight",
}

# Experiment grids
DEFAULT_ABLATION_BAG_SIZES = [16, 32, 64, 128, 256]
DEFAULT_SEEDS = [0, 1, 2, 3, 4]
DEFAULT_BETA_GRID = [0.5, 1.0, 5.0]
DEFAULT_ORACLE_CASES = int(os.getenv("LLP_DEW_ORACLE_CASES", "10000"))

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _train_config_cls():
    from core_types import TrainConfig
    return TrainConfig


def _config_error(problems):
    from core_types import ConfigError
    return ConfigError(problems)


def normalize_key(key):
    """Map alternate key spellings to TrainConfig field names."""
    k = str(key).strip()
    return CONFIG_KEY_ALIASES.get(k, k)


def _convert(name, raw, default):
    """Convert a raw string to the type of the field's default value."""
    raw = raw.strip()
    if isinstance(default, bool):
        v = raw.lower()
        if v in _TRUE:
            return True
        if v in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(v) for v in raw.split(",") if v.strip())
    return raw


def parse_config_text(text, source="<config>"):
    """Parse flat `key = value` lines into {field: raw string}."""
    names = set(_train_config_cls().field_names())
    values, problems = {}, {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems[f"line {lineno}"] = f"expected key=value in {source}"
            continue
        key, raw = line.split("=", 1)
        name = normalize_key(key)
        if name not in names:
            problems[key.strip()] = f"unknown key (line {lineno})"
        elif name in values:
            problems[name] = f"duplicate key (line {lineno})"
        else:
            values[name] = raw
    if problems:
        raise _config_error(problems)
    return values


def apply_overrides(config, raw_values):
    """Return a copy of `config` with raw string values applied and validated."""
    defaults = {f.name: getattr(config, f.name) for f in fields(config)}
    typed, problems = {}, {}
    for key, raw in raw_values.items():
        name = normalize_key(key)
        if name not in defaults:
            problems[key] = "unknown key"
            continue
        try:
            typed[name] = _convert(name, str(raw), defaults[name])
        except ValueError as e:
            problems[name] = str(e)
    if problems:
        raise _config_error(problems)
    return replace(config, **typed).check()


def parse_set_args(pairs):
    """Turn repeated `--set key=value` arguments into a dict."""
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise _config_error({item: "expected key=value"})
        k, v = item.split("=", 1)
        out[normalize_key(k)] = v
    return out


def load_train_config(path=None, overrides=None):
    """Load a TrainConfig from an optional file plus `--set` overrides."""
    TrainConfig = _train_config_cls()
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        raw.update(parse_config_text(path.read_text(encoding="utf-8"), source=str(path)))
    raw.update(overrides or {})
    return apply_overrides(TrainConfig(), raw)


def with_mode(config, mode):
    """Apply a named training mode on top of a config."""
    if mode not in MODE_SWITCHES:
        raise _config_error({"mode": f"must be one of {MODE_CHOICES}"})
    return replace(config, **MODE_SWITCHES[mode]).check()


def mode_of(config):
    """Name the mode a config corresponds to."""
    if config.fully_supervised:
        return "supervised"
    if config.lam == 0:
        return "dllp"
    for mode in ABLATION_MODES:
        sw = MODE_SWITCHES[mode]
        if (config.ablation_use_bag_weight == sw["ablation_use_bag_weight"]
                and config.ablation_use_instance_weight == sw["ablation_use_instance_weight"]):
            return mode
    return "dew"


def render_config(config):
    """Render a config as `key = value` lines (inverse of parse_config_text)."""
    lines = []
    for f in fields(config):
        v = getattr(config, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
