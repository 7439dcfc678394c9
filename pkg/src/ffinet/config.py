"""Flat dotted-key configuration.

A config is a plain ``dict`` from dotted keys (``loss.gamma``) to values.
The estimator exposes the same keys as keyword parameters with dots
replaced by underscores (``loss_gamma``).
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

DEFAULTS: dict[str, Any] = {
    "model.hidden_dim": 128,
    "model.K": 6,
    "model.obs_len": 20,
    "model.pred_len": 30,
    "model.current_frame": "anchor",
    "model.kernel_sizes": (3, 5, 7),
    "model.conv_depth": 2,
    "model.gcn_layers": 2,
    "model.dilations": (1, 2, 4),
    "model.dtype": "float32",
    "graph.a2l": 7.0,
    "graph.l2a": 6.0,
    "graph.a2a": 100.0,
    "modules.current_fusion": True,
    "modules.future_feedback": True,
    "modules.global_fusion": True,
    "feedback.back": True,
    "feedback.future": True,
    "feedback.forward": True,
    "loss.lambda": 0.5,
    "loss.beta": 2.0,
    "loss.gamma": 0.5,
    "loss.margin": 0.2,
    "loss.cls_distance_gate": 2.0,
    "loss.smooth_l1_delta": 1.0,
    "loss.min_valid_fraction": 0.8,
    "train.epochs": 40,
    "train.batch_size": 64,
    "train.lr_initial": 1e-3,
    "train.lr_after": 1e-4,
    "train.lr_drop_epoch": 32,
    "train.seed": 0,
    "train.grad_clip": 0.0,
    "train.weight_decay": 0.0,
    "metrics.miss_threshold": 2.0,
    "metrics.collision_radius": 2.0,
}

# gamma=0.2 is the best row of the initial-regression-weight sweep
PRESETS: dict[str, dict[str, Any]] = {
    "default": {},
    "gamma_best": {"loss.gamma": 0.2},
}


class ConfigError(ValueError):
    pass


def param_name(key: str) -> str:
    return key.replace(".", "_").lower()


PARAM_TO_KEY = {param_name(k): k for k in DEFAULTS}


def default_config(preset: str = "default") -> dict[str, Any]:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    cfg = dict(DEFAULTS)
    cfg.update(PRESETS[preset])
    return cfg


def coerce(key: str, value: Any) -> Any:
    """Convert ``value`` (often a string) to the type of the default."""
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    default = DEFAULTS[key]
    if isinstance(value, str):
        text = value.strip()
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        if isinstance(default, tuple):
            try:
                return tuple(int(x) for x in text.strip("()[] ").split(",") if x.strip())
            except ValueError as exc:
                raise ConfigError(f"{key}: expected integers, got {value!r}") from exc
        try:
            if isinstance(default, int):
                return int(text)
            if isinstance(default, float):
                return float(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r}") from exc
        return text
    if isinstance(default, tuple):
        return tuple(int(v) for v in value)
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, int):
        return int(value)
    return value


def apply_overrides(cfg: dict[str, Any], overrides) -> dict[str, Any]:
    """Return a copy of ``cfg`` with ``overrides`` (mapping or ``key=value`` strings) applied."""
    out = dict(cfg)
    if overrides is None:
        return out
    if not isinstance(overrides, dict):
        pairs = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override must be key=value, got {item!r}")
            k, v = item.split("=", 1)
            pairs[k.strip()] = v
        overrides = pairs
    for key, value in overrides.items():
        out[key] = coerce(key, value)
    validate(out)
    return out


def validate(cfg: dict[str, Any]) -> None:
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    if cfg["model.current_frame"] not in ("anchor", "absolute"):
        raise ConfigError("model.current_frame must be 'anchor' or 'absolute'")
    if cfg["model.dtype"] not in ("float32", "float64"):
        raise ConfigError("model.dtype must be float32 or float64")
    if not 0 < cfg["train.lr_drop_epoch"] <= cfg["train.epochs"]:
        raise ConfigError("train.lr_drop_epoch must lie in (0, train.epochs]")
    if cfg["model.K"] < 1 or cfg["model.hidden_dim"] < 1:
        raise ConfigError("model.K and model.hidden_dim must be positive")


def parse_config_text(text: str) -> dict[str, Any]:
    """``key = value`` lines; ``#`` comments; ``[section]`` headers prefix keys."""
    values, section = {}, ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        key = f"{section}.{k}" if section and "." not in k else k
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = v
    return values


def load_config(path=None, overrides=None, preset: str = "default") -> dict[str, Any]:
    cfg = default_config(preset)
    if path is not None:
        cfg = apply_overrides(cfg, parse_config_text(Path(path).read_text()))
    return apply_overrides(cfg, overrides)


def dump_config(cfg: dict[str, Any]) -> str:
    def fmt(v):
        if isinstance(v, tuple):
            return ",".join(str(x) for x in v)
        if isinstance(v, bool):
            return "true" if v else "false"
        return str(v)
    return "".join(f"{k} = {fmt(v)}\n" for k, v in sorted(cfg.items()))


def to_jsonable(cfg: dict[str, Any]) -> dict[str, Any]:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()}


def from_jsonable(d: dict[str, Any]) -> dict[str, Any]:
    cfg = default_config()
    for k, v in d.items():
        cfg[k] = coerce(k, v)
    validate(cfg)
    return cfg
