"""Flat key = value experiment configs, overridable from the command line.

The file format is one ``key = value`` pair per line, ``#`` comments, lists
comma-separated, fractions like ``1/3`` allowed where floats are.  Every key
maps one-to-one onto an ExperimentConfig field.
"""

from __future__ import annotations

from fractions import Fraction

from .harness import ExperimentConfig

_LIST_FLOAT_KEYS = {"kappa_grid", "sigma_grid", "alpha_corrupt_grid", "partition"}
_LIST_INT_KEYS = {"n_grid"}
_LIST_STR_KEYS = {"solvers"}
_INT_KEYS = {"d", "noise_k", "hard_sign", "repetitions", "seed", "workers"}
_FLOAT_KEYS = {
    "corruption_value",
    "noise_kappa2",
    "epsilon",
    "alpha",
    "K",
    "a",
    "C1",
    "C2",
    "clip_scale",
    "zeta",
    "C_step",
    "rho1",
    "rho2",
    "rho3",
    "rho4",
}
_BOOL_KEYS = {"project", "figures"}
_OPTIONAL_FLOAT_KEYS = {"delta"}   # "auto" -> None
_OPTIONAL_INT_KEYS = {"T"}         # "auto" -> None
_STR_KEYS = {
    "generator",
    "corruption",
    "noise",
    "known_trace",
    "sgd_theta",
    "ssp_row_bound",
    "ssp_label_bound",
    "output_path",
}

_ALL_KEYS = (
    _LIST_FLOAT_KEYS
    | _LIST_INT_KEYS
    | _LIST_STR_KEYS
    | _INT_KEYS
    | _FLOAT_KEYS
    | _BOOL_KEYS
    | _OPTIONAL_FLOAT_KEYS
    | _OPTIONAL_INT_KEYS
    | _STR_KEYS
)


class ConfigError(ValueError):
    """Malformed config file or override."""


def _parse_float(text: str) -> float:
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _coerce(key: str, value: str):
    value = value.strip()
    if key in _LIST_FLOAT_KEYS:
        return tuple(_parse_float(v) for v in value.split(",") if v.strip())
    if key in _LIST_INT_KEYS:
        return tuple(int(float(v)) for v in value.split(",") if v.strip())
    if key in _LIST_STR_KEYS:
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if key in _INT_KEYS:
        return int(float(value))
    if key in _FLOAT_KEYS:
        return _parse_float(value)
    if key in _BOOL_KEYS:
        return _parse_bool(value)
    if key in _OPTIONAL_FLOAT_KEYS:
        return None if value.lower() in ("auto", "none") else _parse_float(value)
    if key in _OPTIONAL_INT_KEYS:
        return None if value.lower() in ("auto", "none") else int(float(value))
    if key in _STR_KEYS:
        return None if value.lower() == "none" and key == "known_trace" else value
    raise ConfigError(f"unknown config key {key!r}")


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def load_config(path, overrides=()) -> ExperimentConfig:
    """Parse the config file, apply key=value overrides, build the config."""
    with open(path, "r", encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown override key {key!r}")
        values[key] = _coerce(key, value)
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
