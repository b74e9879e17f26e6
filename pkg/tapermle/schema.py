"""
Configuration key schema.

This module provides:
- The documented key schema of a run configuration, as nested sections of Field
- validate_config: rejects unknown keys at every level, fills defaults and
  checks types and ranges before any computation runs

A top-level "$schema" key is accepted and ignored so editors can attach the
bundled schema.json, which mirrors SCHEMA, to config files.
"""

import dataclasses
import math
from typing import Any, Callable, Optional

from tapermle.errors import ConfigError

NUMBER = (int, float)
Check = Callable[[Any], Optional[str]]


@dataclasses.dataclass(frozen=True)
class Field:
    """Leaf key: accepted types, requiredness, default and a range check."""

    kind: type | tuple[type, ...]
    required: bool = False
    default: Any = None
    check: Optional[Check] = None
    choices: Optional[tuple[str, ...]] = None
    nullable: bool = False


def positive(value: float) -> Optional[str]:
    if not (math.isfinite(value) and value > 0):
        return f"must be positive and finite, got {value}"
    return None


def at_least(bound: int) -> Check:
    def check(value: int) -> Optional[str]:
        return None if value >= bound else f"must be >= {bound}, got {value}"

    return check


def in_unit_interval(value: float) -> Optional[str]:
    return None if 0 < value < 1 else f"must lie in (0, 1), got {value}"


def jitter_range(value: float) -> Optional[str]:
    return None if 0 <= value < 0.5 else f"must lie in [0, 0.5), got {value}"


def seed_range(value: int) -> Optional[str]:
    return None if 0 <= value < 2**64 else f"must fit in 64 unsigned bits, got {value}"


def int_list(minimum: int) -> Check:
    def check(values: list) -> Optional[str]:
        if not values:
            return "must not be empty"
        for v in values:
            if isinstance(v, bool) or not isinstance(v, int):
                return f"entries must be integers, got {v!r}"
            if v < minimum:
                return f"entries must be >= {minimum}, got {v}"
        if any(b <= a for a, b in zip(values, values[1:])):
            return "must be strictly increasing"
        return None

    return check


def positive_list(values: list) -> Optional[str]:
    if not values:
        return "must not be empty"
    for v in values:
        if isinstance(v, bool) or not isinstance(v, NUMBER) or positive(v):
            return f"entries must be positive numbers, got {v!r}"
    return None


def param_pairs(values: list) -> Optional[str]:
    if not values:
        return "must not be empty"
    for pair in values:
        if not (isinstance(pair, list) and len(pair) == 2):
            return f"entries must be [theta, sigma2] pairs, got {pair!r}"
        if positive_list(pair):
            return f"pair values must be positive, got {pair!r}"
    return None


COV_FAMILIES = ("exponential", "matern")
TAPER_FAMILIES = ("none", "wendland1", "wendland2", "wendlandone", "wendlandtwo")

MODEL_SECTION = {
    "family": Field(str, required=True, choices=COV_FAMILIES),
    "sigma2": Field(NUMBER, required=True, check=positive),
    "theta": Field(NUMBER, required=True, check=positive),
    "nu": Field(NUMBER, check=positive),
}

SCHEMA: dict[str, Any] = {
    "$schema": Field(str),
    "model": MODEL_SECTION,
    "taper": {
        "family": Field(str, default="none", choices=TAPER_FAMILIES),
        "gamma": Field(NUMBER, check=positive),
    },
    "design": {
        "kind": Field(str, default="regular", choices=("regular", "jittered")),
        "n": Field(int, check=at_least(1)),
        "jitter": Field(NUMBER, default=0.0, check=jitter_range),
    },
    "estimator": {
        "kind": Field(str, default="fixed", choices=("fixed", "joint")),
        "theta1": Field(NUMBER, check=positive),
        "tapered": Field(bool, default=True),
    },
    "box": {
        "a": Field(NUMBER, check=positive),
        "b": Field(NUMBER, check=positive),
        "w": Field(NUMBER, check=positive),
        "v": Field(NUMBER, check=positive),
    },
    "mc": {
        "experiment": Field(
            str, default="microergodic", choices=("microergodic", "gap", "proximity")
        ),
        "replicates": Field(int, default=100, check=at_least(2)),
        "n_list": Field(list, check=int_list(2)),
        "theta1": Field(NUMBER, check=positive),
        "seeds": Field(int, default=20, check=at_least(1)),
        "grid": Field(list, check=param_pairs),
        "derivatives": Field(bool, default=False),
        "acceptance": {
            "var_tol": Field(NUMBER, default=0.2, check=in_unit_interval),
            "mean_tol": Field(NUMBER, default=0.25, check=positive, nullable=True),
            "ks_alpha": Field(NUMBER, default=0.01, check=in_unit_interval),
        },
    },
    "diag": {
        "lambda_max": Field(NUMBER, default=1e4, check=positive),
        "lambda_grid": Field(list, check=positive_list),
        "alt_model": MODEL_SECTION,
        "band_dump": Field(str),
    },
    "bench": {
        "n_list": Field(list, default=[1000, 2000, 5000], check=int_list(2)),
        "runs": Field(int, default=5, check=at_least(5)),
    },
    "seed": Field(int, default=0, check=seed_range),
    "threads": Field(int, check=at_least(1)),
    "output": {
        "data": Field(str),
        "fit": Field(str),
        "summary": Field(str),
        "z_csv": Field(str),
        "report": Field(str),
    },
}

# Sections that are absent unless the config names them.
OPTIONAL_SECTIONS = {"diag.alt_model"}


def _type_ok(field: Field, value: Any) -> bool:
    if isinstance(value, bool) and field.kind is not bool:
        return False
    if field.kind is float or field.kind == NUMBER:
        return isinstance(value, NUMBER) and not isinstance(value, bool)
    return isinstance(value, field.kind)


def _type_name(kind: type | tuple[type, ...]) -> str:
    if kind == NUMBER:
        return "number"
    return getattr(kind, "__name__", str(kind))


def _validate_field(field: Field, value: Any, path: str) -> Any:
    if value is None:
        if field.nullable:
            return None
        raise ConfigError(path, "must not be null")
    if not _type_ok(field, value):
        raise ConfigError(path, f"expected {_type_name(field.kind)}, got {type(value).__name__}")
    if field.choices is not None:
        value = str(value).strip().lower()
        if value not in field.choices:
            raise ConfigError(path, f"must be one of {', '.join(field.choices)}; got '{value}'")
    if field.check is not None:
        reason = field.check(value)
        if reason:
            raise ConfigError(path, reason)
    return value


def _validate_section(schema: dict, doc: Any, prefix: str) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(prefix or "config", "expected a JSON object")
    unknown = sorted(set(doc) - set(schema))
    if unknown:
        name = f"{prefix}.{unknown[0]}" if prefix else unknown[0]
        raise ConfigError(name, "unknown key")

    out: dict[str, Any] = {}
    for key, spec in schema.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(spec, dict):
            if key not in doc and path in OPTIONAL_SECTIONS:
                out[key] = None
                continue
            out[key] = _validate_section(spec, doc.get(key, {}), path)
        elif key in doc:
            out[key] = _validate_field(spec, doc[key], path)
        elif spec.required:
            raise ConfigError(path, "missing required key")
        else:
            out[key] = list(spec.default) if isinstance(spec.default, list) else spec.default
    return out


def validate_config(doc: dict) -> dict:
    """
    Validate a raw config document against SCHEMA.

    Returns:
        dict: The document with every section present and defaults filled.

    Raises:
        ConfigError: Naming the first offending key in dotted form.
    """
    return _validate_section(SCHEMA, doc, "")
