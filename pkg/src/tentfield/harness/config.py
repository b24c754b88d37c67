"""Experiment configuration: TOML files with a JSON mirror.

Every key has a default, so an empty file is a valid configuration.
Validation failures raise :class:`ConfigError` carrying a stable code and
the offending field; the CLI maps them to exit status 2.
"""
from __future__ import annotations

import copy
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# error codes, one per validation rule
E_PARSE = "E_PARSE"
E_UNKNOWN_KEY = "E_UNKNOWN_KEY"
E_TYPE = "E_TYPE"
E_EXPONENT_RANGE = "E_EXPONENT_RANGE"
E_EXPONENT_SUM = "E_EXPONENT_SUM"
E_SMOOTHNESS = "E_SMOOTHNESS"
E_THETA0 = "E_THETA0"
E_POSITIVE = "E_POSITIVE"
E_CURVE = "E_CURVE"
E_MULTIPLIER = "E_MULTIPLIER"

EXPONENT_TOL = 1e-12


class ConfigError(ValueError):
    def __init__(self, code: str, field_name: str, message: str):
        super().__init__(f"[{code}] {field_name}: {message}")
        self.code = code
        self.field = field_name


DEFAULTS: dict = {
    "seed": 0,
    "theta0": 0.1,
    "s": 1.25,
    "exponents": [3.0, 3.0, 3.0],
    "truncation": 0.0,
    "curve": {"path": "", "cone_index": 3, "half_length": 100.0, "samples": 9},
    "multiplier": {"name": "lip_difference", "params": {}},
    "alpha": {"n": 128, "h": 1.0, "x0": 0.0},
    "vgrid": {"n": 64, "width": 5.0},
    "window": {"n": 128, "kernel_nodes": 32},
    "lattice": {"levels": 6, "n_gamma": 9},
    "geometry": {"samples": 10000, "apollonius_points": 10000, "curves": 8, "tol": 1e-9},
    "hormander": {"betas": 100, "levels": 3, "directions": 16, "multipliers": 20,
                  "kernel_betas": 50},
    "form": {"bump_eps": 0.5, "refine": True, "tents": 100, "tent_k_max": 6},
    "selection": {"fields": 100, "lambdas": [0.8, 0.4, 0.2, 0.1]},
    "weak_type": {"ratios": [1, 4, 16, 64], "a2": 1.0, "a3_fractions": [1.0, 0.25],
                  "h": 0.0625},
}

KNOWN_MULTIPLIERS = ("one", "zero", "bht_sign", "lip_difference", "point_mikhlin", "random")


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(E_UNKNOWN_KEY, where, "unknown key")
        if isinstance(base[key], dict) and key != "params":
            if not isinstance(val, dict):
                raise ConfigError(E_TYPE, where, "expected a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _number(data, key, where, kind=float):
    val = data[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(E_TYPE, where, f"expected a number, got {type(val).__name__}")
    if kind is int and float(val) != int(val):
        raise ConfigError(E_TYPE, where, "expected an integer")
    return kind(val)


@dataclass
class ExperimentConfig:
    """Validated configuration; ``data`` holds the merged tables."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    source: str = ""

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def theta0(self) -> float:
        return float(self.data["theta0"])

    @property
    def s(self) -> float:
        return float(self.data["s"])

    @property
    def exponents(self) -> tuple:
        return tuple(float(p) for p in self.data["exponents"])

    def with_overrides(self, **top) -> "ExperimentConfig":
        return from_dict(_merge(self.data, top), self.source)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)


def validate(data: dict) -> None:
    p = data["exponents"]
    if not isinstance(p, list) or len(p) != 3:
        raise ConfigError(E_TYPE, "exponents", "expected three exponents")
    ps = [_number({"p": v}, "p", f"exponents[{i}]") for i, v in enumerate(p)]
    for i, v in enumerate(ps):
        if not (2.0 < v < math.inf):
            raise ConfigError(E_EXPONENT_RANGE, f"exponents[{i}]", f"need 2 < p < inf, got {v}")
    total = sum(1.0 / v for v in ps)
    if abs(total - 1.0) > EXPONENT_TOL:
        raise ConfigError(E_EXPONENT_SUM, "exponents", f"sum of 1/p is {total!r}, not 1")
    s = _number(data, "s", "s")
    if not s > 1.0:
        raise ConfigError(E_SMOOTHNESS, "s", f"need s > 1, got {s}")
    th = _number(data, "theta0", "theta0")
    if not (0.0 <= th < math.pi / 6):
        raise ConfigError(E_THETA0, "theta0", f"need 0 <= theta0 < pi/6, got {th}")
    _number(data, "seed", "seed", int)
    if _number(data, "truncation", "truncation") < 0:
        raise ConfigError(E_POSITIVE, "truncation", "must be >= 0 (0 means unbounded)")
    for sect, keys in (("alpha", ("n", "h")), ("vgrid", ("n", "width")),
                       ("window", ("n", "kernel_nodes")), ("lattice", ("levels", "n_gamma")),
                       ("form", ("bump_eps",)), ("weak_type", ("a2", "h"))):
        for key in keys:
            kind = int if key in ("n", "kernel_nodes", "levels", "n_gamma") else float
            if _number(data[sect], key, f"{sect}.{key}", kind) <= 0:
                raise ConfigError(E_POSITIVE, f"{sect}.{key}", "must be positive")
    for key in ("samples", "apollonius_points", "curves"):
        if _number(data["geometry"], key, f"geometry.{key}", int) < 0:
            raise ConfigError(E_POSITIVE, f"geometry.{key}", "must be >= 0")
    curve = data["curve"]
    if _number(curve, "cone_index", "curve.cone_index", int) not in (1, 2, 3):
        raise ConfigError(E_CURVE, "curve.cone_index", "must be 1, 2 or 3")
    if not isinstance(curve["path"], str):
        raise ConfigError(E_TYPE, "curve.path", "expected a string")
    if curve["path"] and not Path(curve["path"]).is_file():
        raise ConfigError(E_CURVE, "curve.path", f"no such file: {curve['path']}")
    mult = data["multiplier"]
    if mult["name"] not in KNOWN_MULTIPLIERS:
        raise ConfigError(E_MULTIPLIER, "multiplier.name",
                          f"unknown multiplier {mult['name']!r}; expected one of {KNOWN_MULTIPLIERS}")
    if not isinstance(mult["params"], dict):
        raise ConfigError(E_TYPE, "multiplier.params", "expected a table")
    lams = data["selection"]["lambdas"]
    if not lams or any(_number({"l": v}, "l", "selection.lambdas") <= 0 for v in lams):
        raise ConfigError(E_POSITIVE, "selection.lambdas", "need positive values")


def from_dict(raw: dict, source: str = "") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(E_PARSE, "<root>", "configuration must be a table")
    data = _merge(DEFAULTS, raw)
    validate(data)
    return ExperimentConfig(data, source)


def parse_config(path) -> ExperimentConfig:
    """Read a ``.toml`` or ``.json`` configuration and validate it."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(E_PARSE, str(path), f"cannot read: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(E_PARSE, str(path), str(exc)) from exc
    return from_dict(raw, str(path))


def default_config() -> ExperimentConfig:
    return from_dict({})
