"""Run configuration: JSON with a versioned schema and strict key checking."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .field import FourierField, TorusMap
from .lattice import FrequencyVector, sigma_rule_from_dict

SCHEMA = "torus-renorm/1"

DEFAULTS = {
    "schema": SCHEMA,
    "omega": {"preset": "golden"},
    "K": 16,
    "rho": 10.0,
    "nu": 0.05,
    "delta": 0.05,
    "auto_raise_rho": True,
    "sigma_rule": {"name": "gap", "beta": 0.0, "xi": 0.5, "recursive": False},
    "perturbation": {"kind": "none"},
    "depth": {"n_max": 6, "t_max": None},
    "enforce": True,
    "tolerances": {
        "newton": 1e-12,
        "conjugacy": 1e-6,
        "conjugacy_grid": 256,
        "rotation_T": 1e4,
        "rotation_h": 1e-2,
        "rotation_samples": 8,
        "rotation_error_samples": None,
        "rotation": 1e-4,
    },
    "outputs": {"cf": "expansion.cf.json", "trace": "trace.json", "summary": None,
                "chain": "chain.json", "rotation": "rotation.json"},
    "seed": 0,
}

PERTURBATION_KEYS = {
    "none": set(),
    "additive": {"k", "amplitude", "axis", "shape"},
    "conjugated": {"k", "amplitude", "axis", "shape"},
    "modes": {"modes"},
    "conjugated-modes": {"modes"},
}


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key not in ("omega", "perturbation", "sigma_rule"):
            if not isinstance(val, dict):
                raise ConfigError(f"{where} must be an object")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _positive(name, v, allow_zero=False):
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ConfigError(f"{name} must be a finite number")
    if v < 0 or (v == 0 and not allow_zero):
        raise ConfigError(f"{name} must be positive")
    return float(v)


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated configuration; ``data`` holds the merged JSON object."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if raw.get("schema", SCHEMA) != SCHEMA:
            raise ConfigError(f"unsupported schema {raw.get('schema')!r}; expected {SCHEMA!r}")
        data = _merge(DEFAULTS, raw)
        cfg = cls(data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(raw)

    def __getitem__(self, key):
        return self.data[key]

    def validate(self):
        d = self.data
        om = d["omega"]
        if not isinstance(om, dict) or set(om) - {"preset", "alpha", "k_check"} or (("preset" in om) == ("alpha" in om)):
            raise ConfigError("omega needs exactly one of 'preset' or 'alpha' (plus optional 'k_check')")
        if not isinstance(d["K"], int) or isinstance(d["K"], bool) or not 1 <= d["K"] <= 256:
            raise ConfigError("K must be an integer in [1, 256]")
        for key in ("rho", "nu", "delta"):
            _positive(key, d[key])
        for key in ("auto_raise_rho", "enforce"):
            if not isinstance(d[key], bool):
                raise ConfigError(f"{key} must be a boolean")
        try:
            sigma_rule_from_dict(d["sigma_rule"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad sigma_rule: {exc}") from exc
        n_max = d["depth"]["n_max"]
        if not isinstance(n_max, int) or isinstance(n_max, bool) or not 0 <= n_max <= 64:
            raise ConfigError("depth.n_max must be an integer in [0, 64]")
        if d["depth"]["t_max"] is not None:
            _positive("depth.t_max", d["depth"]["t_max"], allow_zero=True)
        tol = d["tolerances"]
        for key in ("newton", "conjugacy", "rotation_T", "rotation_h", "rotation"):
            _positive(f"tolerances.{key}", tol[key])
        for key in ("conjugacy_grid", "rotation_samples"):
            if not isinstance(tol[key], int) or tol[key] < 1:
                raise ConfigError(f"tolerances.{key} must be a positive integer")
        if tol["rotation_error_samples"] is not None and (
                not isinstance(tol["rotation_error_samples"], int) or tol["rotation_error_samples"] < 0):
            raise ConfigError("tolerances.rotation_error_samples must be null or a nonnegative integer")
        p = d["perturbation"]
        if not isinstance(p, dict) or p.get("kind") not in PERTURBATION_KEYS:
            raise ConfigError(f"perturbation.kind must be one of {sorted(PERTURBATION_KEYS)}")
        extra = set(p) - {"kind"} - PERTURBATION_KEYS[p["kind"]]
        if extra:
            raise ConfigError(f"unknown perturbation keys {sorted(extra)}")
        if not isinstance(d["seed"], int):
            raise ConfigError("seed must be an integer")
        for key, val in d["outputs"].items():
            if val is not None and not isinstance(val, str):
                raise ConfigError(f"outputs.{key} must be a path string or null")

    # ------------------------------------------------------------------ builders

    def frequency(self) -> FrequencyVector:
        om = self.data["omega"]
        k_check = int(om.get("k_check", 64))
        if "preset" in om:
            return FrequencyVector.preset(om["preset"], k_check)
        alpha = om["alpha"]
        alpha = alpha if isinstance(alpha, list) else [alpha]
        from fractions import Fraction

        try:
            vals = [Fraction(a) if isinstance(a, str) else a for a in alpha]
        except ValueError as exc:
            raise ConfigError(f"bad alpha: {exc}") from exc
        return FrequencyVector.from_alpha(vals, k_check)

    def sigma_rule(self):
        return sigma_rule_from_dict(self.data["sigma_rule"])

    def field(self, omega: FrequencyVector) -> FourierField:
        """Initial field on strip ``rho`` from the perturbation spec."""
        from .rotation import conjugated_field

        p = self.data["perturbation"]
        d = omega.dim
        K, rho = self.data["K"], self.data["rho"]
        w = omega.components
        kind = p["kind"]
        if kind == "none":
            return FourierField.constant(w, strip=rho, K=K)
        if kind in ("additive", "conjugated"):
            modes = _trig_modes(p, d)
        else:
            modes = _explicit_modes(p["modes"], d)
        pert = FourierField.from_modes(modes, rho, K=K, dim=d)
        if kind.startswith("conjugated"):
            return conjugated_field(w, TorusMap(pert), K, strip=rho)
        return FourierField.constant(w, strip=rho, K=K) + pert

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)


def _trig_modes(p, d):
    k = tuple(int(v) for v in p.get("k", [1, -1] + [0] * (d - 2)))
    if len(k) != d or not any(k):
        raise ConfigError(f"perturbation.k must be a nonzero integer vector of length {d}")
    amp = _positive("perturbation.amplitude", p.get("amplitude", 1e-6), allow_zero=True)
    axis = int(p.get("axis", 0))
    if not 0 <= axis < d:
        raise ConfigError("perturbation.axis out of range")
    shape = p.get("shape", "sin")
    e = np.zeros(d, dtype=complex)
    neg = tuple(-v for v in k)
    if shape == "sin":
        e[axis] = -0.5j * amp
    elif shape == "cos":
        e[axis] = 0.5 * amp
    else:
        raise ConfigError("perturbation.shape must be 'sin' or 'cos'")
    return {k: e, neg: np.conj(e)}


def _explicit_modes(items, d):
    modes = {}
    if not isinstance(items, list):
        raise ConfigError("perturbation.modes must be a list")
    for item in items:
        if not isinstance(item, dict) or set(item) != {"k", "value"}:
            raise ConfigError("each mode needs exactly 'k' and 'value'")
        k = tuple(int(v) for v in item["k"])
        vals = item["value"]
        if len(k) != d or len(vals) != d:
            raise ConfigError(f"mode {k}: dimension mismatch")
        modes[k] = np.array([complex(v[0], v[1]) if isinstance(v, list) else complex(v) for v in vals])
    return modes
