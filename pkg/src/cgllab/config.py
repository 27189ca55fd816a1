"""Strict JSON run configuration.

Every key is known in advance; anything else is rejected with its key path.
Physical preconditions (Re z > 0, N a power of two, ...) are checked here so
that a bad config fails before any computation starts.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .evolution import FlowParams, StepControl
from .grid import Grid
from .scenarios import KINDS, InitialDataSpec, default_grid

__all__ = ["ConfigError", "RunConfig", "parse_config", "MODES", "DEFAULTS"]

MODES = ("nonlinear", "linear_heat", "suite:dichotomy", "suite:trichotomy", "analyze:decay")


class ConfigError(ValueError):
    """Schema violation or failed physical precondition; ``path`` locates the key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


_STEP_KEYS = {
    "dt_init": 1e-2,
    "dt_min": 1e-10,
    "dt_max": 1.0,
    "safety": 0.9,
    "tol": 1e-7,
    "t_max": 10.0,
    "blowup_h1_factor": 1e3,
    "dissipated_factor": 1e-6,
    "max_forced_steps": 400,
    "snapshot_every": 0,
    "out_growth": 1.0,
    "dt_out_max": None,
}

_INITIAL_KEYS = {
    "kind": None,
    "c": 1.0,
    "lam": 1.0,
    "width": 1.0,
    "amplitude": 1.0,
    "k": 0.0,
    "eps": 0.0,
    "bump_width": 2.0,
    "offset": None,
    "hdot1": None,
}

_SUITE_KEYS = {"c_values": [0.5, 0.8, 1.1, 1.2], "lam": None, "horizon": None}
_DECAY_KEYS = {"t_window": [10.0, 100.0], "rho_window": None, "linear": False}

DEFAULTS: dict = {
    "dimension": None,
    "z_re": 1.0,
    "z_im": 0.0,
    "grid": {"N": None, "L": None},
    "initial_data": None,
    "step_control": _STEP_KEYS,
    "dt_out": 0.1,
    "dealias": None,
    "output_dir": "cgllab_out",
    "seed": None,
    "mode": "nonlinear",
    "suite": _SUITE_KEYS,
    "decay": _DECAY_KEYS,
}


def _merge(path: str, given: Any, schema: dict) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(path, "expected an object")
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    out = {}
    for key, default in schema.items():
        kp = f"{path}.{key}" if path else key
        if key in given:
            v = given[key]
            if isinstance(default, dict) and key not in ("initial_data",):
                v = _merge(kp, v, default)
            out[key] = v
        else:
            out[key] = copy.deepcopy(default)
    return out


def _num(path: str, v, *, integer: bool = False, allow_none: bool = False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer:
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(path, f"expected an integer, got {v!r}")
        return int(v)
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    return v


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``raw`` holds the fully defaulted document."""

    raw: dict = field(repr=False)

    @property
    def d(self) -> int:
        return self.raw["dimension"]

    @property
    def mode(self) -> str:
        return self.raw["mode"]

    @property
    def z(self) -> complex:
        return complex(self.raw["z_re"], self.raw["z_im"])

    @property
    def grid(self) -> Grid:
        return Grid(self.d, self.raw["grid"]["N"], self.raw["grid"]["L"])

    @property
    def flow(self) -> FlowParams:
        linear = self.mode == "linear_heat" or (self.mode == "analyze:decay" and self.raw["decay"]["linear"])
        return FlowParams(self.z, not linear, self.raw["dealias"])

    @property
    def step_control(self) -> StepControl:
        sc = dict(self.raw["step_control"])
        if sc["dt_out_max"] is None:
            sc["dt_out_max"] = math.inf
        return StepControl(dt_out=self.raw["dt_out"], **sc)

    @property
    def initial_data(self) -> Optional[InitialDataSpec]:
        spec = self.raw["initial_data"]
        if spec is None:
            return None
        spec = dict(spec)
        if spec.get("offset") is not None:
            spec["offset"] = tuple(spec["offset"])
        return InitialDataSpec(seed=self.raw["seed"], **spec)

    @property
    def output_dir(self) -> str:
        return self.raw["output_dir"]

    def to_json(self) -> str:
        """Canonical serialization; ``parse_config(cfg.to_json()) == cfg``."""
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"


def parse_config(text) -> RunConfig:
    """Parse and validate a JSON config (bytes or str)."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError("", f"config is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    raw = _merge("", doc, DEFAULTS)
    _validate(raw)
    return RunConfig(raw)


def _validate(raw: dict):
    d = _num("dimension", raw["dimension"], integer=True) if raw["dimension"] is not None else None
    if d not in (3, 4):
        raise ConfigError("dimension", "dimension must be 3 or 4")
    raw["dimension"] = d
    raw["z_re"] = _num("z_re", raw["z_re"])
    raw["z_im"] = _num("z_im", raw["z_im"])
    if not raw["z_re"] > 0:
        raise ConfigError("z_re", "Re z > 0 is required")
    if raw["mode"] not in MODES:
        raise ConfigError("mode", f"unknown mode {raw['mode']!r}; expected one of {MODES}")

    g = raw["grid"]
    dflt = default_grid(d)
    if g["N"] is None:
        g["N"] = dflt.N
    if g["L"] is None:
        g["L"] = dflt.L
    g["N"] = _num("grid.N", g["N"], integer=True)
    g["L"] = _num("grid.L", g["L"])
    n = g["N"]
    if n < 8 or n & (n - 1):
        raise ConfigError("grid.N", "N must be a power of two and at least 8")
    if not g["L"] > 0:
        raise ConfigError("grid.L", "L must be positive")

    raw["dt_out"] = _num("dt_out", raw["dt_out"])
    sc = raw["step_control"]
    for key in sc:
        integer = key in ("max_forced_steps", "snapshot_every")
        sc[key] = _num(f"step_control.{key}", sc[key], integer=integer, allow_none=key == "dt_out_max")
    try:
        StepControl(dt_out=raw["dt_out"], **{**sc, "dt_out_max": math.inf if sc["dt_out_max"] is None
                                               else sc["dt_out_max"]})
    except ValueError as exc:
        raise ConfigError("step_control", str(exc)) from None
    if raw["dealias"] is not None and not isinstance(raw["dealias"], bool):
        raise ConfigError("dealias", "expected true, false or null")
    if raw["seed"] is not None:
        raw["seed"] = _num("seed", raw["seed"], integer=True)
    if not isinstance(raw["output_dir"], str) or not raw["output_dir"]:
        raise ConfigError("output_dir", "expected a non-empty path string")

    if raw["mode"] in ("nonlinear", "linear_heat", "analyze:decay"):
        if raw["initial_data"] is None:
            raise ConfigError("initial_data", "required for this mode")
    if raw["initial_data"] is not None:
        spec = _merge("initial_data", raw["initial_data"], _INITIAL_KEYS)
        if spec["kind"] not in KINDS:
            raise ConfigError("initial_data.kind", f"expected one of {KINDS}")
        for key, v in spec.items():
            if key in ("kind", "offset"):
                continue
            spec[key] = _num(f"initial_data.{key}", v, allow_none=key == "hdot1")
        if spec["offset"] is not None:
            if not isinstance(spec["offset"], list) or len(spec["offset"]) != d:
                raise ConfigError("initial_data.offset", f"expected a list of {d} numbers")
            spec["offset"] = [_num(f"initial_data.offset[{i}]", v) for i, v in enumerate(spec["offset"])]
        if spec["kind"] == "ScaledW" and not spec["c"] > 0:
            raise ConfigError("initial_data.c", "ScaledW(c) requires c > 0")
        try:
            InitialDataSpec(**{**spec, "offset": None if spec["offset"] is None else tuple(spec["offset"])})
        except ValueError as exc:
            raise ConfigError("initial_data", str(exc)) from None
        raw["initial_data"] = spec

    su = raw["suite"]
    if not isinstance(su["c_values"], list) or not su["c_values"]:
        raise ConfigError("suite.c_values", "expected a non-empty list")
    su["c_values"] = [_num(f"suite.c_values[{i}]", v) for i, v in enumerate(su["c_values"])]
    if raw["mode"] == "suite:dichotomy":
        for i, c in enumerate(su["c_values"]):
            if c == 1 or not c > 0:
                raise ConfigError(f"suite.c_values[{i}]", "dichotomy needs c > 0 and c != 1")
    su["lam"] = _num("suite.lam", su["lam"], allow_none=True)
    su["horizon"] = _num("suite.horizon", su["horizon"], allow_none=True)

    de = raw["decay"]
    for key in ("t_window", "rho_window"):
        w = de[key]
        if w is None and key == "rho_window":
            continue
        if not isinstance(w, list) or len(w) != 2:
            raise ConfigError(f"decay.{key}", "expected [lo, hi]")
        de[key] = [_num(f"decay.{key}[{i}]", v) for i, v in enumerate(w)]
        if not 0 <= de[key][0] < de[key][1]:
            raise ConfigError(f"decay.{key}", "need 0 <= lo < hi")
    if not isinstance(de["linear"], bool):
        raise ConfigError("decay.linear", "expected true or false")
