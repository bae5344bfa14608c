"""Run configuration: YAML loading, strict validation, object factories.

A configuration is a nested mapping with the sections below.  Unknown keys
anywhere are rejected before any computation starts; presets and CLI
overrides merge onto the defaults in that order.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import yaml

from .control import (
    ActivationPolicy,
    DerivativeThreshold,
    FixedTime,
    PostDelayPositiveIntegral,
    WindowedAverage,
    CONTROL_MODES,
)
from .evolution import PropagatorConfig
from .pulses import PulseSpec


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


_BOOL = (bool,)
_INT = (int,)
_NUM = (int, float)
_STR = (str,)

# section -> key -> (allowed types, default); None defaults mean "absent".
_SCHEMA: dict[str, dict[str, tuple[tuple[type, ...], Any]]] = {
    "system": {
        "L": (_INT, 8),
        "U": (_NUM, 20.0),
        "t_h": (_NUM, 1.0),
        "n_up": (_INT, None),
        "n_down": (_INT, None),
    },
    "pulse": {
        "phi0": (_NUM, 0.2),
        "omega_p": (_NUM, 19.1),
        "n_p": (_INT, 54),
        "t_l": (_NUM, 5.0),
        "t_r": (_NUM, 5.0),
        "double": (_BOOL, False),
    },
    "control": {
        "mode": (_STR, "lyapunov_up"),
        "eta0_sq": (_NUM, None),
        "policy": (_STR, "windowed_average"),
        "t_act": (_NUM, None),
        "threshold": (_NUM, -1e-3),
    },
    "engine": {
        "scheme": (_STR, "krylov_expm"),
        "dt_factor": (_NUM, 0.02),
        "dt_absolute": (_NUM, None),
        "krylov_dim": (_INT, 30),
        "tol": (_NUM, 1e-10),
    },
    "outputs": {
        "record_every": (_INT, 1),
        "decompose_final": (_BOOL, False),
        "weight_threshold": (_NUM, 1e-12),
        "cache_dir": (_STR, None),
    },
    "evolve": {
        "extended_horizon": (_NUM, 0.0),
        "smooth_sigmas_periods": (list, ()),
        "switch_off_intervals": (list, ()),
    },
    "scan": {
        "omega_min": (_NUM, 15.0),
        "omega_max": (_NUM, 25.0),
        "omega_step": (_NUM, 0.1),
        "phi0_min": (_NUM, 0.05),
        "phi0_max": (_NUM, 0.60),
        "phi0_step": (_NUM, 0.05),
        "modes": (list, ()),
        "eta0_sq": (_NUM, None),
    },
    "sweep": {
        "t_act_min": (_NUM, None),
        "t_act_max": (_NUM, None),
        "t_act_step": (_NUM, 0.25),
        "t_act_values": (list, None),
        "direction": (_STR, "max"),
        "mode": (_STR, "lyapunov_up"),
        "eta0_sq": (_NUM, None),
        "horizon": (_NUM, None),
    },
    "stft": {
        "window_periods": (_NUM, 4.0),
        "hop_periods": (_NUM, 0.5),
        "freq_min": (_NUM, 10.0),
        "freq_max": (_NUM, 30.0),
        "freq_step": (_NUM, 0.05),
    },
}

# Sections that may be absent entirely (control: no feedback at all).
_OPTIONAL_SECTIONS = ("control", "scan", "sweep", "stft", "evolve")


def default_config() -> dict:
    cfg: dict[str, Any] = {}
    for section, fields in _SCHEMA.items():
        if section in _OPTIONAL_SECTIONS:
            continue
        cfg[section] = {k: copy.copy(d) for k, (_, d) in fields.items()}
    return cfg


def _validate_section(section: str, payload: Any) -> dict:
    if payload is None:
        return {}
    if not isinstance(payload, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    schema = _SCHEMA[section]
    out = {}
    for key, value in payload.items():
        if key not in schema:
            raise ConfigError(f"unknown key {section}.{key}")
        types, _default = schema[key]
        if value is not None and not isinstance(value, types):
            # bool is an int subclass; keep the two apart.
            if isinstance(value, bool) and types != _BOOL:
                raise ConfigError(f"{section}.{key}: expected {types}, got bool")
            raise ConfigError(
                f"{section}.{key}: expected {tuple(t.__name__ for t in types)}, "
                f"got {type(value).__name__}"
            )
        if isinstance(value, bool) and types != _BOOL:
            raise ConfigError(f"{section}.{key}: expected number, got bool")
        out[key] = value
    return out


def merge_config(base: dict, override: dict) -> dict:
    """Validated deep merge of an override mapping onto a config."""
    if not isinstance(override, dict):
        raise ConfigError("configuration root must be a mapping")
    out = copy.deepcopy(base)
    for section, payload in override.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        cleaned = _validate_section(section, payload)
        target = out.setdefault(section, {})
        for key, value in cleaned.items():
            target[key] = value
    return out


def finalize(cfg: dict) -> dict:
    """Fill defaults for present sections and run cross-field checks."""
    out = {}
    for section, fields in _SCHEMA.items():
        if section not in cfg:
            if section in _OPTIONAL_SECTIONS:
                continue
            out[section] = {k: d for k, (_, d) in fields.items()}
            continue
        body = dict(cfg[section])
        for key, (_, default) in fields.items():
            body.setdefault(key, copy.copy(default))
        out[section] = body

    sys_cfg = out["system"]
    if sys_cfg["n_up"] is None:
        sys_cfg["n_up"] = sys_cfg["L"] // 2
    if sys_cfg["n_down"] is None:
        sys_cfg["n_down"] = sys_cfg["L"] // 2
    if "control" in out:
        mode = out["control"]["mode"]
        if mode not in CONTROL_MODES:
            raise ConfigError(f"control.mode must be one of {CONTROL_MODES}, got {mode!r}")
        policy = out["control"]["policy"]
        if policy not in (
            "windowed_average",
            "derivative_threshold",
            "fixed",
            "post_delay_positive_integral",
        ):
            raise ConfigError(f"unknown control.policy {policy!r}")
        if policy == "fixed" and out["control"]["t_act"] is None:
            raise ConfigError("control.policy 'fixed' requires control.t_act")
    if "sweep" in out:
        sweep = out["sweep"]
        if sweep["t_act_values"] is None and (
            sweep["t_act_min"] is None or sweep["t_act_max"] is None
        ):
            raise ConfigError("sweep needs t_act_values or t_act_min/t_act_max")
        if sweep["direction"] not in ("max", "min"):
            raise ConfigError("sweep.direction must be 'max' or 'min'")
    return out


def load_config(
    path: str | Path | None = None,
    preset: dict | None = None,
    overrides: dict | None = None,
) -> dict:
    """Defaults <- preset <- file <- overrides, validated at every stage."""
    cfg = default_config()
    if preset:
        cfg = merge_config(cfg, preset)
    if path is not None:
        payload = yaml.safe_load(Path(path).read_text())
        if payload is None:
            payload = {}
        cfg = merge_config(cfg, payload)
    if overrides:
        cfg = merge_config(cfg, overrides)
    return finalize(cfg)


def make_pulse_spec(cfg: dict) -> PulseSpec:
    p = cfg["pulse"]
    return PulseSpec(
        phi0=float(p["phi0"]),
        omega_p=float(p["omega_p"]),
        n_p=int(p["n_p"]),
        t_l=float(p["t_l"]),
        t_r=float(p["t_r"]),
    )


def make_engine(cfg: dict) -> PropagatorConfig:
    e = cfg["engine"]
    return PropagatorConfig(
        scheme=e["scheme"],
        dt_factor=float(e["dt_factor"]),
        dt_absolute=None if e["dt_absolute"] is None else float(e["dt_absolute"]),
        krylov_dim=int(e["krylov_dim"]),
        tol=float(e["tol"]),
    )


def make_policy(cfg: dict, pulse: PulseSpec) -> ActivationPolicy:
    c = cfg["control"]
    kind = c["policy"]
    if kind == "windowed_average":
        return WindowedAverage(period=pulse.t_p)
    if kind == "derivative_threshold":
        return DerivativeThreshold(threshold=float(c["threshold"]))
    if kind == "fixed":
        return FixedTime(t_act=float(c["t_act"]))
    return PostDelayPositiveIntegral(delay=pulse.repeat_offset, period=pulse.t_p)
