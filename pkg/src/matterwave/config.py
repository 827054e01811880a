"""Run configuration: INI-style ``key = value unit`` entries under ``[section]`` headers.

Every dimensional value may carry a unit suffix (``0.1 eV``, ``0.916 angstrom``,
``7.016 amu``); a bare number is read in atomic units.  Unknown keys are
errors unless ``[output] strict = false``, in which case they are logged.

Example::

    [trial]
    v_target = 4

    [potential]
    beta = 0.1 eV
"""
from __future__ import annotations

import configparser
import logging
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import units
from .errors import ConfigError
from .hamiltonian import PotentialModel, lih_masses

log = logging.getLogger(__name__)

_MU, _M = lih_masses()


@dataclass(frozen=True)
class GridConfig:
    nr: int = 1024
    nZ: int = 1024
    dr: float = 0.05
    dZ: float = 0.05
    r0: float = 1.0
    Z0: float = 0.0
    mu_r: float = _MU
    M_Z: float = _M


@dataclass(frozen=True)
class PropagationConfig:
    nu_tau: float = 20.0
    tolerance: float = 1e-15
    absorber_width_Z: float = 19.0
    absorber_width_r: float | None = 8.0
    absorber_strength: float = 1.0
    refine_bounds: bool = False
    fft_backend: str = "scipy"


@dataclass(frozen=True)
class TrialConfig:
    v_target: int = 4
    Z_center: float = 5.8
    sigma_Z: float = 0.7
    p_Z: float = 11.47
    v_max: int = 10
    Z_ref: float | None = None


@dataclass(frozen=True)
class ControlConfig:
    max_iterations: int = 15
    yield_target: float = 0.95
    energy_tolerance: float = 0.05
    box_leak: float = 1e-3
    box_margin: int = 2
    selection_floor: float = 1e-4
    patience: int = 10
    backward_rate_threshold: float = 1e-6
    backward_max_time: float = 60000.0
    forward_max_time: float = 80000.0
    overlap_floor: float = 1e-8
    drain_tolerance: float = 1e-5
    f_envelope: str = "gaussian"
    overlap_envelope: str = "gaussian"


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs/shape"
    snapshot_stride: int = 0
    profile_coordinate: float = 0.916 * units.ANGSTROM
    strict: bool = True


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    potential: PotentialModel = field(default_factory=PotentialModel)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    trial: TrialConfig = field(default_factory=TrialConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


# kind, constraint per key; constraint in {None, "positive", "nonnegative", "fraction", "unit"}
SCHEMA = {
    "grid": {
        "nr": ("int", "min2"), "nZ": ("int", "min2"),
        "dr": ("length", "positive"), "dZ": ("length", "positive"),
        "r0": ("length", None), "Z0": ("length", None),
        "mu_r": ("mass", "positive"), "M_Z": ("mass", "positive"),
    },
    "potential": {
        "De": ("energy", "positive"), "a": ("inverse_length", "positive"), "r_e": ("length", None),
        "A_Z": ("energy", None), "b_Z": ("inverse_length", "positive"),
        "D_ads": ("energy", "positive"), "a_ads": ("inverse_length", "positive"), "z_ads": ("length", None),
        "A_r": ("energy", None), "b_r": ("inverse_length", "positive"),
        "beta": ("energy", None), "Z_c": ("length", None), "sigma_c": ("length", "positive"),
        "r_c": ("length", None), "sigma_rc": ("length?", "positive"), "v_cap": ("energy?", None),
    },
    "propagation": {
        "nu_tau": ("float", "positive"), "tolerance": ("float", "unit"),
        "absorber_width_Z": ("length", "nonnegative"), "absorber_width_r": ("length?", "nonnegative"),
        "absorber_strength": ("float", "fraction"), "refine_bounds": ("bool", None),
        "fft_backend": ("choice:scipy,fftw,auto", None),
    },
    "trial": {
        "v_target": ("int", "nonnegative"), "Z_center": ("length", None), "sigma_Z": ("length", "positive"),
        "p_Z": ("momentum", None), "v_max": ("int", "nonnegative"), "Z_ref": ("length?", None),
    },
    "control": {
        "max_iterations": ("int", "positive"), "yield_target": ("float", "fraction"),
        "energy_tolerance": ("float", "positive"), "box_leak": ("float", "unit"),
        "box_margin": ("int", "nonnegative"), "selection_floor": ("float", "positive"),
        "patience": ("int", "positive"), "backward_rate_threshold": ("float", "positive"),
        "backward_max_time": ("time", "positive"), "forward_max_time": ("time", "positive"),
        "overlap_floor": ("float", "nonnegative"), "drain_tolerance": ("float", "positive"),
        "f_envelope": ("choice:gaussian,previous", None), "overlap_envelope": ("choice:gaussian,trial", None),
    },
    "output": {
        "directory": ("str", None), "snapshot_stride": ("int", "nonnegative"),
        "profile_coordinate": ("length", None), "strict": ("bool", None),
    },
}

REQUIRED = {("trial", "v_target")}

_UNIT_TABLES = {
    "length": units.LENGTH_UNITS,
    "energy": units.ENERGY_UNITS,
    "mass": units.MASS_UNITS,
    "inverse_length": units.INVERSE_LENGTH_UNITS,
    "momentum": units.MOMENTUM_UNITS,
    "time": units.TIME_UNITS,
}
_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


def parse_quantity(text: str, kind: str, key: str) -> float:
    m = _NUMBER.match(text)
    if not m:
        raise ConfigError(key, f"malformed number {text!r}")
    value = float(m.group(1))
    unit = m.group(2)
    if not math.isfinite(value):
        raise ConfigError(key, f"non-finite value {text!r}")
    if not unit:
        return value
    table = _UNIT_TABLES[kind]
    if unit not in table:
        raise ConfigError(key, f"unit {unit!r} is not a {kind.replace('_', ' ')} unit (expected one of {sorted(table)})")
    return value * table[unit]


def _parse_value(text: str, kind: str, constraint, key: str):
    text = text.strip()
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    if optional and text.lower() in ("none", "off", ""):
        return None
    if kind == "str":
        return text
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean, got {text!r}")
    if kind.startswith("choice:"):
        options = kind.split(":", 1)[1].split(",")
        if text not in options:
            raise ConfigError(key, f"expected one of {options}, got {text!r}")
        return text
    if kind == "int":
        try:
            value = int(text)
        except ValueError:
            raise ConfigError(key, f"malformed integer {text!r}") from None
    elif kind == "float":
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(key, f"malformed number {text!r}") from None
        if not math.isfinite(value):
            raise ConfigError(key, f"non-finite value {text!r}")
    else:
        value = parse_quantity(text, kind, key)
    _check_constraint(value, constraint, key)
    return value


def _check_constraint(value, constraint, key):
    bad = {
        "positive": lambda v: not v > 0,
        "nonnegative": lambda v: v < 0,
        "min2": lambda v: v < 2,
        "fraction": lambda v: not 0 <= v <= 1,
        "unit": lambda v: not 0 < v < 1,
    }
    if constraint and bad[constraint](value):
        raise ConfigError(key, f"invalid parameter value {value!r} (must be {constraint})")


def config_from_mapping(sections: dict, strict: bool | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from ``{section: {key: text}}``."""
    if strict is None:
        strict = str(sections.get("output", {}).get("strict", "true")).strip().lower() not in ("0", "false", "no", "off")
    blocks = {}
    defaults = RunConfig()
    for sec, keys in sections.items():
        if sec not in SCHEMA:
            _unknown(f"[{sec}]", strict)
            continue
        parsed = {}
        for key, text in keys.items():
            path = f"{sec}.{key}"
            if key not in SCHEMA[sec]:
                _unknown(path, strict)
                continue
            kind, constraint = SCHEMA[sec][key]
            parsed[key] = _parse_value(str(text), kind, constraint, path)
        blocks[sec] = parsed
    for sec, key in REQUIRED:
        if key not in blocks.get(sec, {}):
            raise ConfigError(f"{sec}.{key}", "required key is missing")
    out = {}
    for sec in SCHEMA:
        base = getattr(defaults, sec)
        try:
            out[sec] = replace(base, **blocks.get(sec, {}))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[{sec}]", str(exc)) from None
    cfg = RunConfig(**out)
    _cross_checks(cfg)
    return cfg


def _unknown(path, strict):
    if strict:
        raise ConfigError(path, "unknown key")
    log.warning("ignoring unknown config key %s", path)


def _cross_checks(cfg: RunConfig):
    if cfg.trial.v_target > cfg.trial.v_max:
        raise ConfigError("trial.v_target", f"exceeds trial.v_max = {cfg.trial.v_max}")
    g = cfg.grid
    if cfg.propagation.absorber_width_Z > g.nZ * g.dZ:
        raise ConfigError("propagation.absorber_width_Z", "wider than the Z grid")
    if cfg.propagation.absorber_width_r is not None and cfg.propagation.absorber_width_r > g.nr * g.dr:
        raise ConfigError("propagation.absorber_width_r", "wider than the r grid")


def parse_config_text(text: str, strict: bool | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", f"cannot parse: {exc}") from None
    return config_from_mapping({s: dict(parser.items(s)) for s in parser.sections()}, strict)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from None
    return parse_config_text(text)


def format_config(cfg: RunConfig) -> str:
    """Render a config in atomic units; parses back to an equal config."""
    lines = []
    for sec in SCHEMA:
        block = getattr(cfg, sec)
        lines.append(f"[{sec}]")
        for f in fields(block):
            value = getattr(block, f.name)
            if value is None:
                text = "none"
            elif isinstance(value, bool):
                text = str(value).lower()
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{f.name} = {text}")
        lines.append("")
    return "\n".join(lines)
