"""Run configuration: TOML file + ``--set`` overrides, validated against a fixed schema.

Every key is optional and falls back to the defaults below unless the file
sets ``use_default_physics = false``, in which case every ``[physical]`` key
must be given explicitly.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from .engine import GridSpec
from .specfun import find_first_peak
from .units import DEFAULT_GAMMA, RB87_MASS_U, ATOMIC_MASS_UNIT, PhysicalParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    pass


NUMBER = (int, float)
LIST = list

# section -> key -> (type, default)
SCHEMA = {
    "physical": {
        "lambda_probe": (NUMBER, 780e-9),
        "lambda_coupling": (NUMBER, 480e-9),
        "geometry": (str, "counter_propagating"),
        "temperature": (NUMBER, 78e-6),
        "atomic_mass": (NUMBER, RB87_MASS_U * ATOMIC_MASS_UNIT),
        "gamma": (NUMBER, DEFAULT_GAMMA),
        "lattice_angle_deg": (NUMBER, 18.5),
        "lattice_wavelength": (NUMBER, 780e-9),
    },
    "grid": {
        "nz": (int, 2**11),
        "nv": (int, 400),
        "z_half_span": (NUMBER, 4.0),
        "v_half_span": (NUMBER, 4.0),
        "cloud_sigma": (NUMBER, 15.0 * math.pi),
    },
    "sequence": {
        "q": (NUMBER, 0.485),
        "pulse_duration": (NUMBER, 0.54),
        "area": ((str,) + NUMBER, "optimal"),
        "substeps": (int, 32),
        "eta_acs": (NUMBER, 0.71),
        "timing_convention": (str, "total-elapsed"),
    },
    "scan": {
        "t_max_us": (NUMBER, 44.0),
        "n_points": (int, 45),
        "times_us": (LIST, []),
        "q_family": (LIST, [0.5, 0.485, 0.471, 0.456]),
        "unmodulated_window_us": (LIST, [0.0, math.inf]),
        "modulated_window_us": (LIST, [14.0, math.inf]),
        "with_offset": (bool, False),
    },
    "figure2": {
        "delay": (NUMBER, 10.0),
        "after": (NUMBER, 2.0),
        "sampling": (NUMBER, 0.1),
        "k_max": (NUMBER, 2.5),
    },
    "calibrate": {
        "storage_time_us": (NUMBER, 3.0),
        "max_duration_us": (NUMBER, 3.0),
        "n_points": (int, 31),
        "tau_opt_us": (NUMBER, 1.25),
        "substeps": (int, 16),
        "with_offset": (bool, True),
    },
    "fit": {
        "model": (str, "gaussian_decay"),
        "window_us": (LIST, [14.0, math.inf]),
        "with_offset": (bool, True),
    },
    "outputs": {
        "format": (str, "csv"),
    },
}
TOP_LEVEL = {"use_default_physics": (bool, True), "seed": (int, 0)}


def _type_ok(value, kind):
    kinds = kind if isinstance(kind, tuple) else (kind,)
    if isinstance(value, bool):
        return bool in kinds
    if float in kinds and isinstance(value, int):
        return True
    return isinstance(value, kinds)


def _type_name(kind):
    kinds = kind if isinstance(kind, tuple) else (kind,)
    return " or ".join(sorted({"number" if k in (int, float) and float in kinds else k.__name__
                               for k in kinds}))


def defaults() -> dict:
    out = {k: v[1] for k, v in TOP_LEVEL.items()}
    for section, keys in SCHEMA.items():
        out[section] = {k: copy.deepcopy(v[1]) for k, v in keys.items()}
    return out


def _merge(base: dict, data: dict, origin: str) -> None:
    for key, value in data.items():
        if key in TOP_LEVEL:
            kind = TOP_LEVEL[key][0]
            if not _type_ok(value, kind):
                raise ConfigError(f"{origin}: {key} must be {_type_name(kind)}")
            base[key] = value
            continue
        if key not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section or key {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"{origin}: [{key}] must be a table")
        for sub, v in value.items():
            if sub not in SCHEMA[key]:
                raise ConfigError(f"{origin}: unknown key {key}.{sub}")
            kind = SCHEMA[key][sub][0]
            if not _type_ok(v, kind):
                raise ConfigError(f"{origin}: {key}.{sub} must be {_type_name(kind)}, got {v!r}")
            base[key][sub] = v


def parse_override(text: str) -> dict:
    """``section.key=value`` with a TOML value; bare words are taken as strings."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    path, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    parts = path.split(".")
    if len(parts) == 1:
        return {parts[0]: value}
    if len(parts) != 2:
        raise ConfigError(f"override key {path!r} must be section.key")
    return {parts[0]: {parts[1]: value}}


def resolve(path=None, overrides=()) -> dict:
    """Defaults, then the file, then each override in order."""
    resolved = defaults()
    file_data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                file_data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        _merge(resolved, file_data, str(path))
    for item in overrides:
        _merge(resolved, parse_override(item), f"--set {item}")
    if not resolved["use_default_physics"]:
        given = dict(file_data.get("physical", {}))
        for item in overrides:
            given.update(parse_override(item).get("physical", {}))
        missing = [k for k in SCHEMA["physical"] if k not in given]
        if missing:
            raise ConfigError(f"missing required field(s) physical.{', physical.'.join(missing)} "
                              f"(use_default_physics = false)")
    return resolved


def json_safe(obj):
    """Copy of ``obj`` with infinities (open windows) replaced by ``None``."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    return obj


def config_hash(resolved: dict) -> str:
    """sha256 of the canonical JSON form, as written to run manifests."""
    text = json.dumps(json_safe(resolved), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunConfig:
    raw: dict
    physical: PhysicalParams
    grid: GridSpec

    @property
    def sequence(self) -> dict:
        return self.raw["sequence"]

    @property
    def scan(self) -> dict:
        return self.raw["scan"]

    @property
    def figure2(self) -> dict:
        return self.raw["figure2"]

    @property
    def calibrate(self) -> dict:
        return self.raw["calibrate"]

    @property
    def fit(self) -> dict:
        return self.raw["fit"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def area(self) -> float:
        a = self.sequence["area"]
        if isinstance(a, str):
            if a != "optimal":
                raise ConfigError(f"sequence.area must be a number or 'optimal', got {a!r}")
            return find_first_peak(2).x_peak
        return float(a)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def load(path=None, overrides=()) -> RunConfig:
    raw = resolve(path, overrides)
    ph = dict(raw["physical"])
    ph["lattice_angle"] = math.radians(ph.pop("lattice_angle_deg"))
    try:
        physical = PhysicalParams(**ph)
        grid = GridSpec(**raw["grid"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    seq = raw["sequence"]
    if seq["timing_convention"] not in ("total-elapsed", "wait-only"):
        raise ConfigError("sequence.timing_convention must be 'total-elapsed' or 'wait-only'")
    if not 0 < seq["eta_acs"] <= 1:
        raise ConfigError("sequence.eta_acs must lie in (0, 1]")
    if seq["substeps"] < 1 or seq["pulse_duration"] < 0:
        raise ConfigError("sequence.substeps must be >= 1 and pulse_duration >= 0")
    if raw["fit"]["model"] not in ("gaussian_decay", "bessel0_sq"):
        raise ConfigError("fit.model must be 'gaussian_decay' or 'bessel0_sq'")
    if raw["outputs"]["format"] not in ("csv", "json"):
        raise ConfigError("outputs.format must be 'csv' or 'json'")
    for section, key in (("scan", "unmodulated_window_us"), ("scan", "modulated_window_us"),
                         ("fit", "window_us")):
        w = raw[section][key]
        if len(w) != 2 or not all(_type_ok(x, NUMBER) for x in w) or w[0] > w[1]:
            raise ConfigError(f"{section}.{key} must be [start, end] with start <= end")
    for key in ("times_us", "q_family"):
        if not all(_type_ok(x, NUMBER) for x in raw["scan"][key]):
            raise ConfigError(f"scan.{key} must be a list of numbers")
    rc = RunConfig(raw=raw, physical=physical, grid=grid)
    rc.area  # validates the string form
    return rc


def dump_defaults() -> str:
    """Default configuration rendered as commented TOML."""
    lines = ["use_default_physics = true", "seed = 0", ""]
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, value) in keys.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def write_defaults(path) -> None:
    Path(path).write_text(dump_defaults(), encoding="utf-8")
