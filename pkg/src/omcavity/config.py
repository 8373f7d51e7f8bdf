"""Run configuration: INI-style files with unit-suffixed keys.

Sections group the device table, drive settings, sweep grids, integrator
and spectral-analysis knobs.  Parsing is strict: unknown sections or keys
are rejected by name, every numeric is validated against the module
preconditions before any computation starts, and the resolved physics
content is hashed into every output file header.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .dynamics import ClassifierThresholds, PulseSegment
from .model import DeviceParams, dbm_to_watt


class ConfigError(ValueError):
    """Invalid configuration; carries the offending section/key."""

    def __init__(self, where: str, message: str):
        super().__init__(f"[{where}] {message}")
        self.where = where


def _positive(x):
    return x > 0


def _nonnegative(x):
    return x >= 0


def _fraction(x):
    return 0.0 <= x < 1.0


def _any(x):
    return True


# section -> key -> (python type, default or REQUIRED, predicate, doc)
REQUIRED = object()
_SCHEMA: Dict[str, Dict[str, tuple]] = {
    "device": {
        "cavity_freq_hz": (float, REQUIRED, _positive, "bare cavity frequency"),
        "mech_freq_hz": (float, REQUIRED, _positive, "mechanical frequency"),
        "input_rate_hz": (float, REQUIRED, _positive, "input coupling rate"),
        "output_rate_hz": (float, REQUIRED, _positive, "output coupling rate"),
        "internal_rate_hz": (float, REQUIRED, _positive, "internal loss rate"),
        "mech_damping_hz": (float, REQUIRED, _positive, "mechanical damping"),
        "single_photon_coupling_hz": (float, REQUIRED, _positive, "g0"),
        "cavity_kerr_hz": (float, 0.0, _nonnegative, "Kerr coefficient per photon"),
        "zero_point_m": (float, None, _positive, "zero-point motion"),
    },
    "drive": {
        "detuning_hz": (float, None, _any, "pump detuning from bare cavity"),
        "power_dbm": (float, None, _any, "injected pump power"),
        "power_w": (float, None, _nonnegative, "injected pump power"),
        "amplitude": (float, None, _nonnegative, "drive amplitude E"),
        "attenuation_db": (float, 0.0, _nonnegative, "input line attenuation"),
        "pump_freq_start_hz": (float, None, _positive, "pump sweep start"),
        "pump_freq_stop_hz": (float, None, _positive, "pump sweep stop"),
        "pump_freq_points": (int, None, _positive, "pump sweep points"),
    },
    "probe": {
        "freq_start_hz": (float, None, _positive, "probe grid start"),
        "freq_stop_hz": (float, None, _positive, "probe grid stop"),
        "points": (int, None, _positive, "probe grid points"),
        "offset_hz": (float, None, _any, "probe offset from bare cavity"),
        "amplitude": (float, 1.0, _positive, "probe amplitude"),
        "probe_ratio": (float, 1e-3, _positive, "probe/pump ratio (compare mode)"),
    },
    "grid": {
        "detuning_start_hz": (float, None, _any, "grid detuning start"),
        "detuning_stop_hz": (float, None, _any, "grid detuning stop"),
        "detuning_step_hz": (float, 300e3, _positive, "grid detuning step"),
        "power_start_dbm": (float, None, _any, "grid power start"),
        "power_stop_dbm": (float, None, _any, "grid power stop"),
        "power_step_dbm": (float, 0.1, _positive, "grid power step"),
    },
    "stability": {
        "kerr_values_hz": (list, None, _any, "Kerr coefficients for boundary batch"),
    },
    "pulse": {
        "segments": (str, None, _any, "duration:power segment list"),
        "t_pre_s": (float, 0.0, _nonnegative, "pre-trigger span"),
        "mode": (str, "linear", _any, "linear | nonlinear | compare"),
    },
    "integrator": {
        "rtol": (float, 1e-9, _positive, "relative tolerance"),
        "atol": (float, 1e-12, _positive, "absolute tolerance"),
        "sample_dt_s": (float, None, _positive, "output sample spacing"),
        "t_span_s": (float, None, _positive, "integration span"),
    },
    "psd": {
        "transient_fraction": (float, 0.5, _fraction, "record fraction trimmed"),
        "segments": (int, 4, _positive, "Welch segments"),
        "overlap": (float, 0.5, _fraction, "Welch overlap"),
        "window": (str, "hann", _any, "window function"),
    },
    "classifier": {
        "flatness_threshold": (float, 0.25, _positive, "chaos flatness"),
        "comb_threshold": (float, 0.5, _positive, "comb score to accept"),
        "subharmonic_threshold": (float, 0.02, _positive, "subharmonic fraction"),
        "static_floor": (float, 1e-8, _positive, "AC/carrier floor"),
        "band_mult": (float, 2.0, _positive, "analysis band in units of wm"),
    },
    "run": {
        "out_dir": (str, ".", _any, "output directory"),
        "workers": (int, 1, _positive, "parallel workers"),
        "seed": (int, 0, _any, "deterministic seed"),
        "sweep": (str, "up", _any, "continuation direction"),
    },
}

# keys that do not affect the physics payload and stay out of the hash
_HASH_EXCLUDE = {("run", "out_dir"), ("run", "workers")}


@dataclass
class RunConfig:
    values: Dict[str, Dict[str, object]]
    path: Optional[str] = None

    def get(self, section: str, key: str):
        return self.values[section][key]

    def device(self) -> DeviceParams:
        d = self.values["device"]
        kwargs = {k: v for k, v in d.items() if v is not None}
        try:
            return DeviceParams(**kwargs)
        except ValueError as exc:
            raise ConfigError("device", str(exc)) from exc

    def power_at_cavity_w(self, power_dbm: float) -> float:
        return dbm_to_watt(power_dbm - self.values["drive"]["attenuation_db"])

    def thresholds(self) -> ClassifierThresholds:
        c = self.values["classifier"]
        return ClassifierThresholds(
            flatness=c["flatness_threshold"],
            comb_score=c["comb_threshold"],
            subharmonic_fraction=c["subharmonic_threshold"],
            static_floor=c["static_floor"],
            band_mult=c["band_mult"],
        )

    def pulse_schedule(self) -> List[PulseSegment]:
        raw = self.values["pulse"]["segments"]
        if not raw:
            raise ConfigError("pulse", "segments is required for timedomain runs")
        return parse_schedule(raw, self.values["drive"]["attenuation_db"])

    def config_hash(self) -> str:
        lines = []
        for section in sorted(_SCHEMA):
            for key in sorted(_SCHEMA[section]):
                if (section, key) in _HASH_EXCLUDE:
                    continue
                val = self.values[section][key]
                lines.append(f"{section}.{key}={val!r}")
        blob = "\n".join(lines).encode()
        return hashlib.sha256(blob).hexdigest()


def parse_schedule(raw: str, attenuation_db: float = 0.0) -> List[PulseSegment]:
    """Parse '15e-6:g=1.55e6, 10e-6:off, 5e-6:-31dbm' into segments."""
    segments = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigError("pulse", f"malformed segment {item!r}: expected duration:spec")
        dur_s, spec = item.split(":", 1)
        try:
            duration = float(dur_s)
        except ValueError:
            raise ConfigError("pulse", f"bad segment duration {dur_s!r}") from None
        spec = spec.strip().lower()
        try:
            if spec == "off":
                seg = PulseSegment(duration_s=duration)
            elif spec.startswith("g="):
                seg = PulseSegment(duration_s=duration, coupling_hz=float(spec[2:]))
            elif spec.endswith("dbm"):
                seg = PulseSegment(
                    duration_s=duration,
                    power_w=dbm_to_watt(float(spec[:-3]) - attenuation_db),
                )
            elif spec.endswith("w"):
                seg = PulseSegment(duration_s=duration, power_w=float(spec[:-1]))
            else:
                raise ConfigError(
                    "pulse", f"bad segment spec {spec!r}: use off, g=<hz>, <dbm>dbm or <w>w"
                )
        except ValueError as exc:
            raise ConfigError("pulse", f"bad segment {item!r}: {exc}") from None
        segments.append(seg)
    if not segments:
        raise ConfigError("pulse", "schedule is empty")
    return segments


def _coerce(section: str, key: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is float:
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError("not finite")
            return val
        if typ is int:
            return int(raw)
        if typ is list:
            return [float(tok) for tok in raw.split(",") if tok.strip()]
        return raw
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r}: {exc}") from None


def parse_config(path: str | Path) -> RunConfig:
    """Parse and validate a config file against the full schema."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigError("file", f"cannot read config file {path}")
    values: Dict[str, Dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(section, "unknown section")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
    for section, keys in _SCHEMA.items():
        values[section] = {}
        for key, (typ, default, pred, _doc) in keys.items():
            if parser.has_option(section, key):
                val = _coerce(section, key, parser.get(section, key), typ)
                if val is not None and not pred(val):
                    raise ConfigError(f"{section}.{key}", f"value {val!r} out of range")
                values[section][key] = val
            elif default is REQUIRED:
                raise ConfigError(f"{section}.{key}", "required key missing")
            else:
                values[section][key] = default
    cfg = RunConfig(values=values, path=str(path))
    cfg.device()  # cross-field device validation up front
    sweep = values["run"]["sweep"]
    if sweep not in ("up", "down"):
        raise ConfigError("run.sweep", f"must be 'up' or 'down', got {sweep!r}")
    mode = values["pulse"]["mode"]
    if mode not in ("linear", "nonlinear", "compare"):
        raise ConfigError("pulse.mode", f"must be linear|nonlinear|compare, got {mode!r}")
    if values["psd"]["window"] not in ("hann", "hamming", "blackman"):
        raise ConfigError("psd.window", "window must be hann, hamming or blackman")
    return cfg
