"""Experiment configuration documents (YAML) with explicit physical units."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import DeviceModel
from .hilbert import HilbertDims
from .measurement import ReadoutModel

__all__ = [
    "ConfigError",
    "parse_quantity",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "device_from_dict",
]


class ConfigError(ValueError):
    """Invalid configuration; ``where`` is a dotted path to the field."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


_UNITS = {
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "μs": 1e-6, "ns": 1e-9},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "angle": {"rad": 1.0, "deg": math.pi / 180},
}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zµμ]+)\s*$")


def parse_quantity(value, dimension: str, where: str = "") -> float:
    """Parse ``"1.4 ms"``-style strings into SI floats.

    ``"inf"`` is accepted for any dimension. Bare numbers are rejected so
    that a missing unit never silently means seconds or hertz.
    """
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        raise ConfigError(f"{value!r} needs a {dimension} unit ({', '.join(_UNITS[dimension])})", where)
    if not isinstance(value, str):
        raise ConfigError(f"expected a {dimension} quantity string, got {value!r}", where)
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"cannot parse {value!r} as a {dimension} quantity", where)
    number, unit = m.groups()
    scale = _UNITS[dimension].get(unit)
    if scale is None:
        raise ConfigError(f"unit {unit!r} is not a {dimension} unit ({', '.join(_UNITS[dimension])})", where)
    return float(number) * scale


def _plain_number(value, where, kind=float, lo=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", where)
    if kind is int and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", where)
    value = kind(value)
    if lo is not None and value < lo:
        raise ConfigError(f"must be >= {lo}, got {value}", where)
    return value


def _complex(value, where) -> complex:
    if isinstance(value, dict):
        unknown = set(value) - {"re", "im"}
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)}", where)
        return complex(_plain_number(value.get("re", 0.0), f"{where}.re"), _plain_number(value.get("im", 0.0), f"{where}.im"))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"cannot parse {value!r} as a complex amplitude", where) from None
    return complex(_plain_number(value, where))


_DEVICE_FIELDS = {
    "chi": ("chi_over_2pi", "frequency"),
    "cavity_T1": ("cavity_T1", "time"),
    "cavity_Tphi": ("cavity_Tphi", "time"),
    "nbar_th": ("nbar_th", None),
    "transmon_T1": ("transmon_T1", "time"),
    "transmon_Tphi": ("transmon_Tphi", "time"),
    "transmon_Pe_th": ("transmon_Pe_th", None),
    "kerr": ("kerr_over_2pi", "frequency"),
    "f_storage": ("f_storage", "frequency"),
    "f_transmon": ("f_transmon", "frequency"),
    "f_readout": ("f_readout", "frequency"),
}


def device_from_dict(doc: dict, where: str = "device", extra_keys=()) -> DeviceModel:
    if not isinstance(doc, dict):
        raise ConfigError("must be a mapping", where)
    unknown = set(doc) - set(_DEVICE_FIELDS) - set(extra_keys)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", where)
    kw = {}
    for key, (attr, dim) in _DEVICE_FIELDS.items():
        if key not in doc:
            continue
        w = f"{where}.{key}"
        kw[attr] = parse_quantity(doc[key], dim, w) if dim else _plain_number(doc[key], w)
    try:
        return DeviceModel(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc), where) from None


@dataclass
class ExperimentConfig:
    device: DeviceModel = field(default_factory=DeviceModel)
    devices: list = field(default_factory=list)  # [(name, DeviceModel)] for pipelines
    hilbert: HilbertDims = field(default_factory=HilbertDims)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    kind: str | None = None
    delays: np.ndarray | None = None
    alpha: complex = math.sqrt(2)
    detuning: float | None = None
    state: dict = field(default_factory=lambda: {"type": "fock", "n": 0})
    grid_range: float = 2.5
    grid_points: int = 61
    out_dir: str | None = None
    fmt: str = "csv"
    source: str = "<config>"


def _sweep(doc, where) -> np.ndarray:
    if isinstance(doc, list):
        return np.array([parse_quantity(v, "time", f"{where}[{i}]") for i, v in enumerate(doc)])
    if not isinstance(doc, dict):
        raise ConfigError("must be a mapping {start, stop, points} or a list of delays", where)
    unknown = set(doc) - {"start", "stop", "points"}
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", where)
    start = parse_quantity(doc.get("start", "0 s"), "time", f"{where}.start")
    if "stop" not in doc:
        raise ConfigError("missing 'stop'", where)
    stop = parse_quantity(doc["stop"], "time", f"{where}.stop")
    points = _plain_number(doc.get("points", 41), f"{where}.points", int)
    if points < 1:
        raise ConfigError("sweep needs at least one point", f"{where}.points")
    return np.linspace(start, stop, points)


def _readout(doc, where="readout") -> ReadoutModel:
    if not isinstance(doc, dict):
        raise ConfigError("must be a mapping", where)
    unknown = set(doc) - {"contrast", "baseline", "selective_photon", "shots", "seed"}
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", where)
    shots = doc.get("shots")
    if shots is not None and not (isinstance(shots, str) and shots.lower() == "none"):
        shots = _plain_number(shots, f"{where}.shots", int, lo=1)
    else:
        shots = None
    try:
        return ReadoutModel(
            contrast=_plain_number(doc.get("contrast", 1.0), f"{where}.contrast"),
            baseline=_plain_number(doc.get("baseline", 0.0), f"{where}.baseline"),
            selective_photon=_plain_number(doc.get("selective_photon", 0), f"{where}.selective_photon", int, lo=0),
            shots=shots,
            rng_seed=_plain_number(doc.get("seed", 0), f"{where}.seed", int, lo=0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), where) from None


_TOP_KEYS = {"device", "devices", "hilbert", "readout", "experiment", "output"}
_EXPERIMENT_KEYS = {"kind", "sweep", "alpha", "detuning", "state", "grid"}


def parse_config(doc, source: str = "<config>") -> ExperimentConfig:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", source)
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", source)
    cfg = ExperimentConfig(source=source)
    if "device" in doc:
        cfg.device = device_from_dict(doc["device"])
    if "devices" in doc:
        devs = doc["devices"]
        if not isinstance(devs, list):
            raise ConfigError("must be a list", "devices")
        for i, d in enumerate(devs):
            if not isinstance(d, dict):
                raise ConfigError("must be a mapping", f"devices[{i}]")
            name = str(d.get("name", f"device {i}"))
            cfg.devices.append((name, device_from_dict({k: v for k, v in d.items() if k != "name"}, f"devices[{i}]")))
    if "hilbert" in doc:
        h = doc["hilbert"]
        if not isinstance(h, dict) or set(h) - {"n_cav", "n_qubit"}:
            raise ConfigError("must be a mapping with n_cav and/or n_qubit", "hilbert")
        try:
            cfg.hilbert = HilbertDims(
                n_cav=_plain_number(h.get("n_cav", 20), "hilbert.n_cav", int),
                n_qubit=_plain_number(h.get("n_qubit", 2), "hilbert.n_qubit", int),
            )
        except ValueError as exc:
            raise ConfigError(str(exc), "hilbert") from None
    if "readout" in doc:
        cfg.readout = _readout(doc["readout"])
    exp = doc.get("experiment", {})
    if not isinstance(exp, dict):
        raise ConfigError("must be a mapping", "experiment")
    unknown = set(exp) - _EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", "experiment")
    cfg.kind = exp.get("kind")
    if "sweep" in exp:
        cfg.delays = _sweep(exp["sweep"], "experiment.sweep")
    if "alpha" in exp:
        cfg.alpha = _complex(exp["alpha"], "experiment.alpha")
    if "detuning" in exp:
        cfg.detuning = parse_quantity(exp["detuning"], "frequency", "experiment.detuning")
    if "state" in exp:
        if not isinstance(exp["state"], dict) or "type" not in exp["state"]:
            raise ConfigError("must be a mapping with a 'type'", "experiment.state")
        cfg.state = dict(exp["state"])
    if "grid" in exp:
        g = exp["grid"]
        if not isinstance(g, dict) or set(g) - {"range", "points"}:
            raise ConfigError("must be a mapping {range, points}", "experiment.grid")
        cfg.grid_range = _plain_number(g.get("range", 2.5), "experiment.grid.range")
        cfg.grid_points = _plain_number(g.get("points", 61), "experiment.grid.points", int, lo=2)
    out = doc.get("output", {})
    if not isinstance(out, dict) or set(out) - {"dir", "format"}:
        raise ConfigError("must be a mapping {dir, format}", "output")
    cfg.out_dir = out.get("dir")
    cfg.fmt = out.get("format", "csv")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", str(path)) from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", where) from None
    return parse_config(doc, str(path))
