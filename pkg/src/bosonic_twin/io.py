"""Reading and writing datasets, fit reports and Wigner grids.

Every writer here produces output its matching reader parses back
exactly: floats are written with ``repr``, which round-trips and does not
depend on the locale.
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from .measurement import Dataset, WignerGrid

__all__ = [
    "DatasetFormatError",
    "write_dataset",
    "read_dataset",
    "write_json",
    "read_json",
    "write_wigner",
    "read_wigner",
    "write_text_atomic",
]

_UNIT_SUFFIX = {"delay": "delay_s", "phase": "phase_rad"}
_SWEEP_FROM_COLUMN = {v: k for k, v in _UNIT_SUFFIX.items()}


class DatasetFormatError(ValueError):
    pass


def _fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else _fmt(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_text_atomic(path, text: str) -> Path:
    """Write via a temporary sibling so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def write_json(path, obj) -> Path:
    return write_text_atomic(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _dataset_meta(ds: Dataset) -> dict:
    meta = {k: v for k, v in sorted(ds.meta.items())}
    if ds.shots_per_point:
        meta["shots"] = ds.shots_per_point
    return meta


def write_dataset(path, ds: Dataset, fmt: str = "csv") -> Path:
    """Write a dataset as CSV (``# key=value`` metadata lines, header, rows) or JSON."""
    if fmt == "json":
        return write_json(
            path,
            {
                "sweep_name": ds.sweep_name,
                "sweep_values": ds.sweep_values,
                "probability": ds.trace,
                "shot_fraction": ds.shot_fraction,
                "meta": _dataset_meta(ds),
            },
        )
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    lines = [f"# {k}={_fmt(v) if isinstance(v, float) else v}" for k, v in _dataset_meta(ds).items()]
    cols = [_UNIT_SUFFIX.get(ds.sweep_name, ds.sweep_name), "probability"]
    if ds.shot_fraction is not None:
        cols.append("shot_fraction")
    lines.append(",".join(cols))
    for i in range(len(ds)):
        row = [ds.sweep_values[i], ds.trace[i]]
        if ds.shot_fraction is not None:
            row.append(ds.shot_fraction[i])
        lines.append(",".join(_fmt(v) for v in row))
    return write_text_atomic(path, "\n".join(lines) + "\n")


def _meta_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_dataset(path) -> Dataset:
    """Read a dataset written by :func:`write_dataset` (CSV or JSON, by content)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetFormatError(f"{path}: cannot read ({exc.strerror})") from None
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
            meta = dict(doc.get("meta", {}))
            return Dataset(
                doc["sweep_name"],
                np.array(doc["sweep_values"], dtype=float),
                np.array(doc["probability"], dtype=float),
                None if doc.get("shot_fraction") is None else np.array(doc["shot_fraction"], dtype=float),
                shots_per_point=meta.pop("shots", None),
                meta=meta,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{path}: malformed JSON dataset ({exc})") from None
    meta, header, rows = {}, None, []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if header is None and "=" in line:
                k, v = line[1:].split("=", 1)
                meta[k.strip()] = _meta_value(v.strip())
            continue
        if header is None:
            header = [c.strip() for c in line.split(",")]
            continue
        fields = line.split(",")
        if len(fields) != len(header):
            raise DatasetFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: non-numeric field") from None
    if header is None or len(header) < 2 or header[1] != "probability":
        raise DatasetFormatError(f"{path}: missing header '<sweep>,probability[,shot_fraction]'")
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    data = np.array(rows)
    shots = data[:, 2] if len(header) > 2 and header[2] == "shot_fraction" else None
    try:
        return Dataset(
            _SWEEP_FROM_COLUMN.get(header[0], header[0]),
            data[:, 0],
            data[:, 1],
            shots,
            shots_per_point=meta.pop("shots", None),
            meta=meta,
        )
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None


def write_wigner(path, grid: WignerGrid) -> Path:
    lines = ["re_alpha,im_alpha,W"]
    for i, y in enumerate(grid.im):
        for j, x in enumerate(grid.re):
            lines.append(f"{_fmt(x)},{_fmt(y)},{_fmt(grid.values[i, j])}")
    return write_text_atomic(path, "\n".join(lines) + "\n")


def read_wigner(path) -> WignerGrid:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if xs.size != ys.size or xs.size * ys.size != data.shape[0]:
        raise DatasetFormatError(f"{path}: not a square grid")
    values = data[:, 2].reshape(ys.size, xs.size)
    return WignerGrid((float(xs[0]), float(xs[-1])), (float(ys[0]), float(ys[-1])), xs.size, values)
