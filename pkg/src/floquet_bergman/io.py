"""Artifact writers: fixed-header CSV, summary JSON, JSON+binary containers.

Floats are written with 17 significant digits, which round-trips every
double, and rows are CRLF-terminated as RFC 4180 asks.  Identical inputs
therefore give byte-identical files.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

HEADERS = {
    "elliptic": ("re_z", "im_z", "re_val", "im_val", "tail_bound"),
    "bands": ("eta1", "eta2", "sheet_index", "re_lambda", "im_lambda"),
    "profile": ("eta1", "eta2", "norm"),
    "oracle": ("index", "re_lambda", "im_lambda"),
    "multiplier": ("eta_abs", "sup_abs_psi_minus_1", "inf_abs_psi"),
}

CONTAINER_VERSION = 1


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x == 0.0:
        return "0"          # also folds -0.0
    return format(x, ".17g")


def write_csv(path, kind: str, rows) -> Path:
    header = HEADERS[kind]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            if len(r) != len(header):
                raise ValueError(f"{kind} row has {len(r)} fields, expected {len(header)}")
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    """Header and float rows of a CSV written by write_csv."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return tuple(rows[0]), np.array([[float(v) for v in r] for r in rows[1:]])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def save_container(stem, meta: dict, array: np.ndarray):
    """Write ``stem.json`` (metadata) and ``stem.bin``: the complex array as
    little-endian float64 (re, im) pairs in row-major order."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    a = np.ascontiguousarray(np.asarray(array, dtype=np.complex128))
    raw = np.empty(a.shape + (2,), dtype="<f8")
    raw[..., 0], raw[..., 1] = a.real, a.imag
    bin_path = stem.with_suffix(".bin")
    bin_path.write_bytes(raw.tobytes(order="C"))
    header = {"version": CONTAINER_VERSION, "shape": list(a.shape),
              "dtype": "complex128-le-pairs", "order": "row-major",
              "data": bin_path.name, "meta": _jsonable(meta)}
    write_json(stem.with_suffix(".json"), header)
    return stem.with_suffix(".json"), bin_path


def load_container(stem):
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    raw = np.frombuffer(stem.with_name(header["data"]).read_bytes(), dtype="<f8")
    shape = tuple(header["shape"])
    raw = raw.reshape(shape + (2,))
    return header["meta"], raw[..., 0] + 1j * raw[..., 1]


def save_basis(stem, basis):
    meta = {"kind": "QuasiBasis", "eta": list(basis.eta), "N": basis.N,
            "kept": list(basis.kept), "condition": basis.condition,
            "family": basis.family.to_dict(),
            "obstacle": {"center": [basis.cell.obstacle.center.real,
                                    basis.cell.obstacle.center.imag],
                         "radius": basis.cell.obstacle.radius},
            "quadrature_order": basis.cell.order}
    return save_container(stem, meta, basis.coeff)


def save_field(stem, field):
    meta = {"kind": "FloquetField", "grid": field.grid.to_dict()}
    return save_container(stem, meta, field.values)


def load_field(stem):
    from .floquet import FloquetField, QuasimomentumGrid
    meta, values = load_container(stem)
    return FloquetField(QuasimomentumGrid(**meta["grid"]), values)
