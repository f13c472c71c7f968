"""Run-directory artifacts: snapshots, CSV series and the manifest.

Everything textual is written with a fixed float format and sorted keys so
that reruns of one scenario are byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidStateError
from .geometry import GridSpec, HomothetyState, ProductState, RadialState, TorusState
from .report import _clean

MANIFEST = "manifest.json"
SNAP_MAGIC = "riccilab-snap/1"

ENTROPY_COLUMNS = ("t", "sigma", "W_plus", "dW_meas", "dW_pred", "defect_integral")
BLOWDOWN_COLUMNS = ("k", "s", "W_plus", "D_k", "profile_dist", "flags")
MONITOR_COLUMNS = ("t", "sup_rm", "min_R", "max_R")


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if np.isnan(x) else repr(float(x))
    if isinstance(x, (list, tuple)):
        return ";".join(str(v) for v in x)
    return str(x)


def csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])
    return buf.getvalue()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def json_text(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path


def _state_header(state):
    if isinstance(state, ProductState):
        h = _state_header(state.base)
        h["product"] = {"m": state.m, "flat_extent": state.flat_extent}
        return h
    g = state.grid
    grid = None
    if g is not None and g.kind != "none":
        grid = {
            "kind": g.kind,
            "resolution": list(g.resolution),
            "extent": list(g.extent),
            "stretch": g.stretch,
            "stretch_scale": g.stretch_scale,
        }
    h = {"backend": state.backend, "t": float(state.t), "grid": grid}
    if isinstance(state, HomothetyState):
        h.update(n=state.dim, K0=state.K0, c=state.c)
    if isinstance(state, RadialState):
        h["trust_radius"] = state.trust_radius
    return h


def _grid_from(h):
    if h is None:
        return None
    return GridSpec(h["kind"], tuple(h["resolution"]), tuple(h["extent"]), h["stretch"], h["stretch_scale"])


def write_snapshot(path, state):
    """One JSON header line followed by the raw little-endian float64 field."""
    base = state.base if isinstance(state, ProductState) else state
    data = b"" if isinstance(base, HomothetyState) else np.ascontiguousarray(base.phi, dtype="<f8").tobytes()
    header = _state_header(state)
    header["magic"] = SNAP_MAGIC
    header["bytes"] = len(data)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(_clean(header), sort_keys=True).encode() + b"\n")
        fh.write(data)
    return path


def read_snapshot(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        data = fh.read()
    if header.get("magic") != SNAP_MAGIC or len(data) != header["bytes"]:
        raise InvalidStateError(f"{path} is not a complete snapshot")
    grid = _grid_from(header["grid"])
    t = header["t"]
    if header["backend"] == "homothety":
        st = HomothetyState(header["n"], header["K0"], header["c"], t=t, grid=grid)
    else:
        phi = np.frombuffer(data, dtype="<f8").reshape(grid.shape).copy()
        if header["backend"] == "torus":
            st = TorusState(phi, grid, t=t)
        else:
            st = RadialState(phi, grid, t=t, trust_radius=header.get("trust_radius"))
    if "product" in header:
        st = ProductState(st, header["product"]["m"], header["product"]["flat_extent"])
    return st


def load_manifest(run_dir):
    path = Path(run_dir) / MANIFEST
    if not path.is_file():
        raise ConfigError(f"no {MANIFEST} in {run_dir}", "run_dir")
    return json.loads(path.read_text())
