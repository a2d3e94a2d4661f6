"""Field snapshot formats.

CSV: header ``t,x1..xd,v1..vd,value``, one row per phase-space node in C
order, floats written with ``%.17g`` so the round trip is exact.

Binary: a flat little-endian float64 array (``<f8``, C order) plus a JSON
sidecar ``<name>.json`` with ``shape``, ``t``, ``d``, ``x_box``, ``v_box``,
``nx``, ``nv``, ``boundary`` and ``relativistic``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .phase_space import PhaseSpaceGrid


def _coordinate_columns(grid: PhaseSpaceGrid):
    axes = list(grid.x_nodes) + list(grid.v_nodes)
    mesh = np.meshgrid(*axes, indexing="ij")
    return [m.ravel() for m in mesh]


def snapshot_header(d):
    return ["t"] + [f"x{i + 1}" for i in range(d)] + [f"v{i + 1}" for i in range(d)] + ["value"]


def write_snapshot_csv(path, values, grid: PhaseSpaceGrid, t):
    """Write one time slice (shape ``grid.slice_shape``) as CSV."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.slice_shape:
        raise ValueError(f"expected shape {grid.slice_shape}, got {values.shape}")
    cols = _coordinate_columns(grid)
    table = np.column_stack([np.full(values.size, float(t))] + cols + [values.ravel()])
    np.savetxt(path, table, fmt="%.17g", delimiter=",",
               header=",".join(snapshot_header(grid.d)), comments="")


def read_snapshot_csv(path, grid: PhaseSpaceGrid):
    """Read a CSV snapshot written for ``grid``; returns ``(t, values)``."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header != snapshot_header(grid.d):
        raise ValueError(f"unexpected snapshot header {header}")
    if table.shape[0] != int(np.prod(grid.slice_shape)):
        raise ValueError("snapshot row count does not match the grid")
    ts = np.unique(table[:, 0])
    if ts.size != 1:
        raise ValueError("snapshot mixes several times")
    return float(ts[0]), table[:, -1].reshape(grid.slice_shape)


def write_snapshot_binary(path, values, grid: PhaseSpaceGrid, t):
    """Write ``values`` as raw ``<f8`` with a JSON sidecar next to it."""
    path = Path(path)
    values = np.ascontiguousarray(values, dtype="<f8")
    values.tofile(path)
    meta = {
        "dtype": "<f8", "order": "C", "shape": list(values.shape), "t": float(t),
        "d": grid.d, "x_box": [list(b) for b in grid.x_box], "v_box": [list(b) for b in grid.v_box],
        "nx": list(grid.nx), "nv": list(grid.nv),
        "boundary": grid.boundary, "relativistic": grid.relativistic,
    }
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar


def read_snapshot_binary(path):
    """Read a binary snapshot; returns ``(t, values, meta)``."""
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    values = np.fromfile(path, dtype=meta["dtype"]).reshape(meta["shape"])
    return meta["t"], values.astype(float), meta
