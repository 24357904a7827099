"""Run outputs: diagnostics CSV, binary field snapshots, and the manifest.

The CSV column order is fixed and versioned in a leading comment line so
files from identical runs compare bit-for-bit.  Snapshots carry a short
text header followed by raw little-endian float64 data in C (axis-major)
order, with the component axis first for vector and tensor fields.
"""

from __future__ import annotations

import json
import os
from typing import List, Optional, Sequence

import numpy as np

from .diagnostics import DiagnosticsRecord
from .fields import ScalarField, TensorField, VectorField

CSV_MAGIC = "# heliflow diagnostics v1"
SNAPSHOT_MAGIC = "heliflow-snapshot v1"

_RESIDUAL_KEYS = ("div_E", "helmholtz", "flux", "euler_jacobi")


def csv_columns(dim: int) -> List[str]:
    return (["t", "mass", "energy", "helicity_omega"]
            + [f"helicity_E{i + 1}" for i in range(dim)]
            + ["ertel_range", "res_divE", "res_helmholtz", "res_flux",
               "res_euler_jacobi"])


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_diagnostics_csv(path, records: Sequence[DiagnosticsRecord], dim: int):
    """Write records in the fixed, versioned column order."""
    cols = csv_columns(dim)
    lines = [CSV_MAGIC, ",".join(cols)]
    for rec in records:
        if len(rec.helicity_Ei) != dim:
            raise ValueError("record dimensionality does not match the grid")
        row = [rec.t, rec.mass, rec.energy, rec.helicity_omega,
               *rec.helicity_Ei, rec.ertel_range,
               *(rec.residual_norms[k] for k in _RESIDUAL_KEYS)]
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_diagnostics_csv(path):
    """Read a diagnostics CSV; returns (column names, ndarray of rows)."""
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != CSV_MAGIC:
            raise ValueError(f"{path}: not a diagnostics CSV (bad magic line)")
        header = fh.readline().rstrip("\n").split(",")
        rows = [[float(v) for v in line.split(",")]
                for line in fh if line.strip()]
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
    return header, data


def write_snapshot(path, name: str, field, t: float):
    """Write one field snapshot: text header, then raw float64 payload."""
    if isinstance(field, ScalarField):
        payload = field.values
        components = 1
    elif isinstance(field, VectorField):
        payload = field.values
        components = field.grid.dim
    elif isinstance(field, TensorField):
        payload = field.values.reshape((-1,) + field.grid.n)
        components = field.grid.dim ** 2
    else:
        raise TypeError("snapshot expects a scalar, vector, or tensor field")
    grid = field.grid
    header = "\n".join([
        SNAPSHOT_MAGIC,
        f"field {name}",
        "time " + _fmt(t),
        f"dim {grid.dim}",
        "n " + " ".join(str(v) for v in grid.n),
        "length " + " ".join(_fmt(v) for v in grid.length),
        f"components {components}",
        "data",
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def read_snapshot(path):
    """Read a snapshot; returns (metadata dict, float64 array).

    The array shape is grid.n for scalars and (components,) + grid.n
    otherwise.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    end = raw.index(b"\ndata\n") + len(b"\ndata\n")
    lines = raw[:end].decode("ascii").splitlines()
    if lines[0] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file (bad magic line)")
    meta = {}
    for line in lines[1:-1]:
        key, _, rest = line.partition(" ")
        meta[key] = rest
    dim = int(meta["dim"])
    n = tuple(int(v) for v in meta["n"].split())
    components = int(meta["components"])
    meta_out = {
        "field": meta["field"],
        "time": float(meta["time"]),
        "dim": dim,
        "n": n,
        "length": tuple(float(v) for v in meta["length"].split()),
        "components": components,
    }
    count = components * int(np.prod(n))
    data = np.frombuffer(raw[end:], dtype="<f8", count=count).astype(float)
    shape = n if components == 1 else (components,) + n
    return meta_out, data.reshape(shape)


def snapshot_fields(state, names: Sequence[str]):
    """Map snapshot names to field objects from a simulation state."""
    table = {"rho": state.rho, "vel": state.vel, "F": state.F.F,
             "eta": state.eta}
    out = {}
    for name in names:
        field = table.get(name)
        if field is None:
            raise ValueError(f"state has no field '{name}' to snapshot")
        out[name] = field
    return out


def write_manifest(path, resolved: dict, extra: Optional[dict] = None):
    """Write the resolved scenario (plus run metadata) as JSON."""
    doc = {"scenario": resolved}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_run_outputs(out_dir, scenario, records, final_state, stats,
                      status="completed"):
    """Write CSV + manifest + requested snapshots into out_dir; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    csv_path = os.path.join(out_dir, "diagnostics.csv")
    write_diagnostics_csv(csv_path, records, scenario.grid.dim)
    paths["diagnostics"] = csv_path
    manifest_path = os.path.join(out_dir, "manifest.json")
    write_manifest(manifest_path, scenario.resolved, {
        "status": status,
        "final_time": final_state.t,
        "steps": stats.steps,
        "rejected_steps": stats.rejected_steps,
        "max_solver_iterations": stats.max_solver_iterations,
        "max_roundtrip_residual": stats.max_roundtrip_residual,
    })
    paths["manifest"] = manifest_path
    for name, field in snapshot_fields(final_state, scenario.snapshots).items():
        snap_path = os.path.join(out_dir, f"{name}.snap")
        write_snapshot(snap_path, name, field, final_state.t)
        paths[name] = snap_path
    return paths
