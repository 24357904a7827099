"""Diagnostics CSV, binary snapshots, and the run manifest.

Round-trip exactness is the contract under test: %.17g is enough digits to
reproduce any float64, and snapshots carry raw little-endian float64, so a
write/read cycle must return bit-identical values.
"""

import json

import numpy as np
import pytest

from heliflow.diagnostics import DiagnosticsRecord
from heliflow.fields import Grid, ScalarField, TensorField, VectorField
from heliflow.outputs import (CSV_MAGIC, csv_columns, read_diagnostics_csv,
                              read_snapshot, snapshot_fields,
                              write_diagnostics_csv, write_manifest,
                              write_run_outputs, write_snapshot)


def make_record(t, dim=2):
    rng = np.random.default_rng(int(t * 1000) + dim)
    return DiagnosticsRecord(
        t=t,
        mass=rng.uniform(1, 2),
        energy=rng.uniform(0, 1) * (1 + 1e-16),
        helicity_omega=rng.standard_normal(),
        helicity_Ei=tuple(rng.standard_normal(dim)),
        ertel_range=rng.uniform(0, 3),
        residual_norms={"div_E": rng.uniform(0, 1e-9),
                        "helmholtz": rng.uniform(0, 1e-9),
                        "flux": rng.uniform(0, 1e-9),
                        "euler_jacobi": rng.uniform(0, 1e-9)})


# ---------------------------------------------------------------------------
# diagnostics CSV
# ---------------------------------------------------------------------------

def test_csv_columns_depend_on_dimension():
    assert csv_columns(2) == ["t", "mass", "energy", "helicity_omega",
                              "helicity_E1", "helicity_E2", "ertel_range",
                              "res_divE", "res_helmholtz", "res_flux",
                              "res_euler_jacobi"]
    assert "helicity_E3" in csv_columns(3)


def test_csv_round_trip_is_exact(tmp_path):
    records = [make_record(0.0, dim=3), make_record(0.125, dim=3),
               make_record(0.25, dim=3)]
    path = tmp_path / "diag.csv"
    write_diagnostics_csv(path, records, 3)
    header, data = read_diagnostics_csv(path)
    assert header == csv_columns(3)
    assert data.shape == (3, len(header))
    for row, rec in zip(data, records):
        expect = [rec.t, rec.mass, rec.energy, rec.helicity_omega,
                  *rec.helicity_Ei, rec.ertel_range,
                  rec.residual_norms["div_E"],
                  rec.residual_norms["helmholtz"],
                  rec.residual_norms["flux"],
                  rec.residual_norms["euler_jacobi"]]
        assert row.tolist() == expect        # bit-exact through %.17g


def test_csv_rewrite_is_byte_identical(tmp_path):
    records = [make_record(0.5, dim=2)]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_diagnostics_csv(a, records, 2)
    write_diagnostics_csv(b, records, 2)
    assert a.read_bytes() == b.read_bytes()


def test_csv_empty_records(tmp_path):
    path = tmp_path / "empty.csv"
    write_diagnostics_csv(path, [], 2)
    header, data = read_diagnostics_csv(path)
    assert header == csv_columns(2)
    assert data.shape == (0, len(header))


def test_csv_rejects_bad_magic_and_dim_mismatch(tmp_path):
    path = tmp_path / "notdiag.csv"
    path.write_text("t,mass\n0,1\n")
    with pytest.raises(ValueError, match="bad magic"):
        read_diagnostics_csv(path)
    with pytest.raises(ValueError, match="dimensionality"):
        write_diagnostics_csv(tmp_path / "x.csv", [make_record(0.0, dim=3)], 2)


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def test_snapshot_scalar_round_trip(tmp_path):
    grid = Grid.make(2, 8)
    rng = np.random.default_rng(0)
    field = ScalarField(grid, rng.standard_normal(grid.n))
    path = tmp_path / "rho.snap"
    write_snapshot(path, "rho", field, 0.375)
    meta, data = read_snapshot(path)
    assert meta == {"field": "rho", "time": 0.375, "dim": 2, "n": (8, 8),
                    "length": grid.length, "components": 1}
    assert data.shape == (8, 8)
    np.testing.assert_array_equal(data, field.values)


def test_snapshot_vector_and_tensor_round_trip(tmp_path):
    grid = Grid.make(3, 8)
    rng = np.random.default_rng(1)
    vec = VectorField(grid, rng.standard_normal((3,) + grid.n))
    ten = TensorField(grid, rng.standard_normal((3, 3) + grid.n))
    vpath, tpath = tmp_path / "vel.snap", tmp_path / "F.snap"
    write_snapshot(vpath, "vel", vec, 1.0)
    write_snapshot(tpath, "F", ten, 1.0)
    vmeta, vdata = read_snapshot(vpath)
    tmeta, tdata = read_snapshot(tpath)
    assert vmeta["components"] == 3 and vdata.shape == (3, 8, 8, 8)
    np.testing.assert_array_equal(vdata, vec.values)
    assert tmeta["components"] == 9 and tdata.shape == (9, 8, 8, 8)
    np.testing.assert_array_equal(tdata, ten.values.reshape((9,) + grid.n))


def test_snapshot_name_containing_data_is_safe(tmp_path):
    grid = Grid.make(2, 8)
    field = ScalarField(grid, np.zeros(grid.n))
    path = tmp_path / "odd.snap"
    write_snapshot(path, "data", field, 0.0)
    meta, data = read_snapshot(path)
    assert meta["field"] == "data"
    assert data.shape == (8, 8)


def test_snapshot_rejects_bad_magic_and_type(tmp_path):
    path = tmp_path / "junk.snap"
    path.write_bytes(b"something else\ndata\n" + b"\x00" * 64)
    with pytest.raises(ValueError, match="bad magic"):
        read_snapshot(path)
    with pytest.raises(TypeError, match="scalar, vector, or tensor"):
        write_snapshot(tmp_path / "x.snap", "x", np.zeros(4), 0.0)


def test_snapshot_fields_mapping():
    from heliflow.dynamics import SimulationState
    from heliflow.kinematics import DeformationField
    grid = Grid.make(2, 8)
    state = SimulationState(0.0, ScalarField(grid, np.ones(grid.n)),
                            VectorField(grid, np.zeros((2,) + grid.n)),
                            DeformationField.identity(grid))
    table = snapshot_fields(state, ["rho", "vel", "F"])
    assert table["F"] is state.F.F
    with pytest.raises(ValueError, match="no field 'eta'"):
        snapshot_fields(state, ["eta"])


# ---------------------------------------------------------------------------
# manifest and run outputs
# ---------------------------------------------------------------------------

def test_manifest_is_sorted_json(tmp_path):
    path = tmp_path / "manifest.json"
    write_manifest(path, {"b": 1, "a": 2}, {"status": "completed"})
    doc = json.loads(path.read_text())
    assert doc == {"scenario": {"b": 1, "a": 2}, "status": "completed"}
    text = path.read_text()
    assert text.index('"scenario"') < text.index('"status"')


def test_write_run_outputs_layout(tmp_path):
    from heliflow import dynamics, scenario
    sc = scenario.scenario_from_dict({
        "grid": {"dim": 2, "n": 16},
        "model": {"kind": "capillary", "kappa": 1.0, "gamma": 2.0},
        "ic": {"rho": "1 + 0.05*sin(x1)", "vel": ["0.1*sin(x2)", "0"],
               "eta": "sin(x1)"},
        "stepper": {"t_end": 0.05},
        "diagnostics": {"every": 2},
        "output": {"snapshots": ["rho", "vel", "F", "eta"]},
    })
    result = dynamics.run(sc)
    out = tmp_path / "run"
    paths = write_run_outputs(out, sc, result.records, result.final_state,
                              result.stats)
    assert sorted(paths) == ["F", "diagnostics", "eta", "manifest", "rho",
                             "vel"]
    header, data = read_diagnostics_csv(paths["diagnostics"])
    assert data.shape == (len(result.records), len(header))
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["status"] == "completed"
    assert doc["steps"] == result.stats.steps
    assert doc["final_time"] == result.final_state.t
    assert doc["scenario"] == sc.resolved
    meta, rho_data = read_snapshot(out / "rho.snap")
    np.testing.assert_array_equal(rho_data, result.final_state.rho.values)
    assert meta["time"] == result.final_state.t
