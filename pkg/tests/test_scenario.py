"""Scenario schema validation, defaults, and initial-state assembly.

Each test feeds a small dict through scenario_from_dict; the shipped TOML
files are parsed at the end as a corpus check.  Expected numbers for the
shifted-velocity initial state use the single-mode closed form: for
u = sin(x1) e1 at unit density, sigma = -mu0 cos(x1) and
K = (1 + k_sign * mu0) sin(x1) e1.
"""

import copy
import pathlib

import numpy as np
import pytest

from heliflow import models, scenario
from heliflow.scenario import Scenario, ScenarioError, parse_scenario, scenario_from_dict

SCENARIO_DIR = pathlib.Path(__file__).resolve().parents[1] / "scenarios"


def capillary_dict(**over):
    data = {
        "grid": {"dim": 2, "n": 16},
        "model": {"kind": "capillary", "kappa": 1.0, "gamma": 2.0},
        "ic": {"rho": "1 + 0.1*sin(x1)", "vel": ["sin(x2)", "0"]},
    }
    data.update(over)
    return data


def inertia_dict(**model_over):
    model = {"kind": "inertia", "kappa": 1.0, "gamma": 2.0, "mu0": 0.25}
    model.update(model_over)
    return {
        "grid": {"dim": 2, "n": 16},
        "model": model,
        "ic": {"rho": "1", "vel": ["sin(x1)", "0"]},
    }


# ---------------------------------------------------------------------------
# defaults and resolution
# ---------------------------------------------------------------------------

def test_defaults_fill_in():
    sc = scenario_from_dict(capillary_dict())
    assert sc.grid.length == (2 * np.pi,) * 2
    assert sc.grid.backend == "spectral"
    assert sc.grid.dealias is True
    assert sc.seed == 0
    assert sc.every == 10
    assert sc.measure_substeps == 4
    assert sc.stepper.cfl == 0.4
    assert sc.stepper.dt_max == 0.1
    assert sc.stepper.t_end == 1.0
    assert sc.stepper.elliptic_tol == 1e-10
    assert sc.stepper.elliptic_max_iter == 200
    assert sc.model.lam == 0.0
    assert sc.output_dir is None
    assert sc.snapshots == ()
    assert sc.resolved["model"]["lam"] == 0.0
    assert sc.resolved["grid"]["n"] == [16, 16]


def test_scalar_grid_entries_broadcast():
    sc = scenario_from_dict(capillary_dict(grid={"dim": 2, "n": [16, 32],
                                                 "length": [6.0, 3.0]}))
    assert sc.grid.n == (16, 32)
    assert sc.grid.length == (6.0, 3.0)


def test_resolved_round_trips():
    data = capillary_dict(
        seed=7,
        params={"a": 0.5},
        model={"kind": "capillary", "kappa": 1.0, "gamma": 2.0, "lam": 0.01,
               "potential": "0.1*sin(x2)"},
        ic={"rho": "1 + a*sin(x1)", "vel": ["a*sin(x2)", "0"],
            "eta": "sin(x2)"},
        stepper={"cfl": 0.3, "t_end": 0.5},
        diagnostics={"every": 2},
        output={"dir": "out", "snapshots": ["rho", "eta"]},
    )
    first = scenario_from_dict(data).resolved
    second = scenario_from_dict(copy.deepcopy(first)).resolved
    assert first == second


# ---------------------------------------------------------------------------
# strict key checking
# ---------------------------------------------------------------------------

def test_unknown_keys_rejected_everywhere():
    with pytest.raises(ScenarioError, match="top-level key 'grdi'"):
        scenario_from_dict(capillary_dict(grdi={}))
    with pytest.raises(ScenarioError, match=r"'spacing' in \[grid\]"):
        scenario_from_dict(capillary_dict(grid={"dim": 2, "n": 16,
                                                "spacing": 0.1}))
    with pytest.raises(ScenarioError, match=r"'lamda' in \[model\]"):
        scenario_from_dict(capillary_dict(
            model={"kind": "capillary", "kappa": 1.0, "gamma": 2.0,
                   "lamda": 0.01}))
    with pytest.raises(ScenarioError, match=r"'velocity' in \[ic\]"):
        scenario_from_dict(capillary_dict(
            ic={"rho": "1", "vel": ["0", "0"], "velocity": ["0", "0"]}))
    with pytest.raises(ScenarioError, match=r"'dt' in \[stepper\]"):
        scenario_from_dict(capillary_dict(stepper={"dt": 0.1}))
    with pytest.raises(ScenarioError, match=r"'cadence' in \[diagnostics\]"):
        scenario_from_dict(capillary_dict(diagnostics={"cadence": 2}))
    with pytest.raises(ScenarioError, match=r"'path' in \[output\]"):
        scenario_from_dict(capillary_dict(output={"path": "out"}))


def test_model_kind_and_inapplicable_keys():
    with pytest.raises(ScenarioError, match="kind must be one of"):
        scenario_from_dict(capillary_dict(
            model={"kind": "euler", "kappa": 1.0, "gamma": 2.0}))
    with pytest.raises(ScenarioError, match="mu0 does not apply"):
        scenario_from_dict(capillary_dict(
            model={"kind": "capillary", "kappa": 1.0, "gamma": 2.0,
                   "mu0": 0.1}))
    data = inertia_dict(lam=0.01)
    with pytest.raises(ScenarioError, match="lam does not apply"):
        scenario_from_dict(data)
    with pytest.raises(ScenarioError, match="kappa does not apply"):
        scenario_from_dict({
            "grid": {"dim": 2, "n": 16},
            "model": {"kind": "sgn", "g": 9.8, "kappa": 1.0},
            "ic": {"h": "1", "vel": ["0", "0"]},
        })


def test_constructor_errors_become_scenario_errors():
    with pytest.raises(ScenarioError, match=r"\[model\]"):
        scenario_from_dict(inertia_dict(mu0=0.0))
    with pytest.raises(ScenarioError, match=r"\[grid\]"):
        scenario_from_dict(capillary_dict(grid={"dim": 2, "n": 7}))
    with pytest.raises(ScenarioError, match=r"\[stepper\]"):
        scenario_from_dict(capillary_dict(stepper={"cfl": 0.0}))


# ---------------------------------------------------------------------------
# field-level validation
# ---------------------------------------------------------------------------

def test_velocity_list_must_match_dimension():
    with pytest.raises(ScenarioError, match="list of 2 expression strings"):
        scenario_from_dict(capillary_dict(ic={"rho": "1", "vel": ["0"]}))


def test_undeclared_names_rejected():
    with pytest.raises(ScenarioError, match="undeclared name"):
        scenario_from_dict(capillary_dict(
            ic={"rho": "1 + b*sin(x1)", "vel": ["0", "0"]}))
    with pytest.raises(ScenarioError, match="undeclared name"):
        scenario_from_dict(capillary_dict(
            ic={"rho": "1 + sin(x3)", "vel": ["0", "0"]}))


def test_params_reserved_names_and_types():
    with pytest.raises(ScenarioError, match="shadows a reserved name"):
        scenario_from_dict(capillary_dict(params={"t": 1.0}))
    with pytest.raises(ScenarioError, match="shadows a reserved name"):
        scenario_from_dict(capillary_dict(params={"x7": 1.0}))
    with pytest.raises(ScenarioError, match="must be a number"):
        scenario_from_dict(capillary_dict(params={"a": True}))


def test_seed_validation():
    with pytest.raises(ScenarioError, match="seed"):
        scenario_from_dict(capillary_dict(seed=-1))
    with pytest.raises(ScenarioError, match="seed"):
        scenario_from_dict(capillary_dict(seed=True))


def test_k_sign_names():
    sc = scenario_from_dict(inertia_dict(k_sign="displayed"))
    assert sc.model.k_sign == -1
    assert sc.resolved["model"]["k_sign"] == "displayed"
    with pytest.raises(ScenarioError, match="k_sign"):
        scenario_from_dict(inertia_dict(k_sign="plus"))


def test_sgn_needs_two_dimensions_and_h_key():
    with pytest.raises(ScenarioError, match="requires a 2D grid"):
        scenario_from_dict({
            "grid": {"dim": 3, "n": 8},
            "model": {"kind": "sgn", "g": 9.8},
            "ic": {"h": "1", "vel": ["0", "0", "0"]},
        })
    with pytest.raises(ScenarioError, match=r"'rho' in \[ic\]"):
        scenario_from_dict({
            "grid": {"dim": 2, "n": 16},
            "model": {"kind": "sgn", "g": 9.8},
            "ic": {"rho": "1", "vel": ["0", "0"]},
        })
    sc = scenario_from_dict({
        "grid": {"dim": 2, "n": 16},
        "model": {"kind": "sgn", "g": 9.8},
        "ic": {"h": "1.3", "vel": ["0", "0"]},
    })
    assert isinstance(sc.model, models.SGNModel)
    assert sc.resolved["ic"]["h"] == "1.3"


def test_eta_snapshot_requires_eta_ic():
    with pytest.raises(ScenarioError, match="asks for eta"):
        scenario_from_dict(capillary_dict(
            output={"snapshots": ["eta"]}))
    with pytest.raises(ScenarioError, match="snapshots must be a list"):
        scenario_from_dict(capillary_dict(output={"snapshots": ["psi"]}))


# ---------------------------------------------------------------------------
# initial state
# ---------------------------------------------------------------------------

def test_initial_state_requires_positive_density():
    sc = scenario_from_dict(capillary_dict(
        ic={"rho": "sin(x1)", "vel": ["0", "0"]}))
    with pytest.raises(ScenarioError, match="positive everywhere"):
        sc.initial_state()


def test_initial_state_capillary_stores_velocity():
    sc = scenario_from_dict(capillary_dict(params={"a": 0.1},
                                           ic={"rho": "1 + a*sin(x1)",
                                               "vel": ["sin(x2)", "0"],
                                               "eta": "cos(x1)"}))
    state = sc.initial_state()
    x = sc.grid.coords()
    assert state.t == 0.0
    assert np.allclose(state.rho.values, 1.0 + 0.1 * np.sin(x[0]))
    assert np.allclose(state.vel.values[0], np.sin(x[1]))
    assert np.allclose(state.eta.values, np.cos(x[0]))
    assert np.allclose(state.F.F.values[0, 0], 1.0)
    assert np.allclose(state.F.F.values[0, 1], 0.0)


def test_initial_state_inertia_shifts_velocity():
    for name, sign in (("defining", 1.0), ("displayed", -1.0)):
        sc = scenario_from_dict(inertia_dict(k_sign=name))
        state = sc.initial_state()
        x = sc.grid.coords()
        expected = (1.0 + sign * 0.25) * np.sin(x[0])
        assert np.allclose(state.vel.values[0], expected, atol=1e-12)
        assert np.allclose(state.vel.values[1], 0.0, atol=1e-13)


def test_potential_reaches_model():
    sc = scenario_from_dict(capillary_dict(
        model={"kind": "capillary", "kappa": 1.0, "gamma": 2.0,
               "potential": "0.5*sin(x1)"}))
    V = models.potential_at(sc.model, sc.grid, 0.0)
    x = sc.grid.coords()
    assert np.allclose(V.values, 0.5 * np.sin(x[0]))


# ---------------------------------------------------------------------------
# file loading
# ---------------------------------------------------------------------------

def test_parse_scenario_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="not found"):
        parse_scenario(tmp_path / "absent.toml")


def test_parse_scenario_bad_toml(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[grid\ndim = 2\n")
    with pytest.raises(ScenarioError):
        parse_scenario(path)


def test_shipped_scenarios_parse():
    paths = sorted(SCENARIO_DIR.glob("*.toml"))
    assert paths, "scenario corpus missing"
    for path in paths:
        sc = parse_scenario(path)
        assert isinstance(sc, Scenario)
        state = sc.initial_state()
        assert state.rho.values.min() > 0
