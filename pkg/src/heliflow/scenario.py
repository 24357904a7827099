"""Scenario files: strict schema, validation, and initial-state construction.

A scenario is a TOML file with sections [grid], [model], [ic], [params],
[stepper], [diagnostics], [output] and an optional top-level `seed`.
Unknown keys anywhere are rejected so typos cannot silently change a run.
Initial conditions are expression strings over x1..x_dim, t, pi and the
names declared under [params].

The resolved scenario (all defaults filled in) is a plain dict that writes
into the run manifest and parses back to an identical scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import dynamics, expressions, models
from .fields import Grid, VectorField
from .kinematics import DeformationField


class ScenarioError(ValueError):
    """Invalid scenario content; message names the offending key."""


_K_SIGN = {"defining": 1, "displayed": -1}
_K_SIGN_NAMES = {v: k for k, v in _K_SIGN.items()}


@dataclass
class Scenario:
    grid: Grid
    model: object
    ic_rho: "expressions.Expr"
    ic_vel: tuple
    ic_eta: Optional["expressions.Expr"]
    params: dict
    stepper: dynamics.StepperConfig
    every: int
    measure_substeps: int
    seed: int
    output_dir: Optional[str]
    snapshots: tuple
    resolved: dict

    def initial_state(self) -> dynamics.SimulationState:
        """Evaluate the IC expressions at t = 0 and assemble the state.

        For inertia-family models the velocity expressions define the
        physical velocity u; the stored evolution variable is the shifted
        velocity K derived from it.
        """
        grid = self.grid
        rho = expressions.eval_on_grid(self.ic_rho, grid, self.params, 0.0)
        if rho.values.min() <= 0:
            raise ScenarioError("ic.rho must be positive everywhere at t = 0")
        uvals = np.stack([
            expressions.eval_on_grid(e, grid, self.params, 0.0).values
            for e in self.ic_vel])
        u = VectorField(grid, uvals)
        if isinstance(self.model, models.CapillaryModel):
            vel = u
        else:
            vel = models.inertia_K(self.model, rho, u)
        eta = None
        if self.ic_eta is not None:
            eta = expressions.eval_on_grid(self.ic_eta, grid, self.params, 0.0)
        return dynamics.SimulationState(0.0, rho, vel,
                                        DeformationField.identity(grid), eta)


def _section(data, name, allowed, required=()):
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ScenarioError(f"[{name}] must be a table")
    for key in sec:
        if key not in allowed:
            raise ScenarioError(f"unknown key '{key}' in [{name}]")
    for key in required:
        if key not in sec:
            raise ScenarioError(f"missing required key '{key}' in [{name}]")
    return sec


def _real(sec, name, key, default=None):
    if key not in sec:
        if default is None:
            raise ScenarioError(f"missing required key '{key}' in [{name}]")
        return float(default)
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"[{name}].{key} must be a number")
    return float(v)


def _int(sec, name, key, default=None):
    if key not in sec:
        if default is None:
            raise ScenarioError(f"missing required key '{key}' in [{name}]")
        return int(default)
    v = sec[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(f"[{name}].{key} must be an integer")
    return v


def _expr(src, where):
    if not isinstance(src, str):
        raise ScenarioError(f"{where} must be an expression string")
    try:
        return expressions.parse_expression(src)
    except expressions.ExpressionError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def _check_names(expr, dim, params, where):
    allowed = {f"x{i + 1}" for i in range(dim)} | {"t", "pi"} | set(params)
    extra = expressions.free_names(expr) - allowed
    if extra:
        raise ScenarioError(
            f"{where} uses undeclared name(s) {sorted(extra)}; declare them "
            "under [params] or use coordinates x1..x%d and t" % dim)


def scenario_from_dict(data: dict, source="<dict>") -> Scenario:
    """Validate a parsed scenario mapping and build the Scenario object."""
    top_allowed = {"seed", "grid", "model", "ic", "params", "stepper",
                   "diagnostics", "output"}
    for key in data:
        if key not in top_allowed:
            raise ScenarioError(f"unknown top-level key '{key}'")

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("seed must be a non-negative integer")

    gsec = _section(data, "grid", {"dim", "n", "length", "backend", "dealias"},
                    required=("dim", "n"))
    dim = _int(gsec, "grid", "dim")
    n_raw = gsec["n"]
    if isinstance(n_raw, int) and not isinstance(n_raw, bool):
        n = (n_raw,) * dim
    elif isinstance(n_raw, list) and len(n_raw) == dim and \
            all(isinstance(v, int) and not isinstance(v, bool) for v in n_raw):
        n = tuple(n_raw)
    else:
        raise ScenarioError("[grid].n must be an integer or a list of dim integers")
    length_raw = gsec.get("length", 2 * math.pi)
    if isinstance(length_raw, (int, float)) and not isinstance(length_raw, bool):
        length = (float(length_raw),) * dim
    elif isinstance(length_raw, list) and len(length_raw) == dim:
        length = tuple(float(v) for v in length_raw)
    else:
        raise ScenarioError("[grid].length must be a number or a list of dim numbers")
    backend = gsec.get("backend", "spectral")
    dealias = gsec.get("dealias", True)
    if not isinstance(dealias, bool):
        raise ScenarioError("[grid].dealias must be a boolean")
    try:
        grid = Grid(dim=dim, n=n, length=length, backend=backend, dealias=dealias)
    except ValueError as exc:
        raise ScenarioError(f"[grid]: {exc}") from exc

    msec = _section(data, "model",
                    {"kind", "kappa", "gamma", "lam", "mu0", "mu_exp", "g",
                     "k_sign", "potential"}, required=("kind",))
    kind = msec.get("kind")
    if kind not in ("capillary", "inertia", "sgn"):
        raise ScenarioError("[model].kind must be one of capillary, inertia, sgn")

    psec = data.get("params", {})
    if not isinstance(psec, dict):
        raise ScenarioError("[params] must be a table")
    params = {}
    for key, val in psec.items():
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ScenarioError(f"[params].{key} must be a number")
        if not key.isidentifier() or key in ("t", "pi") or \
                (key.startswith("x") and key[1:].isdigit()):
            raise ScenarioError(f"[params].{key} shadows a reserved name")
        params[key] = float(val)

    k_sign_name = msec.get("k_sign", "defining")
    if k_sign_name not in _K_SIGN:
        raise ScenarioError("[model].k_sign must be 'defining' or 'displayed'")
    pot_src = msec.get("potential")
    pot_expr = None
    if pot_src is not None:
        pot_expr = _expr(pot_src, "[model].potential")
        _check_names(pot_expr, dim, params, "[model].potential")

    def forbid(keys):
        for key in keys:
            if key in msec:
                raise ScenarioError(f"[model].{key} does not apply to kind '{kind}'")

    def potential_fn():
        if pot_expr is None:
            return None
        return lambda t: expressions.eval_on_grid(pot_expr, grid, params, t)

    try:
        if kind == "capillary":
            forbid(("mu0", "mu_exp", "g", "k_sign"))
            eos = models.PolytropicEOS(_real(msec, "model", "kappa"),
                                       _real(msec, "model", "gamma"))
            model = models.CapillaryModel(eos=eos,
                                          lam=_real(msec, "model", "lam", 0.0),
                                          V_time=potential_fn())
        elif kind == "inertia":
            forbid(("lam", "g"))
            eos = models.PolytropicEOS(_real(msec, "model", "kappa"),
                                       _real(msec, "model", "gamma"))
            model = models.InertiaModel(eos=eos, mu0=_real(msec, "model", "mu0"),
                                        mu_exp=_real(msec, "model", "mu_exp", 0.0),
                                        k_sign=_K_SIGN[k_sign_name],
                                        V_time=potential_fn())
        else:
            forbid(("lam", "mu0", "mu_exp", "kappa", "gamma"))
            if dim != 2:
                raise ScenarioError("model 'sgn' requires a 2D grid")
            model = models.SGNModel(g=_real(msec, "model", "g"),
                                    k_sign=_K_SIGN[k_sign_name],
                                    V_time=potential_fn())
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"[model] {exc}") from exc

    rho_key = "h" if kind == "sgn" else "rho"
    isec = _section(data, "ic", {rho_key, "vel", "eta"},
                    required=(rho_key, "vel"))
    ic_rho = _expr(isec[rho_key], f"[ic].{rho_key}")
    _check_names(ic_rho, dim, params, f"[ic].{rho_key}")
    vel_raw = isec["vel"]
    if not isinstance(vel_raw, list) or len(vel_raw) != dim:
        raise ScenarioError(f"[ic].vel must be a list of {dim} expression strings")
    ic_vel = tuple(_expr(src, f"[ic].vel[{i}]") for i, src in enumerate(vel_raw))
    for i, e in enumerate(ic_vel):
        _check_names(e, dim, params, f"[ic].vel[{i}]")
    ic_eta = None
    if "eta" in isec:
        ic_eta = _expr(isec["eta"], "[ic].eta")
        _check_names(ic_eta, dim, params, "[ic].eta")

    ssec = _section(data, "stepper", {"cfl", "dt_max", "t_end", "elliptic_tol",
                                      "elliptic_max_iter"})
    try:
        stepper = dynamics.StepperConfig(
            cfl=_real(ssec, "stepper", "cfl", 0.4),
            dt_max=_real(ssec, "stepper", "dt_max", 0.1),
            t_end=_real(ssec, "stepper", "t_end", 1.0),
            elliptic_tol=_real(ssec, "stepper", "elliptic_tol", 1e-10),
            elliptic_max_iter=_int(ssec, "stepper", "elliptic_max_iter", 200))
    except ValueError as exc:
        raise ScenarioError(f"[stepper]: {exc}") from exc

    dsec = _section(data, "diagnostics", {"every", "measure_substeps"})
    every = _int(dsec, "diagnostics", "every", 10)
    substeps = _int(dsec, "diagnostics", "measure_substeps", 4)
    if every < 1 or substeps < 1:
        raise ScenarioError("[diagnostics] cadence values must be >= 1")

    osec = _section(data, "output", {"dir", "snapshots"})
    output_dir = osec.get("dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ScenarioError("[output].dir must be a string")
    snaps_raw = osec.get("snapshots", [])
    known_fields = {"rho", "vel", "F", "eta"}
    if not isinstance(snaps_raw, list) or \
            any(s not in known_fields for s in snaps_raw):
        raise ScenarioError(f"[output].snapshots must be a list drawn from "
                            f"{sorted(known_fields)}")
    if "eta" in snaps_raw and ic_eta is None:
        raise ScenarioError("[output].snapshots asks for eta but [ic].eta is absent")

    resolved = {
        "seed": seed,
        "grid": {"dim": dim, "n": list(n), "length": list(length),
                 "backend": grid.backend, "dealias": dealias},
        "model": _resolved_model(kind, msec, k_sign_name, pot_src),
        "ic": {rho_key: expressions.to_source(ic_rho),
               "vel": [expressions.to_source(e) for e in ic_vel],
               **({"eta": expressions.to_source(ic_eta)} if ic_eta else {})},
        "params": dict(sorted(params.items())),
        "stepper": {"cfl": stepper.cfl, "dt_max": stepper.dt_max,
                    "t_end": stepper.t_end, "elliptic_tol": stepper.elliptic_tol,
                    "elliptic_max_iter": stepper.elliptic_max_iter},
        "diagnostics": {"every": every, "measure_substeps": substeps},
        "output": {**({"dir": output_dir} if output_dir is not None else {}),
                   "snapshots": list(snaps_raw)},
    }

    return Scenario(grid=grid, model=model, ic_rho=ic_rho, ic_vel=ic_vel,
                    ic_eta=ic_eta, params=params, stepper=stepper, every=every,
                    measure_substeps=substeps, seed=seed, output_dir=output_dir,
                    snapshots=tuple(snaps_raw), resolved=resolved)


def _resolved_model(kind, msec, k_sign_name, pot_src):
    out = {"kind": kind}
    if kind in ("capillary", "inertia"):
        out["kappa"] = float(msec["kappa"])
        out["gamma"] = float(msec["gamma"])
    if kind == "capillary":
        out["lam"] = float(msec.get("lam", 0.0))
    if kind == "inertia":
        out["mu0"] = float(msec["mu0"])
        out["mu_exp"] = float(msec.get("mu_exp", 0.0))
    if kind == "sgn":
        out["g"] = float(msec["g"])
    if kind in ("inertia", "sgn"):
        out["k_sign"] = k_sign_name
    if pot_src is not None:
        out["potential"] = pot_src
    return out


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario TOML file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return scenario_from_dict(data, source=str(path))
