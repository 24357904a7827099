"""Coupled time integration and the elliptic velocity recovery.

The state carries (rho or h, a velocity variable, the deformation gradient,
an optional passive scalar).  Capillary models evolve u directly; inertia
models evolve the shifted velocity K and recover u each evaluation by
inverting rho u + k_sign grad(sigma(rho, div u)) = rho K with preconditioned
conjugate gradients.  Classical RK4 advances everything; a CFL rule with an
explicit dispersive bound picks dt.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import diagnostics, fields, kinematics, models
from .fields import ScalarField, TensorField, VectorField, divergence
from .kinematics import DeformationField
from .models import CapillaryModel, NonPositiveDensityError


class EllipticSolveError(RuntimeError):
    """Velocity recovery did not reach tolerance within the iteration cap."""


class IndefiniteOperatorError(RuntimeError):
    """The recovery operator lost positive definiteness for this state."""


class StepRejectedError(RuntimeError):
    """Post-step validation failed (positivity or orientation loss)."""


class SimulationAborted(RuntimeError):
    """Run stopped early; partial records and the last good state attached."""

    def __init__(self, message, records, state):
        super().__init__(message)
        self.records = records
        self.state = state


@dataclass
class SimulationState:
    t: float
    rho: ScalarField
    vel: VectorField
    F: DeformationField
    eta: Optional[ScalarField] = None

    @property
    def grid(self):
        return self.rho.grid


@dataclass
class StepperConfig:
    cfl: float = 0.4
    dt_max: float = 0.1
    t_end: float = 1.0
    elliptic_tol: float = 1e-10
    elliptic_max_iter: int = 200

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.dt_max <= 0 or self.t_end < 0:
            raise ValueError("dt_max must be positive and t_end non-negative")
        if self.elliptic_tol <= 0 or self.elliptic_tol > 1e-6:
            raise ValueError("elliptic_tol must lie in (0, 1e-6]")
        if self.elliptic_max_iter < 1:
            raise ValueError("elliptic_max_iter must be at least 1")


@dataclass
class RunStats:
    steps: int = 0
    rejected_steps: int = 0
    max_solver_iterations: int = 0
    max_solver_residual: float = 0.0
    max_roundtrip_residual: float = 0.0

    def absorb_solve(self, iterations, residual):
        self.max_solver_iterations = max(self.max_solver_iterations, iterations)
        self.max_solver_residual = max(self.max_solver_residual, residual)


@dataclass
class StateRate:
    """Time derivatives of the state fields, as bare arrays."""
    drho: np.ndarray
    dvel: np.ndarray
    dF: np.ndarray
    deta: Optional[np.ndarray]


# ---------------------------------------------------------------------------
# velocity recovery
# ---------------------------------------------------------------------------

def _recovery_operator(model, rho: ScalarField):
    """B(u) = rho u + k_sign grad(sigma), sigma = -mu rho^2 div u; SPD for k_sign=+1."""
    grid = rho.grid
    r = rho.values
    coeff = model.mu(r) * r ** 2

    def apply_B(uvals):
        div_u = divergence(VectorField(grid, uvals)).values
        sigma = -coeff * div_u
        grad_sigma = np.stack(fields._derivs(grid, sigma))
        return r * uvals + model.k_sign * grad_sigma

    return apply_B


def _recovery_preconditioner(model, rho: ScalarField):
    """Inverse of the constant-coefficient operator built from domain means."""
    grid = rho.grid
    r = rho.values
    rbar = float(r.mean())
    bbar = float((model.mu(r) * r ** 2).mean())
    ik = fields._spectral_ik(grid)
    k2 = sum((-(v ** 2)).real for v in ik)

    def apply_M(rvals):
        faxes = tuple(range(1, 1 + grid.dim))
        spec = np.fft.rfftn(rvals, axes=faxes)
        s = sum(ik[a] * spec[a] for a in range(grid.dim))
        denom = rbar + bbar * k2
        out = np.empty_like(spec)
        for a in range(grid.dim):
            out[a] = (spec[a] + bbar * ik[a] * s / denom) / rbar
        return np.fft.irfftn(out, s=grid.n, axes=faxes)

    return apply_M


def recover_velocity(model, rho: ScalarField, K: VectorField, *,
                     tol=1e-10, max_iter=200, x0: Optional[VectorField] = None,
                     stats: Optional[RunStats] = None) -> VectorField:
    """Solve K = u + k_sign grad(sigma(rho, div u))/rho for u.

    Preconditioned conjugate gradients on the symmetrized operator
    rho u + k_sign grad(sigma); converges when the relative residual drops
    below tol.  Raises IndefiniteOperatorError if a search direction shows
    non-positive curvature (the k_sign = -1 variant does this at high
    wavenumbers) and EllipticSolveError at the iteration cap.
    """
    models._check_density(rho)
    grid = rho.grid
    apply_B = _recovery_operator(model, rho)
    apply_M = _recovery_preconditioner(model, rho)
    b = rho.values * K.values
    bnorm = float(np.sqrt((b * b).sum()))
    if bnorm == 0.0:
        if stats is not None:
            stats.absorb_solve(0, 0.0)
        return VectorField(grid, np.zeros_like(K.values))
    x = (x0.values if x0 is not None else K.values).copy()
    rres = b - apply_B(x)
    rel = float(np.sqrt((rres * rres).sum())) / bnorm
    it = 0
    if rel > tol:
        z = apply_M(rres)
        p = z.copy()
        rz = float((rres * z).sum())
        for it in range(1, max_iter + 1):
            q = apply_B(p)
            pq = float((p * q).sum())
            if pq <= 0.0:
                raise IndefiniteOperatorError(
                    "recovery operator is not positive definite for this state "
                    f"(direction curvature {pq:.3e}); the k_sign=-1 variant is "
                    "expected to fail here")
            alpha = rz / pq
            x += alpha * p
            rres -= alpha * q
            rel = float(np.sqrt((rres * rres).sum())) / bnorm
            if rel <= tol:
                break
            z = apply_M(rres)
            rz_new = float((rres * z).sum())
            p = z + (rz_new / rz) * p
            rz = rz_new
        else:
            raise EllipticSolveError(
                f"velocity recovery stalled at relative residual {rel:.3e} "
                f"after {max_iter} iterations (tol {tol:.1e})")
    if stats is not None:
        stats.absorb_solve(it, rel)
    return VectorField(grid, x)


# ---------------------------------------------------------------------------
# right-hand side and stepping
# ---------------------------------------------------------------------------

def rhs(state: SimulationState, model, config: Optional[StepperConfig] = None,
        *, stats: Optional[RunStats] = None,
        u_hint: Optional[VectorField] = None):
    """Time derivatives of the state; returns (StateRate, recovered velocity)."""
    cfg = config or StepperConfig()
    grid = state.grid
    rho, vel = state.rho, state.vel
    if isinstance(model, CapillaryModel):
        u = vel
        dvel = models.capillary_momentum_rhs(model, rho, u, t=state.t).values
    else:
        u = recover_velocity(model, rho, vel, tol=cfg.elliptic_tol,
                             max_iter=cfg.elliptic_max_iter, x0=u_hint,
                             stats=stats)
        if stats is not None:
            back = models.inertia_K(model, rho, u)
            num = fields.l2norm(VectorField(grid, back.values - vel.values))
            den = max(fields.l2norm(vel), 1e-300)
            stats.max_roundtrip_residual = max(stats.max_roundtrip_residual,
                                               num / den)
        sigma = models.inertia_sigma(model, rho, u)
        dvel = models.inertia_momentum_K_rhs(model, rho, u, vel, sigma,
                                             t=state.t).values
    drho = -divergence(VectorField(grid, rho.values * u.values)).values
    dF = kinematics.evolve_F_rhs(state.F.F, u).values
    deta = None
    if state.eta is not None:
        deta = -fields.advect(u, state.eta).values
    if grid.backend == "spectral" and grid.dealias:
        drho = fields.dealias_array(grid, drho)
        dvel = fields.dealias_array(grid, dvel)
        dF = fields.dealias_array(grid, dF)
        if deta is not None:
            deta = fields.dealias_array(grid, deta)
    return StateRate(drho, dvel, dF, deta), u


def _blend(state: SimulationState, rate: StateRate, dt: float) -> SimulationState:
    eta = None
    if state.eta is not None:
        eta = ScalarField(state.grid, state.eta.values + dt * rate.deta)
    return SimulationState(
        t=state.t + dt,
        rho=ScalarField(state.grid, state.rho.values + dt * rate.drho),
        vel=VectorField(state.grid, state.vel.values + dt * rate.dvel),
        F=DeformationField(TensorField(state.grid, state.F.F.values + dt * rate.dF),
                           state.F.initialized_at),
        eta=eta)


def validate_state(state: SimulationState):
    """Positivity, orientation and finiteness checks; StepRejectedError on failure."""
    rho_min = state.rho.values.min()
    if not np.isfinite(rho_min) or rho_min <= 0:
        raise StepRejectedError(f"density positivity lost (min {rho_min:.6g})")
    det_min = kinematics.determinant(state.F.F).values.min()
    if not np.isfinite(det_min) or det_min <= 0:
        raise StepRejectedError(f"deformation orientation lost (min det {det_min:.6g})")
    for arr in (state.vel.values,) + ((state.eta.values,) if state.eta is not None else ()):
        if not np.isfinite(arr).all():
            raise StepRejectedError("non-finite values in the state")


def _rk4_any(state: SimulationState, model, dt: float,
             config: Optional[StepperConfig] = None,
             stats: Optional[RunStats] = None) -> SimulationState:
    try:
        k1, u1 = rhs(state, model, config, stats=stats)
        k2, u2 = rhs(_blend(state, k1, dt / 2), model, config, stats=stats, u_hint=u1)
        k3, u3 = rhs(_blend(state, k2, dt / 2), model, config, stats=stats, u_hint=u2)
        k4, _ = rhs(_blend(state, k3, dt), model, config, stats=stats, u_hint=u3)
    except (NonPositiveDensityError, kinematics.SingularDeformationError,
            fields.NonFiniteFieldError) as exc:
        raise StepRejectedError(f"stage evaluation failed: {exc}") from exc
    total = StateRate(
        (k1.drho + 2 * k2.drho + 2 * k3.drho + k4.drho) / 6.0,
        (k1.dvel + 2 * k2.dvel + 2 * k3.dvel + k4.dvel) / 6.0,
        (k1.dF + 2 * k2.dF + 2 * k3.dF + k4.dF) / 6.0,
        None if k1.deta is None else
        (k1.deta + 2 * k2.deta + 2 * k3.deta + k4.deta) / 6.0)
    new = _blend(state, total, dt)
    validate_state(new)
    return new


def rk4_step(state: SimulationState, model, dt: float,
             config: Optional[StepperConfig] = None,
             stats: Optional[RunStats] = None) -> SimulationState:
    """One classical RK4 step; raises StepRejectedError if the result is invalid."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return _rk4_any(state, model, dt, config, stats)


# RK4 keeps purely oscillatory modes stable up to |omega| dt <= 2*sqrt(2).
_RK4_IMAG_LIMIT = 2.8


def cfl_dt(state: SimulationState, model, config: StepperConfig,
           u: Optional[VectorField] = None) -> float:
    """Advective/gravity-wave bound, plus the quadratic capillary bound when lam > 0."""
    grid = state.grid
    if u is None:
        u = state.vel if isinstance(model, CapillaryModel) else \
            recover_velocity(model, state.rho, state.vel,
                             tol=config.elliptic_tol,
                             max_iter=config.elliptic_max_iter)
    speed = float(np.sqrt(np.einsum("i...,i...->...", u.values, u.values).max()))
    c_max = float(np.sqrt(model.eos.sound_speed_sq(state.rho.values).max()))
    dx = min(grid.spacing)
    bound = dx / (speed + c_max)
    if isinstance(model, CapillaryModel) and model.lam > 0:
        # linearized dispersive branch: omega ~ sqrt(lam rho) k^2, k_max = pi/dx
        rho_max = float(state.rho.values.max())
        bound = min(bound, _RK4_IMAG_LIMIT * dx ** 2
                    / (np.pi ** 2 * np.sqrt(model.lam * rho_max)))
    return min(config.cfl * bound, config.dt_max)


# ---------------------------------------------------------------------------
# frozen-velocity deformation transport
# ---------------------------------------------------------------------------

def transport_deformation(u: VectorField, t_end: float, *, cfl=0.4, dt=None,
                          callback: Optional[Callable] = None) -> TensorField:
    """Transport F from the identity in a frozen velocity field to t_end.

    callback(t, F) runs after initialization and after every step; the final
    F is returned.  dt defaults to the advective CFL bound and is shrunk to
    land exactly on t_end.
    """
    grid = u.grid
    speed = float(np.sqrt(np.einsum("i...,i...->...", u.values, u.values).max()))
    if dt is None:
        dt = cfl * min(grid.spacing) / max(speed, 1e-30)
    F = fields.identity_tensor(grid)
    t = 0.0
    if callback is not None:
        callback(t, F)
    while t < t_end - 1e-12 * max(1.0, t_end):
        step = min(dt, t_end - t)
        F = transport_step(F, u, step)
        t += step
        if callback is not None:
            callback(t, F)
    return F


def transport_step(F: TensorField, u: VectorField, dt: float) -> TensorField:
    """Single explicit RK4 step of deformation transport in a frozen field.

    dt may be negative, which steps the transport backwards; useful for
    centered measurement pairs around a stored F.
    """
    grid = F.grid

    def f(vals):
        out = kinematics.evolve_F_rhs(TensorField(grid, vals), u).values
        if grid.backend == "spectral" and grid.dealias:
            out = fields.dealias_array(grid, out)
        return out

    k1 = f(F.values)
    k2 = f(F.values + dt / 2 * k1)
    k3 = f(F.values + dt / 2 * k2)
    k4 = f(F.values + dt * k3)
    return TensorField(grid, F.values + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))


# ---------------------------------------------------------------------------
# scenario-driven run loop
# ---------------------------------------------------------------------------

@dataclass
class Sample:
    """A diagnostics sampling event with its centered measurement pair."""
    index: int
    state: SimulationState
    u: VectorField
    minus: SimulationState
    plus: SimulationState
    record: "diagnostics.DiagnosticsRecord" = None


@dataclass
class RunResult:
    records: list
    final_state: SimulationState
    stats: RunStats


def run(scenario, observer: Optional[Callable[[Sample], None]] = None) -> RunResult:
    """Integrate a scenario to t_end, sampling diagnostics at its cadence.

    Raises SimulationAborted (records so far attached) if a step fails after
    one dt halving or the velocity recovery breaks down.
    """
    state = scenario.initial_state()
    model = scenario.model
    cfg = scenario.stepper
    stats = RunStats()
    records = []

    def sample(idx, state, u):
        dt_probe = cfl_dt(state, model, cfg, u) / scenario.measure_substeps
        minus = _rk4_any(state, model, -dt_probe, cfg, stats)
        plus = _rk4_any(state, model, dt_probe, cfg, stats)
        rec = diagnostics.sample_record(state, u, minus, plus, model)
        records.append(rec)
        if observer is not None:
            observer(Sample(idx, state, u, minus, plus, rec))

    def recovered(state, hint=None):
        if isinstance(model, CapillaryModel):
            return state.vel
        return recover_velocity(model, state.rho, state.vel,
                                tol=cfg.elliptic_tol,
                                max_iter=cfg.elliptic_max_iter,
                                x0=hint, stats=stats)

    try:
        u = recovered(state)
        sample(0, state, u)
        step = 0
        eps = 1e-12 * max(1.0, cfg.t_end)
        while state.t < cfg.t_end - eps:
            dt = min(cfl_dt(state, model, cfg, u), cfg.t_end - state.t)
            try:
                new = rk4_step(state, model, dt, cfg, stats)
            except StepRejectedError:
                stats.rejected_steps += 1
                new = rk4_step(state, model, dt / 2, cfg, stats)
            state = new
            step += 1
            stats.steps = step
            u = recovered(state, hint=u)
            if step % scenario.every == 0 or state.t >= cfg.t_end - eps:
                sample(step, state, u)
    except (StepRejectedError, EllipticSolveError, IndefiniteOperatorError,
            NonPositiveDensityError, kinematics.SingularDeformationError) as exc:
        raise SimulationAborted(str(exc), records, state) from exc
    return RunResult(records, state, stats)
