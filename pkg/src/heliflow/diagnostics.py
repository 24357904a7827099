"""Conserved-quantity diagnostics and transport-law residuals.

Everything here is read-only over states.  The quantities measured:

* helicity integrals int K . L dV for L a divergence-free field (the curl of
  the evolved velocity variable, or a scaled cofactor column of F),
* the pointwise flux-form residual of d/dt (K . L) + div((u K^T + (G -
  |u|^2/2) I) L), whose vanishing is the differential form of helicity
  conservation,
* Lie-type transport residuals for one-forms (circulation covectors) and
  two-form proxies (vorticity-like vectors),
* Ertel-type material invariants (grad eta . L)/rho built from an advected
  scalar,
* global mass and energy budgets.

Time derivatives are never computed internally; callers supply a pair of
states bracketing the evaluation time and residuals use the centered
difference, so every function stays pure.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import fields, kinematics, models
from .fields import (ScalarField, VectorField, curl, divergence, dot,
                     gradient, integrate, jacobian, linf, matvec, matvec_t)
from .kinematics import ScaledCofactorBasis, scaled_cofactor


class DivergenceWarning(UserWarning):
    """The field paired with K in a helicity integral is not discretely solenoidal."""


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    energy: float
    helicity_omega: float
    helicity_Ei: Tuple[float, ...]
    ertel_range: float
    residual_norms: Dict[str, float]

    def __post_init__(self):
        vals = [self.t, self.mass, self.energy, self.helicity_omega,
                self.ertel_range, *self.helicity_Ei,
                *self.residual_norms.values()]
        if not np.isfinite(vals).all():
            raise ValueError("diagnostics record contains non-finite entries")


@dataclass(frozen=True)
class GeneralizedVorticity:
    Omega: VectorField


def helicity(K: VectorField, L: VectorField) -> float:
    """int K . L dV.  Warns if L is measurably non-solenoidal.

    The integral is an invariant only when L is divergence-free and
    transported by the Helmholtz law; transported cofactor columns pick up
    scheme-level divergence, so violations warn instead of raising.  The
    threshold is 1e-6 * sup|L| per unit length.
    """
    fields._require_same_grid(K, L)
    div_norm = linf(divergence(L))
    if div_norm > 1e-6 * max(linf(L), 1e-300):
        warnings.warn("field paired in a helicity integral is not discretely "
                      "divergence-free", DivergenceWarning, stacklevel=2)
    return integrate(dot(K, L))


def generalized_vorticity(K: VectorField) -> GeneralizedVorticity:
    """curl K.  Three-dimensional only; planar flows have no useful pseudo-
    scalar helicity (it vanishes by orthogonality), so dim=2 raises and
    points at covariant_components instead."""
    if K.grid.dim != 3:
        raise ValueError(
            "generalized vorticity is a 3D diagnostic; for planar models the "
            "helicity of curl K is trivially zero, track the covariant "
            "components K . E_i instead (covariant_components)")
    return GeneralizedVorticity(curl(K))


def _midpoint_scalar(a: ScalarField, b: ScalarField) -> ScalarField:
    return ScalarField(a.grid, 0.5 * (a.values + b.values))


def _midpoint_vector(a: VectorField, b: VectorField) -> VectorField:
    return VectorField(a.grid, 0.5 * (a.values + b.values))


def _choose_L(state, which):
    """L for the flux law: 'vorticity' (curl of the velocity variable) or a
    scaled-cofactor column index."""
    if which == "vorticity":
        if state.grid.dim != 3:
            raise ValueError("the vorticity choice needs dim = 3; use a "
                             "cofactor column index in 2D")
        return curl(state.vel)
    i = int(which)
    return scaled_cofactor(state.F.F).E[i]


def helicity_flux_residual(state_prev, state_next, model, which="vorticity",
                           *, u_mid: Optional[VectorField] = None,
                           elliptic_tol=1e-10) -> ScalarField:
    """Pointwise residual of the helicity density conservation law.

    (K.L)|next - (K.L)|prev over dt, plus div(u (K.L) + (G - |u|^2/2) L)
    evaluated at the arithmetic midpoint state.  G is the momentum head:
    delta W/delta rho + V for capillary models, Etilde_rho + V for inertia
    models.  `which` selects L as in _choose_L.  For inertia models the
    midpoint velocity is recovered internally unless supplied.
    """
    grid = state_prev.grid
    if grid is not state_next.grid and grid != state_next.grid:
        raise fields.GridMismatchError("flux residual needs both states on one grid")
    dt = state_next.t - state_prev.t
    if dt <= 0:
        raise ValueError("state_next must be strictly later than state_prev")

    L_prev = _choose_L(state_prev, which)
    L_next = _choose_L(state_next, which)
    density_prev = dot(state_prev.vel, L_prev).values
    density_next = dot(state_next.vel, L_next).values
    ddt = (density_next - density_prev) / dt

    t_mid = 0.5 * (state_prev.t + state_next.t)
    rho_mid = _midpoint_scalar(state_prev.rho, state_next.rho)
    K_mid = _midpoint_vector(state_prev.vel, state_next.vel)
    F_mid = fields.TensorField(grid, 0.5 * (state_prev.F.F.values
                                            + state_next.F.F.values))
    if which == "vorticity":
        L_mid = curl(K_mid)
    else:
        L_mid = scaled_cofactor(F_mid).E[int(which)]

    if isinstance(model, models.CapillaryModel):
        u = K_mid if u_mid is None else u_mid
        G = models.capillary_delta_W(model, rho_mid)
    else:
        if u_mid is None:
            from . import dynamics
            u_mid = dynamics.recover_velocity(model, rho_mid, K_mid,
                                              tol=elliptic_tol)
        u = u_mid
        sigma = models.inertia_sigma(model, rho_mid, u)
        G = models.inertia_Etilde_rho(model, rho_mid, sigma)
    V = models.potential_at(model, grid, t_mid)
    head = G.values + (V.values if V is not None else 0.0) \
        - 0.5 * dot(u, u).values
    flux = u.values * dot(K_mid, L_mid).values + head * L_mid.values
    return ScalarField(grid, ddt + divergence(VectorField(grid, flux)).values)


def lie_d1(C: VectorField, u: VectorField, DC_Dt: VectorField) -> VectorField:
    """One-form transport derivative: DC/Dt + (du/dx)^T C.

    Vanishes when C is the pullback-constant covector field (for example the
    gradient of an advected scalar).  The caller supplies the material
    derivative, typically by centered differences of two states plus
    advection.
    """
    fields._require_same_grid(C, u, DC_Dt)
    return VectorField(C.grid, DC_Dt.values + matvec_t(jacobian(u), C).values)


def lie_d2(w: VectorField, u: VectorField, Dw_Dt: VectorField) -> VectorField:
    """Vector-density transport derivative: Dw/Dt + w div u - (du/dx) w.

    Vanishes for Helmholtz-transported fields (curl of the velocity
    variable, scaled cofactor columns).
    """
    fields._require_same_grid(w, u, Dw_Dt)
    vals = Dw_Dt.values + w.values * divergence(u).values \
        - matvec(jacobian(u), w).values
    return VectorField(w.grid, vals)


def ertel_quantity(eta: ScalarField, L: VectorField,
                   rho: ScalarField) -> ScalarField:
    """Material invariant (grad eta . L) / rho for advected eta."""
    fields._require_same_grid(eta, L, rho)
    models._check_density(rho)
    return ScalarField(eta.grid,
                       dot(gradient(eta), L).values / rho.values)


def covariant_components(K: VectorField, E: ScaledCofactorBasis):
    """Pointwise components K . E_i against the scaled cofactor basis."""
    out = []
    for Ei in E.E:
        fields._require_same_grid(K, Ei)
        out.append(dot(K, Ei))
    return tuple(out)


def budgets(state, model, u: Optional[VectorField] = None):
    """(mass, energy) integrals for the state under the given model.

    Inertia models need the recovered velocity; it is recovered here when
    not supplied.
    """
    mass = integrate(state.rho)
    if isinstance(model, models.CapillaryModel):
        e = models.capillary_energy(model, state.rho, state.vel, t=state.t)
    else:
        if u is None:
            from . import dynamics
            u = dynamics.recover_velocity(model, state.rho, state.vel)
        e = models.inertia_energy(model, state.rho, u, t=state.t)
    return mass, integrate(e)


def sample_record(state, u: VectorField, minus, plus, model) -> DiagnosticsRecord:
    """Assemble the full diagnostics record for one sampling event.

    `minus`/`plus` bracket the state in time (small centered probe steps);
    all residuals use the centered difference over their interval with
    spatial terms evaluated on `state` itself.  The Ertel range uses
    L = E_1 so it is defined in both dimensions.
    """
    grid = state.grid
    dt = plus.t - minus.t
    mass, energy = budgets(state, model, u)

    if grid.dim == 3:
        hel_omega = helicity(state.vel, curl(state.vel))
    else:
        hel_omega = 0.0

    basis = scaled_cofactor(state.F.F)
    basis_minus = scaled_cofactor(minus.F.F)
    basis_plus = scaled_cofactor(plus.F.F)
    hel_E = tuple(helicity(state.vel, Ei) for Ei in basis.E)

    res_divE = max(linf(divergence(Ei)) for Ei in basis.E)
    res_helm = 0.0
    for Em, E0, Ep in zip(basis_minus.E, basis.E, basis_plus.E):
        dEdt = (Ep.values - Em.values) / dt
        rhs_vals = kinematics.Ei_helmholtz_rhs(E0, u).values
        res_helm = max(res_helm, float(np.abs(dEdt - rhs_vals).max()))

    which = "vorticity" if grid.dim == 3 else 0
    res_flux = linf(helicity_flux_residual(minus, plus, model, which))
    res_ej = linf(kinematics.euler_jacobi_residual(minus.F.F, plus.F.F, u, dt))

    if state.eta is not None:
        q = ertel_quantity(state.eta, basis.E[0], state.rho)
        ertel_range = float(q.values.max() - q.values.min())
    else:
        ertel_range = 0.0

    return DiagnosticsRecord(
        t=state.t, mass=mass, energy=energy, helicity_omega=hel_omega,
        helicity_Ei=hel_E, ertel_range=ertel_range,
        residual_norms={"div_E": res_divE, "helmholtz": res_helm,
                        "flux": res_flux, "euler_jacobi": res_ej})
