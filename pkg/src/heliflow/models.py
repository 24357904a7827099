"""Energy closures and their constitutive quantities.

Three closures share one polytropic equation of state e(rho):

* capillary:        W = rho e(rho) + (lam/2) |grad rho|^2
* internal inertia: W = rho e(rho) - (mu(rho)/2) (D rho/D t)^2,
                    mu(rho) = mu0 * rho^mu_exp
* shallow water with dispersion (SGN): the inertia family specialized to
  e(h) = g h / 2 and mu(h) = h / 3 on 2-D grids.

The material density rate is always eliminated through mass conservation
(D rho/D t = -rho div u), so sigma and K are functions of the instantaneous
state.  The velocity shift K = u + k_sign * grad(sigma)/rho uses k_sign = +1
(the defining relation, positive-definite recovery operator) unless a
scenario explicitly selects the alternative sign for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fields import (ScalarField, VectorField, advect, divergence, dot,
                     gradient, identity_tensor, jacobian, laplacian, matvec_t,
                     outer)


class NonPositiveDensityError(ValueError):
    """Density (or depth) must stay strictly positive."""


def _check_density(rho: ScalarField, what="density"):
    worst = rho.values.min()
    if not np.isfinite(worst) or worst <= 0.0:
        raise NonPositiveDensityError(f"{what} must be positive; min is {worst:.6g}")


@dataclass(frozen=True)
class PolytropicEOS:
    """e(rho) = kappa * rho^(gamma-1) / (gamma-1), kappa > 0, gamma > 1."""

    kappa: float
    gamma: float

    def __post_init__(self):
        if self.kappa <= 0 or self.gamma <= 1:
            raise ValueError("polytropic EOS needs kappa > 0 and gamma > 1")

    def e(self, rho):
        return self.kappa * rho ** (self.gamma - 1.0) / (self.gamma - 1.0)

    def de(self, rho):
        return self.kappa * rho ** (self.gamma - 2.0)

    def d2e(self, rho):
        return self.kappa * (self.gamma - 2.0) * rho ** (self.gamma - 3.0)

    def sound_speed_sq(self, rho):
        # c^2 = d/drho (rho^2 e') = gamma kappa rho^(gamma-1)
        return self.gamma * self.kappa * rho ** (self.gamma - 1.0)


@dataclass(frozen=True)
class CapillaryModel:
    eos: PolytropicEOS
    lam: float = 0.0
    V: Optional[ScalarField] = None
    V_time: Optional[Callable[[float], ScalarField]] = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("capillarity coefficient must be >= 0")

    kind = "capillary"


@dataclass(frozen=True)
class InertiaModel:
    eos: PolytropicEOS
    mu0: float
    mu_exp: float = 0.0
    V: Optional[ScalarField] = None
    V_time: Optional[Callable[[float], ScalarField]] = None
    k_sign: int = 1

    def __post_init__(self):
        # the (rho, sigma) energy transform divides by mu, so the
        # coefficient must be strictly positive
        if self.mu0 <= 0:
            raise ValueError("inertia coefficient must be positive")
        if self.k_sign not in (1, -1):
            raise ValueError("k_sign must be +1 or -1")

    kind = "inertia"

    def mu(self, rho):
        if self.mu_exp == 0.0:
            return np.full_like(np.asarray(rho, dtype=float), self.mu0) \
                if np.ndim(rho) else self.mu0
        return self.mu0 * rho ** self.mu_exp

    def dmu(self, rho):
        if self.mu_exp == 0.0:
            return np.zeros_like(np.asarray(rho, dtype=float)) \
                if np.ndim(rho) else 0.0
        return self.mu0 * self.mu_exp * rho ** (self.mu_exp - 1.0)


@dataclass(frozen=True)
class SGNModel:
    """Depth-averaged dispersive shallow water; state density is the depth h."""

    g: float
    V: Optional[ScalarField] = None
    V_time: Optional[Callable[[float], ScalarField]] = None
    k_sign: int = 1

    def __post_init__(self):
        if self.g <= 0:
            raise ValueError("gravity must be positive")
        if self.k_sign not in (1, -1):
            raise ValueError("k_sign must be +1 or -1")

    kind = "sgn"
    requires_dim = 2

    @property
    def eos(self):
        # rho e(rho) = g h^2 / 2
        return PolytropicEOS(kappa=self.g / 2.0, gamma=2.0)

    def mu(self, rho):
        return rho / 3.0

    def dmu(self, rho):
        return np.full_like(np.asarray(rho, dtype=float), 1.0 / 3.0) \
            if np.ndim(rho) else 1.0 / 3.0


def potential_at(model, grid, t=0.0) -> Optional[ScalarField]:
    """Effective external potential at time t (None when absent)."""
    if model.V_time is not None:
        return model.V_time(t)
    return model.V


# ---------------------------------------------------------------------------
# capillary closure
# ---------------------------------------------------------------------------

def capillary_delta_W(model: CapillaryModel, rho: ScalarField) -> ScalarField:
    """Variational derivative e + rho e' - lam * div(grad rho)."""
    _check_density(rho)
    r = rho.values
    vals = model.eos.e(r) + r * model.eos.de(r)
    if model.lam != 0.0:
        vals = vals - model.lam * laplacian(rho).values
    return ScalarField(rho.grid, vals)


def capillary_W(model: CapillaryModel, rho: ScalarField) -> ScalarField:
    """Potential-energy density rho e(rho) + (lam/2)|grad rho|^2."""
    _check_density(rho)
    r = rho.values
    vals = r * model.eos.e(r)
    if model.lam != 0.0:
        g = gradient(rho).values
        vals = vals + 0.5 * model.lam * np.einsum("i...,i...->...", g, g)
    return ScalarField(rho.grid, vals)


def capillary_pressure_stress(model: CapillaryModel, rho: ScalarField):
    """(P, Pi): P = rho dW/drho - W and Pi = P I + lam grad rho x grad rho."""
    _check_density(rho)
    P = ScalarField(rho.grid, rho.values * capillary_delta_W(model, rho).values
                    - capillary_W(model, rho).values)
    Pi = identity_tensor(rho.grid)
    Pi.values *= P.values
    if model.lam != 0.0:
        gr = gradient(rho)
        Pi.values += model.lam * outer(gr, gr).values
    return P, Pi


def capillary_momentum_rhs(model: CapillaryModel, rho: ScalarField,
                           u: VectorField, t=0.0) -> VectorField:
    """du/dt = -(u . grad)u - grad(dW/drho + V)."""
    head = capillary_delta_W(model, rho)
    V = potential_at(model, rho.grid, t)
    if V is not None:
        head = ScalarField(rho.grid, head.values + V.values)
    return VectorField(rho.grid, -advect(u, u).values - gradient(head).values)


def capillary_energy(model: CapillaryModel, rho: ScalarField,
                     u: VectorField, t=0.0) -> ScalarField:
    """Energy density rho|u|^2/2 + W + rho V."""
    vals = 0.5 * rho.values * dot(u, u).values + capillary_W(model, rho).values
    V = potential_at(model, rho.grid, t)
    if V is not None:
        vals = vals + rho.values * V.values
    return ScalarField(rho.grid, vals)


# ---------------------------------------------------------------------------
# internal-inertia closure (and SGN through the same interface)
# ---------------------------------------------------------------------------

def material_density_rate(rho: ScalarField, u: VectorField,
                          drho_dt: Optional[ScalarField] = None) -> ScalarField:
    """D rho/D t; from mass conservation (-rho div u) unless drho_dt is given."""
    if drho_dt is None:
        return ScalarField(rho.grid, -rho.values * divergence(u).values)
    return ScalarField(rho.grid, drho_dt.values + advect(u, rho).values)


def inertia_sigma(model, rho: ScalarField, u: VectorField,
                  drho_dt: Optional[ScalarField] = None) -> ScalarField:
    """sigma = rho mu(rho) D rho/D t (= -mu rho^2 div u through mass conservation)."""
    _check_density(rho)
    q = material_density_rate(rho, u, drho_dt)
    return ScalarField(rho.grid, rho.values * model.mu(rho.values) * q.values)


def inertia_K(model, rho: ScalarField, u: VectorField,
              sigma: Optional[ScalarField] = None) -> VectorField:
    """Shifted velocity K = u + k_sign * grad(sigma)/rho."""
    _check_density(rho)
    if sigma is None:
        sigma = inertia_sigma(model, rho, u)
    gs = gradient(sigma)
    return VectorField(rho.grid, u.values + model.k_sign * gs.values / rho.values)


def inertia_Etilde(model, rho: ScalarField, sigma: ScalarField) -> ScalarField:
    """Transformed energy density rho e(rho) + sigma^2/(2 mu rho^2)."""
    _check_density(rho)
    r = rho.values
    return ScalarField(rho.grid, r * model.eos.e(r)
                       + sigma.values ** 2 / (2.0 * model.mu(r) * r ** 2))


def inertia_Etilde_rho(model, rho: ScalarField, sigma: ScalarField) -> ScalarField:
    """d/drho of the transformed energy at fixed sigma."""
    _check_density(rho)
    r = rho.values
    mu = model.mu(r)
    dmu = model.dmu(r)
    vals = (model.eos.e(r) + r * model.eos.de(r)
            - sigma.values ** 2 * (dmu * r + 2.0 * mu) / (2.0 * mu ** 2 * r ** 3))
    return ScalarField(rho.grid, vals)


def inertia_momentum_K_rhs(model, rho: ScalarField, u: VectorField,
                           K: VectorField, sigma: Optional[ScalarField] = None,
                           t=0.0) -> VectorField:
    """dK/dt = -(u . grad)K - (du/dx)^T K - grad(E_rho + V - |u|^2/2)."""
    _check_density(rho)
    if sigma is None:
        sigma = inertia_sigma(model, rho, u)
    head = inertia_Etilde_rho(model, rho, sigma).values - 0.5 * dot(u, u).values
    V = potential_at(model, rho.grid, t)
    if V is not None:
        head = head + V.values
    grad_head = gradient(ScalarField(rho.grid, head))
    return VectorField(rho.grid, -advect(u, K).values
                       - matvec_t(jacobian(u), K).values
                       - grad_head.values)


def inertia_W(model, rho: ScalarField, u: VectorField) -> ScalarField:
    """Potential density rho e - (mu/2)(D rho/D t)^2 with the mass-constrained rate."""
    _check_density(rho)
    r = rho.values
    q = material_density_rate(rho, u).values
    return ScalarField(rho.grid, r * model.eos.e(r) - 0.5 * model.mu(r) * q ** 2)


def inertia_pressure(model, rho: ScalarField, u: VectorField,
                     sigma: ScalarField, dsigma_dt: ScalarField) -> ScalarField:
    """p = rho dW/drho - W, with the time term assembled from dsigma/dt.

    dW/d(D rho/D t) = -sigma/rho, so the variational derivative contains
    d/dt(sigma/rho) + div((sigma/rho) u); d rho/dt comes from mass conservation.
    """
    _check_density(rho)
    grid = rho.grid
    r = rho.values
    q = material_density_rate(rho, u).values
    mu = model.mu(r)
    dmu = model.dmu(r)
    W = r * model.eos.e(r) - 0.5 * mu * q ** 2
    W_rho = model.eos.e(r) + r * model.eos.de(r) - 0.5 * dmu * q ** 2
    tau = sigma.values / r
    rho_t = -divergence(VectorField(grid, r * u.values)).values
    tau_t = dsigma_dt.values / r - sigma.values * rho_t / r ** 2
    tau_flux = divergence(VectorField(grid, tau * u.values)).values
    delta_W = W_rho + tau_t + tau_flux
    return ScalarField(grid, r * delta_W - W)


def inertia_energy(model, rho: ScalarField, u: VectorField,
                   sigma: Optional[ScalarField] = None, t=0.0) -> ScalarField:
    """Energy density rho|u|^2/2 + E(rho, sigma) + rho V."""
    if sigma is None:
        sigma = inertia_sigma(model, rho, u)
    vals = 0.5 * rho.values * dot(u, u).values \
        + inertia_Etilde(model, rho, sigma).values
    V = potential_at(model, rho.grid, t)
    if V is not None:
        vals = vals + rho.values * V.values
    return ScalarField(rho.grid, vals)
