"""Deformation-gradient transport and the scaled-cofactor basis.

The deformation gradient F is carried as an Eulerian tensor field from
F = I at the initialization time; its columns scaled by 1/det F form a
divergence-free basis whose transport mirrors vorticity, and the rows of
F^-1 form the dual basis.  The residual helpers here are the discrete
checks for those statements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields
from .fields import (ScalarField, TensorField, VectorField, advect, cross,
                     curl, divergence, jacobian, matmul)


class SingularDeformationError(ValueError):
    """det F reached zero or changed sign somewhere on the grid."""


@dataclass
class DeformationField:
    F: TensorField
    initialized_at: float = 0.0

    @classmethod
    def identity(cls, grid, t=0.0):
        return cls(fields.identity_tensor(grid), t)


@dataclass
class ScaledCofactorBasis:
    """Columns E_i of F/det F; each is discretely divergence-free when F is transported."""
    E: tuple[VectorField, ...]


def determinant(F: TensorField) -> ScalarField:
    a = F.values
    if F.grid.dim == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    else:
        det = (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
               - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
               + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))
    return ScalarField(F.grid, det)


def _require_orientation(F: TensorField) -> ScalarField:
    det = determinant(F)
    worst = det.values.min()
    if not np.isfinite(worst) or worst <= 0.0:
        raise SingularDeformationError(
            f"det F must stay positive; min over grid is {worst:.6g}")
    return det


def evolve_F_rhs(F: TensorField, u: VectorField) -> TensorField:
    """Eulerian tendency dF/dt = (du/dx) F - (u . grad) F."""
    _require_orientation(F)
    stretch = matmul(jacobian(u), F)
    return TensorField(F.grid, stretch.values - _advect_tensor(u, F))


def _advect_tensor(u: VectorField, A: TensorField) -> np.ndarray:
    parts = fields._derivs(A.grid, A.values)
    return sum(u.values[a] * parts[a] for a in range(A.grid.dim))


def scaled_cofactor(F: TensorField) -> ScaledCofactorBasis:
    det = _require_orientation(F).values
    cols = tuple(VectorField(F.grid, F.values[:, i] / det)
                 for i in range(F.grid.dim))
    return ScaledCofactorBasis(cols)


def dual_basis(F: TensorField) -> list[VectorField]:
    """Rows of F^-1, satisfying row_i . column_j(F) = delta_ij pointwise."""
    _require_orientation(F)
    mats = np.moveaxis(F.values, (0, 1), (-2, -1))
    inv = np.linalg.inv(mats)
    inv = np.moveaxis(inv, (-2, -1), (0, 1))
    return [VectorField(F.grid, inv[i]) for i in range(F.grid.dim)]


def euler_jacobi_residual(F_prev: TensorField, F_next: TensorField,
                          u: VectorField, dt: float) -> ScalarField:
    """Centered residual of D(det F)/Dt = (det F) div u over one transport step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    det_prev = _require_orientation(F_prev)
    det_next = _require_orientation(F_next)
    mid = TensorField(F_prev.grid, 0.5 * (F_prev.values + F_next.values))
    det_mid = determinant(mid)
    rate = (det_next.values - det_prev.values) / dt
    res = (rate + advect(u, det_mid).values
           - det_mid.values * divergence(u).values)
    return ScalarField(F_prev.grid, res)


def Ei_helmholtz_rhs(E: VectorField, u: VectorField) -> VectorField:
    """Tendency of a scaled-cofactor column: -curl(E x u) in 3D, the expanded
    transport form (du/dx)E - (div u)E - (u . grad)E in 2D."""
    fields._require_finite(E.values, "basis column")
    fields._require_finite(u.values, "velocity")
    if E.grid.dim == 3:
        return VectorField(E.grid, -curl(cross(E, u)).values)
    return lie_transport_rhs(E, u)


def lie_transport_rhs(E: VectorField, u: VectorField) -> VectorField:
    """(du/dx)E - (div u)E - (u . grad)E, the dimension-agnostic transport tendency."""
    stretched = fields.matvec(jacobian(u), E).values
    return VectorField(E.grid, stretched
                       - divergence(u).values * E.values
                       - advect(u, E).values)
