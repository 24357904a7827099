"""Periodic-box fields and discrete vector calculus.

A Grid fixes the box, the resolution and the derivative backend; scalar,
vector and tensor fields are thin wrappers around float64 arrays whose
trailing axes are the grid axes.  The spectral backend differentiates with
FFTs (Nyquist mode zeroed, optional 2/3-rule dealiasing of assembled
tendencies); fd2/fd4 are centered finite differences of that order.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

BACKENDS = ("spectral", "fd2", "fd4")


class GridMismatchError(ValueError):
    """Operands live on different grids."""


class NonFiniteFieldError(ValueError):
    """A field handed to an operator contains NaN or Inf entries."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, L1) x ... x [0, Ld)."""

    dim: int
    n: tuple[int, ...]
    length: tuple[float, ...]
    backend: str = "spectral"
    dealias: bool = True

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if len(self.n) != self.dim or len(self.length) != self.dim:
            raise ValueError("n and length must have one entry per axis")
        for m in self.n:
            if m < 8 or m % 2 != 0:
                raise ValueError(f"each axis needs an even point count >= 8, got {m}")
        for ell in self.length:
            if not ell > 0:
                raise ValueError(f"axis lengths must be positive, got {ell}")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}, expected one of {BACKENDS}")

    @classmethod
    def make(cls, dim, n, length=None, backend="spectral", dealias=True):
        """Build a grid; n may be an int (same count per axis), length defaults to 2*pi."""
        if np.isscalar(n):
            n = (int(n),) * dim
        if length is None:
            length = (2.0 * np.pi,) * dim
        elif np.isscalar(length):
            length = (float(length),) * dim
        return cls(dim, tuple(int(m) for m in n), tuple(float(ell) for ell in length),
                   backend, dealias)

    @property
    def spacing(self):
        return tuple(ell / m for ell, m in zip(self.length, self.n))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.length))

    def axis_coords(self, axis):
        """Sample points i*h along one axis (node at the origin, none at L)."""
        return np.arange(self.n[axis]) * self.spacing[axis]

    def coords(self):
        """dim broadcast coordinate arrays of shape self.n (ij indexing)."""
        return np.meshgrid(*(self.axis_coords(a) for a in range(self.dim)), indexing="ij")


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.n:
            raise ValueError(f"scalar values shape {self.values.shape} != grid {self.grid.n}")

    def copy(self):
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    grid: Grid
    values: np.ndarray  # shape (dim, *n); values[i] is component i

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.dim, *self.grid.n):
            raise ValueError(f"vector values shape {self.values.shape} != (dim, *grid.n)")

    def component(self, i):
        return ScalarField(self.grid, self.values[i])

    def copy(self):
        return VectorField(self.grid, self.values.copy())


@dataclass
class TensorField:
    grid: Grid
    values: np.ndarray  # shape (dim, dim, *n); values[i, j] is the (i, j) entry

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        d = self.grid.dim
        if self.values.shape != (d, d, *self.grid.n):
            raise ValueError(f"tensor values shape {self.values.shape} != (dim, dim, *grid.n)")

    def entry(self, i, j):
        return ScalarField(self.grid, self.values[i, j])

    def copy(self):
        return TensorField(self.grid, self.values.copy())


def scalar(grid, values):
    """Scalar field from an array or a constant."""
    if np.isscalar(values):
        values = np.full(grid.n, float(values))
    return ScalarField(grid, values)


def vector(grid, components):
    return VectorField(grid, np.stack([np.asarray(c, dtype=np.float64) for c in components]))


def identity_tensor(grid):
    vals = np.zeros((grid.dim, grid.dim, *grid.n))
    for i in range(grid.dim):
        vals[i, i] = 1.0
    return TensorField(grid, vals)


def _require_same_grid(*fields_):
    g = fields_[0].grid
    for f in fields_[1:]:
        if f.grid != g:
            raise GridMismatchError("fields live on different grids")
    return g


def _require_finite(arr, what):
    if not np.isfinite(arr).all():
        raise NonFiniteFieldError(f"{what} contains non-finite values")


# ---------------------------------------------------------------------------
# derivative kernels
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _spectral_ik(grid):
    """Per-axis 1j*k factors on the rfftn layout, Nyquist zeroed, broadcast-shaped."""
    out = []
    for axis in range(grid.dim):
        n, ell = grid.n[axis], grid.length[axis]
        if axis == grid.dim - 1:
            k = 2.0 * np.pi * np.fft.rfftfreq(n, d=ell / n)
            k[-1] = 0.0  # rfft end slot is the Nyquist mode
        else:
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=ell / n)
            k[n // 2] = 0.0
        shape = [1] * grid.dim
        shape[axis] = k.size
        out.append((1j * k).reshape(shape))
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _dealias_keep(grid):
    """Boolean 2/3-rule mask on the rfftn layout (True = keep)."""
    keep = np.ones([1] * grid.dim, dtype=bool)
    for axis in range(grid.dim):
        n = grid.n[axis]
        if axis == grid.dim - 1:
            idx = np.arange(n // 2 + 1)
        else:
            idx = np.abs(np.fft.fftfreq(n) * n)
        shape = [1] * grid.dim
        shape[axis] = idx.size
        keep = keep & (idx <= n // 3).reshape(shape)
    return keep


def _field_axes(grid, arr):
    return tuple(range(arr.ndim - grid.dim, arr.ndim))


def _derivs_spectral(grid, arr, axes):
    """Partial derivatives of arr (any batch shape in front) along grid axes."""
    faxes = _field_axes(grid, arr)
    spec = np.fft.rfftn(arr, axes=faxes)
    ik = _spectral_ik(grid)
    return [np.fft.irfftn(spec * ik[a], s=grid.n, axes=faxes) for a in axes]


def _derivs_fd(grid, arr, axes, order):
    h = grid.spacing
    out = []
    for a in axes:
        ax = arr.ndim - grid.dim + a
        fp1 = np.roll(arr, -1, axis=ax)
        fm1 = np.roll(arr, 1, axis=ax)
        if order == 2:
            out.append((fp1 - fm1) / (2.0 * h[a]))
        else:
            fp2 = np.roll(arr, -2, axis=ax)
            fm2 = np.roll(arr, 2, axis=ax)
            out.append((8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h[a]))
    return out


def _derivs(grid, arr, axes=None):
    if axes is None:
        axes = range(grid.dim)
    if grid.backend == "spectral":
        return _derivs_spectral(grid, arr, axes)
    order = 2 if grid.backend == "fd2" else 4
    return _derivs_fd(grid, arr, axes, order)


def dealias(f):
    """2/3-rule filter; identity for fd backends or when grid.dealias is off."""
    grid = f.grid
    if grid.backend != "spectral" or not grid.dealias:
        return f
    arr = dealias_array(grid, f.values)
    return type(f)(grid, arr)


def dealias_array(grid, arr):
    if grid.backend != "spectral" or not grid.dealias:
        return arr
    faxes = _field_axes(grid, arr)
    spec = np.fft.rfftn(arr, axes=faxes)
    spec *= _dealias_keep(grid)
    return np.fft.irfftn(spec, s=grid.n, axes=faxes)


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def gradient(f: ScalarField) -> VectorField:
    _require_finite(f.values, "gradient input")
    return VectorField(f.grid, np.stack(_derivs(f.grid, f.values)))


def divergence(v: VectorField) -> ScalarField:
    _require_finite(v.values, "divergence input")
    parts = [_derivs(v.grid, v.values[a], [a])[0] for a in range(v.grid.dim)]
    return ScalarField(v.grid, sum(parts))


def jacobian(v: VectorField) -> TensorField:
    """J[i, j] = d v_i / d x_j."""
    _require_finite(v.values, "jacobian input")
    cols = _derivs(v.grid, v.values)  # cols[j][i] = d v_i / d x_j
    return TensorField(v.grid, np.stack(cols, axis=1))


def curl(v: VectorField):
    """Curl; a vector field in 3D, the scalar d v2/d x1 - d v1/d x2 in 2D."""
    _require_finite(v.values, "curl input")
    grid = v.grid
    if grid.dim == 2:
        d1v2 = _derivs(grid, v.values[1], [0])[0]
        d2v1 = _derivs(grid, v.values[0], [1])[0]
        return ScalarField(grid, d1v2 - d2v1)
    J = jacobian(v).values
    w = np.stack([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])
    return VectorField(grid, w)


def tensor_divergence(A: TensorField) -> VectorField:
    """Row-index contraction: (div A)_j = sum_i d A_ij / d x_i."""
    _require_finite(A.values, "tensor divergence input")
    grid = A.grid
    out = np.zeros((grid.dim, *grid.n))
    for i in range(grid.dim):
        out += _derivs(grid, A.values[i], [i])[0]
    return VectorField(grid, out)


def laplacian(f: ScalarField) -> ScalarField:
    """Composition divergence(gradient(f)); keeps the discrete adjointness pairing."""
    return divergence(gradient(f))


def advect(u: VectorField, f):
    """(u . grad) f for a scalar or vector field f."""
    _require_same_grid(u, f)
    _require_finite(u.values, "advection velocity")
    _require_finite(f.values, "advected field")
    grid = u.grid
    if isinstance(f, ScalarField):
        parts = _derivs(grid, f.values)
        return ScalarField(grid, sum(u.values[a] * parts[a] for a in range(grid.dim)))
    parts = _derivs(grid, f.values)  # parts[a][i] = d f_i / d x_a
    return VectorField(grid, sum(u.values[a] * parts[a] for a in range(grid.dim)))


# ---------------------------------------------------------------------------
# pointwise algebra
# ---------------------------------------------------------------------------

def dot(v: VectorField, w: VectorField) -> ScalarField:
    g = _require_same_grid(v, w)
    return ScalarField(g, np.einsum("i...,i...->...", v.values, w.values))


def cross(v: VectorField, w: VectorField) -> VectorField:
    g = _require_same_grid(v, w)
    if g.dim != 3:
        raise ValueError("cross product needs a 3-component field")
    a, b = v.values, w.values
    return VectorField(g, np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]))


def outer(v: VectorField, w: VectorField) -> TensorField:
    g = _require_same_grid(v, w)
    return TensorField(g, np.einsum("i...,j...->ij...", v.values, w.values))


def matvec(A: TensorField, v: VectorField) -> VectorField:
    g = _require_same_grid(A, v)
    return VectorField(g, np.einsum("ij...,j...->i...", A.values, v.values))


def matvec_t(A: TensorField, v: VectorField) -> VectorField:
    """A^T v, i.e. component j = sum_i A_ij v_i."""
    g = _require_same_grid(A, v)
    return VectorField(g, np.einsum("ij...,i...->j...", A.values, v.values))


def matmul(A: TensorField, B: TensorField) -> TensorField:
    g = _require_same_grid(A, B)
    return TensorField(g, np.einsum("ik...,kj...->ij...", A.values, B.values))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def integrate(f) -> float:
    """Box integral by the (spectrally exact) rectangle rule."""
    _require_finite(f.values, "integrand")
    return float(f.values.sum() * f.grid.cell_volume)


def linf(f) -> float:
    return float(np.abs(f.values).max())


def l2norm(f) -> float:
    """sqrt of the integral of the squared pointwise magnitude."""
    return float(np.sqrt(np.sum(f.values ** 2) * f.grid.cell_volume))


# ---------------------------------------------------------------------------
# seeded synthesis for verification fields
# ---------------------------------------------------------------------------

def random_band_limited(grid, rng, kmax, *, mean=0.0, amplitude=1.0):
    """Random real scalar field with integer modes bounded by kmax on every axis.

    Coefficients are drawn from rng, so a seeded generator makes the field
    reproducible.  The result has zero mean before `mean` is added and is
    scaled to the requested sup-norm amplitude.
    """
    mask = np.ones([1] * grid.dim, dtype=bool)
    for axis in range(grid.dim):
        idx = np.abs(np.fft.fftfreq(grid.n[axis]) * grid.n[axis])
        shape = [1] * grid.dim
        shape[axis] = idx.size
        mask = mask & (idx <= kmax).reshape(shape)
    coeffs = rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)
    coeffs = np.where(mask, coeffs, 0.0)
    zero = (0,) * grid.dim
    coeffs[zero] = 0.0
    vals = np.fft.ifftn(coeffs).real
    peak = np.abs(vals).max()
    if peak > 0:
        vals *= amplitude / peak
    return ScalarField(grid, vals + mean)


def random_band_limited_vector(grid, rng, kmax, *, amplitude=1.0):
    comps = [random_band_limited(grid, rng, kmax, amplitude=amplitude).values
             for _ in range(grid.dim)]
    return VectorField(grid, np.stack(comps))


def random_divergence_free(grid, rng, kmax, *, amplitude=1.0):
    """Divergence-free vector field, built as a curl (3D) or rotated gradient (2D)."""
    if grid.dim == 3:
        pot = random_band_limited_vector(grid, rng, kmax, amplitude=amplitude)
        w = curl(pot)
    else:
        psi = random_band_limited(grid, rng, kmax, amplitude=amplitude)
        g = gradient(psi).values
        w = VectorField(grid, np.stack([g[1], -g[0]]))
    peak = np.abs(w.values).max()
    if peak > 0:
        w.values *= amplitude / peak
    return w
