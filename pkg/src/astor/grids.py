"""Uniform grids on the torus cross a time interval, and grid calculus.

Spatial derivatives are spectral (trigonometric interpolation), hence exact
up to rounding for band-limited data.  Time derivatives use 4th-order finite
differences with one-sided stencils at the interval ends.  Off-grid spatial
evaluation goes through the same trigonometric interpolant, which keeps a
single interpolation error budget across the solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ResolutionError, UnsupportedInputError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class QGrid:
    """Uniform grid with `size` nodes per dimension on [0, 2pi)^n."""

    n: int
    size: int

    def __post_init__(self):
        if self.n < 1 or self.size < 4:
            raise UnsupportedInputError("need n >= 1 and at least 4 nodes per axis")

    @property
    def spacing(self):
        return TWO_PI / self.size

    def nodes(self):
        return np.arange(self.size) * self.spacing

    def points(self):
        """Array of node coordinates, shape (size,)*n + (n,)."""
        axes = np.meshgrid(*([self.nodes()] * self.n), indexing="ij")
        return np.stack(axes, axis=-1)

    @property
    def num_points(self):
        return self.size ** self.n


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid start + j*step for j = 0..count-1."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if self.step <= 0 or self.count < 2 or self.start < 0:
            raise UnsupportedInputError("need step > 0, count >= 2, start >= 0")

    def times(self):
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self):
        return self.start + self.step * (self.count - 1)

    def index_of(self, t, tol=1e-9):
        j = (t - self.start) / self.step
        i = int(round(j))
        if abs(j - i) > tol or not (0 <= i < self.count):
            raise UnsupportedInputError(f"time {t} is not a grid time")
        return i


def wrap_angle(q):
    """Reduce angles to [0, 2pi)."""
    return np.mod(q, TWO_PI)


# ---------------------------------------------------------------------------
# Spectral machinery on one time slice
# ---------------------------------------------------------------------------

def spectral_derivative_slice(values, n, axis, order=1):
    """Spectral derivative of a slice with n leading spatial axes.

    `values` has shape (N,)*n + rest; differentiation acts on spatial `axis`.
    """
    size = values.shape[axis]
    if order < 1:
        raise UnsupportedInputError("derivative order must be >= 1")
    if order > size // 2 - 1:
        raise ResolutionError(
            f"order {order} exceeds spectral cutoff of an {size}-point axis")
    freqs = np.fft.fftfreq(size, d=1.0 / size)
    mult = (1j * freqs) ** order
    if size % 2 == 0 and order % 2 == 1:
        mult[size // 2] = 0.0  # odd derivative of the unpaired Nyquist mode
    shape = [1] * values.ndim
    shape[axis] = size
    spec = np.fft.fft(values, axis=axis) * mult.reshape(shape)
    return np.real(np.fft.ifft(spec, axis=axis))


def trig_coefficients(values, n):
    """Forward FFT over the n leading spatial axes, normalized."""
    axes = tuple(range(n))
    norm = np.prod([values.shape[a] for a in axes])
    return np.fft.fftn(values, axes=axes) / norm


def trig_interp_slice(values, n, points):
    """Evaluate the trigonometric interpolant of a slice at arbitrary points.

    values: (N,)*n + rest;  points: (..., n).  Returns points-shape + rest.
    Exact (to rounding) for data band-limited below the Nyquist frequency.
    The n-dimensional mode sum is contracted one axis at a time so scattered
    points cost O(P * N^n) flops but only O(P * n * N) exponentials.
    """
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != n:
        raise UnsupportedInputError("points must have trailing spatial dimension")
    coeffs = trig_coefficients(values, n)
    spatial = values.shape[:n]
    rest = values.shape[n:]
    pflat = points.reshape(-1, n)

    def factor(a):
        freqs = np.fft.fftfreq(spatial[a], d=1.0 / spatial[a])
        return np.exp(1j * np.outer(pflat[:, a], freqs))

    acc = np.tensordot(factor(0), coeffs, axes=(1, 0))  # (P, N2.., rest)
    for a in range(1, n):
        acc = np.einsum("pk,pk...->p...", factor(a), acc)
    out = np.real(acc)
    return out.reshape(points.shape[:-1] + rest)


def trig_interp_axis(values, n, axis, new_nodes):
    """Interpolate along one spatial axis onto per-point new nodes.

    new_nodes has the same shape as the axis being replaced is broadcast over;
    used for tensor-product (separable) resampling.  new_nodes: (P,) array.
    Returns values with `axis` replaced by len(new_nodes).
    """
    size = values.shape[axis]
    freqs = np.fft.fftfreq(size, d=1.0 / size)
    coeffs = np.fft.fft(values, axis=axis) / size
    basis = np.exp(1j * np.outer(np.asarray(new_nodes, float), freqs))
    moved = np.moveaxis(coeffs, axis, -1)
    out = np.real(moved @ basis.T)
    return np.moveaxis(out, -1, axis)


# ---------------------------------------------------------------------------
# 4th-order time differentiation
# ---------------------------------------------------------------------------

_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_EDGE = {
    0: (np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0, 0),
    1: (np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0, -1),
}


def time_derivative(values, dt):
    """4th-order d/dt along axis 0 with one-sided stencils at both ends."""
    m = values.shape[0]
    if m < 5:
        raise ResolutionError("need at least 5 time samples for 4th-order stencils")
    out = np.empty_like(values)
    out[2:-2] = (_INTERIOR[0] * values[:-4] + _INTERIOR[1] * values[1:-3]
                 + _INTERIOR[3] * values[3:-1] + _INTERIOR[4] * values[4:]) / dt
    for i in (0, 1):
        coeff, off = _EDGE[i]
        start = i + off
        acc = sum(c * values[start + j] for j, c in enumerate(coeff))
        out[i] = acc / dt
        acc = sum(-c * values[m - 1 - start - j] for j, c in enumerate(coeff))
        out[m - 1 - i] = acc / dt
    return out


# ---------------------------------------------------------------------------
# Grid functions
# ---------------------------------------------------------------------------

class TimeGridFunction:
    """Values of a (vector-valued) function on a q-grid cross a time grid.

    values shape: (M,) + (N,)*n + (d,) with d the codomain dimension.
    """

    def __init__(self, qgrid, tgrid, values):
        values = np.asarray(values, dtype=float)
        expected = (tgrid.count,) + (qgrid.size,) * qgrid.n
        if values.shape[:-1] != expected or values.ndim != qgrid.n + 2:
            raise UnsupportedInputError(
                f"values shape {values.shape} inconsistent with grids {expected} + (d,)")
        self.qgrid = qgrid
        self.tgrid = tgrid
        self.values = values
        self.assert_finite()

    @property
    def codim(self):
        return self.values.shape[-1]

    @property
    def n(self):
        return self.qgrid.n

    def assert_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise UnsupportedInputError("grid function contains non-finite values")

    @classmethod
    def zeros(cls, qgrid, tgrid, codim):
        shape = (tgrid.count,) + (qgrid.size,) * qgrid.n + (codim,)
        return cls(qgrid, tgrid, np.zeros(shape))

    @classmethod
    def from_scalar(cls, f, qgrid, tgrid):
        return cls.from_vector([f], qgrid, tgrid)

    @classmethod
    def from_vector(cls, comps, qgrid, tgrid):
        """Sample TrigPoly components on the grid (momentum frozen at 0)."""
        pts = qgrid.points()
        times = tgrid.times()
        tt = times.reshape((-1,) + (1,) * qgrid.n)
        slices = [c(pts[None, ...], None, tt) for c in comps]
        return cls(qgrid, tgrid, np.stack(slices, axis=-1))

    def copy(self):
        return TimeGridFunction(self.qgrid, self.tgrid, self.values.copy())

    def slice(self, i):
        return self.values[i]

    def dq(self, axis, order=1):
        out = spectral_derivative_slice(
            np.moveaxis(self.values, 0, -1), self.n, axis, order)
        return TimeGridFunction(self.qgrid, self.tgrid, np.moveaxis(out, -1, 0))

    def dt(self):
        return TimeGridFunction(self.qgrid, self.tgrid,
                                time_derivative(self.values, self.tgrid.step))

    def restrict(self, count):
        """Keep the first `count` time samples."""
        sub = TimeGrid(self.tgrid.start, self.tgrid.step, count)
        return TimeGridFunction(self.qgrid, sub, self.values[:count].copy())

    # elementwise algebra -----------------------------------------------------

    def _like(self, values):
        return TimeGridFunction(self.qgrid, self.tgrid, values)

    def __add__(self, other):
        return self._like(self.values + other.values)

    def __sub__(self, other):
        return self._like(self.values - other.values)

    def __mul__(self, c):
        return self._like(self.values * float(c))

    __rmul__ = __mul__

    def max_abs(self):
        return float(np.max(np.abs(self.values)))


def partial_derivative(f, axis, order=1):
    """Spectral q-derivative (axis in 0..n-1) or 4th-order time derivative.

    axis = "t" selects differentiation along the time grid.
    """
    if axis == "t":
        result = f.copy()
        for _ in range(order):
            result = result.dt()
        return result
    if not 0 <= axis < f.n:
        raise UnsupportedInputError(f"axis {axis} out of range for n={f.n}")
    return f.dq(axis, order)
