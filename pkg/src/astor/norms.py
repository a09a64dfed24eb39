"""Hoelder norms of grid slices and exponentially weighted sup norms in time.

The weighted norm of f is  sup_t |f(., t)|_{C^sigma} * exp(lam * t)  taken
over the time grid; finiteness of the continuum version encodes decay at
rate lam.  Because the grid is finite, the sup over the discarded tail is
certified separately from the measured decay of the final slices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedInputError
from .grids import TWO_PI, spectral_derivative_slice

_FLOOR = 1e-14


@dataclass(frozen=True)
class NormSpec:
    """Regularity sigma = k + mu, decay rate lam, base time upsilon."""

    sigma: float
    lam: float
    upsilon: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.lam < 0 or self.upsilon < 0:
            raise UnsupportedInputError("sigma, lam and upsilon must be >= 0")

    @property
    def k(self):
        return int(np.floor(self.sigma + 1e-12))

    @property
    def mu(self):
        mu = self.sigma - self.k
        return 0.0 if mu < 1e-12 else mu


def _multi_indices(n, max_order):
    """All derivative multi-indices with |alpha| <= max_order."""
    out = [(0,) * n]
    frontier = [(0,) * n]
    for _ in range(max_order):
        nxt = []
        for alpha in frontier:
            for a in range(n):
                beta = list(alpha)
                beta[a] += 1
                beta = tuple(beta)
                if beta not in nxt:
                    nxt.append(beta)
        out.extend(b for b in nxt if b not in out)
        frontier = nxt
    return out


def _derivative_table(slice_values, n, max_order):
    """Map multi-index -> derivative array, built by spectral differentiation."""
    table = {(0,) * n: slice_values}
    for alpha in _multi_indices(n, max_order):
        if alpha in table:
            continue
        a = next(i for i, v in enumerate(alpha) if v > 0)
        parent = list(alpha)
        parent[a] -= 1
        table[alpha] = spectral_derivative_slice(table[tuple(parent)], n, a, 1)
    return table


def _torus_lag_distance(lags, spacing):
    delta = np.abs(np.asarray(lags, dtype=float)) * spacing
    delta = np.minimum(delta, TWO_PI - delta)
    return np.sqrt(np.sum(delta ** 2, axis=-1))


def _fractional_seminorm(arr, n, mu, lag_stride=1):
    """sup over grid pairs of |f(x) - f(y)| / d(x, y)^mu, separation >= 1 cell."""
    spatial = arr.shape[:n]
    size = spatial[0]
    spacing = TWO_PI / size
    best = 0.0
    ranges = [range(0, size, lag_stride) for _ in range(n)]
    for lag in np.ndindex(*[len(r) for r in ranges]):
        lag = tuple(ranges[a][lag[a]] for a in range(n))
        if all(l == 0 for l in lag):
            continue
        dist = _torus_lag_distance(lag, spacing)
        if dist == 0.0:
            continue
        shifted = np.roll(arr, lag, axis=tuple(range(n)))
        gap = np.max(np.abs(arr - shifted))
        best = max(best, gap / dist ** mu)
    return best


def holder_norm(slice_values, n, sigma, lag_stride=1):
    """Hoelder C^sigma norm of one time slice.

    slice_values: (N,)*n (+ optional component axes).  Integer part of sigma
    contributes sup norms of all derivatives up to order k; a fractional part
    mu adds the difference-quotient seminorm of the order-k derivatives over
    grid pairs at least one cell apart.
    """
    spec = NormSpec(sigma, 0.0)
    k, mu = spec.k, spec.mu
    arr = np.asarray(slice_values, dtype=float)
    table = _derivative_table(arr, n, k)
    value = max(float(np.max(np.abs(d))) for d in table.values())
    if mu > 0.0:
        semi = max(_fractional_seminorm(d, n, mu, lag_stride)
                   for alpha, d in table.items() if sum(alpha) == k)
        value += semi
    return value


@dataclass
class WeightedNormResult:
    value: float
    argmax_time: float
    per_time: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    tail_last_weighted: float = 0.0
    tail_fitted_rate: float = 0.0
    tail_certified: bool = False


def weighted_norm_profile(f, sigma, lam, lag_stride=1):
    """Weighted norm with per-time profile and a tail certificate.

    The certificate reports the final weighted value and the decay rate
    fitted on the last quarter of the grid; when that rate is at least lam
    the discarded tail cannot exceed the final weighted value.
    """
    times = f.tgrid.times()
    per_time = np.array([holder_norm(f.values[i], f.n, sigma, lag_stride)
                         for i in range(f.tgrid.count)])
    weighted = per_time * np.exp(lam * times)
    i_max = int(np.argmax(weighted))
    tail_rate, certified = 0.0, False
    quarter = max(4, f.tgrid.count // 4)
    seg = per_time[-quarter:]
    if np.all(seg > _FLOOR):
        slope = np.polyfit(times[-quarter:], np.log(seg), 1)[0]
        tail_rate = -float(slope)
        certified = tail_rate >= lam - 1e-6
    elif np.all(seg <= _FLOOR):
        certified = True  # decayed to rounding; tail is void
    return WeightedNormResult(
        value=float(weighted[i_max]),
        argmax_time=float(times[i_max]),
        per_time=per_time,
        times=times,
        tail_last_weighted=float(weighted[-1]),
        tail_fitted_rate=tail_rate,
        tail_certified=certified,
    )


def weighted_norm(f, spec, lag_stride=1):
    """sup over grid times of |f^t|_{C^sigma} e^{lam t} for a function based at spec.upsilon."""
    if abs(f.tgrid.start - spec.upsilon) > 1e-9:
        raise UnsupportedInputError(
            f"time grid starts at {f.tgrid.start}, norm base time is {spec.upsilon}")
    return weighted_norm_profile(f, spec.sigma, spec.lam, lag_stride)
