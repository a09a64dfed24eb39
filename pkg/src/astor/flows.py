"""Flow of the torus field, variational Jacobians, and propagators.

One fixed-step classical RK4 integrator drives every time integration in the
package (flows, variational equations, propagator sweeps, non-autonomous
verification flows): reproducible tables and a single error budget.
Richardson extrapolation against a half-step run provides error estimates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageError, DivergenceError, UnsupportedInputError
from .grids import QGrid, trig_interp_slice, wrap_angle

DEFAULT_H_ODE = 1e-3


def rk4_step(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(rhs, y0, t0, t1, h_ode):
    """Integrate y' = rhs(t, y) from t0 to t1 with uniform steps of size <= h_ode."""
    span = t1 - t0
    if span == 0.0:
        return np.array(y0, copy=True)
    steps = max(1, int(np.ceil(abs(span) / h_ode)))
    h = span / steps
    y = np.array(y0, copy=True)
    t = t0
    for _ in range(steps):
        y = rk4_step(rhs, t, y, h)
        t += h
    if not np.all(np.isfinite(y)):
        raise DivergenceError("integration produced non-finite values")
    return y


def rk4_integrate_estimated(rhs, y0, t0, t1, h_ode):
    """Half-step refined result plus a Richardson error estimate."""
    coarse = rk4_integrate(rhs, y0, t0, t1, h_ode)
    fine = rk4_integrate(rhs, y0, t0, t1, h_ode / 2.0)
    err = float(np.max(np.abs(fine - coarse))) / 15.0
    return fine, err


class VectorFieldSpec:
    """Autonomous torus vector field with cached derivative norms."""

    def __init__(self, field, norm_grid_size=None):
        if not field.is_autonomous:
            raise UnsupportedInputError("torus field must be autonomous (all mu = 0)")
        self.field = field
        self.n = field.n
        self.jac = field.jacobian()
        size = norm_grid_size or (256 if self.n == 1 else 48)
        pts = QGrid(self.n, size).points()
        jvals = self.jac(pts)
        self.dw_c0 = float(np.max(np.abs(jvals)))
        self._norm_points = pts

    def __call__(self, q):
        return self.field(np.asarray(q, dtype=float))

    def jacobian_at(self, q):
        return self.jac(np.asarray(q, dtype=float))

    def dw_holder(self, sigma):
        """C^sigma norm of the Jacobian entries, max over entries."""
        from .norms import holder_norm
        jvals = self.jac(self._norm_points)
        return float(max(holder_norm(jvals[..., i, j], self.n, sigma)
                         for i in range(self.n) for j in range(self.n)))

    @property
    def is_separable(self):
        """True when component i depends only on coordinate q_i."""
        for i, comp in enumerate(self.field.comps):
            for term in comp.terms:
                if any(k != 0 and a != i for a, k in enumerate(term.k)):
                    return False
        return True


def _joint_rhs(w):
    """Flow plus variational equation for state (q (..., n), J (..., n, n))."""
    n = w.n

    def rhs(t, y):
        q = y[..., :n]
        jac = y[..., n:].reshape(y.shape[:-1] + (n, n))
        dq = w(q)
        dj = w.jacobian_at(q) @ jac
        return np.concatenate([dq, dj.reshape(y.shape[:-1] + (n * n,))], axis=-1)

    return rhs


def integrate_flow(w, q0, t, h_ode=DEFAULT_H_ODE, with_estimate=True):
    """Flow point and Jacobian of the autonomous field after signed time t.

    Returns (q wrapped to [0, 2pi)^n, Jacobian, Richardson error estimate).
    """
    if h_ode <= 0:
        raise UnsupportedInputError("h_ode must be positive")
    q0 = np.asarray(q0, dtype=float)
    n = w.n
    eye = np.broadcast_to(np.eye(n), q0.shape[:-1] + (n, n))
    if t == 0.0:
        return wrap_angle(q0.copy()), eye.copy(), 0.0
    y0 = np.concatenate([q0, eye.reshape(q0.shape[:-1] + (n * n,))], axis=-1)
    rhs = _joint_rhs(w)
    if with_estimate:
        y, err = rk4_integrate_estimated(rhs, y0, 0.0, t, h_ode)
    else:
        y, err = rk4_integrate(rhs, y0, 0.0, t, h_ode), 0.0
    q = wrap_angle(y[..., :n])
    jac = y[..., n:].reshape(q0.shape[:-1] + (n, n))
    return q, jac, err


@dataclass
class FlowTable:
    """Tabulated flow and Jacobian over symmetric time offsets."""

    w: VectorFieldSpec
    qgrid: QGrid
    offsets: np.ndarray
    flow: np.ndarray        # (K, *spatial, n), wrapped
    jacobian: np.ndarray    # (K, *spatial, n, n)
    h_ode: float
    errors: np.ndarray      # (K,) Richardson estimates

    @property
    def t_probe(self):
        return float(np.max(np.abs(self.offsets)))

    def _index(self, offset, tol=1e-9):
        hits = np.nonzero(np.abs(self.offsets - offset) <= tol)[0]
        if len(hits) == 0:
            raise CoverageError(f"offset {offset} not covered by flow table "
                                f"(range +-{self.t_probe})")
        return int(hits[0])

    def flow_at(self, offset, points=None):
        """Flow values at the tabulated offset, optionally off-grid via
        trigonometric interpolation of the periodic displacement."""
        i = self._index(offset)
        if points is None:
            return self.flow[i]
        base = self.qgrid.points()
        disp = self.flow[i] - base
        disp = np.mod(disp + np.pi, 2 * np.pi) - np.pi  # principal displacement
        out = trig_interp_slice(disp, self.qgrid.n, points)
        return wrap_angle(points + out)

    def jacobian_at(self, offset, points=None):
        i = self._index(offset)
        if points is None:
            return self.jacobian[i]
        return trig_interp_slice(self.jacobian[i], self.qgrid.n, points)

    def group_law_defect(self, pairs=None):
        """max over tabulated (t, s) pairs of torus distance between
        flow(t+s, q) and the flow continued for time t from flow(s, q)."""
        offs = self.offsets
        if pairs is None:
            idx = np.linspace(0, len(offs) - 1, min(7, len(offs))).astype(int)
            pairs = [(offs[i], offs[j]) for i in idx for j in idx
                     if np.any(np.abs(offs - (offs[i] + offs[j])) <= 1e-9)]
        worst = 0.0
        for t, s in pairs:
            lhs = self.flow_at(t + s)
            mid = self.flow_at(s)
            rhs, _, _ = integrate_flow(self.w, mid, t, self.h_ode,
                                       with_estimate=False)
            delta = np.abs(lhs - rhs)
            delta = np.minimum(delta, 2 * np.pi - delta)
            worst = max(worst, float(np.max(delta)))
        return worst

    def export(self, path_base):
        """Binary arrays plus a JSON sidecar."""
        np.savez(f"{path_base}.npz", offsets=self.offsets, flow=self.flow,
                 jacobian=self.jacobian, errors=self.errors)
        sidecar = {"n": self.qgrid.n, "N": self.qgrid.size,
                   "T_probe": self.t_probe, "h_ode": self.h_ode, "sign": None}
        with open(f"{path_base}.json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=1)


def build_flow_table(w, qgrid, t_probe, h_ode=DEFAULT_H_ODE, steps=None):
    """Tabulate the flow on symmetric offsets covering [-t_probe, t_probe]."""
    if t_probe <= 0:
        raise UnsupportedInputError("t_probe must be positive")
    steps = steps or max(8, int(np.ceil(t_probe / 0.25)))
    dt = t_probe / steps
    base = qgrid.points()
    n = qgrid.n
    eye = np.broadcast_to(np.eye(n), base.shape[:-1] + (n, n)).copy()
    rhs = _joint_rhs(w)

    def march(direction):
        qs, js, errs = [], [], []
        y = np.concatenate([base, eye.reshape(base.shape[:-1] + (n * n,))], axis=-1)
        err_acc = 0.0
        for _ in range(steps):
            y_new, err = rk4_integrate_estimated(rhs, y, 0.0, direction * dt, h_ode)
            err_acc += err
            y = y_new
            qs.append(y[..., :n])
            js.append(y[..., n:].reshape(base.shape[:-1] + (n, n)))
            errs.append(err_acc)
        return qs, js, errs

    fq, fj, fe = march(+1.0)
    bq, bj, be = march(-1.0)
    offsets = np.concatenate([-dt * np.arange(steps, 0, -1), [0.0],
                              dt * np.arange(1, steps + 1)])
    flow = np.stack(bq[::-1] + [base] + fq)
    jac = np.stack(bj[::-1] + [eye] + fj)
    errors = np.array(be[::-1] + [0.0] + fe)
    flow[steps] = base  # identity at zero offset, exactly
    table = FlowTable(w, qgrid, offsets, wrap_angle(flow), jac, h_ode, errors)
    return table


# ---------------------------------------------------------------------------
# Propagators
# ---------------------------------------------------------------------------

def _generator(w, sign, transpose):
    """Matrix field of the linear system: R' = -sign * A(flow) R."""
    def gen(x):
        a = w.jacobian_at(x)
        if transpose:
            a = np.swapaxes(a, -1, -2)
        return a
    return gen


def fundamental_matrix(w, q, t, tau, sign, h_ode=DEFAULT_H_ODE, transpose=False):
    """Propagator R(q, t, tau) of R' = -sign * dW(flow) R with R(tau, tau) = Id.

    Integrates backward from tau to t <= tau along the flow through q, as a
    forward march in elapsed time s = tau - t of the joint (position, matrix)
    system.
    """
    if tau < t:
        raise UnsupportedInputError("need tau >= t")
    q = np.asarray(q, dtype=float)
    n = w.n
    eye = np.broadcast_to(np.eye(n), q.shape[:-1] + (n, n)).copy()
    if tau == t:
        return eye
    gen = _generator(w, sign, transpose)
    x_tau, _, _ = integrate_flow(w, q, tau, h_ode, with_estimate=False)

    def rhs(s, y):
        x = y[..., :n]
        mat = y[..., n:].reshape(y.shape[:-1] + (n, n))
        dx = -w(x)
        dm = float(sign) * (gen(x) @ mat)
        return np.concatenate([dx, dm.reshape(y.shape[:-1] + (n * n,))], axis=-1)

    y0 = np.concatenate([x_tau, eye.reshape(q.shape[:-1] + (n * n,))], axis=-1)
    y = rk4_integrate(rhs, y0, 0.0, tau - t, h_ode)
    return y[..., n:].reshape(q.shape[:-1] + (n, n))


def liouville_defect(w, q, t, tau, sign, h_ode=DEFAULT_H_ODE, quad_nodes=2001):
    """|det R - exp(-sign * int_t^tau tr dW(flow(s)) ds)| via fine Simpson."""
    q = np.asarray(q, dtype=float)
    r = fundamental_matrix(w, q, t, tau, sign, h_ode)
    det = np.linalg.det(r)
    if quad_nodes % 2 == 0:
        quad_nodes += 1
    s_nodes = np.linspace(t, tau, quad_nodes)
    traj = np.empty(s_nodes.shape + q.shape)
    x = np.array(q, copy=True)
    traj[0] = x
    for i in range(1, quad_nodes):
        x = rk4_integrate(lambda _, y: w(y), x, s_nodes[i - 1], s_nodes[i], h_ode)
        traj[i] = x
    tr = np.trace(w.jacobian_at(traj), axis1=-2, axis2=-1)
    h = (tau - t) / (quad_nodes - 1)
    weights = np.ones(quad_nodes)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    integral = np.tensordot(weights, tr, axes=(0, 0)) * h / 3.0
    return float(np.max(np.abs(det - np.exp(float(sign) * integral))))


@dataclass
class PropagatorTable:
    """Propagators R(q, t, tau) for tau >= t on a probe time grid."""

    w: VectorFieldSpec
    qgrid: QGrid
    times: np.ndarray
    sign: int
    entries: np.ndarray        # (T, T, *spatial, n, n), zero for tau < t
    rectified: np.ndarray      # same layout, R(flow(-tau, q), t, tau)
    h_ode: float

    def propagator(self, i_t, i_tau):
        if i_tau < i_t:
            raise UnsupportedInputError("need tau >= t")
        return self.entries[i_t, i_tau]

    def cocycle_defect(self):
        """max over t <= s <= tau of |R(t, tau) - R(t, s) R(s, tau)|."""
        T = len(self.times)
        idx = np.linspace(0, T - 1, min(5, T)).astype(int)
        worst = 0.0
        for a in idx:
            for b in idx[idx >= a]:
                for c in idx[idx >= b]:
                    lhs = self.entries[a, c]
                    rhs = self.entries[a, b] @ self.entries[b, c]
                    worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        return worst

    def export(self, path_base):
        np.savez(f"{path_base}.npz", times=self.times, entries=self.entries,
                 rectified=self.rectified)
        sidecar = {"n": self.qgrid.n, "N": self.qgrid.size,
                   "T_probe": float(self.times[-1] - self.times[0]),
                   "h_ode": self.h_ode, "sign": self.sign}
        with open(f"{path_base}.json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=1)


def build_propagator_table(w, qgrid, times, sign, h_ode=DEFAULT_H_ODE,
                           transpose=False):
    """Tabulate R(q, t, tau) on all grid pairs tau >= t via one cocycle sweep."""
    times = np.asarray(times, dtype=float)
    base = qgrid.points()
    n = qgrid.n
    spatial = base.shape[:-1]
    gen = _generator(w, sign, transpose)

    def rhs(s, y):
        x = y[..., :n]
        g = y[..., n:n + n * n].reshape(y.shape[:-1] + (n, n))
        d = y[..., n + n * n:].reshape(y.shape[:-1] + (n, n))
        a = gen(x)
        dx = w(x)
        dg = float(sign) * (g @ a)      # d/dtau R(t0, tau)
        dd = -float(sign) * (a @ d)     # d/dt   R(t, t0)
        return np.concatenate([dx, dg.reshape(y.shape[:-1] + (n * n,)),
                               dd.reshape(y.shape[:-1] + (n * n,))], axis=-1)

    eye = np.broadcast_to(np.eye(n), spatial + (n, n)).copy()
    y = np.concatenate([base, eye.reshape(spatial + (n * n,)),
                        eye.reshape(spatial + (n * n,))], axis=-1)
    gs, ds = [eye.copy()], [eye.copy()]
    for i in range(1, len(times)):
        y = rk4_integrate(rhs, y, times[i - 1], times[i], h_ode)
        gs.append(y[..., n:n + n * n].reshape(spatial + (n, n)).copy())
        ds.append(y[..., n + n * n:].reshape(spatial + (n, n)).copy())

    T = len(times)
    entries = np.zeros((T, T) + spatial + (n, n))
    for a in range(T):
        for b in range(a, T):
            if a == b:
                entries[a, b] = eye  # coincident times: identity, exactly
            else:
                entries[a, b] = ds[a] @ gs[b]

    rectified = np.zeros_like(entries)
    for b in range(T):
        back, _, _ = integrate_flow(w, base, -times[b], h_ode, with_estimate=False)
        for a in range(b + 1):
            rectified[a, b] = trig_interp_slice(entries[a, b], n, back)
    return PropagatorTable(w, qgrid, times, sign, entries, rectified, h_ode)


# ---------------------------------------------------------------------------
# Growth measurement
# ---------------------------------------------------------------------------

@dataclass
class GrowthConstants:
    """Fitted exponential growth rates of the flow Jacobian and propagators.

    Rates are absolute (1/time); the hatted constants are normalized by
    |dW|_{C0}.  c_kappa_hat carries the 1.5 safety factor used by the
    admissibility check  lam > c_kappa_hat * |dW|_{C0}.
    """

    rate_flow: float
    rate_propagator: float
    c_flow_hat: float
    c0_hat: float
    c_kappa_hat: float
    fit_residual_flow: float
    fit_residual_propagator: float
    t_probe: float
    dw_c0: float

    @property
    def admissibility_rate(self):
        """Absolute rate that lam must exceed."""
        return self.c_kappa_hat * self.dw_c0

    def admissible(self, lam):
        return lam > self.admissibility_rate

    def to_dict(self):
        return {k: float(v) for k, v in self.__dict__.items()}


def measure_growth(w, sigma, t_probe, qgrid=None, h_ode=DEFAULT_H_ODE,
                   samples=17):
    """Least-squares exponential rates of |dq flow| and |R| over [0, t_probe]."""
    dw = w.dw_c0
    if dw < 1e-13:
        return GrowthConstants(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, t_probe, dw)
    qgrid = qgrid or QGrid(w.n, 64 if w.n == 1 else 16)
    times = np.linspace(0.0, t_probe, samples)
    base = qgrid.points()
    n = w.n
    eye = np.broadcast_to(np.eye(n), base.shape[:-1] + (n, n)).copy()

    flow_sup, prop_sup = [1.0], [1.0]
    y = np.concatenate([base, eye.reshape(base.shape[:-1] + (n * n,))], axis=-1)
    rhs_flow = _joint_rhs(w)
    states = {s: np.concatenate([base, eye.reshape(base.shape[:-1] + (n * n,)),
                                 eye.reshape(base.shape[:-1] + (n * n,))], axis=-1)
              for s in (+1, -1)}

    def rhs_prop(sign):
        gen = _generator(w, sign, transpose=False)

        def rhs(s, yy):
            x = yy[..., :n]
            g = yy[..., n:n + n * n].reshape(yy.shape[:-1] + (n, n))
            d = yy[..., n + n * n:].reshape(yy.shape[:-1] + (n, n))
            a = gen(x)
            return np.concatenate([w(x),
                                   (float(sign) * (g @ a)).reshape(yy.shape[:-1] + (n * n,)),
                                   (-float(sign) * (a @ d)).reshape(yy.shape[:-1] + (n * n,))],
                                  axis=-1)
        return rhs

    rhs_p = {s: rhs_prop(s) for s in (+1, -1)}
    for i in range(1, samples):
        y = rk4_integrate(rhs_flow, y, times[i - 1], times[i], h_ode)
        flow_sup.append(float(np.max(np.abs(y[..., n:]))))
        sup = 0.0
        for s in (+1, -1):
            states[s] = rk4_integrate(rhs_p[s], states[s], times[i - 1], times[i], h_ode)
            sup = max(sup, float(np.max(np.abs(states[s][..., n:]))))
        prop_sup.append(sup)

    def fit(sups):
        logs = np.log(np.maximum(sups, 1e-300))
        slope, intercept = np.polyfit(times, logs, 1)
        resid = float(np.max(np.abs(logs - (slope * times + intercept))))
        return max(0.0, float(slope)), resid

    rate_flow, res_flow = fit(flow_sup)
    rate_prop, res_prop = fit(prop_sup)
    c_flow = rate_flow / dw
    c0 = rate_prop / dw
    return GrowthConstants(rate_flow, rate_prop, c_flow, c0,
                           1.5 * max(c_flow, c0), res_flow, res_prop,
                           t_probe, dw)
