"""Exact trigonometric-polynomial functions of (q, p, t).

A term is  amp * phase(k . q) * p^alpha * exp(-mu t)  with integer frequency
vector k, monomial exponents alpha and decay rate mu >= 0.  Sums of finitely
many terms represent every input of the solver (torus fields, perturbations,
quadratic remainders) exactly, so evaluation and differentiation are free of
discretization error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedInputError

_PHASES = ("cos", "sin")


@dataclass(frozen=True)
class TrigTerm:
    k: tuple
    alpha: tuple
    phase: str
    amp: float
    mu: float = 0.0

    def __post_init__(self):
        if self.phase not in _PHASES:
            raise UnsupportedInputError(f"phase must be cos|sin, got {self.phase!r}")
        if self.mu < 0:
            raise UnsupportedInputError("time decay rate mu must be >= 0")
        if not math.isfinite(self.amp):
            raise UnsupportedInputError("term amplitude must be finite")


class TrigPoly:
    """Scalar trigonometric polynomial in q, polynomial in p, exponential in t."""

    def __init__(self, n, terms=()):
        self.n = int(n)
        self.terms = []
        for term in terms:
            if not isinstance(term, TrigTerm):
                term = TrigTerm(tuple(term[0]), tuple(term[1]), term[2], float(term[3]),
                                float(term[4]) if len(term) > 4 else 0.0)
            if len(term.k) != self.n or len(term.alpha) != self.n:
                raise UnsupportedInputError("term dimension mismatch")
            self.terms.append(term)

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, n):
        return cls(n, [])

    @classmethod
    def constant(cls, n, value, mu=0.0):
        if value == 0.0:
            return cls.zero(n)
        return cls(n, [TrigTerm((0,) * n, (0,) * n, "cos", float(value), float(mu))])

    @classmethod
    def wave(cls, n, k, amp, phase="cos", mu=0.0, alpha=None):
        alpha = (0,) * n if alpha is None else tuple(alpha)
        return cls(n, [TrigTerm(tuple(k), alpha, phase, float(amp), float(mu))])

    # -- evaluation ---------------------------------------------------------

    def __call__(self, q, p=None, t=0.0):
        """Evaluate at q (..., n), optional p (..., n), time t (scalar or (...,))."""
        q = np.asarray(q, dtype=float)
        if q.shape[-1:] != (self.n,):
            raise UnsupportedInputError(f"q must have trailing dimension {self.n}")
        if p is not None:
            p = np.asarray(p, dtype=float)
        t = np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast_shapes(q.shape[:-1], t.shape))
        for term in self.terms:
            kq = q @ np.asarray(term.k, dtype=float)
            osc = np.cos(kq) if term.phase == "cos" else np.sin(kq)
            val = term.amp * osc
            if any(term.alpha):
                if p is None:
                    continue
                for axis, power in enumerate(term.alpha):
                    if power:
                        val = val * p[..., axis] ** power
            if term.mu:
                val = val * np.exp(-term.mu * t)
            out = out + val
        return out

    # -- exact calculus -----------------------------------------------------

    def dq(self, axis):
        """Exact partial derivative with respect to q_axis."""
        terms = []
        for term in self.terms:
            k_a = term.k[axis]
            if k_a == 0:
                continue
            if term.phase == "cos":
                terms.append(TrigTerm(term.k, term.alpha, "sin", -k_a * term.amp, term.mu))
            else:
                terms.append(TrigTerm(term.k, term.alpha, "cos", k_a * term.amp, term.mu))
        return TrigPoly(self.n, terms)

    def dp(self, axis):
        """Exact partial derivative with respect to p_axis."""
        terms = []
        for term in self.terms:
            power = term.alpha[axis]
            if power == 0:
                continue
            alpha = list(term.alpha)
            alpha[axis] -= 1
            terms.append(TrigTerm(term.k, tuple(alpha), term.phase, power * term.amp, term.mu))
        return TrigPoly(self.n, terms)

    def mul_p(self, axis):
        """Multiply by the monomial p_axis."""
        terms = []
        for term in self.terms:
            alpha = list(term.alpha)
            alpha[axis] += 1
            terms.append(TrigTerm(term.k, tuple(alpha), term.phase, term.amp, term.mu))
        return TrigPoly(self.n, terms)

    def at_p0(self):
        """Restriction to p = 0 (keeps the alpha = 0 terms)."""
        return TrigPoly(self.n, [t for t in self.terms if not any(t.alpha)])

    def scale_p_integral(self, extra_weight=0):
        """Replace p by tau*p and integrate over tau in [0, 1].

        With extra_weight = 1 the integrand carries a (1 - tau) factor.  Used
        for the exact Taylor-remainder coefficients of momentum expansions.
        """
        terms = []
        for term in self.terms:
            d = sum(term.alpha)
            if extra_weight == 0:
                factor = 1.0 / (d + 1)
            else:
                factor = 1.0 / ((d + 1) * (d + 2))
            terms.append(TrigTerm(term.k, term.alpha, term.phase, term.amp * factor, term.mu))
        return TrigPoly(self.n, terms)

    # -- algebra ------------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = TrigPoly.constant(self.n, other)
        return TrigPoly(self.n, list(self.terms) + list(other.terms)).simplify()

    def __sub__(self, other):
        return self + (other * -1.0)

    def __mul__(self, c):
        return TrigPoly(self.n, [TrigTerm(t.k, t.alpha, t.phase, t.amp * float(c), t.mu)
                                 for t in self.terms])

    __rmul__ = __mul__

    def simplify(self):
        merged = {}
        for t in self.terms:
            key = (t.k, t.alpha, t.phase, t.mu)
            merged[key] = merged.get(key, 0.0) + t.amp
        terms = [TrigTerm(k, a, ph, amp, mu) for (k, a, ph, mu), amp in merged.items()
                 if amp != 0.0]
        return TrigPoly(self.n, terms)

    # -- structure queries --------------------------------------------------

    @property
    def is_zero(self):
        return all(t.amp == 0.0 for t in self.terms)

    @property
    def is_autonomous(self):
        return all(t.mu == 0.0 for t in self.terms)

    @property
    def p_degree(self):
        return max((sum(t.alpha) for t in self.terms), default=0)

    @property
    def max_freq(self):
        return max((max(abs(c) for c in t.k) for t in self.terms), default=0)

    @property
    def min_mu(self):
        """Slowest decay rate among terms (0 for an empty sum)."""
        return min((t.mu for t in self.terms), default=0.0)

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {"n": self.n,
                "terms": [{"k": list(t.k), "alpha": list(t.alpha), "phase": t.phase,
                           "amp": t.amp, "mu": t.mu} for t in self.terms]}

    @classmethod
    def from_dict(cls, data):
        n = int(data["n"])
        terms = [TrigTerm(tuple(int(x) for x in t["k"]),
                          tuple(int(x) for x in t.get("alpha", [0] * n)),
                          t["phase"], float(t["amp"]), float(t.get("mu", 0.0)))
                 for t in data["terms"]]
        return cls(n, terms)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"TrigPoly(n={self.n}, {len(self.terms)} terms)"


class TrigVec:
    """Vector-valued function with TrigPoly components."""

    def __init__(self, comps):
        self.comps = list(comps)
        if not self.comps:
            raise UnsupportedInputError("empty component list")
        self.n = self.comps[0].n
        self.d = len(self.comps)

    @classmethod
    def zero(cls, n, d=None):
        return cls([TrigPoly.zero(n) for _ in range(d or n)])

    def __call__(self, q, p=None, t=0.0):
        vals = [c(q, p, t) for c in self.comps]
        return np.stack(np.broadcast_arrays(*vals), axis=-1)

    def __getitem__(self, i):
        return self.comps[i]

    def __sub__(self, other):
        return TrigVec([a - b for a, b in zip(self.comps, other.comps)])

    def jacobian(self):
        """Matrix J with J[i][j] = d comps[i] / d q_j."""
        return TrigMat([[c.dq(j) for j in range(self.n)] for c in self.comps])

    @property
    def is_zero(self):
        return all(c.is_zero for c in self.comps)

    @property
    def is_autonomous(self):
        return all(c.is_autonomous for c in self.comps)

    @property
    def max_freq(self):
        return max(c.max_freq for c in self.comps)

    @property
    def min_mu(self):
        nonzero = [c.min_mu for c in self.comps if not c.is_zero]
        return min(nonzero, default=0.0)

    def to_dict(self):
        return {"comps": [c.to_dict() for c in self.comps]}

    @classmethod
    def from_dict(cls, data):
        return cls([TrigPoly.from_dict(c) for c in data["comps"]])


class TrigMat:
    """Matrix-valued function with TrigPoly entries."""

    def __init__(self, rows):
        self.rows = [list(r) for r in rows]
        self.n = self.rows[0][0].n
        self.shape = (len(self.rows), len(self.rows[0]))

    @classmethod
    def zero(cls, n, shape=None):
        r, c = shape or (n, n)
        return cls([[TrigPoly.zero(n) for _ in range(c)] for _ in range(r)])

    @classmethod
    def identity_times(cls, n, value):
        rows = [[TrigPoly.constant(n, value if i == j else 0.0) for j in range(n)]
                for i in range(n)]
        return cls(rows)

    def __call__(self, q, p=None, t=0.0):
        vals = [[e(q, p, t) for e in row] for row in self.rows]
        flat = [v for row in vals for v in row]
        flat = np.broadcast_arrays(*flat)
        r, c = self.shape
        stacked = np.stack(flat, axis=-1)
        return stacked.reshape(stacked.shape[:-1] + (r, c))

    def __getitem__(self, idx):
        i, j = idx
        return self.rows[i][j]

    def entry_map(self, fn):
        return TrigMat([[fn(e) for e in row] for row in self.rows])

    @property
    def is_zero(self):
        return all(e.is_zero for row in self.rows for e in row)

    @property
    def p_degree(self):
        return max(e.p_degree for row in self.rows for e in row)

    def to_dict(self):
        return {"rows": [[e.to_dict() for e in row] for row in self.rows]}

    @classmethod
    def from_dict(cls, data):
        return cls([[TrigPoly.from_dict(e) for e in row] for row in data["rows"]])


def quadratic_form_gradient(m):
    """Exact momentum gradient of the quadratic form p . m(q,p,t) p.

    Returns the TrigVec whose k-th component is d/dp_k of sum_ij m_ij p_i p_j.
    Acting on the momentum argument itself this is the matrix field multiplying
    the momentum in the Hamiltonian vector field.
    """
    n = m.rows[0][0].n
    comps = []
    for k in range(n):
        total = TrigPoly.zero(n)
        for i in range(n):
            for j in range(n):
                entry = m.rows[i][j]
                grad = entry.dp(k).mul_p(i).mul_p(j)
                if i == k:
                    grad = grad + entry.mul_p(j)
                if j == k:
                    grad = grad + entry.mul_p(i)
                total = total + grad
        comps.append(total.simplify())
    return TrigVec(comps)


def quadratic_form(m):
    """The scalar p . m(q,p,t) p as an exact TrigPoly."""
    n = m.rows[0][0].n
    total = TrigPoly.zero(n)
    for i in range(n):
        for j in range(n):
            total = total + m.rows[i][j].mul_p(i).mul_p(j)
    return total.simplify()


def momentum_hessian_at_zero(m):
    """Matrix field m(q,0,t) + m(q,0,t)^T.

    Equals the momentum Hessian at p = 0 of the quadratic form p . m p, which
    is the zeroth-order coupling matrix of the linearized functional.
    """
    r, c = m.shape
    rows = [[(m.rows[i][j].at_p0() + m.rows[j][i].at_p0()) for j in range(c)]
            for i in range(r)]
    return TrigMat(rows)
