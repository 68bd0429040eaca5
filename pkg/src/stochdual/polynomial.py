"""Sparse multivariate polynomials with float coefficients.

Used to apply generators to polynomial observables exactly: duality
functions of the energy models are monomials in z, and the moment
equations of SIP/IRW/BEP close on polynomials of bounded degree.
"""
from __future__ import annotations

from math import comb


class Poly:
    """Polynomial in ``n`` variables stored as {exponent tuple: coefficient}."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict | None = None):
        self.n = n
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0.0}

    @classmethod
    def const(cls, n, c=1.0):
        return cls(n, {(0,) * n: float(c)})

    @classmethod
    def var(cls, n, i):
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, exps, coef=1.0):
        return cls(len(exps), {tuple(int(e) for e in exps): float(coef)})

    def copy(self):
        return Poly(self.n, dict(self.terms))

    # arithmetic --------------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return Poly(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.n, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Poly(self.n, {k: v * other for k, v in self.terms.items()})
        out: dict = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out.get(k, 0.0) + v1 * v2
        return Poly(self.n, out)

    __rmul__ = __mul__

    def _coerce(self, x):
        return x if isinstance(x, Poly) else Poly.const(self.n, x)

    # calculus ----------------------------------------------------------
    def diff(self, i):
        out: dict = {}
        for k, v in self.terms.items():
            if k[i]:
                kk = list(k)
                kk[i] -= 1
                kk = tuple(kk)
                out[kk] = out.get(kk, 0.0) + v * k[i]
        return Poly(self.n, out)

    def shift(self, i, d):
        """p(x + d e_i)."""
        out: dict = {}
        for k, v in self.terms.items():
            a = k[i]
            for b in range(a + 1):
                kk = list(k)
                kk[i] = b
                kk = tuple(kk)
                out[kk] = out.get(kk, 0.0) + v * comb(a, b) * d ** (a - b)
        return Poly(self.n, out)

    # inspection ----------------------------------------------------------
    @property
    def degree(self):
        return max((sum(k) for k in self.terms), default=0)

    def coeff(self, exps):
        return self.terms.get(tuple(exps), 0.0)

    def max_abs_coeff(self):
        return max((abs(v) for v in self.terms.values()), default=0.0)

    def __call__(self, x):
        total = 0.0
        for k, v in self.terms.items():
            t = v
            for xi, e in zip(x, k):
                if e:
                    t *= xi ** e
            total += t
        return total

    def __repr__(self):
        return f"Poly({self.n}, {self.terms!r})"


def monomials_upto(n: int, degree: int) -> list[tuple]:
    """All exponent tuples in ``n`` variables with total degree ≤ ``degree``."""
    out = []

    def rec(prefix, left, i):
        if i == n:
            out.append(tuple(prefix))
            return
        for e in range(left + 1):
            rec(prefix + [e], left - e, i + 1)

    rec([], degree, 0)
    return sorted(out, key=lambda k: (sum(k), tuple(-e for e in k)))
