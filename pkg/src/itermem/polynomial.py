"""Sparse multivariate polynomials with exact coefficients.

Coefficients are Fractions, or GaussianRationals for complex scenarios.
Terms are stored as ``{exponent tuple: coefficient}`` and zero coefficients
are never kept.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .exact import GaussianRational


class Poly:
    __slots__ = ("nvars", "terms", "_numeric")

    def __init__(self, nvars: int, terms=None):
        self.nvars = nvars
        self.terms = {}
        self._numeric = None
        if terms:
            for exps, c in terms.items():
                exps = tuple(exps)
                if len(exps) != nvars:
                    raise ValueError(f"exponent {exps} has wrong length for {nvars} variables")
                if c:
                    self.terms[exps] = self.terms.get(exps, 0) + c
            self.terms = {e: c for e, c in self.terms.items() if c}

    @classmethod
    def constant(cls, c, nvars: int) -> Poly:
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def var(cls, i: int, nvars: int) -> Poly:
        exps = [0] * nvars
        exps[i] = 1
        return cls(nvars, {tuple(exps): Fraction(1)})

    @classmethod
    def _raw(cls, nvars, terms) -> Poly:
        p = cls.__new__(cls)
        p.nvars = nvars
        p.terms = terms
        p._numeric = None
        return p

    # arithmetic -----------------------------------------------------------

    def _lift(self, other) -> Poly:
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise ValueError("polynomials live in different rings")
            return other
        return Poly.constant(other, self.nvars)

    def __add__(self, other):
        other = self._lift(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            v = out.get(e, 0) + c
            if v:
                out[e] = v
            else:
                out.pop(e, None)
        return Poly._raw(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Poly._raw(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Poly):
            if not other:
                return Poly(self.nvars)
            return Poly._raw(self.nvars, {e: c * other for e, c in self.terms.items()})
        other = self._lift(other)
        out = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = out.get(e, 0) + c1 * c2
                if v:
                    out[e] = v
                else:
                    out.pop(e, None)
        return Poly._raw(self.nvars, out)

    __rmul__ = __mul__

    def __truediv__(self, c):
        if isinstance(c, Poly):
            raise TypeError("polynomial division is not supported")
        return self * (Fraction(1) / c if isinstance(c, int) else 1 / c)

    def __pow__(self, k: int):
        out = Poly.constant(Fraction(1), self.nvars)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.nvars == other.nvars and self.terms == other.terms
        return self == self._lift(other)

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        if not self.terms:
            return "Poly(0)"
        parts = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(f"x{i}^{k}" if k > 1 else f"x{i}" for i, k in enumerate(e) if k)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return "Poly(" + " + ".join(parts) + ")"

    # structure ------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(not any(e) for e in self.terms)

    def constant_term(self):
        return self.terms.get((0,) * self.nvars, Fraction(0))

    def degree(self, i: int | None = None) -> int:
        if not self.terms:
            return -1
        if i is None:
            return max(sum(e) for e in self.terms)
        return max(e[i] for e in self.terms)

    def used_vars(self) -> frozenset:
        used = set()
        for e in self.terms:
            used.update(i for i, k in enumerate(e) if k)
        return frozenset(used)

    def is_complex(self) -> bool:
        return any(isinstance(c, GaussianRational) and c.im for c in self.terms.values())

    def map_coeffs(self, f) -> Poly:
        return Poly(self.nvars, {e: f(c) for e, c in self.terms.items()})

    # calculus and substitution --------------------------------------------

    def diff(self, i: int) -> Poly:
        out = {}
        for e, c in self.terms.items():
            k = e[i]
            if k:
                e2 = list(e)
                e2[i] = k - 1
                out[tuple(e2)] = c * k
        return Poly._raw(self.nvars, out)

    def antiderivative(self, i: int) -> Poly:
        out = {}
        for e, c in self.terms.items():
            e2 = list(e)
            e2[i] += 1
            out[tuple(e2)] = c * Fraction(1, e2[i])
        return Poly._raw(self.nvars, out)

    def subs_const(self, i: int, value) -> Poly:
        """Set variable ``i`` to a constant; the ring keeps its size."""
        out = {}
        for e, c in self.terms.items():
            k = e[i]
            e2 = list(e)
            e2[i] = 0
            e2 = tuple(e2)
            v = out.get(e2, 0) + c * value ** k
            if v:
                out[e2] = v
            else:
                out.pop(e2, None)
        return Poly._raw(self.nvars, out)

    def subs_var(self, i: int, j: int) -> Poly:
        """Replace variable ``i`` by variable ``j``."""
        out = {}
        for e, c in self.terms.items():
            e2 = list(e)
            e2[j] += e2[i]
            e2[i] = 0
            e2 = tuple(e2)
            v = out.get(e2, 0) + c
            if v:
                out[e2] = v
            else:
                out.pop(e2, None)
        return Poly._raw(self.nvars, out)

    def integrate(self, i: int, lo, hi) -> Poly:
        """Definite integral in variable ``i``.

        ``lo`` and ``hi`` are either exact constants or ``("var", j)`` bounds.
        """
        result = {}

        def push(e, c):
            v = result.get(e, 0) + c
            if v:
                result[e] = v
            else:
                result.pop(e, None)

        for e, c in self.terms.items():
            k = e[i] + 1
            c = c * Fraction(1, k)
            base = list(e)
            base[i] = 0
            for bound, sign in ((hi, 1), (lo, -1)):
                if isinstance(bound, tuple):
                    e2 = list(base)
                    e2[bound[1]] += k
                    push(tuple(e2), c if sign > 0 else -c)
                else:
                    if bound:
                        push(tuple(base), (c if sign > 0 else -c) * bound ** k)
        return Poly._raw(self.nvars, result)

    def compose(self, polys) -> Poly:
        """Substitute ``polys[i]`` for variable ``i``; all polys share one ring."""
        polys = list(polys)
        if len(polys) != self.nvars:
            raise ValueError("compose needs one polynomial per variable")
        if not polys:
            return self
        m = polys[0].nvars
        powers = [{} for _ in polys]

        def power(i, k):
            cache = powers[i]
            if k not in cache:
                cache[k] = polys[i] ** k if k <= 1 else power(i, k - 1) * polys[i]
            return cache[k]

        out = Poly(m)
        for e, c in self.terms.items():
            term = Poly.constant(c, m)
            for i, k in enumerate(e):
                if k:
                    term = term * power(i, k)
            out = out + term
        return out

    def embed(self, nvars: int, mapping) -> Poly:
        """Move variable ``i`` to position ``mapping[i]`` in a ring of ``nvars`` variables."""
        out = {}
        for e, c in self.terms.items():
            e2 = [0] * nvars
            for i, k in enumerate(e):
                if k:
                    e2[mapping[i]] += k
            e2 = tuple(e2)
            out[e2] = out.get(e2, 0) + c
        return Poly(nvars, out)

    # evaluation -----------------------------------------------------------

    def __call__(self, *point):
        """Exact evaluation at a point given as separate arguments."""
        if len(point) != self.nvars:
            raise ValueError(f"expected {self.nvars} coordinates")
        total = Fraction(0)
        for e, c in self.terms.items():
            term = c
            for x, k in zip(point, e):
                if k:
                    term = term * x ** k
            total = total + term
        return total

    def _numeric_form(self):
        if self._numeric is None:
            if self.terms:
                exps = np.array(list(self.terms.keys()), dtype=np.int64)
                raw = list(self.terms.values())
                if any(isinstance(c, GaussianRational) for c in raw):
                    coeffs = np.array([complex(c) for c in raw])
                else:
                    coeffs = np.array([float(c) for c in raw])
            else:
                exps = np.zeros((0, self.nvars), dtype=np.int64)
                coeffs = np.zeros(0)
            self._numeric = (exps, coeffs)
        return self._numeric

    def evaluate(self, points) -> np.ndarray:
        """Floating evaluation at an array of points of shape ``(..., nvars)``."""
        points = np.asarray(points)
        exps, coeffs = self._numeric_form()
        shape = points.shape[:-1]
        if not len(coeffs):
            return np.zeros(shape)
        flat = points.reshape(-1, self.nvars)
        out = np.zeros(flat.shape[0], dtype=np.result_type(flat.dtype, coeffs.dtype, float))
        for e, c in zip(exps, coeffs):
            term = np.full(flat.shape[0], c, dtype=out.dtype)
            for i, k in enumerate(e):
                if k:
                    term = term * flat[:, i] ** k
            out += term
        return out.reshape(shape)


def determinant(matrix):
    """Leibniz expansion; entries are Polys (or scalars) in a common ring."""
    from .combinatorics import Permutation

    k = len(matrix)
    if k == 0:
        return Fraction(1)
    if k == 1:
        return matrix[0][0]
    if k == 2:
        return matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0]
    total = None
    for perm in Permutation.all(k):
        term = None
        for row, col in enumerate(perm.images):
            entry = matrix[row][col - 1]
            term = entry if term is None else term * entry
        term = term * perm.parity()
        total = term if total is None else total + term
    return total
