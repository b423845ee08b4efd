"""Differential forms on a coordinate patch R^d or C^d.

A form is stored sparsely as ``{increasing multi-index: coefficient}`` with
1-based indices. A coefficient is either a :class:`Poly` in the d ambient
coordinates (exact) or a :class:`CallableCoefficient` (numeric only).
Complex forms are holomorphic: they are built from dz_1..dz_d alone.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .combinatorics import Permutation, parity
from .exact import GaussianRational
from .polynomial import Poly, determinant


class FormError(ValueError):
    pass


@dataclass(frozen=True)
class CallableCoefficient:
    """Opaque coefficient ``x -> value`` evaluated on arrays of shape ``(N, d)``.

    The callback must be safe to call concurrently.
    """

    func: Callable
    label: str = "callable"

    def evaluate(self, points):
        return np.asarray(self.func(np.asarray(points)))

    def __mul__(self, other):
        if isinstance(other, (CallableCoefficient, Poly)):
            a, b = self.func, _as_callable(other)
            return CallableCoefficient(lambda x: a(x) * b(x), f"({self.label})*({_label(other)})")
        c = other
        a = self.func
        return CallableCoefficient(lambda x: a(x) * complex(c) if isinstance(c, GaussianRational)
                                   else a(x) * float(c), self.label)

    __rmul__ = __mul__

    def __add__(self, other):
        a, b = self.func, _as_callable(other)
        return CallableCoefficient(lambda x: a(x) + b(x), f"{self.label}+{_label(other)}")

    __radd__ = __add__

    def __neg__(self):
        a = self.func
        return CallableCoefficient(lambda x: -a(x), f"-{self.label}")


def _as_callable(c):
    if isinstance(c, CallableCoefficient):
        return c.func
    if isinstance(c, Poly):
        return c.evaluate
    raise TypeError(type(c))


def _label(c):
    return c.label if isinstance(c, CallableCoefficient) else "poly"


def evaluate_coefficient(c, points) -> np.ndarray:
    points = np.asarray(points)
    if isinstance(c, Poly):
        return c.evaluate(points)
    return c.evaluate(points)


def _merge_sign(a: tuple, b: tuple):
    """Sign and sorted index of dx_a ^ dx_b, or ``(0, None)`` on a repeat."""
    if set(a) & set(b):
        return 0, None
    combined = a + b
    order = sorted(range(len(combined)), key=lambda i: combined[i])
    sign = parity(Permutation(tuple(i + 1 for i in order))) if combined else 1
    return sign, tuple(sorted(combined))


@dataclass(frozen=True)
class DifferentialForm:
    dim: int
    degree: int
    coeffs: dict = field(default_factory=dict)
    field: str = "real"

    def __post_init__(self):
        if not 0 <= self.degree:
            raise FormError("degree must be non-negative")
        if self.field not in ("real", "complex"):
            raise FormError(f"unknown field {self.field!r}")
        clean = {}
        for index, c in self.coeffs.items():
            index = tuple(int(i) for i in index)
            if len(index) != self.degree:
                raise FormError(f"multi-index {index} does not have degree {self.degree}")
            if any(b <= a for a, b in zip(index, index[1:])):
                raise FormError(f"multi-index {index} is not strictly increasing")
            if any(not 1 <= i <= self.dim for i in index):
                raise FormError(f"multi-index {index} leaves 1..{self.dim}")
            if isinstance(c, Poly) and c.nvars != self.dim:
                raise FormError(f"coefficient on {index} has {c.nvars} variables, expected {self.dim}")
            if isinstance(c, Poly) and c.is_zero():
                continue
            clean[index] = c
        object.__setattr__(self, "coeffs", clean)

    # constructors ---------------------------------------------------------

    @classmethod
    def zero(cls, dim: int, degree: int, field: str = "real") -> DifferentialForm:
        return cls(dim, degree, {}, field)

    @classmethod
    def basis(cls, dim: int, index, coeff=None, field: str = "real") -> DifferentialForm:
        """``coeff * dx_{i1} ^ ... ^ dx_{ik}`` for an arbitrary (unsorted) index tuple."""
        index = tuple(index)
        if coeff is None:
            coeff = Poly.constant(_one(field), dim)
        elif not isinstance(coeff, (Poly, CallableCoefficient)):
            coeff = Poly.constant(coeff, dim)
        out = cls(dim, 0, {(): coeff}, field)
        for i in index:
            out = out.wedge(cls(dim, 1, {(i,): Poly.constant(_one(field), dim)}, field))
        return out

    @classmethod
    def volume(cls, dim: int, coeff=None, field: str = "real") -> DifferentialForm:
        return cls.basis(dim, range(1, dim + 1), coeff, field)

    # algebra --------------------------------------------------------------

    def is_polynomial(self) -> bool:
        return all(isinstance(c, Poly) for c in self.coeffs.values())

    def wedge(self, other: DifferentialForm) -> DifferentialForm:
        if other.dim != self.dim:
            raise FormError(f"ambient dimensions differ: {self.dim} vs {other.dim}")
        if other.field != self.field:
            raise FormError("cannot wedge a real form with a complex form")
        degree = self.degree + other.degree
        out = {}
        if degree <= self.dim:
            for (a, ca), (b, cb) in itertools.product(self.coeffs.items(), other.coeffs.items()):
                sign, index = _merge_sign(a, b)
                if not sign:
                    continue
                term = ca * cb if sign > 0 else -(ca * cb)
                out[index] = out[index] + term if index in out else term
        return DifferentialForm(self.dim, degree, out, self.field)

    __xor__ = wedge

    def __add__(self, other: DifferentialForm) -> DifferentialForm:
        if (other.dim, other.degree, other.field) != (self.dim, self.degree, self.field):
            raise FormError("can only add forms of equal dimension, degree and field")
        out = dict(self.coeffs)
        for index, c in other.coeffs.items():
            out[index] = out[index] + c if index in out else c
        return DifferentialForm(self.dim, self.degree, out, self.field)

    def scale(self, c) -> DifferentialForm:
        return DifferentialForm(self.dim, self.degree,
                                {i: v * c for i, v in self.coeffs.items()}, self.field)

    def __neg__(self):
        return self.scale(-1)

    def evaluate(self, points) -> dict:
        """Coefficient values at ``points`` (shape ``(N, d)``), keyed by multi-index."""
        return {i: evaluate_coefficient(c, points) for i, c in self.coeffs.items()}


def _one(field):
    return GaussianRational(1) if field == "complex" else Fraction(1)


def pullback_polynomial(components, w: DifferentialForm) -> Poly:
    """Exact density of ``g^* w`` for a polynomial map ``g = components``.

    ``components`` are d polynomials in the n domain variables and ``w`` must
    have degree n. The density is ``sum_J w_J(g(t)) * det(dg_J/dt)``.
    """
    components = list(components)
    if len(components) != w.dim:
        raise FormError(f"map has {len(components)} components, form lives in dimension {w.dim}")
    if not w.is_polynomial():
        raise FormError("exact pullback needs polynomial coefficients")
    n = components[0].nvars if components else 0
    if w.degree != n:
        raise FormError(f"form degree {w.degree} differs from membrane dimension {n}")
    jac = [[g.diff(j) for j in range(n)] for g in components]
    total = Poly(n)
    for index, c in w.coeffs.items():
        minor = determinant([jac[i - 1] for i in index]) if index else Poly.constant(Fraction(1), n)
        total = total + c.compose(components) * minor
    return total


def pullback_form(F, w: DifferentialForm) -> DifferentialForm:
    """``F^* w`` for a polynomial map ``F: R^d -> R^{d'}`` given as d' Polys in d variables."""
    F = list(F)
    if len(F) != w.dim:
        raise FormError(f"map has {len(F)} components, form lives in dimension {w.dim}")
    if not w.is_polynomial():
        raise FormError("pullback_form needs polynomial coefficients")
    d = F[0].nvars
    jac = [[f.diff(j) for j in range(d)] for f in F]
    out = {}
    for index, c in w.coeffs.items():
        composed = c.compose(F)
        for source in itertools.combinations(range(d), w.degree):
            minor = determinant([[jac[i - 1][j] for j in source] for i in index])
            if not w.degree:
                minor = Poly.constant(Fraction(1), d)
            term = composed * minor
            if term.is_zero():
                continue
            key = tuple(j + 1 for j in source)
            out[key] = out[key] + term if key in out else term
    return DifferentialForm(d, w.degree, out, w.field)


def pullback_values(w: DifferentialForm, x: np.ndarray, jac: np.ndarray) -> np.ndarray:
    """Numeric density of ``g^* w`` from ``x = g(t)`` (N, d) and ``jac = Dg(t)`` (N, d, n)."""
    n = jac.shape[-1]
    if w.degree != n:
        raise FormError(f"form degree {w.degree} differs from membrane dimension {n}")
    dtype = np.result_type(x.dtype, jac.dtype, float)
    total = np.zeros(x.shape[0], dtype=np.complex128 if w.field == "complex" else dtype)
    for index, c in w.coeffs.items():
        rows = [i - 1 for i in index]
        minor = np.linalg.det(jac[:, rows, :]) if n else np.ones(x.shape[0])
        total = total + evaluate_coefficient(c, x) * minor
    return total


class PullbackDensity:
    """The density f with ``g^* w = f(t) dt_1 ^ ... ^ dt_n`` on the cube.

    Calling it evaluates f numerically on points of shape ``(N, n)``. For a
    polynomial membrane and form, :meth:`cell_polynomial` gives f exactly on
    each grid cell.
    """

    def __init__(self, g, w: DifferentialForm):
        if w.degree != g.n:
            raise FormError(f"form degree {w.degree} differs from membrane dimension {g.n}")
        if w.dim != g.d:
            raise FormError(f"form lives in dimension {w.dim}, membrane target is {g.d}")
        self.g, self.w = g, w
        self._exact = {}

    @property
    def is_polynomial(self) -> bool:
        return self.g.is_polynomial and self.w.is_polynomial()

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return pullback_values(self.w, self.g(t), self.g.jacobian(t))

    def cell_polynomial(self, cell) -> Poly:
        cell = tuple(cell)
        if cell not in self._exact:
            if not self.is_polynomial:
                raise FormError("exact density needs a polynomial membrane and form")
            self._exact[cell] = pullback_polynomial(self.g.cell_polys[cell], self.w)
        return self._exact[cell]

    def null_cell(self, cell) -> bool:
        return self.g.null_cell(cell)


def pullback(g, w: DifferentialForm) -> PullbackDensity:
    return PullbackDensity(g, w)
