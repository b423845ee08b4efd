"""Membranes ``g: I^n -> R^d`` (or ``C^d``), their composition and reparametrization.

A membrane carries a smooth grid: per-axis breakpoints in (0, 1). On every
open cell of the grid the map is continuously differentiable, so integration
engines subdivide along the grid and never straddle a kink.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .exact import GaussianRational, is_exact
from .polynomial import Poly


class MembraneError(ValueError):
    pass


class NotClosedError(MembraneError):
    pass


class NotMonotonicError(MembraneError):
    pass


def _axis_cells(breakpoints):
    return [range(len(bp) + 1) for bp in breakpoints]


def _locate(breakpoints, t: np.ndarray) -> np.ndarray:
    """Grid-cell index of each point, shape ``(N, n)``."""
    cols = [np.searchsorted(np.asarray([float(b) for b in bp], dtype=float), t[:, i], side="right")
            for i, bp in enumerate(breakpoints)]
    return np.stack(cols, axis=1) if cols else np.zeros((t.shape[0], 0), dtype=np.int64)


class Membrane:
    """Piecewise-smooth map from the unit cube ``I^n`` into ``R^d`` or ``C^d``.

    Subclasses implement :meth:`__call__` and :meth:`jacobian` on arrays of
    shape ``(N, n)``; they return ``(N, d)`` and ``(N, d, n)`` arrays. Both must
    be safe to call concurrently.
    """

    n: int
    d: int
    field: str
    breakpoints: tuple
    label: str = "membrane"

    def __call__(self, t):
        raise NotImplementedError

    def jacobian(self, t):
        raise NotImplementedError

    @property
    def is_polynomial(self) -> bool:
        return False

    def null_cell(self, cell) -> bool:
        """True when the map is known to be constant on the grid cell ``cell``."""
        return False

    def cells(self):
        return itertools.product(*_axis_cells(self.breakpoints))

    def base_point(self) -> np.ndarray:
        return np.asarray(self(np.zeros((1, self.n))))[0]

    def __repr__(self):
        return f"<{type(self).__name__} {self.label} n={self.n} d={self.d} {self.field}>"


class CallableMembrane(Membrane):
    def __init__(self, n: int, d: int, func: Callable, jac: Callable, breakpoints=None,
                 field: str = "real", null_cells=(), label: str = "callable"):
        self.n, self.d, self.field, self.label = n, d, field, label
        self.func, self.jac = func, jac
        self.breakpoints = tuple(tuple(bp) for bp in (breakpoints or [()] * n))
        self._null = frozenset(tuple(c) for c in null_cells)

    def __call__(self, t):
        return np.asarray(self.func(np.asarray(t, dtype=float)))

    def jacobian(self, t):
        return np.asarray(self.jac(np.asarray(t, dtype=float)))

    def null_cell(self, cell) -> bool:
        return tuple(cell) in self._null


class PolynomialMembrane(Membrane):
    """Piecewise-polynomial membrane: d polynomials in t_1..t_n per grid cell.

    Breakpoints are exact rationals so the exact engine can integrate cell by cell.
    """

    def __init__(self, n: int, d: int, cells: dict, breakpoints=None, field: str = "real",
                 label: str = "polynomial"):
        self.n, self.d, self.field, self.label = n, d, field, label
        self.breakpoints = tuple(tuple(Fraction(b) for b in bp) for bp in (breakpoints or [()] * n))
        if len(self.breakpoints) != n:
            raise MembraneError(f"need breakpoints for {n} axes, got {len(self.breakpoints)}")
        for bp in self.breakpoints:
            if list(bp) != sorted(set(bp)) or any(not 0 < b < 1 for b in bp):
                raise MembraneError(f"breakpoints {bp} must be sorted, distinct and inside (0, 1)")
        self.cell_polys = {}
        for cell in itertools.product(*_axis_cells(self.breakpoints)):
            if cell not in cells:
                raise MembraneError(f"missing polynomial data for cell {cell}")
            comps = tuple(cells[cell])
            if len(comps) != d:
                raise MembraneError(f"cell {cell} has {len(comps)} components, expected {d}")
            if any(p.nvars != n for p in comps):
                raise MembraneError(f"cell {cell} components must be polynomials in {n} variables")
            self.cell_polys[cell] = comps
        self._derivs = {}

    @classmethod
    def single(cls, components, field: str = "real", label: str = "polynomial") -> PolynomialMembrane:
        components = list(components)
        n = components[0].nvars
        return cls(n, len(components), {(0,) * n: tuple(components)}, None, field, label)

    @property
    def is_polynomial(self) -> bool:
        return True

    def null_cell(self, cell) -> bool:
        return all(p.is_constant() for p in self.cell_polys[tuple(cell)])

    def derivatives(self, cell):
        if cell not in self._derivs:
            self._derivs[cell] = tuple(tuple(p.diff(j) for j in range(self.n))
                                       for p in self.cell_polys[cell])
        return self._derivs[cell]

    def _dtype(self):
        return np.complex128 if self.field == "complex" else np.float64

    def __call__(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        out = np.zeros((t.shape[0], self.d), dtype=self._dtype())
        for cell, mask in self._cell_masks(t):
            for i, p in enumerate(self.cell_polys[cell]):
                out[mask, i] = p.evaluate(t[mask])
        return out

    def jacobian(self, t):
        t = np.atleast_2d(np.asarray(t, dtype=float))
        out = np.zeros((t.shape[0], self.d, self.n), dtype=self._dtype())
        for cell, mask in self._cell_masks(t):
            for i, row in enumerate(self.derivatives(cell)):
                for j, p in enumerate(row):
                    out[mask, i, j] = p.evaluate(t[mask])
        return out

    def _cell_masks(self, t):
        if len(self.cell_polys) == 1:
            yield next(iter(self.cell_polys)), np.ones(t.shape[0], dtype=bool)
            return
        ids = _locate(self.breakpoints, t)
        for cell in self.cell_polys:
            mask = np.all(ids == np.asarray(cell), axis=1)
            if mask.any():
                yield cell, mask

    def exact_base_point(self):
        origin = (0,) * self.n
        return tuple(p(*([Fraction(0)] * self.n)) for p in self.cell_polys[origin])


# catalog ------------------------------------------------------------------


def _scalar(x, field):
    if isinstance(x, GaussianRational):
        return x
    if isinstance(x, complex):
        raise MembraneError("complex entries must be exact: pass GaussianRational")
    return GaussianRational(Fraction(x)) if field == "complex" else Fraction(x)


def constant(n: int, x0, field: str = "real") -> PolynomialMembrane:
    x0 = [_scalar(x, field) for x in x0]
    return PolynomialMembrane.single([Poly.constant(x, n) for x in x0], field, label="constant")


def identity(n: int) -> PolynomialMembrane:
    return PolynomialMembrane.single([Poly.var(i, n) for i in range(n)], label="identity")


def _profile(n, m, powers):
    t = [Poly.var(i, n) for i in range(n)]
    out = Poly.constant(Fraction(1), n)
    for nu in range(n):
        out = out * (t[nu] * (1 - t[nu])) ** m
        if powers:
            out = out * t[nu] ** powers[nu]
    return out


def bump(n: int, x0, v, m: int = 2, powers=None, field: str = "real") -> PolynomialMembrane:
    """Closed membrane ``x0_i + v_i * prod_nu (t_nu (1 - t_nu))^m * t_nu^{p_{i,nu}}``.

    With ``powers`` omitted every component shares one profile, so the image is
    a segment and every n-form with n >= 2 pulls back to zero. Distinct powers
    per component give a genuinely n-dimensional closed membrane.
    """
    if m < 1:
        raise MembraneError("bump exponent m must be at least 1 to close the membrane")
    d = len(x0)
    if len(v) != d:
        raise MembraneError("x0 and v must have the same length")
    if powers is not None and (len(powers) != d or any(len(p) != n for p in powers)):
        raise MembraneError(f"powers must be a {d} x {n} table")
    comps = []
    for i in range(d):
        prof = _profile(n, m, powers[i] if powers else None)
        comps.append(Poly.constant(_scalar(x0[i], field), n) + prof * _scalar(v[i], field))
    return PolynomialMembrane.single(comps, field, label="bump")


def product_of_paths(paths, field: str = "real") -> PolynomialMembrane:
    """``g(t) = (gamma_1(t_1), ..., gamma_n(t_n))`` from univariate polynomials."""
    n = len(paths)
    comps = []
    for nu, path in enumerate(paths):
        if path.nvars != 1:
            raise MembraneError("paths must be univariate polynomials")
        comps.append(path.embed(n, [nu]))
    return PolynomialMembrane.single(comps, field, label="product_of_paths")


def torus(R: float = 2.0, r: float = 1.0) -> CallableMembrane:
    """The standard torus surface in R^3 (not closed, not polynomial)."""
    two_pi = 2 * math.pi

    def f(t):
        a, b = two_pi * t[:, 0], two_pi * t[:, 1]
        rad = R + r * np.cos(b)
        return np.stack([rad * np.cos(a), rad * np.sin(a), r * np.sin(b)], axis=1)

    def jac(t):
        a, b = two_pi * t[:, 0], two_pi * t[:, 1]
        rad = R + r * np.cos(b)
        out = np.zeros((t.shape[0], 3, 2))
        out[:, 0, 0] = -two_pi * rad * np.sin(a)
        out[:, 1, 0] = two_pi * rad * np.cos(a)
        out[:, 0, 1] = -two_pi * r * np.sin(b) * np.cos(a)
        out[:, 1, 1] = -two_pi * r * np.sin(b) * np.sin(a)
        out[:, 2, 1] = two_pi * r * np.cos(b)
        return out

    return CallableMembrane(2, 3, f, jac, label="torus")


def trig_bubble(n: int, x0, amplitudes, frequencies) -> CallableMembrane:
    """Closed non-polynomial membrane
    ``x0_i + a_i * prod_nu sin(pi t_nu) * cos(pi k_{i,nu} t_nu)``."""
    x0 = np.asarray(x0, dtype=float)
    amp = np.asarray(amplitudes, dtype=float)
    freq = np.asarray(frequencies, dtype=float)
    d = x0.shape[0]
    if amp.shape != (d,) or freq.shape != (d, n):
        raise MembraneError("amplitudes need shape (d,) and frequencies shape (d, n)")
    pi = math.pi

    def factors(t):
        s = np.sin(pi * t)[:, None, :]
        c = np.cos(pi * freq[None] * t[:, None, :])
        ds = (pi * np.cos(pi * t))[:, None, :]
        dc = -pi * freq[None] * np.sin(pi * freq[None] * t[:, None, :])
        return s * c, ds * c + s * dc

    def f(t):
        val, _ = factors(t)
        return x0[None] + amp[None] * np.prod(val, axis=2)

    def jac(t):
        val, der = factors(t)
        out = np.empty((t.shape[0], d, n))
        for j in range(n):
            others = np.prod(np.delete(val, j, axis=2), axis=2)
            out[:, :, j] = amp[None] * others * der[:, :, j]
        return out

    return CallableMembrane(n, d, f, jac, label="trig_bubble")


def map_membrane(F, g: Membrane) -> Membrane:
    """``F o g`` for a polynomial map F given as d' Polys in the d target variables."""
    F = list(F)
    if any(f.nvars != g.d for f in F):
        raise MembraneError(f"map F must take {g.d} variables")
    field = "complex" if g.field == "complex" or any(f.is_complex() for f in F) else "real"
    if isinstance(g, PolynomialMembrane):
        cells = {c: tuple(f.compose(list(comps)) for f in F) for c, comps in g.cell_polys.items()}
        return PolynomialMembrane(g.n, len(F), cells, g.breakpoints, field, label=f"F({g.label})")
    jacF = [[f.diff(j) for j in range(g.d)] for f in F]

    def func(t):
        x = g(t)
        return np.stack([f.evaluate(x) for f in F], axis=1)

    def jac(t):
        x = g(t)
        outer = np.stack([np.stack([p.evaluate(x) for p in row], axis=1) for row in jacF], axis=1)
        return outer @ g.jacobian(t)

    return CallableMembrane(g.n, len(F), func, jac, g.breakpoints, field, label=f"F({g.label})")


# closedness and composition -------------------------------------------------


def is_closed(g: Membrane, x0, tol: float = 1e-10, resolution: int = 11) -> bool:
    """Does g send the whole boundary of ``I^n`` to ``x0``?

    Polynomial membranes with exact ``x0`` are checked symbolically face by
    face; everything else is sampled on a deterministic boundary grid.
    """
    x0 = list(x0)
    if len(x0) != g.d:
        return False
    if isinstance(g, PolynomialMembrane) and all(is_exact(x) for x in x0):
        for nu in range(g.n):
            for side, value in ((0, Fraction(0)), (len(g.breakpoints[nu]), Fraction(1))):
                for cell, comps in g.cell_polys.items():
                    if cell[nu] != side:
                        continue
                    for p, x in zip(comps, x0):
                        if not (p.subs_const(nu, value) - x).is_zero():
                            return False
        return True
    target = np.asarray([complex(x) if isinstance(x, GaussianRational) else x for x in x0])
    grid = np.linspace(0.0, 1.0, resolution)
    for nu in range(g.n):
        others = [grid] * (g.n - 1)
        pts = np.array(list(itertools.product(*others))) if others else np.zeros((1, 0))
        for value in (0.0, 1.0):
            face = np.insert(pts, nu, value, axis=1)
            if np.max(np.abs(g(face) - target[None])) > tol:
                return False
    return True


def _common_base(g1: Membrane, g2: Membrane, tol: float):
    if (g1.n, g1.d) != (g2.n, g2.d):
        raise MembraneError("membranes differ in domain or target dimension")
    if g1.field != g2.field:
        raise MembraneError("membranes differ in scalar field")
    if isinstance(g1, PolynomialMembrane) and isinstance(g2, PolynomialMembrane):
        x0 = g1.exact_base_point()
        if not is_closed(g1, x0):
            raise NotClosedError(f"{g1.label} is not closed")
        if not is_closed(g2, x0):
            raise NotClosedError(f"{g2.label} is not closed at the base point of {g1.label}")
        return x0
    x0 = g1.base_point()
    if not is_closed(g1, x0, tol):
        raise NotClosedError(f"{g1.label} is not closed")
    if not is_closed(g2, x0, tol):
        raise NotClosedError(f"{g2.label} is not closed at the base point of {g1.label}")
    return x0


def compose(g1: Membrane, g2: Membrane, tol: float = 1e-10) -> Membrane:
    """The product ``g1 g2`` of two closed membranes with a common base point.

    ``g1(2t)`` on the lower cube (all ``t_nu <= 1/2``), ``g2(2t - 1)`` on the
    upper cube (all ``t_nu > 1/2``) and the base point everywhere else.
    """
    x0 = _common_base(g1, g2, tol)
    half = Fraction(1, 2)
    breakpoints = tuple(tuple(Fraction(b) / 2 for b in b1) + (half,) + tuple(half + Fraction(b) / 2 for b in b2)
                        for b1, b2 in zip(g1.breakpoints, g2.breakpoints))
    lower = [len(b) + 1 for b in g1.breakpoints]
    n = g1.n
    label = f"({g1.label}*{g2.label})"

    if isinstance(g1, PolynomialMembrane) and isinstance(g2, PolynomialMembrane):
        t = [Poly.var(i, n) for i in range(n)]
        down = [2 * ti for ti in t]
        up = [2 * ti - 1 for ti in t]
        const = tuple(Poly.constant(x, n) for x in x0)
        cells = {}
        for cell in itertools.product(*_axis_cells(breakpoints)):
            if all(j < L for j, L in zip(cell, lower)):
                cells[cell] = tuple(p.compose(down) for p in g1.cell_polys[cell])
            elif all(j >= L for j, L in zip(cell, lower)):
                src = tuple(j - L for j, L in zip(cell, lower))
                cells[cell] = tuple(p.compose(up) for p in g2.cell_polys[src])
            else:
                cells[cell] = const
        return PolynomialMembrane(n, g1.d, cells, breakpoints, g1.field, label=label)

    x0 = np.asarray(x0)

    def regions(t):
        lo = np.all(t <= 0.5, axis=1)
        hi = np.all(t > 0.5, axis=1)
        return lo, hi

    def func(t):
        lo, hi = regions(t)
        out = np.empty((t.shape[0], g1.d), dtype=np.result_type(x0.dtype, float))
        out[:] = x0
        if lo.any():
            out[lo] = g1(2 * t[lo])
        if hi.any():
            out[hi] = g2(2 * t[hi] - 1)
        return out

    def jac(t):
        lo, hi = regions(t)
        out = np.zeros((t.shape[0], g1.d, n), dtype=np.result_type(x0.dtype, float))
        if lo.any():
            out[lo] = 2 * g1.jacobian(2 * t[lo])
        if hi.any():
            out[hi] = 2 * g2.jacobian(2 * t[hi] - 1)
        return out

    null = []
    for cell in itertools.product(*_axis_cells(breakpoints)):
        inside_lo = all(j < L for j, L in zip(cell, lower))
        inside_hi = all(j >= L for j, L in zip(cell, lower))
        if not (inside_lo or inside_hi):
            null.append(cell)
        elif inside_lo and g1.null_cell(cell):
            null.append(cell)
        elif inside_hi and g2.null_cell(tuple(j - L for j, L in zip(cell, lower))):
            null.append(cell)
    return CallableMembrane(n, g1.d, func, jac, breakpoints, g1.field, null, label)


# reparametrization ----------------------------------------------------------


@dataclass
class Reparametrization:
    """A piecewise diffeomorphism ``phi: I^n -> I^n``.

    ``polys`` holds exact component polynomials when phi is polynomial;
    ``coordinatewise`` marks maps of the form ``phi(x)_nu = phi_nu(x_nu)``.
    """

    n: int
    func: Callable
    jac: Callable
    inverse: Callable | None = None
    breakpoints: tuple = None
    polys: tuple | None = None
    coordinatewise: bool = False
    label: str = "phi"

    def __post_init__(self):
        if self.breakpoints is None:
            self.breakpoints = tuple(() for _ in range(self.n))

    @classmethod
    def from_polynomials(cls, polys, inverse=None, label="phi") -> Reparametrization:
        polys = tuple(polys)
        n = len(polys)
        derivs = [[p.diff(j) for j in range(n)] for p in polys]
        coordinatewise = all(p.used_vars() <= {i} for i, p in enumerate(polys))

        def func(x):
            return np.stack([p.evaluate(x) for p in polys], axis=1)

        def jac(x):
            return np.stack([np.stack([q.evaluate(x) for q in row], axis=1) for row in derivs], axis=1)

        return cls(n, func, jac, inverse, None, polys, coordinatewise, label)

    @classmethod
    def identity(cls, n: int) -> Reparametrization:
        return cls.from_polynomials([Poly.var(i, n) for i in range(n)], inverse=lambda x: x,
                                    label="id")

    def __call__(self, x):
        return np.asarray(self.func(np.atleast_2d(np.asarray(x, dtype=float))))


def certify_monotonic(phi: Reparametrization, resolution: int = 10, tol: float = 1e-12) -> bool:
    """Falsifiable certificate that phi preserves the coordinatewise order.

    On a ``resolution**n`` grid: phi must stay in the cube, fix the corners 0 and 1,
    be non-decreasing along every axis (which covers all comparable grid pairs by
    transitivity) and have non-negative Jacobian entries. The inverse must be
    monotonic too, so the inverse Jacobian is checked for non-negative entries
    and the diagonal for positive ones. Together these force phi to act on each
    axis separately; a map such as ``(x1 + x1*x2*(1-x1)/2, x2)`` is order
    preserving but its inverse is not, and it shrinks the ordered domain.
    """
    n = phi.n
    grid = np.linspace(0.0, 1.0, resolution)
    pts = np.array(list(itertools.product(grid, repeat=n)))
    vals = phi(pts)
    if np.any(vals < -tol) or np.any(vals > 1 + tol):
        return False
    corners = phi(np.array([[0.0] * n, [1.0] * n]))
    if np.max(np.abs(corners - np.array([[0.0] * n, [1.0] * n]))) > 1e-9:
        return False
    cube = vals.reshape((resolution,) * n + (n,))
    for axis in range(n):
        if np.any(np.diff(cube, axis=axis) < -tol):
            return False
    inner = np.linspace(0.0, 1.0, resolution + 2)[1:-1]
    ipts = np.array(list(itertools.product(inner, repeat=n)))
    jac = np.asarray(phi.jac(ipts))
    if np.any(jac < -tol):
        return False
    diag = np.diagonal(jac, axis1=-2, axis2=-1)
    if np.any(diag <= tol):
        return False
    if np.any(np.linalg.inv(jac) < -tol):
        return False
    return True


def reparametrize(g: Membrane, phi: Reparametrization) -> Membrane:
    """``g o phi`` for a certified monotonic reparametrization phi."""
    if phi.n != g.n:
        raise MembraneError(f"phi acts on I^{phi.n}, membrane lives on I^{g.n}")
    if not certify_monotonic(phi):
        raise NotMonotonicError(f"{phi.label} is not a monotonic piecewise diffeomorphism")
    label = f"{g.label}o{phi.label}"
    single_cell = all(not bp for bp in g.breakpoints)
    if isinstance(g, PolynomialMembrane) and phi.polys is not None and single_cell \
            and all(not bp for bp in phi.breakpoints):
        comps = next(iter(g.cell_polys.values()))
        return PolynomialMembrane.single([p.compose(list(phi.polys)) for p in comps],
                                         g.field, label=label)
    breakpoints = [set(float(b) for b in bp) for bp in phi.breakpoints]
    if phi.coordinatewise and phi.inverse is not None:
        for nu, bp in enumerate(g.breakpoints):
            for b in bp:
                probe = np.full((1, g.n), 0.5)
                probe[0, nu] = float(b)
                breakpoints[nu].add(float(np.asarray(phi.inverse(probe))[0, nu]))
    elif any(g.breakpoints):
        for nu, bp in enumerate(g.breakpoints):
            breakpoints[nu].update(float(b) for b in bp)

    def func(t):
        return g(phi(t))

    def jac(t):
        return g.jacobian(phi(t)) @ np.asarray(phi.jac(np.asarray(t, dtype=float)))

    return CallableMembrane(g.n, g.d, func, jac, [sorted(b) for b in breakpoints], g.field,
                            label=label)


# formal chains ----------------------------------------------------------------


@dataclass(frozen=True)
class MembraneChain:
    """Formal integer combination ``sum_k c_k g_k`` of membranes."""

    terms: tuple = ()

    def __post_init__(self):
        terms = tuple((int(c), g) for c, g in self.terms)
        shapes = {(g.n, g.d, g.field) for _, g in terms}
        if len(shapes) > 1:
            raise MembraneError("chain terms must share domain, target and field")
        object.__setattr__(self, "terms", terms)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __add__(self, other: MembraneChain) -> MembraneChain:
        return MembraneChain(self.terms + other.terms)

    def __neg__(self):
        return MembraneChain(tuple((-c, g) for c, g in self.terms))


def expand_vanishing_chain(alphas, tol: float = 1e-10) -> MembraneChain:
    """Expand ``(alpha_1 - 1) ... (alpha_r - 1)`` in the membrane ring.

    One term per subset, ordered by decreasing size and lexicographically within
    a size; the subset is composed left to right in index order, the empty
    subset is the constant membrane, and the sign is ``(-1)**(r - |subset|)``.
    """
    alphas = list(alphas)
    if not alphas:
        raise MembraneError("need at least one membrane")
    first = alphas[0]
    if isinstance(first, PolynomialMembrane):
        x0 = first.exact_base_point()
    else:
        x0 = list(first.base_point())
    for k, a in enumerate(alphas):
        if not is_closed(a, x0, tol):
            raise NotClosedError(f"alpha_{k + 1} is not closed at the common base point")
    r = len(alphas)
    one = constant(first.n, x0, first.field) if isinstance(first, PolynomialMembrane) else \
        CallableMembrane(first.n, first.d,
                         lambda t, x0=np.asarray(x0): np.broadcast_to(x0, (t.shape[0], len(x0))).copy(),
                         lambda t, d=first.d, n=first.n: np.zeros((t.shape[0], d, n)),
                         field=first.field, null_cells=[(0,) * first.n], label="constant")
    terms = []
    for size in range(r, -1, -1):
        for subset in itertools.combinations(range(r), size):
            if not subset:
                g = one
            else:
                g = alphas[subset[0]]
                for k in subset[1:]:
                    g = compose(g, alphas[k], tol)
            terms.append(((-1) ** (r - size), g))
    return MembraneChain(tuple(terms))
