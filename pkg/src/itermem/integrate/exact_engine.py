"""Exact integration of polynomial integrands over the ordered domain D_rho.

Each observer contributes an independent chain ``0 < t^{rho(1)} < ... < t^{rho(s)} < 1``.
Variables are eliminated one at a time by symbolic antiderivatives, always
taking the lowest remaining variable of some chain, so that only the factors
involving that variable have to be multiplied out.
"""
from __future__ import annotations

import itertools
from fractions import Fraction

from ..combinatorics import ObserverPermutations, var_index
from ..polynomial import Poly


class ExactEngineError(ValueError):
    pass


def _eliminate(factors: list, chains: list, one, nvars: int):
    """Integrate the product of ``factors`` over a union of ordered chains.

    ``chains`` holds ``(variables, lo, hi)``: ``lo < v_1 < ... < v_m < hi``.
    """
    factors = [f for f in factors]
    queues = [[list(vars_), lo, hi] for vars_, lo, hi in chains if vars_]
    while queues:
        best = None
        for q in queues:
            x = q[0][0]
            cost = 1
            for f in factors:
                if x in f.used_vars():
                    cost *= max(len(f.terms), 1)
            if best is None or cost < best[0]:
                best = (cost, q)
        _, q = best
        vars_, lo, hi = q
        x = vars_.pop(0)
        upper = ("var", vars_[0]) if vars_ else hi
        involved = [f for f in factors if x in f.used_vars()]
        rest = [f for f in factors if x not in f.used_vars()]
        if involved:
            prod = involved[0]
            for f in involved[1:]:
                prod = prod * f
        else:
            prod = Poly.constant(one, nvars)
        rest.append(prod.integrate(x, lo, upper))
        factors = rest
        if not vars_:
            queues.remove(q)
    total = one
    for f in factors:
        if not f.is_constant():
            raise ExactEngineError("integrand depends on variables outside the domain")
        total = total * f.constant_term()
    return total


def integrate_polynomial(integrand: Poly, rho: ObserverPermutations):
    """``int_{D_rho} integrand dt`` for a polynomial in the sn event-major variables."""
    n, s = rho.n, rho.s
    if integrand.nvars != n * s:
        raise ExactEngineError(f"integrand has {integrand.nvars} variables, expected {n * s}")
    chains = []
    for nu, p in enumerate(rho, start=1):
        chains.append(([var_index(p(k), nu, n) for k in range(1, s + 1)], Fraction(0), Fraction(1)))
    one = Fraction(1)
    if any(hasattr(c, "im") for c in integrand.terms.values()):
        from ..exact import GaussianRational
        one = GaussianRational(1)
    return _eliminate([integrand], chains, one, n * s)


def slot_assignments(intervals: int, s: int):
    """Non-decreasing interval indices for the s slots of one observer's chain."""
    return itertools.combinations_with_replacement(range(intervals), s)


def integrate_piecewise(event_densities, breakpoints, rho: ObserverPermutations, one=Fraction(1)):
    """``int_{D_rho} prod_sigma f_sigma(t^sigma) dt`` for piecewise-polynomial f_sigma.

    ``event_densities[sigma-1]`` is a callable ``cell -> Poly | None`` giving the
    density of event sigma on a grid cell (``None`` for an identically zero cell).
    ``breakpoints`` are the exact per-axis grid breakpoints shared by all events.
    """
    n, s = rho.n, rho.s
    bounds = [[Fraction(0)] + [Fraction(b) for b in bp] + [Fraction(1)] for bp in breakpoints]
    sn = n * s
    embedded = {}

    def factor(sigma, cell):
        key = (sigma, cell)
        if key not in embedded:
            poly = event_densities[sigma - 1](cell)
            if poly is None or poly.is_zero():
                embedded[key] = None
            else:
                embedded[key] = poly.embed(sn, [var_index(sigma, nu, n) for nu in range(1, n + 1)])
        return embedded[key]

    slots = rho.slots
    total = one * 0
    per_observer = [list(slot_assignments(len(b) - 1, s)) for b in bounds]
    for combo in itertools.product(*per_observer):
        factors = []
        for sigma in range(1, s + 1):
            cell = tuple(combo[nu][slots[nu][sigma - 1] - 1] for nu in range(n))
            f = factor(sigma, cell)
            if f is None:
                break
            factors.append(f)
        else:
            chains = []
            for nu, p in enumerate(rho, start=1):
                assignment = combo[nu - 1]
                for j, run in itertools.groupby(range(1, s + 1), key=lambda k: assignment[k - 1]):
                    vars_ = [var_index(p(k), nu, n) for k in run]
                    chains.append((vars_, bounds[nu - 1][j], bounds[nu - 1][j + 1]))
            total = total + _eliminate(factors, chains, one, sn)
    return total
