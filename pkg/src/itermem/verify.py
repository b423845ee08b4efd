"""Machine checks of the identities satisfied by membrane iterated integrals.

Every check evaluates both sides with one engine and returns a
:class:`CheckReport`. Verdicts follow the engine's error model:

* exact: the two sides must be equal as rationals;
* quadrature: ``|lhs - rhs| <= rel_tol * scale`` with ``rel_tol = 1e-8`` and
  ``scale`` the largest magnitude among all integrals the check computed;
* montecarlo: ``|lhs - rhs| <= 3 * sigma``, where sigma adds the standard errors
  of the individual terms linearly (terms share a seed, so their errors are
  correlated and the linear sum is the safe bound).

An explicit ``tol`` is a relative tolerance against the same scale for either
numeric engine. The exact engine ignores it.

``flip_sign=True`` negates the largest term of the comparison before the
verdict. It is the negative control: a working check must then fail.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .combinatorics import ObserverPermutations, Permutation, parity, rho_shuffles, shuffle_sign
from .exact import GaussianRational, format_scalar, to_number
from .forms import DifferentialForm, pullback_form
from .integrate import EngineConfig, IntegralResult, integrate_chain, iterated_integral
from .membranes import (CallableMembrane, Membrane, PolynomialMembrane, compose,
                        expand_vanishing_chain, map_membrane, reparametrize)
from .polynomial import Poly

QUADRATURE_REL_TOL = 1e-8
MC_SIGMAS = 3.0
VERDICTS = ("pass", "fail", "error")


class CheckError(ValueError):
    pass


@dataclass
class CheckReport:
    check: str
    scenario_id: str
    lhs: object
    rhs: object
    deviation: object
    relative_deviation: float
    tolerance: float
    verdict: str
    engine: dict = field(default_factory=dict)
    detail: dict = field(default_factory=dict)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @classmethod
    def error(cls, check: str, scenario_id: str, message: str, engine: dict | None = None) -> CheckReport:
        return cls(check, scenario_id, None, None, None, math.nan, math.nan, "error",
                   dict(engine or {}), {}, message)

    def to_dict(self) -> dict:
        out = {
            "id": self.scenario_id,
            "check": self.check,
            "lhs": None if self.lhs is None else format_scalar(self.lhs),
            "rhs": None if self.rhs is None else format_scalar(self.rhs),
            "deviation": None if self.deviation is None else format_scalar(self.deviation),
            "relative_deviation": None if math.isnan(self.relative_deviation) else self.relative_deviation,
            "tolerance": None if math.isnan(self.tolerance) else self.tolerance,
            "verdict": self.verdict,
            "engine": dict(self.engine),
        }
        if self.detail:
            out["detail"] = self.detail
        if self.message:
            out["message"] = self.message
        return out


# term bookkeeping -----------------------------------------------------------


@dataclass
class _Term:
    value: object
    err: float = 0.0


def _mag(x) -> float:
    return abs(to_number(x))


def _term(result: IntegralResult, coeff=1) -> _Term:
    return _Term(result.value * coeff, abs(coeff) * result.error_estimate)


def _product(results) -> _Term:
    """Product of integrals with first-order error propagation."""
    value = None
    for r in results:
        value = r.value if value is None else value * r.value
    err = 0.0
    for k, r in enumerate(results):
        others = 1.0
        for j, o in enumerate(results):
            if j != k:
                others *= _mag(o.value)
        err += r.error_estimate * others
    return _Term(value, err)


def _total(terms, zero):
    out = zero
    for t in terms:
        out = out + t.value
    return out


def _zero(cfg: EngineConfig, complex_field: bool):
    if cfg.engine == "exact":
        return GaussianRational(0) if complex_field else Fraction(0)
    return 0j if complex_field else 0.0


def _flip_largest(lhs_terms, rhs_terms):
    pool = [(side, k) for side, terms in ((0, lhs_terms), (1, rhs_terms)) for k in range(len(terms))]
    if not pool:
        return
    side, k = max(pool, key=lambda p: _mag((lhs_terms, rhs_terms)[p[0]][p[1]].value))
    terms = (lhs_terms, rhs_terms)[side]
    terms[k] = _Term(-terms[k].value, terms[k].err)


def _threshold(cfg: EngineConfig, tol, scale: float, sigma: float) -> float:
    if cfg.engine == "exact":
        return 0.0
    if tol is not None:
        return float(tol) * scale
    if cfg.engine == "quadrature":
        return QUADRATURE_REL_TOL * scale
    return MC_SIGMAS * sigma


def _report(check, scenario_id, cfg, lhs_terms, rhs_terms, tol, complex_field, flip_sign,
            extra_scale=(), detail=None) -> CheckReport:
    lhs_terms, rhs_terms = list(lhs_terms), list(rhs_terms)
    if flip_sign:
        _flip_largest(lhs_terms, rhs_terms)
    zero = _zero(cfg, complex_field)
    lhs = _total(lhs_terms, zero)
    rhs = _total(rhs_terms, zero)
    diff = lhs - rhs
    scale = max([_mag(t.value) for t in lhs_terms + rhs_terms] + [_mag(lhs), _mag(rhs)]
                + [float(x) for x in extra_scale])
    sigma = sum(t.err for t in lhs_terms + rhs_terms)
    threshold = _threshold(cfg, tol, scale, sigma)
    if cfg.engine == "exact":
        deviation = abs(diff) if isinstance(diff, Fraction) else Fraction(0) if diff == 0 else _mag(diff)
        ok = diff == 0
    else:
        deviation = _mag(diff)
        ok = deviation <= threshold
    rel = float(_mag(diff)) / scale if scale else float(_mag(diff))
    meta = cfg.metadata()
    info = {"terms": len(lhs_terms) + len(rhs_terms), "scale": scale}
    if cfg.engine == "montecarlo":
        info["sigma"] = sigma
    if flip_sign:
        info["sign_flip"] = True
    info.update(detail or {})
    return CheckReport(check, scenario_id, lhs, rhs, deviation, rel, threshold,
                       "pass" if ok else "fail", meta, info)


def _cfg(cfg):
    return cfg or EngineConfig()


def _rho(rho, n, s):
    if rho is None:
        return ObserverPermutations.identity(n, s)
    if isinstance(rho, ObserverPermutations):
        return rho
    return ObserverPermutations(tuple(rho))


# the checks -----------------------------------------------------------------


def check_reparametrization(g: Membrane, phi, forms, rho=None, cfg: EngineConfig | None = None,
                            tol=None, scenario_id: str = "reparametrization",
                            flip_sign: bool = False) -> CheckReport:
    """Compare the integral along g with the integral along ``g o phi``.

    ``reparametrize`` certifies phi first and raises NotMonotonicError otherwise.
    """
    cfg = _cfg(cfg)
    forms = list(forms)
    rho = _rho(rho, g.n, len(forms))
    moved = reparametrize(g, phi)
    a = iterated_integral(g, forms, rho, cfg)
    b = iterated_integral(moved, forms, rho, cfg)
    return _report("reparametrization", scenario_id, cfg, [_term(a)], [_term(b)], tol,
                   g.field == "complex", flip_sign)


def check_naturality(F, g: Membrane, forms, rho=None, cfg: EngineConfig | None = None, tol=None,
                     scenario_id: str = "naturality", flip_sign: bool = False) -> CheckReport:
    """Compare the integral along ``F o g`` with the integral of the pulled-back forms along g.

    F is a polynomial map given as a list of Polys in the target variables of g.
    """
    cfg = _cfg(cfg)
    F = list(F)
    forms = list(forms)
    if any(w.dim != len(F) for w in forms):
        raise CheckError(f"forms must live on the image space of dimension {len(F)}")
    rho = _rho(rho, g.n, len(forms))
    pushed = map_membrane(F, g)
    pulled = [pullback_form(F, w) for w in forms]
    if g.field != pushed.field:
        pulled = [DifferentialForm(w.dim, w.degree, w.coeffs, pushed.field) for w in pulled]
    a = iterated_integral(pushed, forms, rho, cfg)
    b = iterated_integral(g, pulled, rho, cfg)
    return _report("naturality", scenario_id, cfg, [_term(a)], [_term(b)], tol,
                   pushed.field == "complex", flip_sign)


def check_shuffle(g: Membrane, forms_a, forms_b, rho=None, rho_prime=None,
                  cfg: EngineConfig | None = None, tol=None, oriented: bool = True,
                  scenario_id: str = "shuffle", flip_sign: bool = False) -> CheckReport:
    """Product of two iterated integrals against the sum over the rho-shuffles.

    With the oriented integral each shuffle term carries the sign of the
    underlying (s, s')-shuffles; with ``oriented=False`` both sides use the
    plain integral over the ordered domain and the sum is unsigned.
    """
    cfg = _cfg(cfg)
    forms_a, forms_b = list(forms_a), list(forms_b)
    rho = _rho(rho, g.n, len(forms_a))
    rho_prime = _rho(rho_prime, g.n, len(forms_b))
    a = iterated_integral(g, forms_a, rho, cfg, oriented)
    b = iterated_integral(g, forms_b, rho_prime, cfg, oriented)
    both = forms_a + forms_b
    rhs_terms = []
    for sigma in rho_shuffles(rho, rho_prime):
        sign = shuffle_sign(sigma, rho, rho_prime) if oriented else 1
        rhs_terms.append(_term(iterated_integral(g, both, sigma, cfg, oriented), sign))
    return _report("shuffle", scenario_id, cfg, [_product([a, b])], rhs_terms, tol,
                   g.field == "complex", flip_sign, detail={"shuffles": len(rhs_terms)})


def check_composition(g1: Membrane, g2: Membrane, forms, cfg: EngineConfig | None = None, tol=None,
                      scenario_id: str = "composition", flip_sign: bool = False,
                      closed_tol: float = 1e-10) -> CheckReport:
    """Integral along the composite ``g1 g2`` against the sum over split points j."""
    cfg = _cfg(cfg)
    forms = list(forms)
    g = compose(g1, g2, closed_tol)
    whole = iterated_integral(g, forms, None, cfg)
    rhs_terms = []
    for j in range(len(forms) + 1):
        left = iterated_integral(g1, forms[:j], None, cfg)
        right = iterated_integral(g2, forms[j:], None, cfg)
        rhs_terms.append(_product([left, right]))
    return _report("composition", scenario_id, cfg, [_term(whole)], rhs_terms, tol,
                   g.field == "complex", flip_sign)


def check_vanishing(alphas, forms, cfg: EngineConfig | None = None, tol=None,
                    scenario_id: str = "vanishing", flip_sign: bool = False,
                    closed_tol: float = 1e-10) -> CheckReport:
    """Integral over the expanded chain ``(alpha_1 - 1)...(alpha_r - 1)``.

    It must vanish for s < r and equal the product of the single integrals
    ``int_{alpha_j} w_j`` for s = r.
    """
    cfg = _cfg(cfg)
    alphas, forms = list(alphas), list(forms)
    r, s = len(alphas), len(forms)
    if not 1 <= s <= r:
        raise CheckError(f"vanishing needs 1 <= s <= r, got s={s}, r={r}")
    chain = expand_vanishing_chain(alphas, closed_tol)
    _, parts = integrate_chain(chain, forms, None, cfg)
    lhs_terms = [_term(res, c) for (c, _), res in zip(chain, parts)]
    if s == r:
        singles = [iterated_integral(a, [w], None, cfg) for a, w in zip(alphas, forms)]
        rhs_terms = [_product(singles)]
    else:
        rhs_terms = []
    return _report("vanishing", scenario_id, cfg, lhs_terms, rhs_terms, tol,
                   alphas[0].field == "complex", flip_sign, detail={"r": r, "s": s})


def check_classical_reduction(g: Membrane, forms, rho, cfg: EngineConfig | None = None, tol=None,
                              scenario_id: str = "classical_reduction",
                              flip_sign: bool = False) -> CheckReport:
    """For paths: the integral with order rho equals ``parity(rho)`` times the
    ordinary iterated integral of the forms taken in the order rho."""
    cfg = _cfg(cfg)
    if g.n != 1:
        raise CheckError(f"classical reduction is a statement about paths (n=1), got n={g.n}")
    forms = list(forms)
    if isinstance(rho, ObserverPermutations):
        rho = rho[0]
    elif not isinstance(rho, Permutation):
        rho = Permutation(tuple(rho))
    a = iterated_integral(g, forms, ObserverPermutations((rho,)), cfg)
    reordered = [forms[rho(k) - 1] for k in range(1, len(forms) + 1)]
    b = iterated_integral(g, reordered, None, cfg)
    return _report("classical_reduction", scenario_id, cfg, [_term(a)], [_term(b, parity(rho))], tol,
                   g.field == "complex", flip_sign)


# homotopy experiment --------------------------------------------------------


class HomotopyFamily:
    """Product membranes ``g_u(t) = (gamma_1(t_1, u), ..., gamma_n(t_n, u))`` in C^n.

    Each factor is either a Poly in the two variables ``(t, u)`` with
    GaussianRational coefficients, or a pair of callables ``(gamma, dgamma_dt)``
    taking arrays ``t`` and a float ``u``. Every factor must keep its endpoints
    fixed as u varies. Because ``g_u`` moves the fibre ``{t_nu = c}`` inside the
    coordinate leaf ``{z_nu = gamma_nu(c, u)}``, every member is admissible for
    the coordinate foliations by construction.
    """

    def __init__(self, paths, label: str = "family", tol: float = 1e-12, resolution: int = 11):
        self.paths = list(paths)
        self.n = len(self.paths)
        self.label = label
        if not self.paths:
            raise CheckError("a homotopy family needs at least one factor path")
        self.polynomial = all(isinstance(p, Poly) for p in self.paths)
        for k, p in enumerate(self.paths, start=1):
            if isinstance(p, Poly):
                if p.nvars != 2:
                    raise CheckError(f"factor {k} must be a polynomial in (t, u)")
                for end in (0, 1):
                    if p.subs_const(0, end).used_vars():
                        raise CheckError(f"factor {k} moves its endpoint t={end} with u")
            else:
                func, _ = p
                us = np.linspace(0.0, 1.0, resolution)
                for end in (0.0, 1.0):
                    vals = np.array([np.asarray(func(np.array([end]), u)).ravel()[0] for u in us])
                    if np.max(np.abs(vals - vals[0])) > tol:
                        raise CheckError(f"factor {k} moves its endpoint t={end:g} with u")

    def membrane(self, u) -> Membrane:
        n = self.n
        if self.polynomial:
            u = Fraction(u)
            comps = []
            for nu, p in enumerate(self.paths):
                path = p.subs_const(1, u)
                uni = Poly(1, {(e[0],): c for e, c in path.terms.items()})
                uni = uni.map_coeffs(lambda c: c if isinstance(c, GaussianRational) else GaussianRational(c))
                comps.append(uni.embed(n, [nu]))
            return PolynomialMembrane.single(comps, "complex", label=f"{self.label}[u={u}]")
        u = float(u)
        funcs = []
        for p in self.paths:
            if isinstance(p, Poly):
                funcs.append(_poly_factor(p))
            else:
                funcs.append(p)

        def func(t):
            return np.stack([np.asarray(f(t[:, nu], u), dtype=complex) for nu, (f, _) in enumerate(funcs)],
                            axis=1)

        def jac(t):
            out = np.zeros((t.shape[0], n, n), dtype=complex)
            for nu, (_, df) in enumerate(funcs):
                out[:, nu, nu] = df(t[:, nu], u)
            return out

        return CallableMembrane(n, n, func, jac, field="complex", label=f"{self.label}[u={u:g}]")


def _poly_factor(p: Poly):
    dp = p.diff(0)

    def f(t, u):
        return p.evaluate(np.stack([t, np.full_like(t, u)], axis=1))

    def df(t, u):
        return dp.evaluate(np.stack([t, np.full_like(t, u)], axis=1))

    return f, df


def _is_holomorphic_n0(w: DifferentialForm, n: int) -> bool:
    return (w.field == "complex" and w.dim == n and w.degree == n and w.is_polynomial())


def check_homotopy_invariance(family: HomotopyFamily, forms, rho=None, u_samples=(0, Fraction(1, 2), 1),
                              cfg: EngineConfig | None = None, tol=None,
                              scenario_id: str = "homotopy", flip_sign: bool = False,
                              allow_nonholomorphic: bool = False) -> CheckReport:
    """Integrals along ``g_u`` for each sample u must agree.

    The deviation is the largest pairwise difference. The reported lhs is the
    value at the first sample and rhs the value farthest from it. Forms must be
    polynomial (n,0)-forms on C^n unless ``allow_nonholomorphic`` is set, which
    is how the negative control runs.
    """
    cfg = _cfg(cfg)
    forms = list(forms)
    if not allow_nonholomorphic and not all(_is_holomorphic_n0(w, family.n) for w in forms):
        raise CheckError("homotopy invariance needs polynomial (n,0)-forms on C^n")
    rho = _rho(rho, family.n, len(forms))
    us = list(u_samples)
    if len(us) < 2:
        raise CheckError("need at least two u samples")
    results = [iterated_integral(family.membrane(u), forms, rho, cfg) for u in us]
    terms = [_term(r) for r in results]
    if flip_sign:
        k = max(range(len(terms)), key=lambda i: _mag(terms[i].value))
        terms[k] = _Term(-terms[k].value, terms[k].err)
    first = terms[0]
    far = max(terms, key=lambda t: _mag(t.value - first.value))
    deviation = max(_mag(a.value - b.value) for a, b in itertools.combinations(terms, 2))
    scale = max(_mag(t.value) for t in terms)
    sigma = 2 * max(t.err for t in terms)
    threshold = _threshold(cfg, tol, scale, sigma)
    if cfg.engine == "exact":
        ok = all(t.value == first.value for t in terms)
        dev_out = deviation if not ok else Fraction(0)
    else:
        ok = deviation <= threshold
        dev_out = deviation
    detail = {"u": [format_scalar(Fraction(u)) if not isinstance(u, float) else u for u in us],
              "values": [format_scalar(t.value) for t in terms], "scale": scale}
    if flip_sign:
        detail["sign_flip"] = True
    return CheckReport("homotopy", scenario_id, first.value, far.value, dev_out,
                       deviation / scale if scale else deviation, threshold,
                       "pass" if ok else "fail", cfg.metadata(), detail)


CHECKS: dict[str, Callable] = {
    "reparametrization": check_reparametrization,
    "naturality": check_naturality,
    "shuffle": check_shuffle,
    "composition": check_composition,
    "vanishing": check_vanishing,
    "classical_reduction": check_classical_reduction,
    "homotopy": check_homotopy_invariance,
}
