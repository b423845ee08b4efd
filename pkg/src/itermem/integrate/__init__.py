"""Evaluation of n-dimensional iterated integrals over membranes.

The integral of n-forms ``w_1..w_s`` along a membrane g with event orders rho is

    wedge_sign(rho) * int_{D_rho} prod_sigma f_sigma(t^sigma) dt,

where ``f_sigma`` is the pullback density of ``w_sigma`` and ``t^sigma`` is the
sigma-th block of n coordinates. Three engines compute it: ``exact``
(rational arithmetic, polynomial data only), ``quadrature`` and ``montecarlo``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..combinatorics import ObserverPermutations, var_index, wedge_sign
from ..exact import GaussianRational, to_number
from ..forms import DifferentialForm, pullback
from ..membranes import Membrane, MembraneChain
from . import exact_engine
from .montecarlo import montecarlo_sum
from .quadrature import MAX_QUADRATURE_DIM, quadrature_sum

ENGINES = ("exact", "quadrature", "montecarlo")


class EngineError(ValueError):
    pass


class EngineCapabilityError(EngineError):
    """The requested engine cannot handle the input (e.g. exact on a callable membrane)."""


@dataclass(frozen=True)
class EngineConfig:
    engine: str = "quadrature"
    quad_order: int = 8
    subdivision_depth: int = 1
    mc_samples: int = 100_000
    seed: int | None = None
    field: str | None = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise EngineError(f"unknown engine {self.engine!r}; choose from {', '.join(ENGINES)}")
        if self.quad_order < 1:
            raise EngineError("quad_order must be at least 1")
        if self.subdivision_depth < 1:
            raise EngineError("subdivision_depth must be at least 1")
        if self.mc_samples < 1:
            raise EngineError("mc_samples must be at least 1")
        if self.engine == "montecarlo" and self.seed is None:
            raise EngineError("the montecarlo engine needs an explicit seed")
        if self.field not in (None, "real", "complex"):
            raise EngineError(f"unknown field {self.field!r}")

    def replace(self, **changes) -> EngineConfig:
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return EngineConfig(**data)

    def metadata(self) -> dict:
        if self.engine == "exact":
            return {"engine": "exact"}
        if self.engine == "quadrature":
            return {"engine": "quadrature", "quad_order": self.quad_order,
                    "subdivision_depth": self.subdivision_depth}
        return {"engine": "montecarlo", "mc_samples": self.mc_samples, "seed": self.seed}


@dataclass
class IntegralResult:
    value: object
    error_estimate: float = 0.0
    engine: str = "exact"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.error_estimate >= 0:
            raise EngineError("error estimate must be non-negative")

    @property
    def is_exact(self) -> bool:
        return self.engine == "exact"

    def __float__(self):
        return float(self.value)

    def __complex__(self):
        return complex(to_number(self.value))


def _check_inputs(g: Membrane, forms, rho):
    forms = list(forms)
    s = len(forms)
    if rho is None:
        rho = ObserverPermutations.identity(g.n, s)
    elif not isinstance(rho, ObserverPermutations):
        rho = ObserverPermutations(tuple(rho))
    if rho.n != g.n or rho.s != s:
        raise EngineError(f"rho has shape (n={rho.n}, s={rho.s}), expected (n={g.n}, s={s})")
    for k, w in enumerate(forms, start=1):
        if not isinstance(w, DifferentialForm):
            raise EngineError(f"form {k} is not a DifferentialForm")
        if w.degree != g.n:
            raise EngineError(f"form {k} has degree {w.degree}, membrane dimension is {g.n}")
        if w.dim != g.d:
            raise EngineError(f"form {k} lives in dimension {w.dim}, membrane target is {g.d}")
        if w.field != g.field:
            raise EngineError(f"form {k} is {w.field} but the membrane is {g.field}")
    return forms, rho


def event_density(densities, n: int):
    """The integrand ``prod_sigma f_sigma(t^sigma)`` on event-major points ``(N, sn)``."""

    def f(points):
        points = np.asarray(points)
        out = np.ones(points.shape[0])
        for sigma, dens in enumerate(densities, start=1):
            cols = [var_index(sigma, nu, n) for nu in range(1, n + 1)]
            out = out * dens(points[:, cols])
        return out

    return f


def iterated_integral(g: Membrane, forms, rho=None, cfg: EngineConfig | None = None,
                      oriented: bool = True) -> IntegralResult:
    """Iterated integral of ``forms`` along ``g`` with event orders ``rho``.

    ``rho`` defaults to the identity order for every observer. With
    ``oriented=False`` the orientation sign ``wedge_sign(rho)`` is dropped and the
    plain integral of the density over D_rho is returned.
    """
    cfg = cfg or EngineConfig()
    forms, rho = _check_inputs(g, forms, rho)
    sign = wedge_sign(rho) if oriented else 1
    if not forms:
        one = GaussianRational(1) if g.field == "complex" else Fraction(1)
        value = one if cfg.engine == "exact" else to_number(one)
        return IntegralResult(value, 0.0, cfg.engine, cfg.metadata())
    densities = [pullback(g, w) for w in forms]
    if cfg.engine == "exact":
        if not g.is_polynomial:
            raise EngineCapabilityError(f"exact engine needs a polynomial membrane, got {g.label}")
        if not all(w.is_polynomial() for w in forms):
            raise EngineCapabilityError("exact engine needs polynomial form coefficients")
        one = GaussianRational(1) if g.field == "complex" else Fraction(1)
        events = [(lambda cell, d=d: None if d.null_cell(cell) else d.cell_polynomial(cell))
                  for d in densities]
        value = exact_engine.integrate_piecewise(events, g.breakpoints, rho, one) * sign
        return IntegralResult(value, 0.0, "exact", cfg.metadata())
    integrand = event_density(densities, g.n)
    if cfg.engine == "quadrature":
        result = quadrature_engine_integrate(integrand, rho, cfg, g.breakpoints, g.null_cell)
    else:
        result = montecarlo_integrate(integrand, rho, cfg)
    result.value = result.value * sign
    return result


def exact_engine_integrate(integrand, rho: ObserverPermutations):
    """Exact ``int_{D_rho} integrand`` for a polynomial in the sn event-major variables."""
    return exact_engine.integrate_polynomial(integrand, rho)


def quadrature_engine_integrate(density, rho: ObserverPermutations, cfg: EngineConfig | None = None,
                                breakpoints=None, null_cell=None) -> IntegralResult:
    """Gauss-Legendre/Duffy quadrature of ``density`` over D_rho.

    The error estimate is the change from order q-1 to order q.
    """
    cfg = cfg or EngineConfig()
    sn = rho.n * rho.s
    if sn > MAX_QUADRATURE_DIM:
        raise EngineError(f"quadrature is limited to s*n <= {MAX_QUADRATURE_DIM}, got {sn}")
    q = cfg.quad_order
    value = quadrature_sum(density, rho, q, breakpoints, cfg.subdivision_depth, null_cell)
    if q > 1:
        coarse = quadrature_sum(density, rho, q - 1, breakpoints, cfg.subdivision_depth, null_cell)
        err = abs(value - coarse)
    else:
        err = abs(value)
    meta = cfg.metadata() | {"points": _point_count(rho, q, breakpoints, cfg.subdivision_depth)}
    return IntegralResult(value, float(err), "quadrature", meta)


def _point_count(rho, q, breakpoints, depth):
    from math import comb
    if breakpoints is None:
        breakpoints = [()] * rho.n
    total = 1
    for bp in breakpoints:
        intervals = (len(bp) + 1) * 2 ** (depth - 1)
        total *= comb(intervals + rho.s - 1, rho.s) * q ** rho.s
    return total


def montecarlo_integrate(density, rho: ObserverPermutations, cfg: EngineConfig) -> IntegralResult:
    """Uniform Monte-Carlo estimate of ``int_{D_rho} density`` with its standard error."""
    if cfg.seed is None:
        raise EngineError("Monte-Carlo needs a seed")
    mean, stderr, hits = montecarlo_sum(density, rho, cfg.mc_samples, cfg.seed)
    return IntegralResult(mean, stderr, "montecarlo", cfg.metadata() | {"points": cfg.mc_samples,
                                                                         "hits": hits})


def montecarlo_oracle(g: Membrane, forms, rho=None, cfg: EngineConfig | None = None) -> IntegralResult:
    """Independent Monte-Carlo estimate of the iterated integral.

    Samples ``I^{sn}`` uniformly and averages ``density * 1_{D_rho} * wedge_sign``;
    it never touches the exact or quadrature code paths.
    """
    cfg = (cfg or EngineConfig(engine="montecarlo", seed=0))
    if cfg.engine != "montecarlo":
        cfg = cfg.replace(engine="montecarlo", seed=cfg.seed if cfg.seed is not None else 0)
    return iterated_integral(g, forms, rho, cfg)


def integrate_chain(chain: MembraneChain, forms, rho=None, cfg: EngineConfig | None = None):
    """Linear extension to formal chains: ``sum_k c_k * int_{g_k}``.

    Returns the total and the per-term results (in chain order).
    """
    results = [iterated_integral(g, forms, rho, cfg) for _, g in chain]
    total = None
    err = 0.0
    for (c, _), r in zip(chain, results):
        term = r.value * c
        total = term if total is None else total + term
        err = (err ** 2 + (abs(c) * r.error_estimate) ** 2) ** 0.5 if r.engine == "montecarlo" \
            else err + abs(c) * r.error_estimate
    engine = results[0].engine if results else (cfg or EngineConfig()).engine
    return IntegralResult(total if total is not None else 0, err, engine,
                          results[0].metadata if results else {}), results
