import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from itermem.combinatorics import ObserverPermutations, Permutation
from itermem.exact import GaussianRational
from itermem.forms import DifferentialForm
from itermem.integrate import (EngineCapabilityError, EngineConfig, EngineError, IntegralResult,
                               exact_engine_integrate, integrate_chain, iterated_integral,
                               montecarlo_integrate, montecarlo_oracle, quadrature_engine_integrate)
from itermem.membranes import (PolynomialMembrane, bump, constant, expand_vanishing_chain, identity,
                               torus)
from itermem.polynomial import Poly

from oracles import chain_monomial, ordered_monomial

EXACT = EngineConfig(engine="exact")
QUAD = EngineConfig(engine="quadrature", quad_order=8)
R = ObserverPermutations.of

x = Poly.var(0, 1)
line = PolynomialMembrane.single([x])
dx = DifferentialForm.volume(1)
two_x_dx = DifferentialForm.volume(1, 2 * x)


# spot values ----------------------------------------------------------------

def test_cube_volume():
    for n in (1, 2, 3):
        assert iterated_integral(identity(n), [DifferentialForm.volume(n)], None, EXACT).value == 1


def test_two_thirds_and_swap():
    assert iterated_integral(line, [dx, two_x_dx], None, EXACT).value == Fraction(2, 3)
    assert iterated_integral(line, [dx, two_x_dx], R(Permutation((2, 1))), EXACT).value == Fraction(-1, 3)


def test_square_volume():
    vol = DifferentialForm.volume(2)
    r = iterated_integral(identity(2), [vol, vol], None, EXACT)
    assert r.value == Fraction(1, 4) and r.error_estimate == 0 and r.is_exact
    q = iterated_integral(identity(2), [vol, vol], None, QUAD)
    assert q.value == pytest.approx(0.25, abs=1e-12)


def test_exact_engine_examples():
    t1, t2 = Poly.var(0, 2), Poly.var(1, 2)
    ident = ObserverPermutations.identity(1, 2)
    assert exact_engine_integrate(Poly.constant(1, 2), ident) == Fraction(1, 2)
    assert exact_engine_integrate(t1, ident) == Fraction(1, 6)
    assert exact_engine_integrate(t1 ** 2 * t2, ident) == Fraction(1, 15)


@pytest.mark.parametrize("a,b", list(itertools.product(range(5), repeat=2)))
def test_monomial_simplex_formula(a, b):
    t1, t2 = Poly.var(0, 2), Poly.var(1, 2)
    got = exact_engine_integrate(t1 ** a * t2 ** b, ObserverPermutations.identity(1, 2))
    assert got == Fraction(1, (a + 1) * (a + b + 2))


@st.composite
def ordered_integrands(draw):
    n = draw(st.integers(1, 2))
    s = draw(st.integers(1, 3))
    rho = ObserverPermutations(tuple(Permutation(draw(st.permutations(range(1, s + 1)))) for _ in range(n)))
    terms = {}
    for _ in range(draw(st.integers(1, 3))):
        e = tuple(draw(st.integers(0, 3)) for _ in range(n * s))
        terms[e] = Fraction(draw(st.integers(-5, 5)), draw(st.integers(1, 4)))
    return rho, Poly(n * s, terms)


@given(ordered_integrands())
def test_exact_engine_against_closed_form_oracle(case):
    rho, p = case
    expected = sum((c * ordered_monomial(e, rho.n, rho.to_lists()) for e, c in p.terms.items()), Fraction(0))
    assert exact_engine_integrate(p, rho) == expected


@given(ordered_integrands())
def test_quadrature_matches_exact_for_low_degree(case):
    rho, p = case
    if rho.n * rho.s > 6:
        return
    exact = exact_engine_integrate(p, rho)
    r = quadrature_engine_integrate(lambda pts: p.evaluate(pts), rho, QUAD)
    assert r.value == pytest.approx(float(exact), abs=1e-12)


def test_quadrature_examples():
    r = quadrature_engine_integrate(lambda p: np.ones(p.shape[0]), ObserverPermutations.identity(1, 3), QUAD)
    assert r.value == pytest.approx(1 / 6, abs=1e-12)
    assert r.error_estimate >= 0 and r.metadata["quad_order"] == 8


def test_quadrature_dimension_cap():
    with pytest.raises(EngineError):
        quadrature_engine_integrate(lambda p: np.ones(p.shape[0]), ObserverPermutations.identity(3, 3), QUAD)


# Monte-Carlo ------------------------------------------------------------------

def test_montecarlo_two_thirds_within_three_sigma():
    cfg = EngineConfig(engine="montecarlo", mc_samples=10 ** 6, seed=2024)
    r = montecarlo_oracle(line, [dx, two_x_dx], None, cfg)
    assert abs(r.value - 2 / 3) <= 3 * r.error_estimate
    assert r.metadata["seed"] == 2024


def test_montecarlo_indicator_only():
    cfg = EngineConfig(engine="montecarlo", mc_samples=10 ** 5, seed=1)
    r = montecarlo_integrate(lambda p: np.ones(p.shape[0]), ObserverPermutations.identity(1, 2), cfg)
    assert abs(r.value - 0.5) <= 3 * r.error_estimate


def test_montecarlo_replay_is_bit_identical():
    cfg = EngineConfig(engine="montecarlo", mc_samples=50_000, seed=99)
    a = iterated_integral(line, [dx, two_x_dx], None, cfg)
    b = iterated_integral(line, [dx, two_x_dx], None, cfg)
    assert a.value == b.value and a.error_estimate == b.error_estimate
    c = iterated_integral(line, [dx, two_x_dx], None, cfg.replace(seed=100))
    assert c.value != a.value


def test_montecarlo_needs_seed():
    with pytest.raises(EngineError):
        EngineConfig(engine="montecarlo")


# general properties -----------------------------------------------------------

@pytest.mark.parametrize("cfg", [EXACT, QUAD, EngineConfig(engine="montecarlo", seed=0, mc_samples=10)])
def test_empty_product_is_one(cfg):
    r = iterated_integral(identity(2), [], None, cfg)
    assert r.value == 1 and r.error_estimate == 0


def test_constant_membrane_integrates_to_zero():
    g = constant(2, [1, 2])
    vol = DifferentialForm.volume(2)
    for s in (1, 2):
        assert iterated_integral(g, [vol] * s, None, EXACT).value == 0
        assert iterated_integral(g, [vol] * s, None, QUAD).value == 0


@given(st.integers(-5, 5), st.integers(-5, 5), st.integers(0, 3))
def test_multilinearity_in_first_slot(a, b, k):
    t1, t2 = Poly.var(0, 2), Poly.var(1, 2)
    g = PolynomialMembrane.single([t1 + t2 ** 2, t1 * t2])
    w1 = DifferentialForm.volume(2, t1 ** k)
    w2 = DifferentialForm.volume(2, 1 + t2)
    rest = DifferentialForm.volume(2, t1 * t2)
    combo = w1.scale(a) + w2.scale(b)
    lhs = iterated_integral(g, [combo, rest], None, EXACT).value
    rhs = a * iterated_integral(g, [w1, rest], None, EXACT).value + \
        b * iterated_integral(g, [w2, rest], None, EXACT).value
    assert lhs == rhs


@pytest.mark.parametrize("s", [2, 3, 4])
def test_classical_reduction_all_orders(s):
    t = Poly.var(0, 1)
    g = PolynomialMembrane.single([t + t ** 2, 1 - t ** 3])
    forms = [DifferentialForm(2, 1, {(1,): Poly.var(1, 2) ** k, (2,): Poly.var(0, 2) + k}) for k in range(s)]
    for p in Permutation.all(s):
        lhs = iterated_integral(g, forms, R(p), EXACT).value
        rhs = p.parity() * iterated_integral(g, [forms[p(k) - 1] for k in range(1, s + 1)], None, EXACT).value
        assert lhs == rhs


def test_unoriented_integral_drops_sign():
    r = iterated_integral(line, [dx, two_x_dx], R(Permutation((2, 1))), EXACT, oriented=False)
    assert r.value == Fraction(1, 3)


def test_complex_exact_and_quadrature_agree():
    i = GaussianRational(0, 1)
    t1, t2 = Poly.var(0, 2), Poly.var(1, 2)
    g = PolynomialMembrane.single([t1 * GaussianRational(1), t2 + t2 * (1 - t2) * i], field="complex")
    w = DifferentialForm.volume(2, t1 * GaussianRational(1), field="complex")
    e = iterated_integral(g, [w, w], None, EXACT).value
    q = iterated_integral(g, [w, w], None, QUAD.replace(field="complex")).value
    assert isinstance(e, GaussianRational)
    assert abs(complex(e) - q) < 1e-12


def test_input_validation():
    with pytest.raises(EngineError):
        iterated_integral(identity(2), [DifferentialForm.volume(3)], None, EXACT)
    with pytest.raises(EngineError):
        iterated_integral(identity(2), [DifferentialForm.basis(2, (1,))], None, EXACT)
    with pytest.raises(EngineError):
        iterated_integral(identity(2), [DifferentialForm.volume(2)], R(Permutation((1,))), EXACT)
    with pytest.raises(EngineCapabilityError):
        iterated_integral(torus(), [DifferentialForm.basis(3, (1, 2))], None, EXACT)
    for bad in ({"engine": "nope"}, {"quad_order": 0}, {"mc_samples": 0}, {"subdivision_depth": 0}):
        with pytest.raises(EngineError):
            EngineConfig(**bad)
    with pytest.raises(EngineError):
        IntegralResult(0.0, -1.0)


def test_piecewise_membrane_subdivision():
    # composite of two bumps: quadrature respects the kink at 1/2
    a = bump(2, [0, 0, 0], [1, 2, 3], powers=[[0, 1], [1, 0], [1, 1]])
    b = bump(2, [0, 0, 0], [2, -1, 1], powers=[[1, 1], [0, 2], [2, 0]])
    chain = expand_vanishing_chain([a, b])
    x1, x2, x3 = (Poly.var(k, 3) for k in range(3))
    w = DifferentialForm(3, 2, {(1, 2): x3, (2, 3): x1 + 1})
    exact, parts = integrate_chain(chain, [w, w], None, EXACT)
    quad, _ = integrate_chain(chain, [w, w], None, QUAD)
    assert len(parts) == 4
    assert abs(float(exact.value) - quad.value) <= 1e-10 * max(1.0, abs(quad.value))
