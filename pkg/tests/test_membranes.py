from fractions import Fraction

import numpy as np
import pytest

from itermem.forms import DifferentialForm
from itermem.integrate import EngineConfig, iterated_integral
from itermem.membranes import (MembraneChain, MembraneError, NotClosedError, NotMonotonicError,
                               PolynomialMembrane, Reparametrization, bump, certify_monotonic, compose,
                               constant, expand_vanishing_chain, identity, is_closed, map_membrane,
                               product_of_paths, reparametrize, torus, trig_bubble)
from itermem.polynomial import Poly

EXACT = EngineConfig(engine="exact")
t1, t2 = Poly.var(0, 2), Poly.var(1, 2)


def planar_bump(v, powers):
    return bump(2, ["1/3", "-1/2"], v, 2, powers)


def test_compose_examples():
    x0 = [Fraction(1), Fraction(2)]
    c = compose(constant(2, x0), constant(2, x0))
    pts = np.random.default_rng(0).uniform(0, 1, (20, 2))
    assert np.allclose(c(pts), [1.0, 2.0])
    g1 = planar_bump([1, 2], [[1, 0], [0, 1]])
    g2 = planar_bump([-3, 1], [[0, 2], [1, 1]])
    g = compose(g1, g2)
    assert np.allclose(g(np.array([[0.25, 0.25]])), g1(np.array([[0.5, 0.5]])))
    assert np.allclose(g(np.array([[0.25, 0.75]])), g1.base_point())
    assert np.allclose(g(np.array([[0.8, 0.6]])), g2(np.array([[0.6, 0.2]])))
    assert g.breakpoints == ((Fraction(1, 2),), (Fraction(1, 2),))
    assert is_closed(g, g1.exact_base_point())


def test_compose_rejects_open_or_mismatched():
    with pytest.raises(NotClosedError):
        compose(identity(2), identity(2))
    a = bump(2, [0, 0], [1, 1])
    b = bump(2, [1, 0], [1, 1])
    with pytest.raises(NotClosedError):
        compose(a, b)
    with pytest.raises(MembraneError):
        compose(bump(1, [0, 0], [1, 1]), a)


def test_compose_callable_branch_matches_polynomial():
    g1 = planar_bump([1, 2], [[1, 0], [0, 1]])
    g2 = planar_bump([-3, 1], [[0, 2], [1, 1]])
    wrapped = map_membrane([t1, t2], g1)
    poly = compose(g1, g2)
    as_callable = compose(_as_callable(g1), _as_callable(g2))
    pts = np.random.default_rng(1).uniform(0, 1, (50, 2))
    assert np.allclose(poly(pts), as_callable(pts))
    assert np.allclose(poly.jacobian(pts), as_callable.jacobian(pts))
    assert wrapped.is_polynomial


def _as_callable(g):
    from itermem.membranes import CallableMembrane
    return CallableMembrane(g.n, g.d, g, g.jacobian, g.breakpoints, g.field, label="wrapped")


def test_reparametrize_examples():
    g = PolynomialMembrane.single([t1 + t2 ** 2, t1 * t2])
    same = reparametrize(g, Reparametrization.identity(2))
    pts = np.random.default_rng(2).uniform(0, 1, (10, 2))
    assert np.allclose(same(pts), g(pts))
    phi = Reparametrization.from_polynomials([t1 ** 2, t2])
    h = reparametrize(g, phi)
    assert np.allclose(h(np.array([[0.5, 0.3]])), g(np.array([[0.25, 0.3]])))
    x = Poly.var(0, 1)
    with pytest.raises(NotMonotonicError):
        reparametrize(PolynomialMembrane.single([x]), Reparametrization.from_polynomials([1 - x]))


def test_certificate_rejects_maps_with_non_monotonic_inverse():
    # order preserving forward, but the inverse is not, and it does not preserve D
    phi = Reparametrization.from_polynomials([t1 + t1 * t2 * (1 - t1) / 2, t2])
    assert not certify_monotonic(phi)
    swap = Reparametrization.from_polynomials([t2, t1])
    assert not certify_monotonic(swap)
    assert certify_monotonic(Reparametrization.from_polynomials([t1 ** 2, t2 ** 3]))


def test_reparametrization_preserves_integral_exactly():
    g = PolynomialMembrane.single([t1 + t2 ** 2, t1 * t2 - t2])
    w = [DifferentialForm.volume(2, t1 + 1), DifferentialForm.volume(2, t2 * t1)]
    phi = Reparametrization.from_polynomials([t1 ** 2, (t2 + t2 ** 3) / 2])
    for rho in ([(1, 2), (1, 2)], [(2, 1), (1, 2)], [(1, 2), (2, 1)], [(2, 1), (2, 1)]):
        a = iterated_integral(g, w, rho, EXACT).value
        b = iterated_integral(reparametrize(g, phi), w, rho, EXACT).value
        assert a == b


def test_is_closed_examples():
    assert is_closed(constant(2, [1, 2]), [1, 2])
    assert not is_closed(identity(2), [0, 0])
    for v in ([1, 0], [-2, 5], ["1/3", "7"]):
        assert is_closed(bump(2, [0, 0], v), [0, 0])
    assert not is_closed(bump(2, [0, 0], [1, 1]), [0, 0, 0])
    # sampled path for non-exact targets
    assert is_closed(bump(2, [0, 0], [1, 1]), [0.0, 0.0])


def test_catalog_closed_entries():
    assert is_closed(bump(3, [1, 2, 3], [1, -1, 2], powers=[[0, 1, 2], [1, 0, 0], [2, 2, 1]]), [1, 2, 3],
                     tol=1e-10)
    tb = trig_bubble(2, [0.5, 0.5, 0.0], [1.0, 0.5, 0.25], [[1, 2], [0, 3], [2, 2]])
    assert is_closed(tb, tb.base_point(), tol=1e-10)
    assert not is_closed(torus(), torus().base_point())
    x = Poly.var(0, 1)
    loopish = product_of_paths([x * (1 - x), x * (1 - x)])
    # each face pins only one coordinate, so a product of loops is not closed
    assert not is_closed(loopish, [0, 0])


def test_associativity_in_integrals():
    g1 = planar_bump([1, 2], [[1, 0], [0, 1]])
    g2 = planar_bump([-3, 1], [[0, 2], [1, 1]])
    g3 = planar_bump([2, -1], [[1, 1], [0, 0]])
    w = [DifferentialForm.volume(2, t1), DifferentialForm.volume(2, 1 + t2)]
    left = compose(compose(g1, g2), g3)
    right = compose(g1, compose(g2, g3))
    for s in (1, 2):
        assert iterated_integral(left, w[:s], None, EXACT).value == \
            iterated_integral(right, w[:s], None, EXACT).value


def test_expand_vanishing_chain_signs():
    a = [bump(1, [0, 0], [1, k], powers=[[k], [0]]) for k in (1, 2, 3)]
    for r, expected in [(1, [1, -1]), (2, [1, -1, -1, 1]), (3, [1, -1, -1, -1, 1, 1, 1, -1])]:
        chain = expand_vanishing_chain(a[:r])
        assert [c for c, _ in chain] == expected
        assert len(chain) == 2 ** r
    assert chain.terms[-1][1].label == "constant"
    assert chain.terms[0][1].label == "((bump*bump)*bump)"
    with pytest.raises(MembraneError):
        expand_vanishing_chain([])


def test_chain_algebra():
    g = constant(1, [0])
    c = MembraneChain(((2, g),))
    assert len(c + c) == 2
    assert [k for k, _ in -c] == [-2]
    with pytest.raises(MembraneError):
        MembraneChain(((1, g), (1, constant(2, [0]))))


def test_piecewise_membrane_validation():
    with pytest.raises(MembraneError):
        PolynomialMembrane(1, 1, {(0,): (Poly.var(0, 1),)}, [(Fraction(1, 2),)])
    with pytest.raises(MembraneError):
        PolynomialMembrane(1, 1, {(0,): (Poly.var(0, 1),)}, [(Fraction(3, 2),)])
    with pytest.raises(MembraneError):
        bump(2, [0, 0], [1])
