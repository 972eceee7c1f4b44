import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sosupo.polyalg import (DimensionError, PolyMap, PolyParseError, Polynomial, eval_poly, gradient,
                            grlex_key, lie_derivative, monomial_basis)
from sosupo.systems import builtin, builtin_observable


def var(n, i):
    return Polynomial.variable(n, i)


# -- examples ---------------------------------------------------------------
def test_eval_sum_of_squares():
    p = var(2, 0) ** 2 + var(2, 1) ** 2
    assert eval_poly(p, [1.0, 2.0]) == 5.0


def test_eval_zero_polynomial():
    assert Polynomial(3).is_zero
    assert eval_poly(Polynomial(3), [0.3, -2.0, 7.0]) == 0.0


def test_eval_phi1_at_ones():
    assert eval_poly(builtin_observable("sprott_phi1"), [1.0, 1.0, 1.0]) == pytest.approx(3.30, abs=1e-14)


def test_eval_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_poly(var(2, 0), [1.0, 2.0, 3.0])


def test_gradient_examples():
    a1, a2 = var(2, 0), var(2, 1)
    assert gradient(a1 * a1 + a2 * a2) == [2.0 * a1, 2.0 * a2]
    assert all(g.is_zero for g in gradient(Polynomial.constant(2, 4.5)))
    assert gradient(a1 * a1 * a2) == [2.0 * a1 * a2, a1 * a1]


def test_lie_derivative_vdp():
    V = var(2, 0) ** 2
    L = lie_derivative(V, builtin("vdp"))
    assert L == Polynomial(2, {(1, 1): -6.0})


def test_lie_derivative_of_constant_vanishes():
    assert lie_derivative(Polynomial.constant(3, 2.0), builtin("sprott")).is_zero


def test_lie_derivative_sprott_first_coordinate():
    L = lie_derivative(var(3, 0), builtin("sprott"))
    assert L == var(3, 1) + var(3, 2)


def test_lie_derivative_dimension_mismatch():
    with pytest.raises(DimensionError):
        lie_derivative(var(2, 0), builtin("sprott"))


def test_arith_examples():
    a1, a2 = var(2, 0), var(2, 1)
    assert a1 * a1 == Polynomial(2, {(2, 0): 1.0})
    p = 3.0 * a1 * a2 - a2 + 0.25
    assert (p + (-1.0) * p).is_zero
    assert (a1 + a2) ** 2 == Polynomial(2, {(2, 0): 1.0, (1, 1): 2.0, (0, 2): 1.0})


def test_arith_dimension_mismatch():
    with pytest.raises(DimensionError):
        var(2, 0) + var(3, 0)
    with pytest.raises(DimensionError):
        var(2, 0) * var(3, 0)


def test_zero_terms_are_dropped():
    p = Polynomial(2, {(1, 0): 1.0, (0, 1): 0.0})
    assert list(p.terms) == [(1, 0)]
    assert (var(2, 0) - var(2, 0)).terms == {}


def test_grlex_basis_order():
    assert monomial_basis(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    basis = monomial_basis(3, 4)
    assert basis == sorted(basis, key=grlex_key)
    assert len(basis) == math.comb(3 + 4, 4)


def test_text_round_trip():
    p = Polynomial(3, {(2, 0, 1): 0.1, (0, 0, 0): -1e-300, (1, 1, 1): 1 / 3})
    assert Polynomial.from_lines(3, p.to_lines()) == p


def test_text_comments_and_errors():
    p = Polynomial.from_lines(2, ["# header", "2.5 1 0  # x", "", "-1 0 2"])
    assert p == 2.5 * var(2, 0) - var(2, 1) ** 2
    with pytest.raises(PolyParseError, match="line 2"):
        Polynomial.from_lines(2, ["1 0 0", "1 0 0 0"])
    with pytest.raises(PolyParseError, match="negative"):
        Polynomial.from_lines(2, ["1 -1 0"])


def test_polymap_matches_scalar_eval():
    rng = np.random.default_rng(3)
    polys = [builtin_observable("sprott_phi2"), *builtin("sprott").f]
    X = rng.normal(size=(50, 3))
    pm = PolyMap(polys)
    expect = np.array([[eval_poly(p, x) for p in polys] for x in X])
    assert np.allclose(pm(X), expect, rtol=1e-13, atol=1e-13)
    assert np.allclose(pm(X[0]), expect[0], rtol=1e-13, atol=1e-13)


# -- properties ------------------------------------------------------------
@st.composite
def polynomials(draw, n=None, max_deg=8, max_terms=8):
    n = draw(st.integers(1, 5)) if n is None else n
    count = draw(st.integers(0, max_terms))
    terms = []
    for _ in range(count):
        deg = draw(st.integers(0, max_deg))
        # split the degree among the variables
        cuts = sorted(draw(st.lists(st.integers(0, deg), min_size=n - 1, max_size=n - 1)))
        exps = tuple(b - a for a, b in zip([0, *cuts], [*cuts, deg]))
        terms.append((exps, draw(st.floats(-2.0, 2.0, allow_nan=False).filter(lambda c: abs(c) > 1e-3))))
    return Polynomial(n, terms)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_gradient_matches_central_differences(data):
    p = data.draw(polynomials())
    x = np.array(data.draw(st.lists(st.floats(-1.0, 1.0), min_size=p.n, max_size=p.n)))
    h = 1e-6
    scale = max(1.0, sum(abs(c) for c in p.terms.values()))
    for i, gi in enumerate(gradient(p)):
        e = np.zeros(p.n)
        e[i] = h
        fd = (eval_poly(p, x + e) - eval_poly(p, x - e)) / (2 * h)
        exact = eval_poly(gi, x)
        assert abs(fd - exact) <= 1e-5 * max(abs(exact), scale * 1e-2)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_lie_derivative_pointwise(data):
    n = data.draw(st.integers(1, 4))
    V = data.draw(polynomials(n=n, max_deg=5))
    f = [data.draw(polynomials(n=n, max_deg=3, max_terms=4)) for _ in range(n)]
    x = np.array(data.draw(st.lists(st.floats(-1.5, 1.5), min_size=n, max_size=n)))
    lhs = eval_poly(lie_derivative(V, f), x)
    terms = [eval_poly(fi, x) * eval_poly(dV, x) for fi, dV in zip(f, gradient(V))]
    rhs = math.fsum(terms)
    mag = math.fsum(abs(t) for t in terms) + 1e-300
    assert abs(lhs - rhs) <= 1e-12 * max(abs(rhs), 1.0) + 1e-14 * mag


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_multiplication_is_commutative_on_term_maps(data):
    n = data.draw(st.integers(1, 4))
    p, q = data.draw(polynomials(n=n, max_deg=4)), data.draw(polynomials(n=n, max_deg=4))
    assert (p * q).terms == (q * p).terms
    assert (p + q).terms == (q + p).terms


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_addition_is_associative_up_to_rounding(data):
    n = data.draw(st.integers(1, 3))
    p, q, r = (data.draw(polynomials(n=n, max_deg=4)) for _ in range(3))
    left, right = (p + q) + r, p + (q + r)
    for e in set(left.terms) | set(right.terms):
        assert left.coeff(e) == pytest.approx(right.coeff(e), abs=1e-15)
