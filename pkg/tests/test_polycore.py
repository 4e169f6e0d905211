import cmath

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harmzeros.errors import NonConvergence, NotAPole, PoleProximity
from harmzeros.polycore import (
    INF,
    Polynomial,
    RationalFunction,
    cluster_roots,
    laurent_head,
    poly_derivative,
    poly_eval,
    poly_roots,
    rat_derivative,
    rat_eval,
)
from harmzeros.harmonic import wilmshurst
from oracles import omega_sign_change_count


def _residual_ok(p, roots, tol=1e-10):
    scale = np.max(np.abs(p.coeffs)) * np.maximum(1, np.abs(roots)) ** p.degree
    return np.all(np.abs(p(roots)) <= tol * scale)


def _same_multiset(a, b, tol):
    a, b = list(a), list(b)
    for z in a:
        k = int(np.argmin([abs(z - w) for w in b]))
        if abs(z - b[k]) > tol:
            return False
        b.pop(k)
    return not b


# -- evaluation and derivatives ------------------------------------------------

def test_poly_eval_examples():
    assert poly_eval(Polynomial([1, 0, 1]), 1j) == 0
    assert poly_eval(Polynomial([]), 3.7 + 1j) == 0
    assert poly_eval(Polynomial([-1, 0, 0, 1]), 2) == 7


def test_poly_eval_vectorized():
    p = Polynomial([1, 2, 3])
    z = np.array([0, 1, 1j])
    np.testing.assert_allclose(p(z), 1 + 2 * z + 3 * z ** 2)


def test_zero_polynomial_is_empty():
    assert Polynomial([0, 0]).coeffs.size == 0
    assert Polynomial([]).degree == -1
    assert Polynomial([1, 2, 0, 0]).degree == 1


def test_poly_derivative_examples():
    assert np.array_equal(poly_derivative(Polynomial([0, 0, 0, 1])).coeffs, [0, 0, 3])
    assert poly_derivative(Polynomial([5])).is_zero
    assert np.array_equal(poly_derivative(Polynomial([1, 2, 3])).coeffs, [2, 6])


def test_polynomial_arithmetic():
    p = Polynomial([1, 1])
    q = Polynomial([-1, 1])
    assert np.array_equal((p * q).coeffs, [-1, 0, 1])
    assert (p - p).is_zero
    quot, rem = Polynomial([-1, 0, 1]).divmod(q)
    assert np.allclose(quot.coeffs, [1, 1]) and rem.is_zero
    assert np.allclose(Polynomial([2, 0, 1]).taylor(1.0, 2), [3, 2, 1])


# -- roots -----------------------------------------------------------------------

def test_roots_of_z2_plus_1():
    roots = poly_roots(Polynomial([1, 0, 1]))
    assert _same_multiset(roots, [1j, -1j], 1e-12)


def test_roots_of_scaled_unity():
    rho = 0.7
    roots = poly_roots(Polynomial([-rho ** 3, 0, 0, 1]))
    expected = [rho * cmath.exp(2j * cmath.pi * k / 3) for k in range(3)]
    assert _same_multiset(roots, expected, 1e-12)


def test_roots_keep_zero_roots_exact():
    roots = poly_roots(Polynomial([0, 0, 2, 1]))
    assert sorted(abs(r) for r in roots)[:2] == [0.0, 0.0]


def test_wilmshurst_omega_level_root_count():
    omega = wilmshurst(3).dilatation
    num, den = omega.numerator, omega.denominator
    level = Polynomial(np.pad(num.coeffs, (0, max(0, den.degree - num.degree)))
                       - np.pad(den.coeffs, (0, max(0, num.degree - den.degree))))
    roots = poly_roots(level)
    assert roots.size == max(num.degree, den.degree)
    assert _residual_ok(level, roots, 1e-12)
    # argument principle on a big box counts the same roots
    assert omega_sign_change_count(num.coeffs, den.coeffs, (-5, 5, -5, 5)) == roots.size


def test_roots_require_degree():
    with pytest.raises(ValueError):
        poly_roots(Polynomial([3]))


def test_non_convergence_is_reported():
    with pytest.raises(NonConvergence):
        poly_roots(Polynomial(np.random.default_rng(0).normal(size=40)), max_sweeps=1)


def test_cluster_roots_multiplicity():
    p = Polynomial.from_roots([0.5, 0.5, 0.5, -1])
    clusters = cluster_roots(p, poly_roots(p))
    mults = sorted(m for _, m in clusters)
    assert mults == [1, 3]
    center = [c for c, m in clusters if m == 3][0]
    assert abs(center - 0.5) < 1e-10


unit_disk = st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(unit_disk, min_size=2, max_size=13).filter(lambda c: abs(c[-1]) > 1e-3))
def test_random_roots_count_and_residual(coeffs):
    p = Polynomial(coeffs)
    roots = poly_roots(p)
    assert roots.size == p.degree
    assert _residual_ok(p, roots, 1e-10)


@settings(max_examples=30, deadline=None)
@given(st.lists(unit_disk, min_size=2, max_size=9).filter(lambda c: abs(c[-1]) > 0.1),
       st.sampled_from([2, 1j, 1e6]))
def test_roots_invariant_under_scaling(coeffs, alpha):
    p = Polynomial(coeffs)
    q = Polynomial(np.asarray(coeffs, dtype=complex) * alpha)
    a, b = poly_roots(p), poly_roots(q)
    # well separated roots agree tightly; clustered ones only to their conditioning
    sep = min((abs(x - y) for i, x in enumerate(a) for y in a[i + 1:]), default=1.0)
    tol = 1e-9 if sep > 1e-2 else 1e-4
    assert _same_multiset(a, b, tol * (1 + max(abs(a))))


# -- rational functions ---------------------------------------------------------

def test_rat_eval_examples():
    r = RationalFunction(Polynomial([0, 0, 1]), Polynomial([-0.343, 0, 0, 1]))
    assert rat_eval(r, 1) == pytest.approx(1 / 0.657, rel=1e-14)
    assert rat_eval(RationalFunction(Polynomial([0, 1])), 3 + 4j) == 3 + 4j
    with pytest.raises(PoleProximity):
        rat_eval(RationalFunction(Polynomial([1]), Polynomial([0, 1])), 1e-300)


def test_rat_derivative_examples():
    d = rat_derivative(RationalFunction([1], [0, 1]))
    assert np.allclose(d.numerator.coeffs, [-1]) and np.allclose(d.denominator.coeffs, [0, 0, 1])
    d = rat_derivative(RationalFunction([0, 0, 1]))
    assert np.allclose(d.numerator.coeffs, [0, 2]) and d.denominator.degree == 0
    d = rat_derivative(RationalFunction([0, 1], [-1, 1]))
    # -1 / (z - 1)^2 after cancellation
    assert d.numerator.degree == 0 and d.denominator.degree == 2
    assert d(3.0) == pytest.approx(-0.25)


def test_normalization_cancels_common_factor():
    num = Polynomial.from_roots([0.3, 2.0])
    den = Polynomial.from_roots([0.3, -1.0, 0.5j])
    r = RationalFunction(num, den)
    assert r.numerator.degree == 1 and r.denominator.degree == 2
    assert r.denominator.lead == 1


def test_rational_arithmetic():
    a = RationalFunction([1], [0, 1])
    b = RationalFunction([1], [1, 1])
    s = a + b
    z = 0.3 + 0.4j
    assert s(z) == pytest.approx(1 / z + 1 / (z + 1))
    assert (a * b)(z) == pytest.approx(1 / (z * (z + 1)))
    assert (a / b)(z) == pytest.approx((z + 1) / z)
    assert (a - a).is_zero


def _random_rational(draw_coeffs):
    num, den = draw_coeffs
    return RationalFunction(Polynomial(num), Polynomial(den))


@settings(max_examples=50, deadline=None)
@given(st.lists(unit_disk, min_size=1, max_size=5),
       st.lists(unit_disk, min_size=2, max_size=5).filter(lambda c: abs(c[-1]) > 0.1),
       st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False))
def test_derivative_matches_central_difference(num, den, z):
    r = RationalFunction(Polynomial(num), Polynomial(den))
    if r.denominator.degree >= 1:
        poles = [p for p, _ in r.pole_clusters()]
        if min(abs(z - p) for p in poles) < 0.2:
            return
    h = 1e-6 * (1 + abs(z))
    fd = (r(z + h) - r(z - h)) / (2 * h)
    exact = rat_derivative(r)(z)
    assert abs(exact - fd) <= 1e-5 * max(abs(exact), 1e-3 * (1 + abs(r(z))))


# -- Laurent data -----------------------------------------------------------------

def test_laurent_simple_pole_residue():
    rho = 0.7
    r = RationalFunction(Polynomial([0, 0, 1]), Polynomial([-rho ** 3, 0, 0, 1]))
    head = laurent_head(r, rho)
    assert head.order == 1
    # residue oracle N(z0)/D'(z0)
    assert head.leading == pytest.approx(rho ** 2 / (3 * rho ** 2), abs=1e-12)


def test_laurent_of_inverse():
    head = laurent_head(RationalFunction([1], [0, 1]), 0)
    assert head.order == 1 and head.leading == pytest.approx(1) and head.constant == pytest.approx(0)


def test_laurent_at_infinity():
    head = laurent_head(RationalFunction([0, 0, 1]), INF)
    assert head.order == 2 and head.leading == 1


def test_laurent_not_a_pole():
    with pytest.raises(NotAPole):
        laurent_head(RationalFunction([1], [0, 1]), 0.5)
    with pytest.raises(NotAPole):
        laurent_head(RationalFunction([1], [0, 1]), INF)


@pytest.mark.parametrize("pole,order", [(0.4 + 0.2j, 1), (-0.5, 2), (1j, 3)])
def test_laurent_round_trip_bounded(pole, order):
    den = Polynomial.from_roots([pole] * order + [2.0])
    r = RationalFunction(Polynomial([1, -0.3, 0.7j]), den)
    head = laurent_head(r, pole)
    assert head.order == order
    angles = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    for radius in (1e-2, 1e-3):
        z = pole + radius * np.exp(1j * angles)
        principal = sum(c * (z - pole) ** (-(order - k)) for k, c in enumerate(head.principal))
        # factored evaluation; the expanded denominator cancels badly this close
        exact = (1 - 0.3 * z + 0.7j * z ** 2) / ((z - pole) ** order * (z - 2.0))
        rest = exact - principal
        assert np.max(np.abs(rest - head.constant)) < 10 * radius * (1 + abs(head.constant))
