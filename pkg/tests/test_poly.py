import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoflow.poly import (
    Polynomial,
    discriminant,
    horner,
    mobius_constant,
    resultant,
    roots,
    series_power,
    sqrt_series_polypart,
    start_polynomial,
)


def test_evaluation_examples():
    assert Polynomial([-1, 0, 1])(2) == pytest.approx(3)
    assert Polynomial([1])(3.7 + 2j) == 1
    assert Polynomial([0, 1j, 0, 1])(1j) == pytest.approx(-1 - 1j)


def test_horner_matches_polyval(rng):
    c = rng.normal(size=7) + 1j * rng.normal(size=7)
    z = rng.normal(size=5) + 1j * rng.normal(size=5)
    assert np.allclose(horner(c, z), np.polyval(c[::-1], z))


def test_arithmetic_and_divmod(rng):
    p = Polynomial(rng.normal(size=5) + 1j * rng.normal(size=5))
    q = Polynomial(rng.normal(size=3) + 1j * rng.normal(size=3))
    quo, rem = (p * q + Polynomial([1.0, 2.0])).divmod(q)
    assert np.allclose(quo.coeffs, p.coeffs)
    assert np.allclose(rem.coeffs, [1.0, 2.0])


def test_compose_affine():
    p = Polynomial([1.0, -3.0, 2.0])
    shifted = p.compose_affine(2.0, 1.0)
    for z in (0.3, -1.2 + 0.5j):
        assert shifted(z) == pytest.approx(p(2 * z + 1))


def test_roots_simple_examples():
    r = np.sort_complex(roots(Polynomial([1, 0, 1])))
    assert np.allclose(r, [-1j, 1j])


def test_roots_triple():
    r = roots(Polynomial.from_roots([2, 2, 2]))
    assert np.allclose(r, 2, atol=1e-10)


def test_roots_degree_eight_residuals(rng):
    c = np.concatenate([rng.normal(size=8) + 1j * rng.normal(size=8), [1.0]])
    p = Polynomial(c)
    r = roots(p)
    assert len(r) == 8
    assert np.max(np.abs(p(r))) < 1e-10
    assert np.allclose(np.sort_complex(r), np.sort_complex(np.roots(c[::-1])), atol=1e-9)


def test_roots_deterministic():
    p = Polynomial([3, -1, 2, 0.5, 1])
    assert np.array_equal(roots(p), roots(p))


# clusters far below the unit scale are not resolvable in double precision
_root = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False).map(
    lambda z: complex(z.real if abs(z.real) > 1e-6 else 0.0, z.imag if abs(z.imag) > 1e-6 else 0.0)
)


@settings(max_examples=40, deadline=None)
@given(st.lists(_root, min_size=1, max_size=7))
def test_roots_relative_residual(rts):
    p = Polynomial.from_roots(rts)
    r = roots(p)
    assert len(r) == len(rts)
    c = np.abs(p.coeffs)
    for z in r:
        scale = np.sum(c * np.abs(z) ** np.arange(len(c)))
        assert abs(p(z)) <= 1e-9 * scale


def test_resultant_examples():
    assert resultant(Polynomial([-1, 0, 1]), Polynomial([-2, 1])) == pytest.approx(3)
    assert abs(resultant(Polynomial([-1, 0, 1]), Polynomial([-1, 1]))) < 1e-14
    assert resultant(Polynomial([5.0]), Polynomial([1, 2, 3])) == pytest.approx(25)


def test_resultant_product_formula(rng):
    a = Polynomial.from_roots(rng.normal(size=3) + 1j * rng.normal(size=3), lead=2.0)
    b = Polynomial(rng.normal(size=3) + 1j * rng.normal(size=3))
    expected = a.lead**b.degree * np.prod(b(roots(a)))
    assert resultant(a, b) == pytest.approx(expected, rel=1e-10)


def test_discriminant_examples():
    assert discriminant(Polynomial([-1, 0, 1])) == pytest.approx(4)
    assert abs(discriminant(Polynomial.from_roots([1, 1]))) < 1e-14
    assert discriminant(Polynomial([0, -1, 0, 1])) == pytest.approx(4)


def test_sqrt_series_polypart_examples():
    assert np.allclose(sqrt_series_polypart(0).coeffs, [1])
    assert np.allclose(sqrt_series_polypart(1).coeffs, [1, 1])
    assert np.allclose(sqrt_series_polypart(2).coeffs, [1.5, 1, 1])


@pytest.mark.parametrize("ell,value", [(1, -6.0), (2, -15.0), (3, -35.0), (4, -78.75)])
def test_mobius_constant_values(ell, value):
    assert mobius_constant(ell) == pytest.approx(value)
    s = start_polynomial(sqrt_series_polypart(ell))
    assert s.degree == 0 or np.max(np.abs(s.coeffs[1:])) < 1e-10 * abs(value)
    assert s.coeffs[0] == pytest.approx(value)


def test_series_power_inverse_square_root():
    # (1 - 2x)^(-1/2) = sum binom(2k, k) (x/2)^k
    y = series_power(np.array([1.0, -2.0]), -0.5, 6)
    expected = [1.0, 1.0, 1.5, 2.5, 4.375, 7.875]
    assert np.allclose(y, expected)
