import numpy as np
import pytest
from conftest import ALL_CASES, case_id

from isoflow.constructions import admissible_double_point, demo_data
from isoflow.curve import (
    CaseFlags,
    CurveError,
    _normalize_p,
    Involution,
    MoebiusTransform,
    SpectralData,
    add_double_point,
    apply_moebius,
    branch_points,
    f_series,
    free_dimension,
    gamma,
    gamma_residual,
    involution_image,
    random_spectral_data,
    remove_double_points,
    validate,
)
from isoflow.periods import antiderivative, build_frame, isoperiodic_residual
from isoflow.poly import Polynomial


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
@pytest.mark.parametrize("genus", [1, 2, 3])
def test_random_data_is_valid(flags, genus, rng):
    sd = random_spectral_data(flags, genus, rng)
    rep = validate(sd)
    assert rep.ok, rep.failures
    assert (rep.P, rep.R, rep.T) == (True, True, True)
    assert sd.a.degree == flags.deg_a(genus)
    assert sd.b.degree == flags.deg_b(genus)


def test_unit_circle_genus_two_report():
    sd = demo_data()
    assert validate(sd).to_dict()["P"]
    assert validate(sd).ok


def test_root_in_marked_set_rejected():
    flags = CaseFlags(0, 1, Involution.REAL)
    a = Polynomial.from_roots([0.0, 1.0, -2.0, 3.0])
    sd = SpectralData(flags, 2, a, Polynomial([1.0, 0.2, 0.3, 0.1]))
    rep = validate(sd)
    assert not rep.ok
    assert any(f.startswith("root in S") for f in rep.failures)


def test_non_real_b_rejected():
    flags = CaseFlags(1, 0, Involution.REAL)
    sd = SpectralData(flags, 1, Polynomial([-1.0, 0.0, 1.0]), Polynomial([0.5, 1.0 + 0.3j]))
    rep = validate(sd)
    assert any(f.startswith("reality") for f in rep.failures)


def test_real_involution_fixes_real_data():
    a = Polynomial([-1.0, 0.3, 2.0, 1.0])
    b = Polynomial([0.7, -0.1])
    ia, ib = involution_image(CaseFlags(0, 0, Involution.REAL), a, b, 1)
    assert np.allclose(ia.coeffs, a.coeffs)
    assert np.allclose(ib.coeffs, b.coeffs)


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
def test_involution_is_an_involution(flags, rng):
    sd = random_spectral_data(flags, 2, rng)
    a2 = sd.a + Polynomial(0.1 * rng.normal(size=sd.a.degree) + 0.1j * rng.normal(size=sd.a.degree))
    ia, ib = involution_image(flags, a2, sd.b, 2)
    iia, iib = involution_image(flags, ia, ib, 2)
    assert np.allclose(iia.padded(sd.a.degree + 1), a2.padded(sd.a.degree + 1), atol=1e-14)
    assert np.allclose(iib.padded(sd.b.degree + 1), sd.b.padded(sd.b.degree + 1), atol=1e-14)


def test_branch_points_explicit():
    sd = SpectralData(CaseFlags(1, 0), 1, Polynomial([-1.0, 0.0, 1.0]), Polynomial([1.0]))
    bp = branch_points(sd)
    assert not bp.infinite
    assert np.allclose(sorted(bp.finite.real), [-1.0, 1.0])


def test_branch_points_include_infinity():
    sd = SpectralData(CaseFlags(0, 0), 1, Polynomial.from_roots([-1.0, 0.5, 2.0]), Polynomial([1.0, 1.0]))
    bp = branch_points(sd)
    assert len(bp.finite) == 3
    assert bp.infinite
    assert len(bp) == 4


def test_double_root_is_not_a_branch_point():
    a = Polynomial.from_roots([-1.0, 1.0, 2.0, 2.0])
    sd = SpectralData(CaseFlags(1, 0), 2, a, Polynomial([-2.0, 1.0]) * Polynomial([1.0, 1.0]))
    bp = branch_points(sd)
    assert bp.multiple
    assert len(bp.finite) == 2


def test_gamma_leading_coefficient():
    a = Polynomial.from_roots([-1.0, 0.5, 2.0, 3.0, -0.2])
    b = Polynomial([0.4, -1.0, 0.75])
    sd = SpectralData(CaseFlags(0, 0), 2, a, b)
    assert gamma(sd) == pytest.approx(2 * 0.75)
    assert gamma(sd.with_ab(a, b * 3.5)) == pytest.approx(3.5 * gamma(sd))


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
def test_gamma_cancels_leading_term(flags, rng):
    sd = random_spectral_data(flags, 2, rng)
    assert abs(gamma_residual(sd)) < 1e-12


def test_identity_moebius_is_identity(rng):
    sd = random_spectral_data(CaseFlags(0, 0), 2, rng)
    out = apply_moebius(sd, MoebiusTransform())
    assert np.allclose(out.a.coeffs, sd.a.coeffs)
    assert np.allclose(out.b.coeffs, sd.b.coeffs)


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
def test_moebius_preserves_validity_and_periods(flags, rng):
    sd = random_spectral_data(flags, 2, rng)
    m = MoebiusTransform(1.7, 0.3) if flags.b_flag == 0 else MoebiusTransform(np.exp(0.4j), 0.0)
    out = apply_moebius(sd, m)
    assert validate(out).ok
    before = np.sort(np.abs(build_frame(sd).reference))
    after = np.sort(np.abs(build_frame(out).reference))
    assert np.allclose(before, after, atol=1e-10)


def test_moebius_rejects_shift_with_marked_zero():
    sd = demo_data()
    with pytest.raises(CurveError):
        apply_moebius(sd, MoebiusTransform(1.0, 0.5))


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
def test_free_dimension(flags, rng):
    sd = random_spectral_data(flags, 2, rng)
    assert free_dimension(sd) == flags.dimension(2)


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
def test_json_round_trip(flags, rng):
    sd = random_spectral_data(flags, 2, rng)
    back = SpectralData.from_json(sd.to_json())
    assert back.flags == sd.flags and back.genus == sd.genus
    assert np.array_equal(back.a.coeffs, sd.a.coeffs)
    assert np.array_equal(back.b.coeffs, sd.b.coeffs)


def test_from_dict_rejects_unknown_key():
    d = demo_data().to_dict()
    d["extra"] = 1
    with pytest.raises(CurveError, match="extra"):
        SpectralData.from_dict(d)


# f with d(f nu) = omega ------------------------------------------------------
def test_f_series_constant_solution():
    f = f_series(None, 0.0, 6, P=Polynomial([0.0, 1.0]), rhs=[2.0])
    assert np.allclose(f, [2.0, 0, 0, 0, 0, 0, 0])


def test_f_series_linear_solution():
    f = f_series(None, 0.0, 6, P=Polynomial([0.0, 1.0]), rhs=[0.0, 2.0])
    assert np.allclose(f, [0.0, 2.0 / 3.0, 0, 0, 0, 0, 0])


def test_f_series_matches_quadrature():
    sd = demo_data()
    e = branch_points(sd).finite
    e = e[np.abs(e) > 1e-12][0]
    coeffs = f_series(sd, e, 30)
    x = 0.05 * np.exp(0.7j)
    series = np.polynomial.polynomial.polyval(x, coeffs)
    assert abs(series - antiderivative(sd, e + x, anchor=e)) < 1e-12


# double points --------------------------------------------------------------
@pytest.fixture(scope="module")
def double_point():
    sd = demo_data()
    z, p = admissible_double_point(sd, 0.5 + 0.3j)
    return sd, z, p


def test_admissible_point_zero_of_f(double_point):
    sd, z, p = double_point
    assert abs(antiderivative(sd, z)) < 1e-12
    assert p.degree == 2


def test_add_double_point_keeps_periods(double_point):
    sd, z, p = double_point
    big = add_double_point(sd, p)
    assert big.genus == sd.genus + 2
    frame = build_frame(sd)
    assert np.max(np.abs(isoperiodic_residual(big, frame))) < 1e-9


def test_double_point_round_trip(double_point):
    sd, z, p = double_point
    back, q = remove_double_points(add_double_point(sd, p))
    assert np.allclose(q.coeffs, p.coeffs, atol=1e-9)
    assert np.max(np.abs(back.a.coeffs - sd.a.coeffs)) < 1e-9
    assert np.max(np.abs(back.b.coeffs - sd.b.coeffs)) < 1e-9


def test_trivial_double_point():
    sd = demo_data()
    assert add_double_point(sd, Polynomial([1.0])) is sd
    back, p = remove_double_points(sd)
    assert back is sd and p.degree == 0


def test_inadmissible_double_point_rejected():
    sd = demo_data()
    with pytest.raises(CurveError, match="admissible"):
        add_double_point(sd, _normalize_p(sd.flags, Polynomial.from_roots([0.5 + 0.3j, 1 / np.conj(0.5 + 0.3j)])))


def test_not_in_R_rejected():
    a = Polynomial.from_roots([-1.0, 1.0, 2.0, 2.0])
    sd = SpectralData(CaseFlags(1, 0), 2, a, Polynomial([1.0, 1.0, 1.0]))
    with pytest.raises(CurveError, match="not in R"):
        remove_double_points(sd)
