import numpy as np
import pytest
from conftest import ALL_CASES, case_id

from isoflow.constructions import demo_data
from isoflow.curve import CaseFlags, SpectralData, random_spectral_data
from isoflow.periods import (
    FrameInvalid,
    PathSpec,
    antiderivative,
    build_frame,
    edge_values,
    integrate_edge,
    integrate_raw,
    isoperiodic_residual,
)
from isoflow.poly import Polynomial


def agm(x, y, n=40):
    for _ in range(n):
        x, y = 0.5 * (x + y), np.sqrt(x * y)
    return x


def test_agm_oracle_against_series():
    # K(m) = pi/2 (1 + m/4 + 9 m^2/64 + ...)
    m = 1e-3
    series = 0.5 * np.pi * (1 + m / 4 + 9 * m**2 / 64 + 25 * m**3 / 256)
    assert 0.5 * np.pi / agm(1.0, np.sqrt(1 - m)) == pytest.approx(series, rel=1e-12)


@pytest.mark.parametrize(
    "P, path",
    [([1.0, 0.0, -1.0], [-1.0, 1.0]), ([0.0, 1.0, -1.0], [0.0, 1.0])],
    ids=["arcsine", "half-circle"],
)
def test_pi_kernels(P, path):
    val = integrate_raw(P, [1.0], 0, path)
    assert abs(abs(val) - np.pi) < 1e-10
    assert abs(val.imag) < 1e-12


@pytest.mark.parametrize("k", [2.0, 3.5, 1.25])
def test_elliptic_edge_matches_agm(k):
    P = Polynomial.from_roots([0.0, 1.0, k]).coeffs
    val = integrate_raw(P, [1.0], 0, [0.0, 1.0])
    # lambda = sin^2(phi) turns the integral into 2 K(1/k) / sqrt(k)
    expected = np.pi / (np.sqrt(k) * agm(1.0, np.sqrt(1.0 - 1.0 / k)))
    assert abs(abs(val) - expected) < 1e-9


def test_halving_tolerance_reduces_error():
    # end point close to a branch point that is not on the path
    x = 0.999
    exact = np.arcsin(x) + 0.5 * np.pi
    tols = [1e-2 / 2**k for k in range(8)]
    errs = [abs(abs(integrate_raw([1.0, 0.0, -1.0], [1.0], 0, [-1.0, x], tol=t)) - exact) for t in tols]
    for e1, e2 in zip(errs, errs[1:]):
        assert e2 <= e1
    assert errs[-1] < errs[0] / 10


def test_single_edge_frame():
    sd = SpectralData(CaseFlags(1, 0), 1, Polynomial([-1.0, 0.0, 1.0]), Polynomial([1.0]))
    frame = build_frame(sd)
    assert len(frame.edges) == 1
    assert frame.reference.shape == (1,)
    # omega = d lambda / sqrt(lambda^2 - 1) from -1 to 1
    assert abs(abs(frame.reference[0]) - np.pi) < 1e-10


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
@pytest.mark.parametrize("genus", [1, 2])
def test_edge_count_is_tree(flags, genus, rng):
    sd = random_spectral_data(flags, genus, rng)
    frame = build_frame(sd)
    assert len(frame.edges) == len(frame.branch_points) - 1


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
def test_frame_is_deterministic(flags, rng):
    sd = random_spectral_data(flags, 2, rng)
    assert build_frame(sd).to_json() == build_frame(sd).to_json()


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
def test_self_residual_vanishes(flags, rng):
    sd = random_spectral_data(flags, 2, rng)
    frame = build_frame(sd)
    assert np.max(np.abs(isoperiodic_residual(sd, frame))) < 1e-12


@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
def test_root_perturbation_moves_periods(flags, rng):
    sd = random_spectral_data(flags, 2, rng)
    frame = build_frame(sd)
    from isoflow.poly import roots

    ra = roots(sd.a)
    ra[0] += 1e-3
    moved = sd.with_ab(Polynomial.from_roots(ra, lead=sd.a.lead), sd.b)
    assert np.max(np.abs(isoperiodic_residual(moved, frame))) > 1e-6


@pytest.mark.parametrize("flags", [CaseFlags(0, 0), CaseFlags(1, 0), CaseFlags(0, 1)], ids=case_id)
def test_conjugation_symmetry(flags, rng):
    sd = random_spectral_data(flags, 2, rng)
    frame = build_frame(sd)
    for path, val in zip(frame.edges, frame.reference):
        mirror = PathSpec(
            path.ends,
            np.conj(path.start),
            np.conj(path.end),
            tuple(np.conj(w) for w in path.waypoints),
            np.conj(path.ref_nu),
        )
        assert abs(integrate_edge(sd, mirror) - np.conj(val)) < 1e-9


def test_frame_invalid_when_branch_point_jumps():
    sd = demo_data()
    frame = build_frame(sd)
    from isoflow.poly import roots

    ra = roots(sd.a)
    far = ra.copy()
    far[np.argmax(np.abs(ra))] *= -1
    moved = sd.with_ab(Polynomial.from_roots(far, lead=sd.a.lead), sd.b)
    with pytest.raises(FrameInvalid):
        edge_values(moved, frame)


def test_antiderivative_sheet_independent():
    sd = demo_data()
    z = 0.3 + 0.2j
    f1 = antiderivative(sd, z)
    # the two-segment path changes the lift bookkeeping, not f
    from isoflow.periods import Kernel, _polyline

    kernel = Kernel.from_sd(sd)
    cand = kernel.branch[np.abs(kernel.branch) > 1e-14]
    anchor = cand[np.argmin(np.abs(cand - z))]
    assert np.isfinite(f1)
    val, _, _, nu_end = _polyline(kernel, [complex(anchor), 0.5 * (anchor + z) + 0.05j, z], 1e-13)
    assert abs(val / nu_end - f1) < 1e-10


def test_frame_json_has_edges():
    frame = build_frame(demo_data())
    d = frame.to_dict()
    assert len(d["edges"]) == len(frame.edges)
    assert d["branch_points"][-1] is None
