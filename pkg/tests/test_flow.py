import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from isoflow.constructions import demo_data
from isoflow.curve import CaseFlags, random_spectral_data
from isoflow.flow import FlowOptions, Trajectory, integrate_flow, project_periods
from isoflow.periods import build_frame, edge_values
from isoflow.poly import Polynomial, roots
from isoflow.whitham import BCMap, ConstantCMap, c_basis, tangent_from_c


def match_error(r1, r0):
    d = np.abs(r1[:, None] - r0[None, :])
    i, j = linear_sum_assignment(d)
    return float(d[i, j].max())


def random_c(sd, rng):
    basis = c_basis(sd.flags, sd.genus)
    w = rng.normal(size=len(basis))
    c = basis[0] * w[0]
    for wk, cb in zip(w[1:], basis[1:]):
        c = c + cb * wk
    return c


@pytest.fixture(scope="module")
def translation():
    sd = random_spectral_data(CaseFlags(0, 0), 2, np.random.default_rng(5))
    return sd, integrate_flow(sd, BCMap(), (0.0, 0.5))


@pytest.fixture(scope="module")
def generic():
    sd = demo_data()
    c = random_c(sd, np.random.default_rng(11))
    return sd, c, integrate_flow(sd, ConstantCMap(c), (0.0, 0.2))


def test_translation_moves_roots(translation):
    sd, traj = translation
    assert traj.times[-1] == pytest.approx(0.5)
    assert match_error(roots(traj.final.a), roots(sd.a) - 0.5) < 1e-8
    assert match_error(roots(traj.final.b), roots(sd.b) - 0.5) < 1e-8


def test_translation_keeps_periods(translation):
    sd, traj = translation
    assert max(d["period_residual"] for d in traj.diagnostics) < 1e-8


def test_backward_translation(translation):
    sd, traj = translation
    back = integrate_flow(traj.final, BCMap(), (0.5, 0.0))
    assert match_error(roots(back.final.a), roots(sd.a)) < 1e-8
    assert np.all(np.diff(back.times) < 0)


def test_generic_flow_is_isoperiodic(generic):
    sd, c, traj = generic
    assert not traj.events
    assert traj.times[-1] == pytest.approx(0.2)
    assert max(d["period_residual"] for d in traj.diagnostics) <= 1e-6
    # the flow actually moves
    assert match_error(roots(traj.final.a), roots(sd.a)) > 1e-2


def test_period_derivative_vanishes_along_field(generic):
    sd, c, traj = generic
    h = 1e-4
    for i in np.linspace(0, len(traj.samples) - 1, 10).astype(int):
        s = traj.samples[i][1]
        frame = build_frame(s)
        v = tangent_from_c(s, c).vector(s)
        x = s.to_vector()
        vp, _ = edge_values(s.from_vector(x + h * v), frame)
        vm, _ = edge_values(s.from_vector(x - h * v), frame)
        assert np.max(np.abs(vp - vm)) / (2 * h) <= 1e-5


def test_transverse_direction_changes_periods():
    sd = demo_data()
    frame = build_frame(sd)
    # moving one root of a radially is not a c-direction
    ra = roots(sd.a)
    h = 1e-4
    ra[0] *= 1 + h
    moved = sd.with_ab(Polynomial.from_roots(ra, lead=sd.a.lead), sd.b)
    vals, _ = edge_values(moved, frame)
    assert np.max(np.abs(vals - frame.reference)) / h > 1e-2


def test_trajectory_times_monotone(generic):
    _, _, traj = generic
    assert np.all(np.diff(traj.times) > 0)
    assert traj.meta["steps"] == len(traj.samples) - 1


def test_jsonl_round_trip(generic, tmp_path):
    _, _, traj = generic
    path = tmp_path / "traj.jsonl"
    traj.to_jsonl(path)
    back = Trajectory.from_jsonl(path)
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.final.a.coeffs, traj.final.a.coeffs)
    assert back.diagnostics[-1]["period_residual"] == traj.diagnostics[-1]["period_residual"]


def test_projection_restores_periods():
    sd = demo_data()
    frame = build_frame(sd)
    from isoflow.flow import _transverse_directions

    W = _transverse_directions(sd, "transverse")
    x = sd.to_vector() + 1e-4 * W[:, 0]
    drifted = sd.from_vector(x)
    fixed, _, res = project_periods(drifted, frame, 1e-11)
    assert res <= 1e-11


def test_max_steps_raises():
    from isoflow.flow import FlowError

    sd = demo_data()
    with pytest.raises(FlowError, match="maximum"):
        integrate_flow(sd, BCMap(factor=1j), (0.0, 1.0), FlowOptions(max_steps=2))
