"""Acceptance suite; one summary line per criterion is printed at the end of the run."""

import json

import numpy as np
import pytest
from conftest import ALL_CASES, case_id
from numpy.polynomial import polynomial as npoly
from scipy.optimize import linear_sum_assignment

from isoflow.cli import main
from isoflow.constructions import admissible_double_point, demo_data, manufactured_collision
from isoflow.curve import (
    CaseFlags,
    Involution,
    add_double_point,
    branch_points,
    f_series,
    random_spectral_data,
    remove_double_points,
)
from isoflow.flow import integrate_flow, relative_resultant
from isoflow.periods import antiderivative, build_frame, edge_values, integrate_raw, isoperiodic_residual
from isoflow.poly import Polynomial, mobius_constant, roots, sqrt_series_polypart
from isoflow.singular import continue_through, detect_singularity, glued_trajectory
from isoflow.whitham import BCMap, ConstantCMap, c_basis, identity_residual, tangent_from_c, tangent_simple_roots

EVERY_CASE = [
    CaseFlags(a, b, inv)
    for a in (0, 1)
    for b in (0, 1)
    for inv in Involution
    if b == 1 or inv is Involution.REAL
]


def random_c(flags, g, rng):
    basis = c_basis(flags, g)
    w = rng.normal(size=len(basis))
    c = basis[0] * w[0]
    for wk, cb in zip(w[1:], basis[1:]):
        c = c + cb * wk
    return c


def match_error(r1, r0):
    d = np.abs(r1[:, None] - r0[None, :])
    i, j = linear_sum_assignment(d)
    return float(d[i, j].max())


def agm(x, y, n=40):
    for _ in range(n):
        x, y = 0.5 * (x + y), np.sqrt(x * y)
    return x


# 1 ---------------------------------------------------------------------------
@pytest.mark.criterion(1, "equilibrium shape polynomial gives a constant")
@pytest.mark.parametrize("ell", range(1, 9))
def test_c1_shape_polynomial_constant(ell):
    q = sqrt_series_polypart(ell)
    w = Polynomial([0.0, 1.0])
    wm2 = Polynomial([-2.0, 1.0])
    expr = wm2 * q * float(2 * ell + 1) - w * q - w * wm2 * q.deriv() * 2.0
    c = expr.padded(ell + 2)
    assert np.max(np.abs(c[1:])) <= 1e-10 * abs(c[0])
    assert c[0] == pytest.approx(mobius_constant(ell), rel=1e-12)


@pytest.mark.criterion(1, "equilibrium shape polynomial gives a constant")
def test_c1_spot_values():
    assert [mobius_constant(ell) for ell in (1, 2, 3)] == [-6.0, -15.0, -35.0]


# 2 ---------------------------------------------------------------------------
@pytest.mark.criterion(2, "tangent identity on random instances")
@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
def test_c2_tangent_identity(flags):
    rng = np.random.default_rng(2024)
    checked = 0
    for k in range(50):
        g = 1 + k % 3
        sd = random_spectral_data(flags, g, rng)
        c = random_c(flags, g, rng)
        td = tangent_from_c(sd, c)
        assert identity_residual(sd, c, td.adot, td.bdot) <= 1e-10
        ra, adot, rb, bdot = tangent_simple_roots(sd, c)
        lhs = td.adot(ra)
        rhs = -adot * sd.a.deriv()(ra)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * (1 + np.max(np.abs(rhs)))
        if rb.size:
            lhs = td.bdot(rb)
            rhs = -bdot * sd.b.deriv()(rb)
            assert np.max(np.abs(lhs - rhs)) <= 1e-9 * (1 + np.max(np.abs(rhs)))
        checked += 1
    assert checked == 50


# 3 ---------------------------------------------------------------------------
@pytest.mark.criterion(3, "translation flow for c = b")
def test_c3_translation():
    sd = random_spectral_data(CaseFlags(0, 0), 2, np.random.default_rng(3))
    traj = integrate_flow(sd, BCMap(), (0.0, 0.5))
    assert traj.times[-1] == pytest.approx(0.5)
    assert match_error(roots(traj.final.a), roots(sd.a) - 0.5) <= 1e-8
    assert match_error(roots(traj.final.b), roots(sd.b) - 0.5) <= 1e-8
    assert max(d["period_residual"] for d in traj.diagnostics) <= 1e-8


# 4 ---------------------------------------------------------------------------
@pytest.mark.criterion(4, "generic flow keeps every period")
def test_c4_isoperiodic_flow():
    sd = demo_data()
    assert sd.flags == CaseFlags(0, 1, Involution.UNIT_CIRCLE) and sd.genus == 2
    c = random_c(sd.flags, 2, np.random.default_rng(4))
    traj = integrate_flow(sd, ConstantCMap(c), (0.0, 0.2))
    assert traj.times[-1] == pytest.approx(0.2)
    assert max(d["period_residual"] for d in traj.diagnostics) <= 1e-6
    for i in np.linspace(0, len(traj.samples) - 1, 10).astype(int):
        s = traj.samples[i][1]
        frame = build_frame(s)
        v = tangent_from_c(s, c).vector(s)
        # fixed step length in coefficient space; central differences are O(h^2)
        h = 1e-4 / np.linalg.norm(v)
        x = s.to_vector()
        vp, _ = edge_values(s.from_vector(x + h * v), frame)
        vm, _ = edge_values(s.from_vector(x - h * v), frame)
        assert np.max(np.abs(vp - vm)) / (2 * h) <= 1e-5


# 5 ---------------------------------------------------------------------------
def _check_double_point(sd, p):
    big = add_double_point(sd, p)
    assert big.genus == sd.genus + p.degree
    assert np.max(np.abs(isoperiodic_residual(big, build_frame(sd)))) <= 1e-9
    back, q = remove_double_points(big)
    assert np.max(np.abs(q.coeffs - p.coeffs)) <= 1e-9
    assert np.max(np.abs(back.a.coeffs - sd.a.coeffs)) <= 1e-9
    assert np.max(np.abs(back.b.coeffs - sd.b.coeffs)) <= 1e-9


@pytest.mark.criterion(5, "double points leave the periods unchanged")
def test_c5_double_point_series_checked():
    # a real zero of f inside the convergence disc of the Taylor series at a branch point
    sd = random_spectral_data(CaseFlags(0, 0), 2, np.random.default_rng(2))
    z, p = admissible_double_point(sd, -0.13)
    e = branch_points(sd).finite
    e0 = e[np.argmin(np.abs(e - z))]
    others = e[np.abs(e - e0) > 0]
    assert abs(z - e0) < 0.5 * np.min(np.abs(others - e0))
    series = npoly.polyval(z - e0, f_series(sd, e0, 80))
    assert abs(series) <= 1e-12
    assert abs(antiderivative(sd, z, anchor=e0)) <= 1e-12
    _check_double_point(sd, p)


@pytest.mark.criterion(5, "double points leave the periods unchanged")
def test_c5_double_point_conjugate_pair():
    sd = demo_data()
    z, p = admissible_double_point(sd, 0.5 + 0.3j)
    assert abs(antiderivative(sd, z)) <= 1e-12
    assert p.degree == 2
    _check_double_point(sd, p)


# 6 ---------------------------------------------------------------------------
@pytest.mark.criterion(6, "quadrature against closed forms")
@pytest.mark.parametrize("P, path", [([1.0, 0.0, -1.0], [-1.0, 1.0]), ([0.0, 1.0, -1.0], [0.0, 1.0])], ids=["arcsine", "half-circle"])
def test_c6_pi_kernels(P, path):
    val = integrate_raw(P, [1.0], 0, path)
    assert abs(abs(val) - np.pi) <= 1e-10
    assert abs(val.imag) <= 1e-12


@pytest.mark.criterion(6, "quadrature against closed forms")
@pytest.mark.parametrize("k", [2.0, 3.5])
def test_c6_elliptic_agm(k):
    P = Polynomial.from_roots([0.0, 1.0, k]).coeffs
    val = integrate_raw(P, [1.0], 0, [0.0, 1.0])
    assert abs(abs(val) - np.pi / (np.sqrt(k) * agm(1.0, np.sqrt(1.0 - 1.0 / k)))) <= 1e-9


@pytest.mark.criterion(6, "quadrature against closed forms")
def test_c6_halving_tolerance():
    x = 0.999
    exact = np.arcsin(x) + 0.5 * np.pi
    tols = [1e-2 / 2**k for k in range(8)]
    errs = [abs(abs(integrate_raw([1.0, 0.0, -1.0], [1.0], 0, [-1.0, x], tol=t)) - exact) for t in tols]
    assert all(e2 <= e1 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < errs[0] / 10


# 7 ---------------------------------------------------------------------------
@pytest.fixture(scope="module")
def collision():
    fam = manufactured_collision()
    cmap = ConstantCMap(fam.c)
    pre = integrate_flow(fam.sd0, cmap, (fam.t0, 0.1))
    event = detect_singularity(pre, cmap)
    res = continue_through(event, cmap, t1=0.1)
    return fam, pre, event, res, glued_trajectory(pre, res)


@pytest.mark.criterion(7, "continuation through a common root")
def test_c7_detection(collision):
    fam, pre, event, res, _ = collision
    assert sum(e["kind"] == "resultant_zero" for e in pre.events) == 1
    assert fam.sd0.flags == CaseFlags(0, 1) and fam.sd0.genus == 2
    assert [cl.ell for cl in event.clusters] == [1, 1]
    assert abs(event.t_star) < 1e-6
    assert abs(event.c(event.clusters[0].center)) > 1e-3


@pytest.mark.criterion(7, "continuation through a common root")
@pytest.mark.parametrize("side", ["in", "out"])
def test_c7_linearization_is_saddle(collision, side):
    ev = collision[3].linearization[side].eigenvalues
    assert np.any(ev.real > 0) and np.any(ev.real < 0)


@pytest.mark.criterion(7, "continuation through a common root")
def test_c7_glued_family(collision):
    _, pre, event, res, glued = collision
    t_star = res.t_star
    near = [(t, sd) for t, sd in glued.samples if 0 < abs(t - t_star) <= 1e-2]
    assert any(t < t_star for t, _ in near) and any(t > t_star for t, _ in near)
    assert all(relative_resultant(sd) > 0 for _, sd in near)
    assert np.all(np.diff(glued.times) > 0)
    haus = [m["hausdorff_a"] for m in res.monitor]
    assert len(haus) == 3
    assert haus[0] > haus[1] > haus[2]
    assert haus[2] < 1e-3


@pytest.mark.criterion(7, "continuation through a common root")
def test_c7_periods_match_pre_singular_frame(collision):
    _, pre, _, res, _ = collision
    for st in res.incoming + res.outgoing:
        vals, _ = edge_values(st.sd, pre.frame)
        assert np.max(np.abs(vals - pre.frame.reference)) <= 1e-5


# 8 ---------------------------------------------------------------------------
@pytest.mark.criterion(8, "negative controls")
@pytest.mark.parametrize(
    "construction, prefix",
    [("real_collision", "unsupported"), ("vanishing_c", "hypothesis violated")],
)
def test_c8_negative_controls(tmp_path, construction, prefix):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"command": "continue", "construction": construction}))
    assert main(["--config", str(cfg), "--output", str(tmp_path)]) == 4
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["message"].startswith(prefix)


# 9 ---------------------------------------------------------------------------
@pytest.mark.criterion(9, "dimension of the c space and of the tangent image")
@pytest.mark.parametrize("flags", EVERY_CASE, ids=case_id)
@pytest.mark.parametrize("genus", range(5))
def test_c9_basis_size(flags, genus):
    n = len(c_basis(flags, genus))
    if flags.involution is Involution.ANTI_UNIT_CIRCLE and (genus + 1 + flags.a_flag) % 2:
        assert n == 0
    else:
        assert n == genus + 2 + flags.ab


@pytest.mark.criterion(9, "dimension of the c space and of the tangent image")
@pytest.mark.parametrize("flags", ALL_CASES, ids=case_id)
@pytest.mark.parametrize("genus", [1, 2, 3])
def test_c9_tangent_rank(flags, genus):
    sd = random_spectral_data(flags, genus, np.random.default_rng(9 + genus))
    T = np.array([tangent_from_c(sd, cb).vector(sd) for cb in c_basis(flags, genus)]).T
    assert np.linalg.matrix_rank(T, 1e-8) == genus + 2 + flags.ab
