"""Continuation of the Whitham flow through common roots of a and b.

Near a common root the colliding roots are described in a local coordinate
z with xi**2 = (z - 2 alpha) p(z)**2, xi = f nu.  The blown-up coordinates
alpha_m = exp(i theta_m) r_m s**(N/(l_m+1)) turn the singular point into an
equilibrium whose stable and unstable directions give the trajectories
entering and leaving it.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .curve import (
    Involution,
    SpectralData,
    f_series,
    on_fixed_set,
    point_image,
    project_to_P,
    vanishing_order,
)
from .flow import (
    FlowOptions,
    Trajectory,
    integrate_flow,
    project_periods,
    relative_discriminant,
    relative_resultant,
)
from .periods import build_frame, edge_values, reanchor
from .poly import Polynomial, mobius_constant, roots, series_power, sqrt_series_polypart

log = logging.getLogger(__name__)

__all__ = [
    "SingularError",
    "UnsupportedSingularity",
    "HypothesisError",
    "ClusterInfo",
    "SingularEvent",
    "LocalMap",
    "Chart",
    "SingularChart",
    "detect_singularity",
    "local_map",
    "local_charge",
    "chart_init",
    "blown_field",
    "linearize",
    "continue_through",
    "reassemble",
    "collision_time",
    "shoot",
    "glued_trajectory",
    "ContinuationResult",
]


class SingularError(RuntimeError):
    pass


class UnsupportedSingularity(SingularError):
    """Common root on the fixed set of the involution."""


class HypothesisError(SingularError):
    """c vanishes at a common root, or disc(a) = 0 at the limit."""


@dataclass
class ClusterInfo:
    center: complex
    ell: int
    a_root: complex
    b_roots: np.ndarray
    partner: int | None = None
    primary: bool = True

    def to_dict(self):
        return {
            "center": [self.center.real, self.center.imag],
            "ell": self.ell,
            "partner": self.partner,
            "primary": self.primary,
        }


@dataclass
class SingularEvent:
    t_star: float
    sd_star: SpectralData
    sd_end: SpectralData
    t_end: float
    clusters: list
    c: object
    frame: object = None
    c_map: object = None


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------
def _find_clusters(sd, inv):
    ra, rb = roots(sd.a), roots(sd.b)
    d = np.abs(ra[:, None] - rb[None, :])
    dmin = float(d.min())
    sep_a = np.abs(ra[:, None] - ra[None, :]) + np.eye(len(ra)) * 1e300
    scale = float(sep_a.min()) if len(ra) > 1 else 1.0
    thresh = max(10 * dmin, 1e-12)
    if dmin > 0.05 * scale:
        raise SingularError("no colliding root pair found at the end of the trajectory")
    clusters = []
    used_b = set()
    for i in np.argsort(d.min(axis=1)):
        near = [j for j in np.where(d[i] <= max(thresh, 3 * d[i].min()))[0] if j not in used_b]
        if d[i].min() > thresh or not near:
            continue
        used_b.update(near)
        A, B = ra[i], rb[near]
        ell = len(near)
        center = (A - 2 * B.sum()) / (1 - 2 * ell)
        clusters.append(ClusterInfo(complex(center), ell, complex(A), B))
    # mirror partners
    for k, cl in enumerate(clusters):
        img = point_image(inv, cl.center)
        for j, other in enumerate(clusters):
            if j != k and abs(other.center - img) <= 1e-6 * (1 + abs(img)) + 10 * dmin:
                cl.partner = j
    for k, cl in enumerate(clusters):
        if cl.partner is not None and cl.partner < k:
            cl.primary = False
    return clusters, dmin


def collapse(sd, clusters):
    """Move every colliding cluster onto its center (exact common roots)."""
    ra, rb = list(roots(sd.a)), list(roots(sd.b))
    centers = {}
    for k, cl in enumerate(clusters):
        if cl.primary:
            centers[k] = cl.center
    for k, cl in enumerate(clusters):
        if not cl.primary:
            centers[k] = point_image(sd.flags.involution, clusters[cl.partner].center)
    for k, cl in enumerate(clusters):
        ra[int(np.argmin(np.abs(np.array(ra) - cl.a_root)))] = centers[k]
        for B in cl.b_roots:
            rb[int(np.argmin(np.abs(np.array(rb) - B)))] = centers[k]
        cl.center = complex(centers[k])
    a = Polynomial.from_roots(ra, lead=sd.a.lead)
    b = Polynomial.from_roots(rb, lead=sd.b.lead)
    return project_to_P(sd.with_ab(a, b))


def detect_singularity(traj, c_map, tol=1e-6, sd=None):
    """Describe the collision at the end of ``traj`` and check the hypotheses.

    Raises ``UnsupportedSingularity`` for a common root on the fixed set of
    the involution and ``HypothesisError`` when c vanishes there or disc(a)
    vanishes at the limit.
    """
    if sd is None:
        sd = traj.final
        t_end = traj.samples[-1][0]
        ev = [e for e in traj.events if e["kind"] == "resultant_zero"]
        if not ev:
            raise SingularError("trajectory did not end with a resultant_zero event")
        t_star = float(ev[-1]["t"])
    else:
        t_end = t_star = traj.samples[-1][0] if traj is not None and traj.samples else 0.0
    inv = sd.flags.involution
    clusters, dmin = _find_clusters(sd, inv)
    fix_tol = max(1e-8, 10 * dmin)
    for cl in clusters:
        if on_fixed_set(inv, cl.center, fix_tol):
            raise UnsupportedSingularity(
                f"unsupported: common root {cl.center:.6g} lies on the fixed set of the {inv.value} involution;"
                " only one-sided continuation may exist"
            )
    sd_star = collapse(sd, clusters) if dmin > 0 else sd
    if relative_discriminant(sd_star) < 1e-8:
        raise HypothesisError("hypothesis violated: disc(a) vanishes at the singular point")
    c = c_map(sd_star)
    cnorm = float(np.max(np.abs(c.coeffs)))
    for cl in clusters:
        if abs(c(cl.center)) <= tol * cnorm * (1 + abs(cl.center)) ** c.degree:
            raise HypothesisError(f"hypothesis violated: c vanishes at the common root {cl.center:.6g}")
        fs = f_series(sd_star, cl.center, cl.ell + 3)
        ell = vanishing_order(fs, 1e-6)
        if ell != cl.ell:
            log.warning("vanishing order %d of f differs from cluster size %d", ell, cl.ell)
            cl.ell = ell
    frame = getattr(traj, "frame", None) if traj is not None else None
    return SingularEvent(t_star, sd_star, sd, t_end, clusters, c, frame, c_map)


# ---------------------------------------------------------------------------
# local coordinate and charge
# ---------------------------------------------------------------------------
@dataclass
class LocalMap:
    """z(lambda) = (f**2 nu**2)**(1/(2l+1)) as a power series in lambda - center."""

    center: complex
    ell: int
    coeffs: np.ndarray
    radius: float

    def z(self, lam):
        x = np.asarray(lam, dtype=complex) - self.center
        return np.polyval(self.coeffs[::-1], x)

    def dz(self, lam):
        x = np.asarray(lam, dtype=complex) - self.center
        d = self.coeffs[1:] * np.arange(1, len(self.coeffs))
        return np.polyval(d[::-1], x)

    @property
    def slope(self):
        return self.coeffs[1]

    def lam_of(self, z, tol=1e-15, maxiter=60):
        z = complex(z)
        x = z / self.slope
        for _ in range(maxiter):
            lam = self.center + x
            step = (self.z(lam) - z) / self.dz(lam)
            x -= step
            if abs(step) <= tol * (abs(x) + 1e-300):
                break
        return self.center + x


def _other_distance(sd, center):
    pts = np.concatenate([roots(sd.a), roots(sd.b)] + ([np.zeros(1)] if sd.flags.b_flag else []))
    d = np.abs(pts - center)
    d = d[d > 1e-9 * (1 + abs(center))]
    return float(d.min())


def local_map(sd_star, center, ell=None, order=40):
    fs = f_series(sd_star, center, order)
    if ell is None:
        ell = vanishing_order(fs, 1e-6)
    P = sd_star.P.compose_affine(1.0, center).padded(order + 1)
    g = np.convolve(np.convolve(fs, fs)[: order + 1], P)[: order + 1]
    m = 2 * ell + 1
    u = g[m:]
    zc = np.concatenate([[0.0], series_power(u, 1.0 / m, len(u))])
    radius = 0.5 * _other_distance(sd_star, center)
    tail = np.abs(zc[-8:])
    if np.all(tail > 0):
        # root test on the tail of the series
        est = float(np.exp(-np.mean(np.log(tail) / np.arange(len(zc) - 8, len(zc)))))
        radius = min(radius, 0.5 * est)
    return LocalMap(complex(center), int(ell), zc, radius)


def local_charge(sd, c, center, ell, zmap=None, n=256, radius=None):
    """Polynomial C of degree ell-1 with z' lambda^b c / b = C(z)/z^ell + holomorphic."""
    if zmap is None:
        zmap = local_map(sd, center, ell)
    rho = 0.5 * zmap.radius if radius is None else radius
    if rho <= 0:
        raise SingularError("contour radius infeasible")
    phi = 2 * np.pi * np.arange(n) / n
    lam = center + rho * np.exp(1j * phi)
    dz = zmap.dz(lam)
    F = dz * lam ** sd.flags.b_flag * c(lam) / sd.b(lam)
    z = zmap.z(lam)
    out = np.zeros(ell, dtype=complex)
    for m in range(1, ell + 1):
        out[ell - m] = np.mean(F * z ** (m - 1) * dz * rho * np.exp(1j * phi))
    return Polynomial(out) if np.any(out) else Polynomial([0.0])


def effective_charge(C0, ell):
    """Constant C_eff with alpha' = Gamma C_eff / alpha^ell at the singular point."""
    return (2 * ell + 1) * C0 / mobius_constant(ell)


def collision_time(alpha, C_eff, ell):
    """|t - t*| for the leading-order motion alpha^(l+1) = (l+1) C_eff (t - t*)."""
    return abs(alpha) ** (ell + 1) / ((ell + 1) * abs(C_eff))


def b_shape_roots(ell):
    """Roots w of q + 2(w-2) q' for q = qbar: the b-roots in units of alpha."""
    q = sqrt_series_polypart(ell)
    D = q + Polynomial([-2.0, 1.0]) * q.deriv() * 2.0
    if ell == 1:
        return np.array([-D.coeffs[0] / D.coeffs[1]])
    return roots(D)


# ---------------------------------------------------------------------------
# blown-up charts
# ---------------------------------------------------------------------------
@dataclass
class Chart:
    """Local chart of one colliding cluster."""

    cluster: int
    center: complex
    ell: int
    zmap: LocalMap
    charge: Polynomial
    C: complex
    theta: float = 0.0
    r: float = 1.0
    mirror_of: int | None = None

    @property
    def qbar(self):
        return sqrt_series_polypart(self.ell)

    def alpha(self, s, N):
        return np.exp(1j * self.theta) * self.r * s ** (N / (self.ell + 1))

    def roots_at(self, alpha):
        """(a-root, b-roots) in the lambda-plane for a given alpha."""
        A = self.zmap.lam_of(2 * alpha)
        B = np.array([self.zmap.lam_of(alpha * w) for w in b_shape_roots(self.ell)])
        return A, B

    def to_dict(self):
        return {
            "cluster": self.cluster,
            "center": [self.center.real, self.center.imag],
            "ell": self.ell,
            "charge": [[z.real, z.imag] for z in self.charge.coeffs],
            "C_eff": [self.C.real, self.C.imag],
            "theta": self.theta,
            "r": self.r,
            "mirror_of": self.mirror_of,
            "z_slope": [self.zmap.slope.real, self.zmap.slope.imag],
        }


@dataclass
class SingularChart:
    charts: list
    sign: int
    N: int
    event: SingularEvent | None = None

    @property
    def rate(self):
        """Eigenvalue of the s-direction: ds/dtau = rate * s on the equilibrium line."""
        c0 = self.charts[0]
        return (c0.ell + 1) / self.N * _re_phase(c0)

    def dt(self, s):
        """|t - t*| reached at blow-up radius s (dt = s^N dtau)."""
        return s**self.N / (self.N * abs(self.rate))

    def to_dict(self):
        return {"sign": self.sign, "N": self.N, "charts": [c.to_dict() for c in self.charts]}


def _re_phase(ch, theta=None, r=None):
    th = ch.theta if theta is None else theta
    rr = ch.r if r is None else r
    return (ch.C * np.exp(-1j * (ch.ell + 1) * th)).real / rr ** (ch.ell + 1)


def _admissible_thetas(C, ell, sign):
    """Angles with -Re(C exp(-i(l+1)theta)) = sign |C|."""
    base = np.angle(C) + (np.pi if sign > 0 else 0.0)
    return np.mod((base + 2 * np.pi * np.arange(ell + 1)) / (ell + 1), 2 * np.pi)


def _nearest_angle(cands, target):
    d = np.abs(np.angle(np.exp(1j * (cands - target))))
    return float(cands[int(np.argmin(d))])


def chart_init(event, sign=1, primary=None, theta_in=None):
    """Equilibrium of the blown-up field with every C-hat of the sign ``sign``.

    ``sign=+1`` gives the incoming (s stable) equilibrium, ``sign=-1`` the
    outgoing one.  ``primary`` chooses which cluster of a mirror pair carries
    the chart (the other one is obtained through the involution).
    ``theta_in`` is the incoming angle of the first chart; when given, the
    outgoing angle is theta_in + pi/(l+1).
    """
    sd = event.sd_star
    inv = sd.flags.involution
    clusters = [replace(cl) for cl in event.clusters]
    if primary is not None:
        partner = clusters[primary].partner
        clusters[primary].primary = True
        if partner is not None:
            clusters[partner].primary = False
    charts = []
    order = [k for k, cl in enumerate(clusters) if cl.primary] + [k for k, cl in enumerate(clusters) if not cl.primary]
    N = int(np.lcm.reduce([cl.ell + 1 for cl in clusters]))
    for k in order:
        cl = clusters[k]
        zm = local_map(sd, cl.center, cl.ell)
        Cp = local_charge(sd, event.c, cl.center, cl.ell, zm)
        Ce = effective_charge(Cp.coeffs[0], cl.ell)
        if abs(Ce) == 0:
            raise HypothesisError("local charge vanishes")
        charts.append(Chart(k, cl.center, cl.ell, zm, Cp, complex(Ce), mirror_of=None if cl.primary else cl.partner))
    by_cluster = {ch.cluster: ch for ch in charts}
    first = charts[0]
    for idx, ch in enumerate(charts):
        cands = _admissible_thetas(ch.C, ch.ell, sign)
        if ch.mirror_of is not None:
            src = by_cluster[ch.mirror_of]
            eps = 1e-4 * src.zmap.radius * abs(src.zmap.slope)
            A_src = src.zmap.lam_of(2 * eps * np.exp(1j * src.theta))
            al = ch.zmap.z(point_image(inv, A_src)) / 2
            ch.theta = _nearest_angle(cands, np.angle(al))
        elif idx == 0 and theta_in is not None:
            ch.theta = float(np.mod(theta_in + np.pi / (ch.ell + 1), 2 * np.pi))
        else:
            cl = clusters[ch.cluster]
            al = ch.zmap.z(cl.a_root) / 2
            ch.theta = _nearest_angle(cands, np.angle(al)) if abs(al) > 0 else float(np.min(cands))
        if idx > 0:
            ratio = (ch.ell + 1) * _re_phase(ch, r=1.0) / ((first.ell + 1) * _re_phase(first))
            if ratio <= 0:
                raise SingularError("charts do not share the sign of C-hat")
            ch.r = float(ratio ** (1.0 / (ch.ell + 1)))
    return SingularChart(charts, int(sign), N, event)


def _pack(chart):
    y = [chart.charts[0].theta, 0.0]
    for ch in chart.charts[1:]:
        y += [ch.theta, ch.r]
    return np.array(y)


def blown_field(chart, y, q=None):
    """d/dtau of y = (theta_1, s, theta_2, r_2, ...) and of the q deviations.

    ``q`` is an optional list of deviation polynomials q_m - qbar_m (degree
    <= l_m - 2); their derivatives are returned as a second list.
    """
    chs = chart.charts
    N = chart.N
    th1, s = y[0], y[1]
    w1 = chs[0].C * np.exp(-1j * (chs[0].ell + 1) * th1)
    sdot_s = (chs[0].ell + 1) / N * w1.real
    dy = np.zeros_like(y, dtype=float)
    dy[0] = w1.imag
    dy[1] = s * sdot_s
    logs = [w1]
    for m, ch in enumerate(chs[1:]):
        th, r = y[2 + 2 * m], y[3 + 2 * m]
        w = ch.C * np.exp(-1j * (ch.ell + 1) * th) / r ** (ch.ell + 1)
        dy[2 + 2 * m] = w.imag
        dy[3 + 2 * m] = r * (w.real - N / (ch.ell + 1) * sdot_s)
        logs.append(w)
    if q is None:
        return dy
    dq = [0.5 * lg * _h_operator(ch.ell, dq_) for lg, ch, dq_ in zip(logs, chs, q)]
    return dy, dq


def _h_matrix(ell):
    """Matrix of the linear q-deviation operator on monomials w^0..w^(l-2)."""
    n = max(ell - 1, 0)
    H = np.zeros((n, n))
    for j in range(n):
        H[j, j] += 2 * j - (2 * ell + 1)
        for k in range(j + 1):
            H[j - k, j] += 2.0**k
    return H


def _h_operator(ell, dq):
    c = np.asarray(dq, dtype=complex)
    H = _h_matrix(ell)
    if H.size == 0:
        return np.zeros(0, dtype=complex)
    c = np.concatenate([c, np.zeros(H.shape[0] - len(c))])[: H.shape[0]]
    return H @ c


@dataclass
class Linearization:
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    q_eigenvalues: np.ndarray
    sign: int

    def to_dict(self):
        cplx = lambda v: [[float(z.real), float(z.imag)] for z in v]
        return {"sign": self.sign, "eigenvalues": cplx(self.eigenvalues), "q_eigenvalues": cplx(self.q_eigenvalues)}


def linearize(chart, h=1e-7):
    """Jacobian of the blown-up field at the equilibrium (finite differences).

    The q block is frozen at qbar in the continuation; its eigenvalues are
    reported separately.
    """
    y0 = _pack(chart)
    n = len(y0)
    J = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        J[:, k] = (blown_field(chart, y0 + e) - blown_field(chart, y0 - e)) / (2 * h)
    ev = np.linalg.eigvals(J)
    qev = []
    for ch in chart.charts:
        H = _h_matrix(ch.ell)
        if H.size:
            qev.extend(0.5 * _re_phase(ch) * np.linalg.eigvals(H))
    return Linearization(J, ev[np.argsort(ev.real)], np.array(qev, dtype=complex), chart.sign)


def _unpack(chart, y):
    """Copy of the charts carrying the angles and radii of the state y."""
    chs = [replace(chart.charts[0], theta=float(y[0]))]
    for m, ch in enumerate(chart.charts[1:]):
        chs.append(replace(ch, theta=float(y[2 + 2 * m]), r=float(y[3 + 2 * m])))
    return chs


def reassemble(chart, s, sd_star=None, y=None):
    """Spectral data with the cluster roots of sd_star placed by the chart at radius s.

    ``y`` is an optional blown-up state (theta_1, s, theta_2, r_2, ...);
    by default the equilibrium angles and radii are used.
    """
    sd = chart.event.sd_star if sd_star is None else sd_star
    inv = sd.flags.involution
    charts = chart.charts if y is None else _unpack(chart, y)
    if y is not None:
        s = float(y[1])
    placed = {}
    for ch in charts:
        if ch.mirror_of is None:
            placed[ch.cluster] = ch.roots_at(ch.alpha(s, chart.N))
    for ch in charts:
        if ch.mirror_of is not None:
            A, B = placed[ch.mirror_of]
            placed[ch.cluster] = (point_image(inv, A), np.array([point_image(inv, z) for z in B]))
    a, b = sd.a, sd.b
    for ch in charts:
        A, B = placed[ch.cluster]
        a, _ = a.divmod(Polynomial([-ch.center, 1.0]))
        a = a * Polynomial([-A, 1.0])
        for z in B:
            b, _ = b.divmod(Polynomial([-ch.center, 1.0]))
            b = b * Polynomial([-z, 1.0])
    return project_to_P(sd.with_ab(a, b))


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------
def shoot(chart, scales, start_fraction=1e-6, rtol=1e-11):
    """Integrate the blown-up field from the equilibrium out to each s in ``scales``.

    The trajectory leaves the equilibrium along the s-direction, which is
    unstable in tau for the outgoing chart; the incoming chart is shot in
    reversed tau.  The original time is accumulated with dt = s^N dtau,
    starting from the closed-form value at the initial radius.
    Returns a list of (s, y, |t - t*|) in the order of ``scales``.
    """
    N = chart.N
    rate = chart.rate
    s0 = start_fraction * min(scales)
    y0 = _pack(chart)
    y0[1] = s0
    direction = 1.0 if rate > 0 else -1.0
    n = len(y0)

    def rhs(tau, u):
        dy = direction * blown_field(chart, u[:n])
        return np.concatenate([dy, [u[1] ** N]])

    targets = sorted(scales)
    events = []
    for target in targets:
        ev = (lambda tg: lambda tau, u: u[1] - tg)(target)
        ev.terminal = target == targets[-1]
        events.append(ev)
    span = 2.0 * np.log(targets[-1] / s0) / abs(rate) + 1.0
    sol = solve_ivp(rhs, (0.0, span), np.concatenate([y0, [0.0]]), rtol=rtol, atol=1e-14 * s0**N, events=events)
    if sol.status != 1:
        raise SingularError(f"shooting did not reach s = {targets[-1]:.3e}")
    t_start = s0**N / (N * abs(rate))
    found = {tg: (ye[0][:n], ye[0][n] + t_start) for tg, ye in zip(targets, sol.y_events)}
    out = []
    for s in scales:
        y, dt = found[s]
        out.append((float(s), y, float(dt)))
    return out


def _hausdorff(x, y):
    d = np.abs(np.asarray(x)[:, None] - np.asarray(y)[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def _cluster_roots(sd, chart):
    """Roots of a and b nearest to the chart centers."""
    ra, rb = roots(sd.a), roots(sd.b)
    out_a, out_b = [], []
    for ch in chart.charts:
        out_a.append(ra[int(np.argmin(np.abs(ra - ch.center)))])
        idx = np.argsort(np.abs(rb - ch.center))[: ch.ell]
        out_b.extend(rb[idx])
    return np.array(out_a), np.array(out_b)


@dataclass
class ChartState:
    side: str
    s: float
    t: float
    sd: SpectralData
    residual_before: float
    residual_after: float
    resultant: float

    def to_dict(self):
        return {
            "side": self.side,
            "s": self.s,
            "t": self.t,
            "residual_before": self.residual_before,
            "residual_after": self.residual_after,
            "resultant": self.resultant,
            "sd": self.sd.to_dict(),
        }


@dataclass
class ContinuationResult:
    t_star: float
    delta: float
    chart_in: SingularChart
    chart_out: SingularChart
    incoming: list
    outgoing: list
    monitor: list
    linearization: dict
    trajectory: Trajectory | None = None
    reversibility: float | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "t_star": self.t_star,
            "delta": self.delta,
            "chart_in": self.chart_in.to_dict(),
            "chart_out": self.chart_out.to_dict(),
            "linearization": {k: v.to_dict() for k, v in self.linearization.items()},
            "incoming": [st.to_dict() for st in self.incoming],
            "outgoing": [st.to_dict() for st in self.outgoing],
            "monitor": self.monitor,
            "reversibility": self.reversibility,
            "meta": self.meta,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _reverse_check(start, later, c_map, opts, frame, chart):
    """Integrate the outgoing state backwards and record the cluster a-b distance.

    Returns the distances at the start and at the times of the smaller
    scales (the run may stop early at a resultant_zero event).
    """
    sd, t = start.sd, start.t
    dist = [_cluster_gap(sd, chart)]
    for st in later:
        back = integrate_flow(sd, c_map, (t, st.t), opts, frame=frame)
        sd, t = back.final, back.samples[-1][0]
        dist.append(_cluster_gap(sd, chart))
        if back.events and back.events[-1]["kind"] == "resultant_zero":
            break
    return dist


def _cluster_gap(sd, chart):
    a, b = _cluster_roots(sd, chart)
    return float(np.max(np.min(np.abs(a[:, None] - b[None, :]), axis=1)))


def default_delta(chart, fraction=0.02):
    """Blow-up radius placing every cluster well inside its local coordinate disc."""
    vals = []
    for ch in chart.charts:
        lim = fraction * ch.zmap.radius * abs(ch.zmap.slope) / ch.r
        vals.append(lim ** ((ch.ell + 1) / chart.N))
    return float(min(vals))


def _states(chart, side, scales, t_star, frame, opts, mode):
    out = []
    for s, y, dt in shoot(chart, scales):
        raw = reassemble(chart, s, y=y)
        vals, _ = edge_values(raw, frame, opts.quad_tol)
        before = float(np.max(np.abs(vals - frame.reference)))
        sd, _, after = project_periods(raw, frame, opts.newton_tol, max_iter=8, mode=mode, quad_tol=opts.quad_tol)
        t = t_star - dt if side == "in" else t_star + dt
        out.append(ChartState(side, float(s), float(t), sd, before, float(after), float(relative_resultant(sd))))
    return out


def continue_through(event, c_map=None, delta=None, t1=None, opts=None, mode="transverse", check_reversible=False):
    """Glue the incoming and outgoing chart trajectories at the singular time.

    States are produced at s = delta, delta/10, delta/100 on both sides,
    projected back onto the period level set, and the outgoing family is
    continued by ``integrate_flow`` up to ``t1`` when given.  Time is glued
    with dt = s^N dtau, so t = t* -+ s^N/(N |rate|).
    """
    opts = opts or FlowOptions()
    c_map = c_map or event.c_map
    chart_in = chart_init(event, +1)
    chart_out = chart_init(event, -1, theta_in=chart_in.charts[0].theta)
    if delta is None:
        delta = min(default_delta(chart_in), default_delta(chart_out))
    frame = event.frame if event.frame is not None else build_frame(event.sd_star, opts.quad_tol)
    frame = reanchor(frame, event.sd_star, strict=False)
    scales = [delta, delta / 10, delta / 100]
    t_star = event.t_star
    inc = _states(chart_in, "in", scales, t_star, frame, opts, mode)
    out = _states(chart_out, "out", scales, t_star, frame, opts, mode)
    monitor = []
    for si, so in zip(inc, out):
        ai, bi = _cluster_roots(si.sd, chart_in)
        ao, bo = _cluster_roots(so.sd, chart_in)
        monitor.append(
            {
                "s": si.s,
                "t_in": si.t,
                "t_out": so.t,
                "hausdorff_a": _hausdorff(ai, ao),
                "hausdorff_b": _hausdorff(bi, bo),
                "resultant_in": si.resultant,
                "resultant_out": so.resultant,
                "residual_in": si.residual_after,
                "residual_out": so.residual_after,
            }
        )
    lin = {"in": linearize(chart_in), "out": linearize(chart_out)}
    res = ContinuationResult(t_star, delta, chart_in, chart_out, inc, out, monitor, lin)
    res.meta["rate_in"] = chart_in.rate
    res.meta["rate_out"] = chart_out.rate
    start = out[0]
    if check_reversible:
        res.reversibility = _reverse_check(start, out[1:], c_map, opts, frame, chart_in)
    if t1 is not None and t1 > start.t:
        traj = integrate_flow(start.sd, c_map, (start.t, t1), opts, frame=frame)
        res.trajectory = traj
    return res


def glued_trajectory(pre, result):
    """One trajectory: flow up to the chart, chart states, the event, and the outgoing flow."""
    traj = Trajectory(frame=result.trajectory.frame if result.trajectory is not None else pre.frame)
    t_first = result.incoming[0].t
    for (t, sd), d in zip(pre.samples, pre.diagnostics):
        if t < t_first:
            traj.append(t, sd, d)
    traj.events.extend(e for e in pre.events if e["kind"] != "resultant_zero" and e["t"] < t_first)

    def diag(st):
        return {
            "disc": float(relative_discriminant(st.sd)),
            "resultant": st.resultant,
            "period_residual": st.residual_after,
            "chart_s": st.s,
        }

    for st in result.incoming:
        traj.append(st.t, st.sd, diag(st))
    traj.events.append({"kind": "resultant_zero", "t": float(result.t_star), "continued": True})
    for st in reversed(result.outgoing):
        traj.append(st.t, st.sd, diag(st))
    if result.trajectory is not None:
        post = result.trajectory
        for (t, sd), d in list(zip(post.samples, post.diagnostics))[1:]:
            traj.append(t, sd, d)
        traj.events.extend(post.events)
    traj.meta["t_star"] = float(result.t_star)
    return traj
