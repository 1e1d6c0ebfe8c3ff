"""Period integrals of omega = b dl / (l^e nu) between branch points.

Edge values are half-periods: the integral of omega along one lift of a path
joining two branch points.  Square-root endpoint singularities are removed by
the substitution x = u**2; endpoints at poles of omega (infinity for
a_flag=0, and 0 for the (0, 1) case) are handled by Hadamard finite parts of
the local Puiseux expansion, which coincide with the integral of the
regularised form omega - d(g nu).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import minimum_spanning_tree

from .poly import Polynomial, mult_radius, root_clusters, roots, series_div, series_power

log = logging.getLogger(__name__)

__all__ = [
    "PeriodError",
    "FrameInvalid",
    "PathSpec",
    "PeriodFrame",
    "integrate_edge",
    "integrate_raw",
    "build_frame",
    "edge_values",
    "isoperiodic_residual",
    "reanchor",
    "antiderivative",
    "CLEARANCE_FLOOR",
]

GL_NODES = 32
CLEARANCE_FACTOR = 0.1
CLEARANCE_FLOOR = 1e-6
SERIES_TERMS = 64
MAX_DEPTH = 40
ROUNDOFF = 64 * np.finfo(float).eps


class PeriodError(RuntimeError):
    pass


class FrameInvalid(PeriodError):
    """The branch points left the regions of the frame: rebuild it."""


@lru_cache(maxsize=None)
def _gauss(n):
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _adaptive(fun, a, b, tol, depth=0):
    """Composite Gauss-Legendre on [a, b]; one panel vs two half panels."""
    x, w = _gauss(GL_NODES)
    h = b - a
    whole = h * np.dot(w, fun(a + h * x))
    m = 0.5 * (a + b)
    fl, fr = fun(a + 0.5 * h * x), fun(m + 0.5 * h * x)
    left = 0.5 * h * np.dot(w, fl)
    right = 0.5 * h * np.dot(w, fr)
    both = left + right
    err = abs(both - whole)
    # halved tolerances stop at the rounding level of the panel
    mass = 0.5 * abs(h) * (np.dot(w, np.abs(fl)) + np.dot(w, np.abs(fr)))
    tol = max(tol, ROUNDOFF * mass)
    if err <= tol:
        return both, err
    if depth >= MAX_DEPTH:
        # panels this small only see evaluation noise near a singularity
        if err > 1e-8 * mass:
            raise PeriodError(f"quadrature did not converge (error estimate {err:.2e})")
        return both, err
    l_val, l_err = _adaptive(fun, a, m, 0.5 * tol, depth + 1)
    r_val, r_err = _adaptive(fun, m, b, 0.5 * tol, depth + 1)
    return l_val + r_val, l_err + r_err


# ---------------------------------------------------------------------------
# integrand model
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class OmegaRef:
    """Lift reference by the value of b / (l^e nu) at the anchor."""

    value: complex


@dataclass(frozen=True)
class Kernel:
    """nu**2 = lc * prod (l - c_k)**mu_k and omega = b dl / (l**e nu)."""

    centers: np.ndarray
    mults: np.ndarray
    lc: complex
    b: Polynomial
    e: int

    @classmethod
    def from_polys(cls, P, b, e):
        rts = roots(P)
        cl = root_clusters(rts, mult_radius(rts))
        centers = np.array([c for c, _ in cl], dtype=complex)
        mults = np.array([m for _, m in cl], dtype=int)
        return cls(centers, mults, complex(P.lead), b, int(e))

    @classmethod
    def from_sd(cls, sd):
        return cls.from_polys(sd.P, sd.b, sd.flags.omega_power)

    @property
    def degree(self):
        return int(np.sum(self.mults))

    @property
    def branch(self):
        return self.centers[self.mults % 2 == 1]

    def index_of(self, z, radius):
        d = np.abs(self.centers - z)
        k = int(np.argmin(d))
        return k if d[k] <= radius else None

    def nu(self, lam, A=None, B=None, mid=None):
        """Product-form nu on the segment [A, B], continuous along it."""
        lam = np.asarray(lam, dtype=complex)
        out = np.full(lam.shape, np.sqrt(self.lc), dtype=complex)
        if mid is None:
            mid = 0.5 * (A + B)
        for c, mu in zip(self.centers, self.mults):
            out = out * (lam - c) ** (mu // 2)
            if mu % 2:
                out = out * np.sqrt(mid - c) * np.sqrt((lam - c) / (mid - c))
        return out


def _endpoint_match(kernel, z, radius):
    if z is None or not np.isfinite(z):
        return None
    k = kernel.index_of(z, radius)
    if k is None or kernel.mults[k] % 2 == 0:
        return None
    return k


def _segment(kernel, A, B, tol, sign_ref=None, radius=1e-9):
    """Integral of omega over [A, B] plus nu at both ends of the chosen lift.

    The lift is fixed by comparing nu at the midpoint with ``sign_ref`` (or
    the density of omega there, for an ``OmegaRef``); with
    no reference the principal product form is used.
    Returns (value, nu_mid, sign).
    """
    h = B - A
    kA = _endpoint_match(kernel, A, radius)
    kB = _endpoint_match(kernel, B, radius)
    centers, mults = kernel.centers, kernel.mults
    mid = 0.5 * (A + B)
    sqh, sqmh = np.sqrt(h), np.sqrt(-h)

    def nu_reduced(x):
        lam = A + h * x
        out = np.full(lam.shape, np.sqrt(kernel.lc), dtype=complex)
        for k, (c, mu) in enumerate(zip(centers, mults)):
            out = out * (lam - c) ** (mu // 2)
            if mu % 2:
                if k == kA:
                    out = out * sqh
                elif k == kB:
                    out = out * sqmh
                else:
                    out = out * np.sqrt(mid - c) * np.sqrt((lam - c) / (mid - c))
        return lam, out

    def f(x):
        lam, nr = nu_reduced(x)
        return kernel.b(lam) * h / (lam**kernel.e * nr)

    _, nr_mid = nu_reduced(np.array([0.5]))
    nu_mid = nr_mid[0] * (np.sqrt(0.5) if kA is not None else 1.0) * (np.sqrt(0.5) if kB is not None else 1.0)
    sign = 1.0
    if isinstance(sign_ref, OmegaRef):
        # omega = b dl / (l^e nu) at the anchor; invariant under adding double points
        dens = kernel.b(mid) / (mid**kernel.e * nu_mid)
        if abs(dens - sign_ref.value) > abs(dens + sign_ref.value):
            sign = -1.0
    elif sign_ref is not None and abs(nu_mid - sign_ref) > abs(nu_mid + sign_ref):
        sign = -1.0
    # first half [0, 1/2]
    if kA is not None:
        g1 = (lambda u: 2.0 * f(u * u) / (np.sqrt(1.0 - u * u) if kB is not None else 1.0))
        v1, _ = _adaptive(g1, 0.0, np.sqrt(0.5), 0.25 * tol)
    else:
        g1 = (lambda x: f(x) / (np.sqrt(1.0 - x) if kB is not None else 1.0))
        v1, _ = _adaptive(g1, 0.0, 0.5, 0.25 * tol)
    if kB is not None:
        g2 = (lambda v: 2.0 * f(1.0 - v * v) / (np.sqrt(1.0 - v * v) if kA is not None else 1.0))
        v2, _ = _adaptive(g2, 0.0, np.sqrt(0.5), 0.25 * tol)
    else:
        g2 = (lambda x: f(x) / (np.sqrt(x) if kA is not None else 1.0))
        v2, _ = _adaptive(g2, 0.5, 1.0, 0.25 * tol)
    return sign * (v1 + v2), sign * nu_mid, sign


def _nu_point(kernel, lam, A, B, radius=1e-9):
    """Product-form nu of segment [A, B] evaluated at a point lam on it."""
    h = B - A
    kA = _endpoint_match(kernel, A, radius)
    kB = _endpoint_match(kernel, B, radius)
    mid = 0.5 * (A + B)
    out = np.sqrt(kernel.lc) + 0j
    for k, (c, mu) in enumerate(zip(kernel.centers, kernel.mults)):
        out *= (lam - c) ** (mu // 2)
        if mu % 2:
            if k == kA:
                out *= np.sqrt(h) * np.sqrt((lam - A) / h)
            elif k == kB:
                out *= np.sqrt(-h) * np.sqrt((B - lam) / h)
            else:
                out *= np.sqrt(mid - c) * np.sqrt((lam - c) / (mid - c))
    return out


def _infinity_tail(kernel, X, nu_X):
    """Finite part of the integral of omega from X to infinity along the ray."""
    rts = np.repeat(kernel.centers, kernel.mults)
    n = len(rts)
    m = kernel.b.degree
    K = SERIES_TERMS
    # F(mu) = prod (1 - r mu)**(1/2)
    F = np.ones(1, dtype=complex)
    for r in rts:
        F = np.convolve(F, series_power(np.array([1.0, -r]), 0.5, K))[:K]
    B = kernel.b.padded(m + 1)[::-1]
    w = series_div(B, F, K)
    muX = 1.0 / X
    FX = np.polyval(F[::-1], muX)
    k = np.arange(K)
    C0 = X ** (m - kernel.e + 1) * FX / nu_X
    # exponent check: omega ~ l^(m - e - n/2) must be l^(-1/2) at a pole end
    if 2 * (m - kernel.e) - n != -1:
        raise PeriodError("infinity is not a simple-pole branch point of this kernel")
    return C0 * np.sum(w * X ** (-k.astype(float)) / (k - 0.5))


def _zero_head(kernel, X, nu_X):
    """Finite part of the integral of omega from 0 to X along the segment (nu**2 = l a)."""
    others = []
    for c, mu in zip(kernel.centers, kernel.mults):
        if abs(c) > 0:
            others.extend([c] * mu)
    K = SERIES_TERMS
    G = np.ones(1, dtype=complex)
    for r in others:
        G = np.convolve(G, series_power(np.array([1.0, -1.0 / r]), 0.5, K))[:K]
    v = series_div(kernel.b.padded(K), G, K)
    GX = np.polyval(G[::-1], X)
    k = np.arange(K)
    return GX / nu_X * np.sum(v * X**k / (k - 0.5))


def integrate_raw(P, b, e, vertices, tol=1e-12, sign_ref=None):
    """Kernel entry point: integrate b dl/(l^e sqrt(P)) along a polyline of finite vertices."""
    kernel = Kernel.from_polys(Polynomial(P), Polynomial(b), e)
    return _polyline(kernel, [complex(v) for v in vertices], tol, sign_ref)[0]


def _polyline(kernel, verts, tol, sign_ref=None):
    """Integrate along straight segments keeping nu continuous at the joints.

    Returns (value, nu at the anchor, nu at the first vertex, nu at the last vertex).
    """
    total = 0.0 + 0.0j
    anchor_nu = start_nu = prev_end = None
    for j in range(len(verts) - 1):
        A, B = verts[j], verts[j + 1]
        if j == 0:
            val, nu_mid, sign = _segment(kernel, A, B, tol / len(verts), sign_ref)
            anchor_nu = nu_mid
            start_nu = sign * _nu_point(kernel, A, A, B)
        else:
            ref = prev_end
            start = _nu_point(kernel, A, A, B)
            sgn = 1.0 if abs(start - ref) <= abs(start + ref) else -1.0
            val, _, _ = _segment(kernel, A, B, tol / len(verts))
            val *= sgn
            sign = sgn
        total += val
        prev_end = sign * _nu_point(kernel, B, A, B)
    return total, anchor_nu, start_nu, prev_end


# ---------------------------------------------------------------------------
# paths and frames
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PathSpec:
    """Path between branch points ``ends`` (indices into the frame list).

    ``start``/``end`` are the current endpoint locations (``inf`` allowed as
    end); ``ref_nu`` fixes the lift by the value of nu at the anchor, the
    midpoint of the first finite segment.
    """

    ends: tuple
    start: complex
    end: complex
    waypoints: tuple = ()
    ref_nu: complex | None = None
    ref_omega: complex | None = None

    def finite_vertices(self):
        out = [self.start, *self.waypoints]
        if np.isfinite(self.end):
            out.append(self.end)
        return out


@dataclass(frozen=True)
class PeriodFrame:
    branch_points: tuple
    edges: tuple
    reference: np.ndarray
    regularizer: tuple
    clearance: float
    pole_zero: bool = False
    pole_infinity: bool = False
    tol: float = 1e-12
    degree: int = -1

    def to_dict(self):
        def enc(z):
            return None if not np.isfinite(z) else [float(np.real(z)), float(np.imag(z))]

        return {
            "branch_points": [enc(z) for z in self.branch_points],
            "edges": [
                {
                    "ends": list(p.ends),
                    "waypoints": [enc(w) for w in p.waypoints],
                    "reference": enc(r),
                }
                for p, r in zip(self.edges, self.reference)
            ],
            "regularizer": {"gamma": enc(self.regularizer[0]), "exponent": int(self.regularizer[1])},
            "clearance": self.clearance,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def _pole_flags(sd):
    f = sd.flags
    return (f.a_flag == 0 and f.b_flag == 1), (f.a_flag == 0)


def _obstacles(kernel, sd):
    pts = list(kernel.centers)
    if sd.flags.b_flag and not np.any(np.abs(kernel.centers) < 1e-14):
        pts.append(0.0 + 0.0j)
    return np.array(pts, dtype=complex)


def _clearance(obst):
    if len(obst) < 2:
        return 1.0
    d = np.abs(obst[:, None] - obst[None, :])
    np.fill_diagonal(d, np.inf)
    return max(CLEARANCE_FACTOR * float(d.min()), CLEARANCE_FLOOR)


def _seg_dist(z, A, B):
    h = B - A
    t = np.clip(np.real((z - A) * np.conj(h)) / abs(h) ** 2, 0.0, 1.0)
    return np.abs(z - (A + t * h))


def _path_clear(verts, obst, radius, ends):
    """True if every segment keeps ``radius`` away from obstacles other than the path ends."""
    mask = np.ones(len(obst), dtype=bool)
    for e in ends:
        if e is not None and np.isfinite(e):
            mask &= np.abs(obst - e) > 1e-12 * (1 + abs(e))
    others = obst[mask]
    if others.size == 0:
        return True
    return all(np.all(_seg_dist(others, A, B) > radius) for A, B in zip(verts[:-1], verts[1:]))


def _route(A, B, obst, radius):
    """Straight segment, or a single detour waypoint if that fails."""
    if _path_clear([A, B], obst, radius, (A, B)):
        return ()
    mid, h = 0.5 * (A + B), B - A
    for t in (0.25, -0.25, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0):
        w = mid + 1j * t * h
        if _path_clear([A, w, B], obst, radius, (A, B)):
            return (w,)
    raise PeriodError("branch points too clustered to route a path")


def _tail_point(kernel, last):
    rho = 2.0 * max(1.0, float(np.max(np.abs(kernel.centers))))
    u = last / abs(last) if abs(last) > 0 else 1.0
    return rho * u


def _head_point(kernel, nxt):
    nz = np.abs(kernel.centers[np.abs(kernel.centers) > 1e-14])
    rho = 0.5 * min(float(nz.min()) if nz.size else 1.0, abs(nxt))
    return rho * nxt / abs(nxt)


def _edge(kernel, path, tol, pole_zero, pole_inf, by_omega=False):
    """Returns (value, nu at the anchor, omega density at the anchor)."""
    verts = path.finite_vertices()
    head = pole_zero and abs(path.start) < 1e-14
    tail = not np.isfinite(path.end)
    if tail:
        verts = verts + [_tail_point(kernel, verts[-1])]
    if head:
        verts = [_head_point(kernel, verts[1])] + verts[1:]
    ref = OmegaRef(path.ref_omega) if by_omega and path.ref_omega is not None else path.ref_nu
    val, anchor, nu0, nu1 = _polyline(kernel, verts, tol, ref)
    if tail:
        val += _infinity_tail(kernel, verts[-1], nu1)
    if head:
        val += _zero_head(kernel, verts[0], nu0)
    mid = 0.5 * (verts[0] + verts[1])
    return val, anchor, kernel.b(mid) / (mid**kernel.e * anchor)


def integrate_edge(sd, path, tol=1e-12):
    """Half-period of omega along ``path`` (lift fixed by ``path.ref_nu``)."""
    pz, pi = _pole_flags(sd)
    return _edge(Kernel.from_sd(sd), path, tol, pz, pi)[0]


def build_frame(sd, tol=1e-12):
    """Minimum spanning tree of straight paths between branch points, with reference periods."""
    from .curve import gamma

    kernel = Kernel.from_sd(sd)
    pz, pi = _pole_flags(sd)
    bps = kernel.branch
    bps = bps[np.lexsort((bps.imag, bps.real))]
    obst = _obstacles(kernel, sd)
    radius = _clearance(obst)
    n = len(bps)
    pairs = []
    if n > 1:
        d = np.abs(bps[:, None] - bps[None, :])
        # distinct points so the dense graph has no spurious zero weights
        tree = minimum_spanning_tree(d).tocoo()
        pairs = sorted((min(i, j), max(i, j)) for i, j in zip(tree.row, tree.col))
    edges = []
    for i, j in pairs:
        if pz and abs(bps[j]) < 1e-14:
            i, j = j, i
        wps = _route(bps[i], bps[j], obst, radius)
        edges.append(PathSpec((int(i), int(j)), complex(bps[i]), complex(bps[j]), wps))
    branch = [complex(z) for z in bps]
    if pi:
        k = int(np.argmax(np.abs(bps)))
        edges.append(PathSpec((k, n), complex(bps[k]), complex(np.inf), ()))
        branch.append(complex(np.inf))
    values, edges = _evaluate(kernel, edges, tol, pz, pi)
    reg = (gamma(sd), sd.flags.a_flag - sd.genus)
    return PeriodFrame(tuple(branch), tuple(edges), values, reg, radius, pz, pi, tol, kernel.degree)


def _evaluate(kernel, edges, tol, pz, pi, by_omega=False):
    vals, out = [], []
    for p in edges:
        v, anchor, dens = _edge(kernel, p, tol, pz, pi, by_omega)
        vals.append(v)
        out.append(replace(p, ref_nu=anchor, ref_omega=dens))
    return np.array(vals, dtype=complex), out


def reanchor(frame, sd, strict=True):
    """Move the frame to the branch points of ``sd`` by continuity.

    Raises ``FrameInvalid`` when a branch point left its region or a path
    lost clearance.
    """
    kernel = Kernel.from_sd(sd)
    new = kernel.branch
    old = np.array([z for z in frame.branch_points if np.isfinite(z)], dtype=complex)
    if len(new) != len(old):
        raise FrameInvalid("branch point count changed")
    cost = np.abs(old[:, None] - new[None, :])
    row, col = linear_sum_assignment(cost)
    moved = new[col[np.argsort(row)]]
    if len(old) > 1:
        sep = np.abs(old[:, None] - old[None, :])
        np.fill_diagonal(sep, np.inf)
        region = 0.5 * sep.min(axis=1)
        if np.any(np.abs(moved - old) >= region):
            raise FrameInvalid("frame invalid, rebuild: a branch point left its region")
    pts = list(moved) + ([complex(np.inf)] if frame.pole_infinity else [])
    obst = _obstacles(kernel, sd)
    radius = _clearance(obst)
    edges = []
    for p in frame.edges:
        q = replace(p, start=complex(pts[p.ends[0]]), end=complex(pts[p.ends[1]]))
        if strict:
            verts = q.finite_vertices()
            if len(verts) > 1 and not _path_clear(verts, obst, radius, (q.start, q.end)):
                raise FrameInvalid("frame invalid, rebuild: a path lost clearance")
        edges.append(q)
    return replace(frame, branch_points=tuple(pts), edges=tuple(edges), clearance=radius)


def edge_values(sd, frame, tol=None):
    """Current edge values on ``frame`` and the frame re-anchored at ``sd``."""
    tol = frame.tol if tol is None else tol
    fr = reanchor(frame, sd)
    kernel = Kernel.from_sd(sd)
    # a change of deg nu^2 (double points) rescales nu; omega itself is comparable
    by_omega = frame.degree >= 0 and kernel.degree != frame.degree
    vals, edges = _evaluate(kernel, fr.edges, tol, fr.pole_zero, fr.pole_infinity, by_omega)
    return vals, replace(fr, edges=tuple(edges), degree=kernel.degree)


def isoperiodic_residual(sd, frame, tol=None):
    """Real vector (Re, Im) of current minus reference edge values."""
    vals, _ = edge_values(sd, frame, tol)
    d = vals - frame.reference
    return np.concatenate([d.real, d.imag])


def antiderivative(sd, lam, anchor=None, tol=1e-13):
    """f(lam) for the local antiderivative with d(f nu) = omega and f nu = 0 at ``anchor``.

    ``anchor`` defaults to the nearest finite branch point that is not a pole
    of omega.  f is independent of the sheet.
    """
    kernel = Kernel.from_sd(sd)
    if anchor is None:
        cand = kernel.branch
        if sd.flags.a_flag == 0 and sd.flags.b_flag == 1:
            cand = cand[np.abs(cand) > 1e-14]
        anchor = cand[int(np.argmin(np.abs(cand - lam)))]
    val, _, _, nu_end = _polyline(kernel, [complex(anchor), complex(lam)], tol)
    return val / nu_end
