"""Adaptive integration of the Whitham field with period projection and events."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .curve import Involution, SpectralData, feasible_directions, normalize, project_to_P
from .periods import FrameInvalid, PeriodError, build_frame, edge_values
from .poly import discriminant, resultant, roots
from .whitham import TangentError, c_basis, tangent_from_c

log = logging.getLogger(__name__)

__all__ = [
    "FlowOptions",
    "Trajectory",
    "FlowError",
    "NewtonError",
    "integrate_flow",
    "project_periods",
    "relative_resultant",
    "relative_discriminant",
    "ab_distance",
]


class FlowError(RuntimeError):
    pass


class NewtonError(FlowError):
    pass


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


@dataclass
class FlowOptions:
    rtol: float = 1e-9
    atol: float = 1e-10
    h0: float = 1e-3
    hmax: float = 0.02
    newton_every: int = 10
    newton_tol: float = 1e-11
    event_threshold: float = 1e-8
    dt_event: float = 1e-6
    max_steps: int = 20000
    quad_tol: float = 1e-12
    project: bool = True
    newton: bool = True
    diagnostics: bool = True


@dataclass
class Trajectory:
    samples: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    events: list = field(default_factory=list)
    frame: object = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.array([t for t, _ in self.samples])

    @property
    def final(self):
        return self.samples[-1][1]

    def append(self, t, sd, diag):
        if self.samples and not (t != self.samples[-1][0]):
            raise FlowError("trajectory times must be strictly monotone")
        self.samples.append((float(t), sd))
        self.diagnostics.append(diag)

    def extend(self, other):
        for (t, sd), d in zip(other.samples, other.diagnostics):
            if self.samples and t == self.samples[-1][0]:
                continue
            self.append(t, sd, d)
        self.events.extend(other.events)

    def records(self):
        for (t, sd), d in zip(self.samples, self.diagnostics):
            rec = {"t": t, "sd": sd.to_dict()}
            rec.update(d)
            yield rec
        for ev in self.events:
            yield {"event": ev["kind"], "t": ev["t"], **{k: v for k, v in ev.items() if k not in ("kind", "t")}}

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path):
        traj = cls()
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                if "event" in rec:
                    ev = dict(rec)
                    ev["kind"] = ev.pop("event")
                    traj.events.append(ev)
                else:
                    sd = SpectralData.from_dict(rec.pop("sd"))
                    t = rec.pop("t")
                    traj.samples.append((t, sd))
                    traj.diagnostics.append(rec)
        return traj


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------
def relative_resultant(sd):
    a, b = sd.a, sd.b
    scale = np.linalg.norm(a.coeffs) ** b.degree * np.linalg.norm(b.coeffs) ** a.degree
    return abs(resultant(a, b)) / scale


def relative_discriminant(sd):
    a = sd.a
    if a.degree < 2:
        return 1.0
    scale = np.linalg.norm(a.coeffs) ** (2 * a.degree - 2)
    return abs(discriminant(a)) / scale


def ab_distance(sd):
    """Smallest distance between a root of a and a root of b, and the pair."""
    ra, rb = roots(sd.a), roots(sd.b)
    d = np.abs(ra[:, None] - rb[None, :])
    i, j = np.unravel_index(np.argmin(d), d.shape)
    return float(d[i, j]), ra[i], rb[j]


def _diag(sd, frame, opts):
    out = {
        "disc": float(relative_discriminant(sd)),
        "resultant": float(relative_resultant(sd)),
    }
    if frame is not None and opts.diagnostics:
        vals, _ = edge_values(sd, frame, opts.quad_tol)
        out["period_residual"] = float(np.max(np.abs(vals - frame.reference)))
    return out


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------
def _renormalize(sd):
    return project_to_P(sd)


def _transverse_directions(sd, mode):
    W0 = feasible_directions(sd)
    if mode == "minimal":
        return W0
    T = []
    for cb in c_basis(sd.flags, sd.genus):
        T.append(tangent_from_c(sd, cb, check=False).vector(sd))
    T = np.array(T).T
    Tw = W0.T @ T
    u, s, vt = np.linalg.svd(Tw, full_matrices=True)
    rank = int(np.sum(s > 1e-8 * s[0]))
    return W0 @ u[:, rank:]


def project_periods(sd, frame, tol=1e-11, max_iter=6, mode="transverse", quad_tol=1e-12, h=1e-7):
    """Newton correction of sd onto the period level set of ``frame``.

    ``mode='transverse'`` moves only in feasible directions orthogonal to
    the c-tangents; ``mode='minimal'`` uses all feasible directions with a
    minimal-norm step (needed where the tangent system degenerates).
    Returns (corrected sd, re-anchored frame, final residual norm).
    """
    try:
        W = _transverse_directions(sd, mode)
    except TangentError:
        W = _transverse_directions(sd, "minimal")
    vals, fr = edge_values(sd, frame, quad_tol)
    r = np.concatenate([(vals - frame.reference).real, (vals - frame.reference).imag])
    norm0 = np.max(np.abs(r))
    norm = norm0
    for _ in range(max_iter):
        if norm <= tol:
            break
        x0 = sd.to_vector()
        J = np.empty((r.size, W.shape[1]))
        for k in range(W.shape[1]):
            v, _ = edge_values(sd.from_vector(x0 + h * W[:, k]), fr, quad_tol)
            rk = np.concatenate([(v - frame.reference).real, (v - frame.reference).imag])
            J[:, k] = (rk - r) / h
        dx = np.linalg.lstsq(J, -r, rcond=1e-10)[0]
        trial = _renormalize(sd.from_vector(x0 + W @ dx))
        vals, fr2 = edge_values(trial, fr, quad_tol)
        r2 = np.concatenate([(vals - frame.reference).real, (vals - frame.reference).imag])
        n2 = np.max(np.abs(r2))
        if not n2 < norm:
            if n2 > 10 * max(norm0, tol):
                raise NewtonError(f"period projection diverged ({norm:.2e} -> {n2:.2e})")
            break
        sd, fr, r, norm = trial, fr2, r2, n2
    return sd, fr, norm


# ---------------------------------------------------------------------------
# integrator
# ---------------------------------------------------------------------------
def _rhs(sd, c_map, x, direction):
    s = sd.from_vector(x)
    td = tangent_from_c(s, c_map(s))
    return direction * td.vector(s)


def integrate_flow(sd0, c_map, t_span, opts=None, frame=None):
    """Integrate (a', b') = tangent_from_c(sd, c_map(sd)) over ``t_span``.

    ``t_span`` may run backwards.  The trajectory stops at the end time or
    at a resultant_zero / disc_zero event.
    """
    opts = opts or FlowOptions()
    t0, t1 = float(t_span[0]), float(t_span[1])
    direction = 1.0 if t1 >= t0 else -1.0
    length = abs(t1 - t0)
    if frame is None:
        frame = build_frame(sd0, opts.quad_tol)
    traj = Trajectory(frame=frame)
    sd = sd0
    traj.append(t0, sd, _diag(sd, frame, opts))
    tau, h = 0.0, min(opts.h0, length)
    err_prev = 1.0
    accepted = 0
    dist_hist = []
    for _ in range(opts.max_steps):
        if tau >= length * (1 - 1e-15):
            break
        h = min(h, length - tau, opts.hmax)
        x = sd.to_vector()
        try:
            k = [_rhs(sd, c_map, x, direction)]
            for i in range(1, 7):
                xi = x + h * sum(a * kk for a, kk in zip(_A[i], k))
                k.append(_rhs(sd, c_map, xi, direction))
        except (TangentError, np.linalg.LinAlgError) as exc:
            h *= 0.25
            if h < opts.dt_event * 1e-3:
                raise FlowError(f"step size underflow near t={t0 + direction * tau:.9g}: {exc}") from exc
            continue
        K = np.array(k)
        x5 = x + h * (_B5 @ K)
        e = h * ((_B5 - _B4) @ K)
        sc = opts.atol + opts.rtol * np.maximum(np.abs(x), np.abs(x5))
        err = float(np.sqrt(np.mean((e / sc) ** 2)))
        if not np.isfinite(err) or err > 1.0:
            h *= max(0.2, 0.9 * (err if np.isfinite(err) else 1e10) ** -0.2)
            if h < opts.dt_event * 1e-3:
                raise FlowError(f"step size underflow near t={t0 + direction * tau:.9g}")
            continue
        # accepted
        tau += h
        t = t0 + direction * tau
        sd = sd.from_vector(x5)
        if opts.project:
            sd = _renormalize(sd)
        accepted += 1
        try:
            if opts.newton and accepted % opts.newton_every == 0:
                sd, frame, _ = project_periods(sd, frame, opts.newton_tol, quad_tol=opts.quad_tol)
            else:
                _, frame = edge_values(sd, frame, opts.quad_tol)
        except FrameInvalid:
            frame = build_frame(sd, opts.quad_tol)
            traj.events.append({"kind": "frame_rebuild", "t": t})
            log.info("frame rebuilt at t=%.9g", t)
        traj.frame = frame
        diag = _diag(sd, frame, opts)
        traj.append(t, sd, diag)
        # events
        if diag["disc"] < opts.event_threshold:
            traj.events.append({"kind": "disc_zero", "t": t})
            break
        if diag["resultant"] < opts.event_threshold:
            traj.events.append({"kind": "resultant_zero", "t": t, "resultant": diag["resultant"]})
            break
        D = ab_distance(sd)[0]
        dist_hist.append((t, D))
        fac = 0.9 * err ** (-0.7 / 5) * err_prev ** (0.4 / 5) if err > 0 else 5.0
        err_prev = max(err, 1e-4)
        h_next = h * min(5.0, max(0.2, fac))
        if h_next < opts.dt_event and len(dist_hist) >= 2 and dist_hist[-1][1] < dist_hist[-2][1]:
            (ta, Da), (tb, Db) = dist_hist[-2], dist_hist[-1]
            # D^2 is linear in t near a simple collision
            t_star = tb + Db**2 * (tb - ta) / (Da**2 - Db**2)
            traj.events.append({"kind": "resultant_zero", "t": float(t_star), "distance": D, "t_last": t})
            break
        h = h_next
    else:
        raise FlowError("maximum number of steps reached")
    traj.meta["steps"] = accepted
    return traj
