"""The Whitham vector field (a, b) -> (a', b') defined by a polynomial c."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .curve import (
    CurveError,
    Involution,
    SpectralData,
    c_sign,
    involution_apply,
    involution_image,
    on_fixed_set,
    point_image,
    project_to_P,
)
from .poly import Polynomial, roots

log = logging.getLogger(__name__)

__all__ = [
    "CPolynomial",
    "TangentData",
    "TangentError",
    "c_basis",
    "c_project",
    "tangent_from_c",
    "tangent_simple_roots",
    "identity_residual",
    "ConstantCMap",
    "BCMap",
    "MarkerCMap",
]


class TangentError(RuntimeError):
    """The tangent system is singular; ``sigma_min`` measures how close."""

    def __init__(self, message, sigma_min):
        super().__init__(message)
        self.sigma_min = sigma_min


@dataclass(frozen=True)
class CPolynomial:
    poly: Polynomial
    involution: Involution
    degree: int

    @property
    def coeffs(self):
        return self.poly.padded(self.degree + 1)

    def __call__(self, z):
        return self.poly(z)

    def __add__(self, other):
        return CPolynomial(self.poly + other.poly, self.involution, self.degree)

    def __mul__(self, s):
        return CPolynomial(self.poly * float(s), self.involution, self.degree)

    __rmul__ = __mul__


def _c_image(flags, x, d):
    return involution_apply(flags.involution, x, d, c_sign(flags))


def c_basis(flags, g):
    """Real basis of the c-polynomials of degree <= g + 1 + a*b fixed by the involution."""
    d = flags.deg_c(g)
    if flags.involution is Involution.REAL:
        return [CPolynomial(Polynomial.monomial(k), flags.involution, d) for k in range(d + 1)]
    out, rows = [], np.zeros((0, 2 * (d + 1)))
    e0 = np.zeros(d + 1, dtype=complex)
    e0[0] = 1.0
    if np.allclose(_c_image(flags, _c_image(flags, e0, d), d), -e0):
        # J^2 = -1: an anti-linear map of this kind fixes only 0
        log.warning("the %s involution has no non-trivial fixed c of degree %d", flags.involution.value, d)
        return out
    for k in range(d + 1):
        for unit in (1.0, 1j):
            e = np.zeros(d + 1, dtype=complex)
            e[k] = unit
            v = e + _c_image(flags, e, d)
            if np.max(np.abs(v)) < 1e-14:
                continue
            trial = np.vstack([rows, np.concatenate([v.real, v.imag])])
            if np.linalg.matrix_rank(trial, tol=1e-10) > rows.shape[0]:
                rows = trial
                out.append(CPolynomial(Polynomial(v / np.max(np.abs(v))), flags.involution, d))
    if not out:
        log.warning("the %s involution has no non-trivial fixed c of degree %d", flags.involution.value, d)
    return out


def c_project(flags, g, coeffs):
    """Nearest fixed c to an arbitrary coefficient vector."""
    d = flags.deg_c(g)
    x = np.zeros(d + 1, dtype=complex)
    x[: min(len(coeffs), d + 1)] = np.asarray(coeffs, dtype=complex)[: d + 1]
    return CPolynomial(Polynomial(0.5 * (x + _c_image(flags, x, d))), flags.involution, d)


@dataclass(frozen=True)
class TangentData:
    c: CPolynomial
    adot: Polynomial
    bdot: Polynomial
    residual: float
    sigma_min: float

    def vector(self, sd):
        na = sd.flags.deg_a(sd.genus) + 1
        nb = sd.flags.deg_b(sd.genus) + 1
        ca, cb = self.adot.padded(na), self.bdot.padded(nb)
        return np.concatenate([ca.real, ca.imag, cb.real, cb.imag])


def _pad(x, n):
    out = np.zeros(n, dtype=complex)
    out[: len(x)] = x
    return out


def _identity_sides(sd, c):
    """Coefficient arrays of the linear operator columns and the right-hand side."""
    f, g = sd.flags, sd.genus
    na, nb = f.deg_a(g), f.deg_b(g)
    k, sh = f.nu_power, 1 - f.b_flag
    P = sd.P.padded(na + k + 1)
    dP = np.arange(1, len(P)) * P[1:]
    b = sd.b.padded(nb + 1)
    cc = c.coeffs
    dc = np.arange(1, len(cc)) * cc[1:]
    rhs = np.concatenate([[0.0], 2 * np.convolve(P, dc) if len(dc) else np.zeros(1)])
    rhs = _pad(rhs, max(len(rhs), len(P) + len(cc) + 1))
    t = np.concatenate([[0.0], np.convolve(dP, cc)])
    rhs[: len(t)] -= t
    if f.ab:
        t = 2 * np.convolve(P, cc)
        rhs[: len(t)] -= t
    n_out = max(len(rhs), sh + len(P) + nb + 1, sh + k + na + nb + 1)
    rhs = _pad(rhs, n_out)
    cols = []
    for j in range(na + 1):
        # a' -> -lambda^(1-b) lambda^k e_j b
        col = np.zeros(n_out, dtype=complex)
        col[sh + k + j : sh + k + j + nb + 1] -= b
        cols.append(col)
    for j in range(nb + 1):
        col = np.zeros(n_out, dtype=complex)
        col[sh + j : sh + j + len(P)] += 2 * P
        cols.append(col)
    return np.array(cols).T, rhs


def identity_residual(sd, c, adot, bdot):
    """Relative residual of the tangent identity."""
    M, rhs = _identity_sides(sd, c)
    na = sd.flags.deg_a(sd.genus) + 1
    nb = sd.flags.deg_b(sd.genus) + 1
    x = np.concatenate([adot.padded(na), bdot.padded(nb)])
    lhs = M @ x
    scale = max(np.max(np.abs(rhs)), np.max(np.abs(M)) * max(np.max(np.abs(x)), 1e-300), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def _realify(M):
    """Real matrix of z -> M z acting on (Re z, Im z)."""
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def _fixed_rows(inv, n, degree, sign):
    """Real rows of x - J x = 0 in (Re x, Im x) coordinates."""
    cols = []
    for k in range(2 * n):
        e = np.zeros(n, dtype=complex)
        e[k % n] = 1.0 if k < n else 1j
        y = e - involution_apply(inv, e, degree, sign)
        cols.append(np.concatenate([y.real, y.imag]))
    return np.array(cols).T


def tangent_from_c(sd, c, cond_max=1e13, check=True):
    """Solve the tangent identity for (a', b') with normalisation and reality constraints."""
    f, g = sd.flags, sd.genus
    na, nb = f.deg_a(g) + 1, f.deg_b(g) + 1
    M, rhs = _identity_sides(sd, c)
    A_id = _realify(M)
    # reorder columns to (Re a', Im a', Re b', Im b')
    n = na + nb
    perm = np.r_[0:na, n : n + na, na:n, n + na : 2 * n]
    A_id = A_id[:, perm]
    r_id = np.concatenate([rhs.real, rhs.imag])
    bs = -1.0 if f.involution is Involution.UNIT_CIRCLE else ((-1.0) ** g if f.involution is Involution.ANTI_UNIT_CIRCLE else 1.0)
    Fa = _fixed_rows(f.involution, na, na - 1, 1.0)
    Fb = _fixed_rows(f.involution, nb, nb - 1, bs)
    Z = np.zeros
    fixed = np.block([[Fa, Z((Fa.shape[0], 2 * nb))], [Z((Fb.shape[0], 2 * na)), Fb]])
    norm = Z((2, 2 * n))
    top = sd.a.padded(na)[-1]
    if f.involution is Involution.REAL:
        norm[0, na - 1] = 1.0
        norm[1, 2 * na - 1] = 1.0
    else:
        norm[0, na - 1] = top.real
        norm[0, 2 * na - 1] = top.imag
    A = np.vstack([A_id, fixed, norm])
    r = np.concatenate([r_id, np.zeros(fixed.shape[0] + 2)])
    scale = np.max(np.abs(A), axis=0)
    scale[scale == 0] = 1.0
    As = A / scale
    u, s, vt = np.linalg.svd(As, full_matrices=False)
    if s[-1] <= s[0] / cond_max:
        raise TangentError(f"tangent system is singular (sigma_min {s[-1]:.3e})", float(s[-1]))
    x = vt.T @ ((u.T @ r) / s) / scale
    adot = Polynomial(x[:na] + 1j * x[na : 2 * na])
    bdot = Polynomial(x[2 * na : 2 * na + nb] + 1j * x[2 * na + nb :])
    res = identity_residual(sd, c, adot, bdot)
    if check and res > 1e-10:
        raise TangentError(f"tangent identity residual {res:.2e} exceeds 1e-10", float(s[-1]))
    return TangentData(c, adot, bdot, res, float(s[-1]))


def tangent_simple_roots(sd, c):
    """Root velocities of a and b from the identity at simple, disjoint roots."""
    f = sd.flags
    ra, rb = roots(sd.a), roots(sd.b)
    if ra.size > 1 and np.min(np.abs(ra[:, None] - ra[None, :]) + np.eye(len(ra)) * 1e300) < 1e-8:
        raise CurveError("a has repeated roots")
    if rb.size and np.min(np.abs(ra[:, None] - rb[None, :])) < 1e-8:
        raise CurveError("a and b share a root")
    P = sd.P
    dP = P.deriv()
    cp = c.poly
    dc = cp.deriv()
    alpha_dot = -(ra ** f.b_flag) * cp(ra) / sd.b(ra)
    rhs = rb * (2 * P(rb) * dc(rb) - dP(rb) * cp(rb)) - 2 * f.ab * P(rb) * cp(rb)
    bdot_at = rhs / (2 * rb ** (1 - f.b_flag) * P(rb))
    beta_dot = -bdot_at / sd.b.deriv()(rb)
    return ra, alpha_dot, rb, beta_dot


# ---------------------------------------------------------------------------
# c maps
# ---------------------------------------------------------------------------
class ConstantCMap:
    def __init__(self, c):
        self.c = c

    def __call__(self, sd):
        return self.c

    def to_dict(self):
        return {"kind": "constant", "coeffs": [[float(z.real), float(z.imag)] for z in self.c.coeffs]}


class BCMap:
    """c = factor * b (a Moebius direction for the right factor)."""

    def __init__(self, factor=1.0, shift=0):
        self.factor = factor
        self.shift = shift

    def __call__(self, sd):
        d = sd.flags.deg_c(sd.genus)
        return CPolynomial(sd.b.shift_power(self.shift) * self.factor, sd.flags.involution, d)

    def to_dict(self):
        return {"kind": "b", "factor": self.factor, "shift": self.shift}


class MarkerCMap:
    """c with prescribed values at the roots of b, tracked by continuity.

    The fixed c closest (least squares over the real basis) to the prescribed
    values is used at every evaluation.
    """

    def __init__(self, markers, values):
        self.markers = np.asarray(markers, dtype=complex)
        self.values = np.asarray(values, dtype=complex)

    def _track(self, rb):
        from scipy.optimize import linear_sum_assignment

        cost = np.abs(self.markers[:, None] - rb[None, :])
        row, col = linear_sum_assignment(cost)
        return rb[col[np.argsort(row)]]

    def __call__(self, sd):
        basis = c_basis(sd.flags, sd.genus)
        pts = self._track(roots(sd.b))
        self.markers = pts
        V = np.array([[cb(z) for cb in basis] for z in pts])
        A = np.vstack([V.real, V.imag])
        y = np.concatenate([self.values.real, self.values.imag])
        w = np.linalg.lstsq(A, y, rcond=None)[0]
        out = basis[0] * w[0]
        for wk, cb in zip(w[1:], basis[1:]):
            out = out + cb * wk
        return out

    def to_dict(self):
        return {
            "kind": "markers",
            "markers": [[float(z.real), float(z.imag)] for z in self.markers],
            "values": [[float(z.real), float(z.imag)] for z in self.values],
        }
