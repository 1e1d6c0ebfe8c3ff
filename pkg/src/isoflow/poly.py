"""Complex polynomial arithmetic and the numerical kernels built on it.

Coefficients are stored lowest degree first.  Everything here is a pure
function of immutable inputs.
"""

from __future__ import annotations

from fractions import Fraction
from math import factorial

import numpy as np

__all__ = [
    "Polynomial",
    "RootFindingError",
    "roots",
    "root_clusters",
    "resultant",
    "discriminant",
    "sqrt_series_polypart",
    "mobius_constant",
    "start_polynomial",
    "horner",
    "series_power",
    "series_mul",
    "series_div",
    "taylor_shift",
]

# relative tolerance of the simultaneous root iteration
ROOT_TOL = 1e-13
ROOT_MAXITER = 200


class RootFindingError(RuntimeError):
    """Raised when the root iteration fails to converge; carries the best iterate."""

    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


class Polynomial:
    """Immutable complex polynomial, coefficients lowest degree first."""

    __slots__ = ("_c",)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=complex).ravel()
        if c.size == 0:
            c = np.zeros(1, dtype=complex)
        nz = np.nonzero(c)[0]
        c = c[: nz[-1] + 1] if nz.size else c[:1]
        c.setflags(write=False)
        self._c = c

    # constructors -----------------------------------------------------------
    @classmethod
    def from_roots(cls, rts, lead=1.0):
        c = np.array([lead], dtype=complex)
        for r in rts:
            c = np.convolve(c, [-r, 1.0])
        return cls(c)

    @classmethod
    def monomial(cls, k, coeff=1.0):
        c = np.zeros(k + 1, dtype=complex)
        c[k] = coeff
        return cls(c)

    # basic properties -------------------------------------------------------
    @property
    def coeffs(self):
        return self._c

    @property
    def degree(self):
        return len(self._c) - 1

    @property
    def lead(self):
        return self._c[-1]

    def is_zero(self):
        return self.degree == 0 and self._c[0] == 0

    def padded(self, n):
        """Coefficient vector of length ``n`` (zero padded)."""
        out = np.zeros(n, dtype=complex)
        out[: len(self._c)] = self._c
        return out

    def __call__(self, z):
        return horner(self._c, z)

    def __repr__(self):
        return f"Polynomial({np.array2string(self._c, precision=6)})"

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self._c, other._c)

    def __hash__(self):
        return hash(self._c.tobytes())

    def allclose(self, other, atol=1e-12):
        n = max(len(self._c), len(other._c))
        return np.allclose(self.padded(n), other.padded(n), rtol=0, atol=atol)

    # arithmetic -------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Polynomial):
            return other
        return Polynomial([other])

    def __add__(self, other):
        o = self._coerce(other)
        n = max(len(self._c), len(o._c))
        return Polynomial(self.padded(n) + o.padded(n))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self._c)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(np.convolve(self._c, other._c))
        return Polynomial(self._c * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Polynomial(self._c / scalar)

    def __pow__(self, k):
        out = Polynomial([1.0])
        for _ in range(k):
            out = out * self
        return out

    def divmod(self, other):
        """Polynomial long division, returns (quotient, remainder)."""
        num = list(self._c[::-1])
        den = other._c[::-1]
        if len(num) < len(den):
            return Polynomial([0.0]), self
        q = []
        for _ in range(len(num) - len(den) + 1):
            f = num[0] / den[0]
            q.append(f)
            for j in range(len(den)):
                num[j] -= f * den[j]
            num.pop(0)
        return Polynomial(q[::-1]), Polynomial(num[::-1] if num else [0.0])

    def deriv(self, k=1):
        c = self._c
        for _ in range(k):
            if len(c) == 1:
                return Polynomial([0.0])
            c = c[1:] * np.arange(1, len(c))
        return Polynomial(c)

    def conj(self):
        return Polynomial(np.conj(self._c))

    def shift_power(self, k):
        """Multiply by lambda**k (k >= 0)."""
        return Polynomial(np.concatenate([np.zeros(k, dtype=complex), self._c]))

    def compose_affine(self, alpha, beta):
        """Return p(alpha*z + beta)."""
        out = Polynomial([0.0])
        lin = Polynomial([beta, alpha])
        for c in self._c[::-1]:
            out = out * lin + c
        return out

    def roots(self, tol=ROOT_TOL):
        return roots(self, tol)


def horner(c, z):
    z = np.asarray(z, dtype=complex)
    out = np.zeros_like(z) + c[-1]
    for coef in c[-2::-1]:
        out = out * z + coef
    return out if out.ndim else complex(out)


# ---------------------------------------------------------------------------
# roots
# ---------------------------------------------------------------------------
def _initial_circle(c, rng):
    n = len(c) - 1
    mags = np.abs(c[:-1] / c[-1])
    # Fujiwara-type bound on the root moduli
    radius = 2.0 * np.max(mags ** (1.0 / np.arange(n, 0, -1))) if n else 1.0
    radius = max(radius, 1e-300)
    # geometric mean modulus gives a better start for clustered spectra
    r0 = abs(c[0] / c[-1]) ** (1.0 / n) if c[0] != 0 else radius / 2
    r0 = min(max(r0, 1e-3 * radius), radius)
    phase = 2 * np.pi * np.arange(n) / n + 0.4 + 0.1 * rng.random(n)
    return r0 * np.exp(1j * phase)


def _aberth(c, z, tol, maxiter):
    dc = c[1:] * np.arange(1, len(c))
    scale = np.abs(c)
    eps = np.finfo(float).eps
    polish = 0
    for it in range(maxiter):
        p = horner(c, z)
        dp = horner(dc, z)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, np.inf)
        with np.errstate(all="ignore"):
            s = (1.0 / diff).sum(axis=1)
            ratio = p / dp
            w = ratio / (1.0 - ratio * s)
        w = np.where(np.isfinite(w), w, 0.0)
        z = z - w
        if np.all(np.abs(w) <= 4 * eps * np.abs(z) + 1e-300):
            return z, True
        small = np.max(np.abs(w)) <= 4 * eps * max(1.0, np.max(np.abs(z)))
        resid_ok = np.all(np.abs(horner(c, z)) <= tol * horner(scale, np.abs(z)))
        if small or resid_ok:
            # extra sweeps tighten small and simple roots to full relative precision
            polish += 1
            if polish > 4:
                return z, True
    p = horner(c, z)
    err = horner(scale, np.abs(z))
    ok = np.all(np.abs(p) <= 1e3 * tol * err)
    return z, bool(ok)


def roots(p, tol=ROOT_TOL, maxiter=ROOT_MAXITER, seed=0):
    """All roots of ``p`` with multiplicity (Aberth-Ehrlich iteration).

    Raises
    ------
    RootFindingError
        If the iteration does not reach the residual tolerance.
    """
    if not isinstance(p, Polynomial):
        p = Polynomial(p)
    if p.degree < 1:
        raise ValueError("roots() needs degree >= 1")
    c = p.coeffs
    # strip roots at the origin exactly
    k0 = int(np.argmax(c != 0))
    zeros = np.zeros(k0, dtype=complex)
    c = c[k0:]
    n = len(c) - 1
    if n == 0:
        return zeros
    if n == 1:
        return np.concatenate([zeros, [-c[0] / c[1]]])
    rng = np.random.default_rng(seed)
    z = _initial_circle(c, rng)
    z, ok = _aberth(c, z, tol, maxiter)
    if not ok:
        # one restart from a companion-matrix start
        z2, ok = _aberth(c, np.roots(c[::-1]).astype(complex), tol, maxiter)
        if ok:
            z = z2
        else:
            raise RootFindingError("root iteration did not converge", np.concatenate([zeros, z]))
    z = _snap_clusters(c, z)
    out = np.concatenate([zeros, z])
    return out[np.lexsort((out.imag, out.real))]


def _snap_clusters(c, z):
    # Multiple roots come out of the iteration spread by eps**(1/mu); the
    # centroid of the group is accurate, so snap groups whose first mu-1
    # derivatives vanish at rounding level.
    loose = 1e-3 * (1.0 + np.max(np.abs(z)))
    groups = root_clusters(z, loose)
    if all(m == 1 for _, m in groups):
        return z
    eps = np.finfo(float).eps
    out = []
    remaining = list(z)
    for center, mu in groups:
        members = sorted(remaining, key=lambda r: abs(r - center))[:mu]
        if mu > 1:
            # the multiple root is a simple root of the (mu-1)-th derivative
            d = Polynomial(c).deriv(mu - 1)
            dd = d.deriv()
            for _ in range(8):
                step = d(center) / dd(center) if dd(center) != 0 else 0.0
                center = center - step
                if abs(step) <= 4 * np.finfo(float).eps * (1 + abs(center)):
                    break
            shifted = Polynomial(c).compose_affine(1.0, center).padded(len(c))
            mag = Polynomial(np.abs(c)).compose_affine(1.0, abs(center)).padded(len(c))
            if all(abs(shifted[j]) <= 1e4 * eps * abs(mag[j]) + 1e-300 for j in range(mu)):
                members_out = [center] * mu
            else:
                members_out = members
        else:
            members_out = members
        for r in members:
            remaining.remove(r)
        out.extend(members_out)
    return np.array(out, dtype=complex)


def mult_radius(rts):
    return 1e-7 * (1.0 + (np.max(np.abs(rts)) if len(rts) else 0.0))


def root_clusters(rts, radius=None):
    """Group roots closer than ``radius``; returns list of (center, multiplicity)."""
    rts = np.asarray(rts, dtype=complex)
    if radius is None:
        radius = mult_radius(rts)
    used = np.zeros(len(rts), dtype=bool)
    out = []
    for i in range(len(rts)):
        if used[i]:
            continue
        members = [i]
        used[i] = True
        grew = True
        while grew:
            grew = False
            for j in range(len(rts)):
                if not used[j] and np.min(np.abs(rts[members] - rts[j])) < radius:
                    members.append(j)
                    used[j] = True
                    grew = True
        out.append((complex(np.mean(rts[members])), len(members)))
    return out


# ---------------------------------------------------------------------------
# resultant / discriminant
# ---------------------------------------------------------------------------
def sylvester_matrix(a, b):
    m, n = a.degree, b.degree
    A = a.coeffs[::-1]
    B = b.coeffs[::-1]
    S = np.zeros((m + n, m + n), dtype=complex)
    for i in range(n):
        S[i, i : i + m + 1] = A
    for i in range(m):
        S[n + i, i : i + n + 1] = B
    return S


def resultant(a, b):
    """Resultant of ``a`` and ``b`` as the Sylvester determinant."""
    if a.is_zero() or b.is_zero():
        raise ValueError("resultant of the zero polynomial")
    if a.degree == 0:
        return complex(a.lead ** b.degree)
    if b.degree == 0:
        return complex(b.lead ** a.degree)
    return complex(np.linalg.det(sylvester_matrix(a, b)))


def discriminant(a):
    n = a.degree
    if n < 2:
        raise ValueError("discriminant needs degree >= 2")
    sign = (-1) ** (n * (n - 1) // 2)
    return sign * resultant(a, a.deriv()) / a.lead


# ---------------------------------------------------------------------------
# power series helpers (truncated, lowest order first)
# ---------------------------------------------------------------------------
def series_mul(f, g, n):
    return np.convolve(np.asarray(f, complex)[:n], np.asarray(g, complex)[:n])[:n]


def series_power(f, p, n):
    """First ``n`` coefficients of f**p for f[0] != 0 (principal branch of f[0]**p)."""
    f = np.zeros(n, dtype=complex) if len(f) == 0 else np.asarray(f, dtype=complex)
    f = np.concatenate([f, np.zeros(max(0, n - len(f)), dtype=complex)])[:n]
    if f[0] == 0:
        raise ValueError("series_power needs a nonzero constant term")
    y = np.zeros(n, dtype=complex)
    y[0] = f[0] ** p
    for k in range(1, n):
        j = np.arange(1, k + 1)
        y[k] = np.sum(((p + 1) * j - k) * f[j] * y[k - j]) / (k * f[0])
    return y


def series_div(f, g, n):
    return series_mul(f, series_power(g, -1.0, n), n)


def taylor_shift(p, x0):
    """Coefficients of p(x0 + x) in powers of x."""
    return p.compose_affine(1.0, x0).padded(p.degree + 1)


# ---------------------------------------------------------------------------
# the blow-up polynomials
# ---------------------------------------------------------------------------
def _sqrt_series_fractions(ell):
    # coefficients of (1 - 2/w)^(-1/2) = sum binom(-1/2, k) (-2/w)^k
    out = []
    c = Fraction(1)
    for k in range(ell + 1):
        out.append(c)
        # binom(-1/2, k+1)/binom(-1/2, k) = (-1/2 - k)/(k + 1)
        c = c * Fraction(-1 - 2 * k, 2 * (k + 1)) * (-2)
    return out


def sqrt_series_polypart(ell):
    """Polynomial part of w**ell * (1 - 2/w)**(-1/2); monic of degree ``ell``."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    fr = _sqrt_series_fractions(ell)
    # w^ell * sum_k c_k w^-k  ->  coefficient of w^(ell-k) is c_k
    return Polynomial([float(fr[ell - j]) for j in range(ell + 1)])


def start_polynomial(qbar):
    """(2l+1)(w-2)q - w q - 2w(w-2)q' for a degree-l polynomial q."""
    ell = qbar.degree
    w = Polynomial([0.0, 1.0])
    wm2 = Polynomial([-2.0, 1.0])
    return (2 * ell + 1) * wm2 * qbar - w * qbar - 2 * w * wm2 * qbar.deriv()


def mobius_constant(ell):
    """Constant value of the start polynomial at qbar, -2 (2l+1)!! / l!."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    odd = 1
    for k in range(1, 2 * ell + 2, 2):
        odd *= k
    return -2.0 * odd / factorial(ell)
