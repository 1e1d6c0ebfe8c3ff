"""Spectral data (a, b): case flags, reality involutions, validation and gauge moves."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .poly import (
    Polynomial,
    discriminant,
    mult_radius,
    resultant,
    root_clusters,
    roots,
    series_div,
    series_power,
)

__all__ = [
    "Involution",
    "CaseFlags",
    "SpectralData",
    "MoebiusTransform",
    "ValidationReport",
    "CurveError",
    "validate",
    "involution_image",
    "involution_apply",
    "branch_points",
    "gamma",
    "apply_moebius",
    "add_double_point",
    "remove_double_points",
    "f_series",
    "xi_integral_root",
    "nu_squared",
    "residues",
    "project_to_P",
    "normalize",
    "REALITY_TOL",
]

REALITY_TOL = 1e-10


class CurveError(ValueError):
    pass


class Involution(str, enum.Enum):
    REAL = "Real"
    UNIT_CIRCLE = "UnitCircle"
    ANTI_UNIT_CIRCLE = "AntiUnitCircle"


@dataclass(frozen=True)
class CaseFlags:
    a_flag: int
    b_flag: int
    involution: Involution = Involution.REAL

    def __post_init__(self):
        if self.a_flag not in (0, 1) or self.b_flag not in (0, 1):
            raise CurveError("case flags must be 0 or 1")
        object.__setattr__(self, "involution", Involution(self.involution))
        if self.b_flag == 0 and self.involution is not Involution.REAL:
            raise CurveError("b_flag=0 admits only the Real involution")

    @property
    def marked(self):
        """Finite part of the marked set: {0} for b_flag=1, empty otherwise."""
        return (0.0,) if self.b_flag else ()

    @property
    def ab(self):
        return self.a_flag * self.b_flag

    @property
    def nu_power(self):
        """Power of lambda in nu**2 = lambda**k a(lambda)."""
        return (1 - self.a_flag) * self.b_flag

    @property
    def omega_power(self):
        """Power of lambda in the denominator of omega."""
        return self.b_flag + self.ab

    def deg_a(self, g):
        return 2 * g + (1 - self.a_flag) * (1 - self.b_flag)

    def deg_b(self, g):
        return g + self.b_flag + self.ab

    def deg_c(self, g):
        return g + 1 + self.ab

    def dimension(self, g):
        """Real dimension of the ambient space of normalised pairs."""
        return 3 * g + 2 - 2 * self.a_flag + self.ab


@dataclass(frozen=True)
class SpectralData:
    flags: CaseFlags
    genus: int
    a: Polynomial
    b: Polynomial

    @property
    def P(self):
        """nu**2 as a polynomial."""
        return nu_squared(self.flags, self.a)

    def with_ab(self, a, b, genus=None):
        return SpectralData(self.flags, self.genus if genus is None else genus, a, b)

    def to_vector(self):
        """Real coordinate vector (Re a, Im a, Re b, Im b) at the nominal degrees."""
        na = self.flags.deg_a(self.genus) + 1
        nb = self.flags.deg_b(self.genus) + 1
        ca, cb = self.a.padded(na), self.b.padded(nb)
        return np.concatenate([ca.real, ca.imag, cb.real, cb.imag])

    def from_vector(self, x):
        na = self.flags.deg_a(self.genus) + 1
        nb = self.flags.deg_b(self.genus) + 1
        a = x[:na] + 1j * x[na : 2 * na]
        b = x[2 * na : 2 * na + nb] + 1j * x[2 * na + nb :]
        return self.with_ab(Polynomial(a), Polynomial(b))

    # serialization ----------------------------------------------------------
    def to_dict(self):
        na = self.flags.deg_a(self.genus) + 1
        nb = self.flags.deg_b(self.genus) + 1
        return {
            "a_flag": self.flags.a_flag,
            "b_flag": self.flags.b_flag,
            "involution": self.flags.involution.value,
            "genus": self.genus,
            "a_coeffs": [[float(z.real), float(z.imag)] for z in self.a.padded(max(na, len(self.a.coeffs)))],
            "b_coeffs": [[float(z.real), float(z.imag)] for z in self.b.padded(max(nb, len(self.b.coeffs)))],
        }

    @classmethod
    def from_dict(cls, d):
        keys = {"a_flag", "b_flag", "involution", "genus", "a_coeffs", "b_coeffs"}
        unknown = set(d) - keys
        if unknown:
            raise CurveError(f"unknown keys in spectral data: {sorted(unknown)}")
        missing = keys - set(d)
        if missing:
            raise CurveError(f"missing keys in spectral data: {sorted(missing)}")
        flags = CaseFlags(int(d["a_flag"]), int(d["b_flag"]), Involution(d["involution"]))
        a = Polynomial([complex(re, im) for re, im in d["a_coeffs"]])
        b = Polynomial([complex(re, im) for re, im in d["b_coeffs"]])
        return cls(flags, int(d["genus"]), a, b)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def nu_squared(flags, a):
    return a.shift_power(flags.nu_power)


# ---------------------------------------------------------------------------
# involutions
# ---------------------------------------------------------------------------
def involution_apply(inv, coeffs, degree, sign=1.0):
    """Apply one of the anti-linear involutions to a coefficient vector.

    ``degree`` is the nominal degree used for the reversal; ``sign`` is the
    extra factor (-1 for b under the unit-circle involution, (-1)**g under
    the anti-unit-circle one).
    """
    c = np.zeros(degree + 1, dtype=complex)
    c[: len(coeffs)] = coeffs[: degree + 1]
    inv = Involution(inv)
    if inv is Involution.REAL:
        return sign * np.conj(c)
    if inv is Involution.UNIT_CIRCLE:
        return sign * np.conj(c[::-1])
    k = np.arange(degree + 1)
    return sign * (np.conj(c) * (-1.0) ** k)[::-1]


def _b_sign(flags, g):
    if flags.involution is Involution.UNIT_CIRCLE:
        return -1.0
    if flags.involution is Involution.ANTI_UNIT_CIRCLE:
        return (-1.0) ** g
    return 1.0


def c_sign(flags):
    if flags.involution is Involution.ANTI_UNIT_CIRCLE:
        return (-1.0) ** flags.a_flag
    return 1.0


def involution_image(flags, a, b, genus):
    """Image of (a, b) under the selected involution."""
    da, db = flags.deg_a(genus), flags.deg_b(genus)
    ia = involution_apply(flags.involution, a.padded(da + 1), da)
    ib = involution_apply(flags.involution, b.padded(db + 1), db, _b_sign(flags, genus))
    return Polynomial(ia), Polynomial(ib)


def point_image(inv, lam):
    """Action of the involution on the spectral parameter."""
    inv = Involution(inv)
    lam = complex(lam)
    if inv is Involution.REAL:
        return lam.conjugate()
    if inv is Involution.UNIT_CIRCLE:
        return 1.0 / lam.conjugate()
    return -1.0 / lam.conjugate()


def on_fixed_set(inv, lam, tol=1e-8):
    inv = Involution(inv)
    if inv is Involution.REAL:
        return abs(complex(lam).imag) <= tol * (1 + abs(lam))
    if inv is Involution.UNIT_CIRCLE:
        return abs(abs(lam) - 1.0) <= tol
    return False


# ---------------------------------------------------------------------------
# normalisation and projection
# ---------------------------------------------------------------------------
def normalize(sd):
    """Rescale (a, b) -> (k a, sqrt(k) b) so that a is normalised; omega is unchanged."""
    a, b = sd.a, sd.b
    if sd.flags.involution is Involution.REAL:
        k = 1.0 / a.lead
    else:
        k = 1.0 / abs(sd.a.padded(sd.flags.deg_a(sd.genus) + 1)[-1])
    return sd.with_ab(a * k, b * np.sqrt(k))


def residues(sd):
    """Residues of omega at the marked points over infinity (and 0 for b_flag=1).

    Only meaningful for a_flag=1, where the marked points are not branch
    points.  Returned up to the common sheet sign.
    """
    flags = sd.flags
    if flags.a_flag == 0:
        return np.zeros(0, dtype=complex)
    g = sd.genus
    na, nb = flags.deg_a(g), flags.deg_b(g)
    # at infinity: b(l)/(l^{2b} sqrt(a(l))) = btil(t)/sqrt(atil(t)), t = 1/l
    atil = sd.a.padded(na + 1)[::-1]
    btil = sd.b.padded(nb + 1)[::-1]
    s = series_div(btil, series_power(atil, 0.5, 3), 3)
    out = [s[1]]
    if flags.b_flag:
        s0 = series_div(_head(sd.b.coeffs, 3), series_power(_head(sd.a.coeffs, 3), 0.5, 3), 3)
        out.append(s0[1])
    return np.array(out, dtype=complex)


def _head(c, n):
    out = np.zeros(n, dtype=complex)
    k = min(n, len(c))
    out[:k] = c[:k]
    return out


def _real_matrix(fun, n_in):
    """Real matrix of a real-linear map on C^n_in given as a function of complex vectors."""
    cols = []
    for k in range(2 * n_in):
        e = np.zeros(n_in, dtype=complex)
        e[k % n_in] = 1.0 if k < n_in else 1j
        y = fun(e)
        cols.append(np.concatenate([y.real, y.imag]))
    return np.array(cols).T


def _b_constraint_matrix(sd):
    """Real-linear constraints on b: involution fixed point and (a_flag=1) no residues."""
    flags, g = sd.flags, sd.genus
    nb = flags.deg_b(g)
    sign = _b_sign(flags, g)

    def fixed(x):
        return x - involution_apply(flags.involution, x, nb, sign)

    rows = [_real_matrix(fixed, nb + 1)]
    if flags.a_flag:
        def res(x):
            return residues(sd.with_ab(sd.a, Polynomial(x) if np.any(x) else Polynomial([0.0])))
        # residues are linear in b; evaluate on basis vectors
        def res_full(x):
            # Polynomial() trims trailing zeros which is harmless for residues
            return res(x)
        rows.append(_real_matrix(res_full, nb + 1))
    return np.vstack(rows)


def project_to_P(sd):
    """Closest pair fixed by the involution, normalised, and residue-free."""
    flags, g = sd.flags, sd.genus
    na, nb = flags.deg_a(g), flags.deg_b(g)
    ca = sd.a.padded(na + 1)
    ca = 0.5 * (ca + involution_apply(flags.involution, ca, na))
    sd = normalize(sd.with_ab(Polynomial(ca), sd.b))
    if flags.involution is not Involution.REAL:
        # fixed points of the unit-circle involutions are only defined up to a real factor
        pass
    cb = sd.b.padded(nb + 1)
    A = _b_constraint_matrix(sd)
    x = np.concatenate([cb.real, cb.imag])
    # orthogonal projection onto the null space of A
    u, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-12 * (s[0] if s.size else 1.0)))
    V = vt[rank:].T
    x = V @ (V.T @ x)
    cb = x[: nb + 1] + 1j * x[nb + 1 :]
    return sd.with_ab(sd.a, Polynomial(cb))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------
@dataclass
class ValidationReport:
    failures: list = field(default_factory=list)
    P: bool = True
    R: bool = True
    T: bool = True
    details: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.failures and self.P and self.R and self.T

    def fail(self, key, message):
        self.failures.append(f"{key}: {message}")

    def to_dict(self):
        return {"P": self.P, "R": self.R, "T": self.T, "failures": list(self.failures), "details": self.details}


def _coeff_scale(*polys):
    return 1.0 + max(float(np.max(np.abs(p.coeffs))) for p in polys)


def validate(sd, tol=REALITY_TOL):
    """Check every invariant of the spectral data and classify P / R / T membership."""
    rep = ValidationReport()
    flags, g = sd.flags, sd.genus
    na, nb = flags.deg_a(g), flags.deg_b(g)
    if g < 0:
        rep.fail("degree", "negative genus")
    if sd.a.degree != na:
        rep.fail("degree", f"deg a = {sd.a.degree}, expected {na}")
    if sd.b.degree > nb or sd.b.is_zero():
        rep.fail("degree", f"deg b = {sd.b.degree}, expected {nb}")
    if rep.failures:
        rep.P = rep.R = rep.T = False
        return rep
    scale = _coeff_scale(sd.a, sd.b)
    # normalisation
    ca = sd.a.padded(na + 1)
    if flags.involution is Involution.REAL:
        if abs(ca[-1] - 1.0) > tol * scale:
            rep.fail("normalization", "a is not monic")
    else:
        if abs(abs(ca[-1]) - 1.0) > tol * scale or abs(abs(ca[0]) - 1.0) > tol * scale:
            rep.fail("normalization", "|highest| and |lowest| coefficient of a must be 1")
    # roots in the finite marked set
    if flags.b_flag:
        if abs(sd.a(0.0)) <= tol * scale:
            rep.fail("root in S", "a vanishes at lambda=0")
        if abs(sd.b(0.0)) <= tol * scale:
            rep.fail("root in S", "b vanishes at lambda=0")
    # reality
    ia, ib = involution_image(flags, sd.a, sd.b, g)
    dev = max(np.max(np.abs(ia.padded(na + 1) - ca)), np.max(np.abs(ib.padded(nb + 1) - sd.b.padded(nb + 1))))
    rep.details["reality_deviation"] = float(dev)
    if dev > tol * scale:
        rep.fail("reality", f"(a,b) not fixed by the {flags.involution.value} involution (dev {dev:.2e})")
    # residues
    if flags.a_flag:
        res = residues(sd)
        rep.details["residues"] = [abs(r) for r in res]
        if np.max(np.abs(res)) > 1e3 * tol * scale:
            rep.fail("residue", "omega has residues at the marked points")
    if rep.failures:
        rep.P = False
    # R: b/a has at most simple poles away from the marked set
    ra = roots(sd.a)
    clusters = root_clusters(ra, mult_radius(ra))
    rb = roots(sd.b) if sd.b.degree >= 1 else np.zeros(0, complex)
    radius = max(mult_radius(ra), 1e-6 * (1 + np.max(np.abs(ra))))
    for center, mu in clusters:
        if mu < 2:
            continue
        kb = int(np.sum(np.abs(rb - center) < radius)) if rb.size else 0
        if kb < mu - 1:
            rep.R = False
            rep.fail("R", f"b/a has a pole of order {mu - kb} at {center:.6g}")
    rep.R = rep.R and rep.P
    disc = discriminant(sd.a) if na >= 2 else 1.0
    res_ab = resultant(sd.a, sd.b)
    rep.details["disc"] = [float(np.real(disc)), float(np.imag(disc))]
    rep.details["resultant"] = [float(np.real(res_ab)), float(np.imag(res_ab))]
    simple = all(mu == 1 for _, mu in clusters)
    common = rb.size and np.min(np.abs(ra[:, None] - rb[None, :])) < radius
    if not simple:
        rep.T = False
        rep.details["T"] = "disc(a) = 0"
    elif common:
        rep.T = False
        rep.details["T"] = "resultant(a, b) = 0"
    rep.T = rep.T and rep.R
    return rep


def constraint_values(sd, x=None):
    """Real vector of the defining constraints (reality, normalisation, residues) at x."""
    flags, g = sd.flags, sd.genus
    na, nb = flags.deg_a(g), flags.deg_b(g)
    s = sd if x is None else sd.from_vector(x)
    ia, ib = involution_image(flags, s.a, s.b, g)
    out = [ia.padded(na + 1) - s.a.padded(na + 1), ib.padded(nb + 1) - s.b.padded(nb + 1)]
    top = s.a.padded(na + 1)[-1]
    if flags.involution is Involution.REAL:
        out.append(np.array([top - 1.0]))
    else:
        out.append(np.array([abs(top) ** 2 - 1.0]))
    if flags.a_flag:
        out.append(residues(s))
    v = np.concatenate(out)
    return np.concatenate([v.real, v.imag])


def constraint_jacobian(sd, h=1e-7):
    """Forward-difference Jacobian of ``constraint_values`` in the real coordinates."""
    x0 = sd.to_vector()
    f0 = constraint_values(sd, x0)
    J = np.empty((f0.size, x0.size))
    for k in range(x0.size):
        x = x0.copy()
        x[k] += h
        J[:, k] = (constraint_values(sd, x) - f0) / h
    return J


def feasible_directions(sd):
    """Orthonormal basis (columns) of the tangent space of the constraint set."""
    J = constraint_jacobian(sd)
    u, s, vt = np.linalg.svd(J)
    rank = int(np.sum(s > 1e-5 * s[0]))
    return vt[rank:].T


def constraint_rank(sd):
    """Rank of the linearised constraints and the number of real coordinates."""
    J = constraint_jacobian(sd)
    s = np.linalg.svd(J, compute_uv=False)
    return int(np.sum(s > 1e-5 * s[0])), J.shape[1]


def free_dimension(sd):
    rank, n = constraint_rank(sd)
    return n - rank


# ---------------------------------------------------------------------------
# branch points and gamma
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BranchPoints:
    finite: np.ndarray
    infinite: bool
    multiple: bool = False

    def __len__(self):
        return len(self.finite) + int(self.infinite)

    def as_list(self):
        out = [complex(z) for z in self.finite]
        if self.infinite:
            out.append(np.inf)
        return out


def branch_points(sd):
    """Odd-order roots of nu**2 (plus infinity for a_flag=0).

    Even-order roots (double points) are not branch points; ``multiple`` flags
    any root of a of multiplicity > 1.
    """
    P = sd.P
    rts = roots(P)
    clusters = root_clusters(rts)
    finite = []
    multiple = False
    for center, mu in clusters:
        if mu > 1:
            multiple = True
        if mu % 2:
            finite.append(center)
    finite = np.array(finite, dtype=complex)
    finite = finite[np.lexsort((finite.imag, finite.real))] if finite.size else finite
    return BranchPoints(finite, sd.flags.a_flag == 0, multiple)


def gamma(sd):
    """gamma with omega - gamma d(nu lambda^(a_flag - g)) holomorphic at infinity."""
    nb = sd.flags.deg_b(sd.genus)
    bm = sd.b.padded(nb + 1)[-1]
    return 2.0 * bm / ((1.0 + sd.flags.a_flag) * sd.a.lead)


def gamma_residual(sd):
    """Leading coefficient of omega - gamma d(nu lambda^(a-g)) at infinity (should vanish)."""
    flags, g = sd.flags, sd.genus
    nb = flags.deg_b(g)
    n = sd.P.degree
    lc = sd.a.lead
    bm = sd.b.padded(nb + 1)[-1]
    # both differentials ~ const * lambda^(n/2 + a - g - 1) d lambda per unit sqrt(lc)
    lead_omega = bm / np.sqrt(lc)
    lead_exact = np.sqrt(lc) * (n / 2.0 + flags.a_flag - g)
    return lead_omega - gamma(sd) * lead_exact


# ---------------------------------------------------------------------------
# Moebius gauge
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MoebiusTransform:
    """lambda -> scale * lambda + shift."""

    scale: complex = 1.0
    shift: complex = 0.0

    def __call__(self, lam):
        return self.scale * lam + self.shift

    def check(self, flags):
        s, t = complex(self.scale), complex(self.shift)
        if s == 0:
            raise CurveError("degenerate Moebius transform")
        if flags.b_flag == 0:
            if abs(s.imag) > 0 or abs(t.imag) > 0:
                raise CurveError("b_flag=0 requires real scale and shift")
        else:
            if t != 0:
                raise CurveError("b_flag=1 admits no shift (0 and infinity are marked)")
            if flags.involution is Involution.REAL and s.imag != 0:
                raise CurveError("Real involution requires a real scale")
            if flags.involution is not Involution.REAL and abs(abs(s) - 1.0) > 1e-14:
                raise CurveError("unit-circle involutions require |scale| = 1")


def apply_moebius(sd, m):
    """Push (a, b) forward along lambda -> m(lambda), keeping omega as a pulled-back form."""
    flags, g = sd.flags, sd.genus
    m.check(flags)
    al, be = complex(m.scale), complex(m.shift)
    na = flags.deg_a(g)
    # new a(mu) = kappa a((mu - beta)/alpha), kappa chosen to renormalise
    a_new = sd.a.compose_affine(1.0 / al, -be / al)
    if flags.involution is Involution.REAL:
        kappa = 1.0 / a_new.lead
    else:
        kappa = al ** (na / 2.0)
        kappa = kappa / abs(kappa) / abs(a_new.lead)
    a_new = a_new * kappa
    # nu_new^2 = mu^k a_new(mu) = alpha^k kappa nu^2 ; omega invariance fixes b
    k = flags.nu_power
    e = flags.omega_power
    root = np.sqrt(complex(al ** k * kappa))
    if flags.involution is Involution.REAL and abs(root.imag) > 0:
        raise CurveError("orientation-reversing transform is not compatible with the reality condition")
    b_new = sd.b.compose_affine(1.0 / al, -be / al) * (al ** (e - 1) * root)
    out = sd.with_ab(a_new, b_new)
    if flags.involution is not Involution.REAL:
        # kappa is fixed only up to sign; kappa -> -kappa turns nu into i nu
        ia, ib = involution_image(flags, out.a, out.b, g)
        if np.max(np.abs(ib.padded(flags.deg_b(g) + 1) - out.b.padded(flags.deg_b(g) + 1))) > 1e-8 * _coeff_scale(out.b):
            out = sd.with_ab(-a_new, b_new * 1j)
    return out


# ---------------------------------------------------------------------------
# double points
# ---------------------------------------------------------------------------
def _normalize_p(flags, p):
    """Normalise p: monic (Real) or fixed by the a-type involution with Re(lead) > 0."""
    if flags.involution is Involution.REAL:
        return p / p.lead
    p = p / p.lead
    d = p.degree
    img = Polynomial(involution_apply(flags.involution, p.padded(d + 1), d))
    # img = eps * p with |eps| = 1; kappa**2 = eps makes kappa p fixed
    k = int(np.argmax(np.abs(p.coeffs)))
    eps = img.coeffs[k] / p.coeffs[k]
    kappa = np.sqrt(eps)
    q = p * kappa
    lead = q.lead
    if lead.real < 0 or (lead.real == 0 and lead.imag < 0):
        q = -q
    return q


def add_double_point(sd, p, check=True, tol=1e-8):
    """(a, b) -> (a p^2, b p); omega is unchanged.

    ``p`` must be normalised, fixed by the involution and vanish only where
    the local antiderivative of omega vanishes.
    """
    if p.degree == 0:
        return sd
    flags = sd.flags
    if check:
        d = p.degree
        if flags.involution is Involution.REAL:
            if abs(p.lead - 1) > 1e-12 or np.max(np.abs(p.coeffs.imag)) > 1e-12:
                raise CurveError("p must be monic and real")
        else:
            img = involution_apply(flags.involution, p.padded(d + 1), d)
            if np.max(np.abs(img - p.padded(d + 1))) > 1e-10 * _coeff_scale(p):
                raise CurveError("p must be fixed by the involution")
        from .periods import antiderivative

        anchors = branch_points(sd).finite
        if flags.a_flag == 0 and flags.b_flag == 1:
            anchors = anchors[np.abs(anchors) > 1e-14]
        for r in roots(p):
            if flags.b_flag and abs(r) < 1e-12:
                raise CurveError("p has a root in the marked set")
            # f is fixed up to the choice of branch point in its domain
            val = min(abs(antiderivative(sd, r, anchor=e)) for e in anchors)
            if val > tol:
                raise CurveError(f"p is not admissible: local antiderivative does not vanish at {r:.6g}")
    return SpectralData(flags, sd.genus + p.degree, sd.a * p * p, sd.b * p)


def remove_double_points(sd):
    """Split off the maximal p with p^2 | a and p | b; returns (reduced data, p)."""
    flags = sd.flags
    ra = roots(sd.a)
    clusters = root_clusters(ra, mult_radius(ra))
    rb = roots(sd.b) if sd.b.degree >= 1 else np.zeros(0, complex)
    used_b = np.zeros(len(rb), dtype=bool)
    radius = max(mult_radius(ra), 1e-6 * (1 + np.max(np.abs(ra))))
    p_roots = []
    for center, mu in clusters:
        k = mu // 2
        if k == 0:
            continue
        # greedy nearest matching of b-roots
        order = np.argsort(np.abs(rb - center)) if rb.size else []
        got = []
        for j in order:
            if len(got) == k:
                break
            if not used_b[j] and abs(rb[j] - center) < radius:
                got.append(j)
        if len(got) < k:
            raise CurveError(f"not in R: a has a root of multiplicity {mu} at {center:.6g} but b does not vanish there")
        used_b[got] = True
        p_roots.extend([center] * k)
    if not p_roots:
        return sd, Polynomial([1.0])
    p = _normalize_p(flags, Polynomial.from_roots(p_roots))
    a_red, ra_ = sd.a.divmod(p * p)
    b_red, rb_ = sd.b.divmod(p)
    return SpectralData(flags, sd.genus - p.degree, a_red, b_red), p


# ---------------------------------------------------------------------------
# local antiderivative f with d(f nu) = omega
# ---------------------------------------------------------------------------
def f_series(sd, lam0, order, P=None, rhs=None):
    """Taylor coefficients of f around a simple root lam0 of nu**2.

    Solves 2 f' P + f P' = 2 b / lambda^e, i.e. d(f nu) = omega, as a power
    series in x = lambda - lam0.
    ``P`` and ``rhs`` may be given directly (raw kernel use).
    """
    if P is None:
        P = sd.P
    n = order + 1
    p = P.compose_affine(1.0, lam0).padded(max(n + 2, P.degree + 1))
    scale = 1.0 + np.max(np.abs(P.coeffs))
    if abs(p[0]) > 1e-8 * scale * (1 + abs(lam0)) ** P.degree or abs(p[1]) < 1e-12 * scale:
        raise CurveError("lam0 is not a simple root of nu^2")
    if rhs is None:
        e = sd.flags.omega_power
        if e and abs(lam0) < 1e-14:
            raise CurveError("lam0 lies in the marked set")
        bser = sd.b.compose_affine(1.0, lam0).padded(n + 1)
        if e:
            inv = series_power(np.array([lam0, 1.0]), -float(e), n + 1)
            r = 2.0 * np.convolve(bser, inv)[: n + 1]
        else:
            r = 2.0 * bser
    else:
        r = np.asarray(rhs, dtype=complex)
        r = np.concatenate([r, np.zeros(max(0, n + 1 - len(r)))])
    f = np.zeros(n, dtype=complex)
    for k in range(n):
        acc = r[k]
        for j in range(2, k + 2):
            if j < len(p):
                acc -= (2 * (k - j + 1) + j) * p[j] * f[k - j + 1]
        f[k] = acc / ((2 * k + 1) * p[1])
    return f


def vanishing_order(coeffs, tol=1e-8):
    scale = np.max(np.abs(coeffs)) if len(coeffs) else 1.0
    for k, c in enumerate(coeffs):
        if abs(c) > tol * max(scale, 1e-300):
            return k
    return len(coeffs)


def xi_integral_root(sd, lam, anchor=None):
    """Value of the local antiderivative fν at lam (relative), anchored at the nearest branch point.

    Returns f(lam), which vanishes exactly at admissible double-point locations.
    """
    from .periods import antiderivative

    return antiderivative(sd, lam, anchor)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------
def _random_roots(flags, n, rng):
    inv = flags.involution
    out = []
    while len(out) + 2 <= n:
        if inv is Involution.REAL:
            z = rng.uniform(-1.5, 1.5) + 1j * rng.choice([-1, 1]) * rng.uniform(0.3, 1.2)
        else:
            z = rng.uniform(0.3, 0.75) * np.exp(2j * np.pi * rng.random())
        out.extend([z, point_image(inv, z)])
    if len(out) < n:
        out.append(rng.uniform(-1.5, 1.5))
    return out


def sign_convention(sd):
    """Standalone sign choice for the (0, 1) unit-circle case: lambda^(-g) a <= 0 on the circle."""
    f = sd.flags
    if f.involution is Involution.UNIT_CIRCLE and f.a_flag == 0 and f.b_flag == 1:
        if np.real(sd.a(1.0)) > 0:
            return sd.with_ab(-sd.a, sd.b * 1j)
    return sd


def random_spectral_data(flags, genus, rng=None, max_tries=50):
    """Random element of the normalised, real, residue-free space with a, b generic."""
    rng = np.random.default_rng(rng)
    na, nb = flags.deg_a(genus), flags.deg_b(genus)
    if na < 1:
        raise CurveError("a must have positive degree")
    if flags.involution is Involution.ANTI_UNIT_CIRCLE and nb % 2:
        raise CurveError("the anti-unit-circle involution has no fixed b of odd degree")
    for _ in range(max_tries):
        a = _normalize_p(flags, Polynomial.from_roots(_random_roots(flags, na, rng)))
        b = Polynomial(rng.normal(size=nb + 1) + 1j * rng.normal(size=nb + 1))
        sd = project_to_P(SpectralData(flags, genus, a, b))
        sd = sign_convention(sd)
        if sd.b.degree == nb and validate(sd).ok:
            return sd
    raise CurveError("could not construct valid random spectral data")
