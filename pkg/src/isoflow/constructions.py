"""Ready-made spectral data: a genus-2 demo and families that hit a collision."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import CaseFlags, Involution, SpectralData, random_spectral_data
from .flow import FlowOptions, integrate_flow, project_periods
from .periods import build_frame
from .poly import Polynomial
from .whitham import ConstantCMap, CPolynomial

__all__ = ["CollisionFamily", "demo_data", "singular_point", "manufactured_collision", "DEMO_SEED"]

DEMO_SEED = 20240607


@dataclass
class CollisionFamily:
    """Initial data sd0 at t0 whose flow under ``c`` reaches ``sd_star`` near t = 0."""

    sd0: SpectralData
    t0: float
    c: CPolynomial
    sd_star: SpectralData
    center: complex


def demo_data(seed=DEMO_SEED):
    """Generic genus-2 data, (0,1) case with the unit-circle involution."""
    flags = CaseFlags(0, 1, Involution.UNIT_CIRCLE)
    rng = np.random.default_rng(seed)
    return random_spectral_data(flags, 2, rng)


def singular_point(center=0.4 + 0.8j, real_roots=(-1.3, 1.6), b_root=-0.5, real_collision=False):
    """(0,1) genus-2 data with the Real involution and a common root of a and b.

    With ``real_collision`` the common root is the real number ``center.real``
    and the remaining a-roots are taken from ``real_roots`` plus a conjugate
    pair, so that the collision lies on the fixed set.
    """
    flags = CaseFlags(0, 1, Involution.REAL)
    if real_collision:
        x = complex(center).real
        a = Polynomial.from_roots([x, 0.3 + 1.1j, 0.3 - 1.1j, real_roots[1]])
        b = Polynomial.from_roots([x, 0.2 + 0.9j, 0.2 - 0.9j])
    else:
        z = complex(center)
        a = Polynomial.from_roots([z, z.conjugate(), *real_roots])
        b = Polynomial.from_roots([z, z.conjugate(), b_root])
    return SpectralData(flags, 2, a, b)


def default_c(flags=None, genus=2):
    flags = flags or CaseFlags(0, 1, Involution.REAL)
    return CPolynomial(Polynomial([1.0, 0.3, -0.2, 0.1]), flags.involution, flags.deg_c(genus))


def vanishing_c(center, flags=None, genus=2):
    """Real c of maximal degree that vanishes at ``center`` (and its conjugate)."""
    flags = flags or CaseFlags(0, 1, Involution.REAL)
    z = complex(center)
    p = Polynomial.from_roots([z, z.conjugate()]) * Polynomial([1.0, 0.5])
    return CPolynomial(Polynomial(p.coeffs.real), flags.involution, flags.deg_c(genus))


def manufactured_collision(s_in=2e-3, back=0.05, opts=None, **kwargs):
    """Flow data that collide at t = 0.

    An incoming state is placed by the blown-up chart at radius ``s_in``
    around the singular point, projected onto its period level set, and then
    integrated backwards by ``back``.
    """
    from .singular import chart_init, detect_singularity, reassemble

    opts = opts or FlowOptions()
    sd_star = singular_point(**kwargs)
    c = default_c(sd_star.flags, sd_star.genus)
    cmap = ConstantCMap(c)
    ev = detect_singularity(None, cmap, sd=sd_star)
    frame = build_frame(sd_star, opts.quad_tol)
    ev.frame = frame
    ch = chart_init(ev, +1)
    sd_in, frame, _ = project_periods(reassemble(ch, s_in), frame, opts.newton_tol, max_iter=8, quad_tol=opts.quad_tol)
    t_in = -ch.dt(s_in)
    traj = integrate_flow(sd_in, cmap, (t_in, t_in - back), opts, frame=frame)
    return CollisionFamily(traj.final, traj.samples[-1][0], c, sd_star, ev.clusters[0].center)


def admissible_double_point(sd, z0, tol=1e-13, maxiter=50):
    """Zero of the local antiderivative f near z0 (complex Newton).

    Uses f' = (2 b / lambda^e - f P') / (2 P), which follows from
    d(f nu) = omega.  Returns the zero and the fixed polynomial p whose
    roots are the zero and its mirror image.
    """
    from .curve import CurveError, Involution, _normalize_p, point_image
    from .periods import antiderivative

    P, dP = sd.P, sd.P.deriv()
    e = sd.flags.omega_power
    z = complex(z0)
    for _ in range(maxiter):
        f = antiderivative(sd, z)
        df = (2 * sd.b(z) / z**e - f * dP(z)) / (2 * P(z))
        step = f / df
        z -= step
        if abs(step) <= tol * (1 + abs(z)):
            break
    else:
        raise CurveError("Newton for an admissible double point did not converge")
    img = point_image(sd.flags.involution, z)
    if abs(img - z) <= 1e-10 * (1 + abs(z)):
        p = Polynomial([-z, 1.0])
        if sd.flags.involution is Involution.REAL:
            p = Polynomial([-z.real, 1.0])
    else:
        p = Polynomial.from_roots([z, img])
    return z, _normalize_p(sd.flags, p)
