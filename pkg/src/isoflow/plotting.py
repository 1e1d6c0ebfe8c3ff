"""Static figures for trajectories (root paths and diagnostics).

Figures are written to files with the Agg backend; nothing is shown.
"""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def root_paths(traj):
    """Arrays (t, a-roots, b-roots) with roots ordered by continuity."""
    from scipy.optimize import linear_sum_assignment

    from .poly import roots

    ts, ra, rb = [], [], []
    for t, sd in traj.samples:
        xa, xb = roots(sd.a), roots(sd.b)
        if ra:
            for prev, cur in ((ra[-1], xa), (rb[-1], xb)):
                if len(prev) == len(cur) and len(cur):
                    _, col = linear_sum_assignment(np.abs(prev[:, None] - cur[None, :]))
                    cur[:] = cur[col]
        ts.append(t)
        ra.append(xa)
        rb.append(xb)
    return np.array(ts), np.array(ra), np.array(rb)


def plot_root_paths(traj, path, title=None):
    """Paths of the roots of a (solid) and b (dashed) in the lambda-plane."""
    plt = _pyplot()
    t, ra, rb = root_paths(traj)
    fig, ax = plt.subplots(figsize=(6, 6))
    for k in range(ra.shape[1]):
        ax.plot(ra[:, k].real, ra[:, k].imag, "-", lw=1.2, color=f"C{k % 10}")
        ax.plot(ra[0, k].real, ra[0, k].imag, "o", ms=4, color=f"C{k % 10}")
    for k in range(rb.shape[1]):
        ax.plot(rb[:, k].real, rb[:, k].imag, "--", lw=1.0, color="0.4")
        ax.plot(rb[0, k].real, rb[0, k].imag, "x", ms=5, color="0.4")
    for ev in traj.events:
        if ev["kind"] == "resultant_zero":
            ax.set_title(f"common root at t = {ev['t']:.6g}", fontsize=9)
    if title:
        fig.suptitle(title)
    ax.set_xlabel("Re λ")
    ax.set_ylabel("Im λ")
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_diagnostics(traj, path):
    """Resultant, discriminant and period residual against t (log scale)."""
    plt = _pyplot()
    t = traj.times
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, style in (("resultant", "-"), ("disc", "--"), ("period_residual", ":")):
        vals = np.array([d.get(key, np.nan) for d in traj.diagnostics], dtype=float)
        if np.any(np.isfinite(vals)):
            ax.semilogy(t, np.maximum(vals, 1e-300), style, label=key)
    for ev in traj.events:
        if ev["kind"] == "resultant_zero":
            ax.axvline(ev["t"], color="k", lw=0.8)
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_figures(traj, outdir, stem):
    """Both figures next to ``stem``.csv; returns the written paths."""
    import os

    p1 = plot_root_paths(traj, os.path.join(outdir, f"{stem}_roots.png"))
    p2 = plot_diagnostics(traj, os.path.join(outdir, f"{stem}_diagnostics.png"))
    return [p1, p2]
