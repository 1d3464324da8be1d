"""Backward heat kernels, truncated and reflected, and their diagnostics.

The 1-codimensional backward kernel rho_(y,s)(x,t) = exp(-|x-y|^2/(4(s-t)))
/ sqrt(4 pi (s-t)) integrates to one along any line through y. Near the
boundary it is paired with its reflection through x~ and truncated by a
monotone bump supported in [0, c2/2). The boundary monotonicity quantity
exp(c3 (s-t)^(1/4)) * integral is tested with fitted existential constants;
the Gaussian density ratio and the clearing-out probe follow the same
kernel conventions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .measures import MeasureSnapshot, reflected_density

EXP_FLOOR = -40.0     # drop kernel tails below e^-40
C3_GRID = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass
class KernelProbe:
    """A (center, final time) pair; the cutoff radius comes from geometry."""

    y: tuple
    s: float
    ident: str = "probe"


def eta_cutoff(r, c2):
    """Monotone C^2 bump: 1 on [0, c2/4], 0 from just inside c2/2 on.

    Quintic smoothstep on the shoulder keeps eta' <= 0 with eta'(ends) = 0;
    the support stays strictly inside [0, c2/2).
    """
    r = np.asarray(r, dtype=float)
    lo = c2 / 4.0
    hi = c2 / 2.0 * (1.0 - 1e-9)
    x = np.clip((r - lo) / (hi - lo), 0.0, 1.0)
    s5 = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    return 1.0 - s5


def _rho_line(dist2, s_minus_t):
    arg = -dist2 / (4.0 * s_minus_t)
    out = np.zeros_like(arg)
    live = arg > EXP_FLOOR
    out[live] = np.exp(arg[live]) / np.sqrt(4.0 * np.pi * s_minus_t)
    return out


def _dist_to_boundary(g, y):
    return abs(float(g.signed_distance(np.asarray(y, dtype=float)[None, :])[0]))


def kernel_values(g, y, s, t, variant):
    """Grid of kernel values for the requested variant at time t.

    rho1 truncates around y; rho2 evaluates at the reflected point with the
    reflected cutoff and vanishes off the collar; "rho" is the untruncated
    interior kernel. rho2 participates only for centers within N_{c2/2}.
    """
    if t >= s:
        raise ValidationError("kernel needs t < s")
    st = s - t
    X, Y = g.cell_centers()
    d2 = (X - y[0]) ** 2 + (Y - y[1]) ** 2
    if variant == "rho":
        return _rho_line(d2, st)
    r = np.sqrt(d2)
    rho1 = eta_cutoff(r, g.c2) * _rho_line(d2, st)
    if variant == "rho1":
        return rho1
    if variant == "rho1+rho2":
        if _dist_to_boundary(g, y) >= g.c2 / 2.0:
            raise ValidationError(
                "reflected kernel variant needs the center in N_{c2/2}")
        with np.errstate(invalid="ignore"):
            dt2 = (g.tilde_x - y[0]) ** 2 + (g.tilde_y - y[1]) ** 2
        ok = g.collar & np.isfinite(dt2)
        dt2 = np.where(ok, dt2, np.inf)
        rho2 = np.where(ok, eta_cutoff(np.sqrt(dt2), g.c2)
                        * _rho_line(dt2, st), 0.0)
        return rho1 + rho2
    raise ValidationError(f"unknown kernel variant {variant!r}")


def kernel_integral(m: MeasureSnapshot, probe: KernelProbe, g,
                    variant="rho1") -> float:
    """Sum of kernel x energy density over the cell quadrature."""
    ker = kernel_values(g, probe.y, probe.s, m.t, variant)
    return float(np.sum(ker * m.e * m.w))


def monotonicity_series(traj, probe: KernelProbe, g, p, variant="rho1+rho2",
                        c3_grid=C3_GRID, t_min=0.0) -> dict:
    """Kernel integrals along a recorded run and fitted slack constants.

    For each recorded pair t_k < t_{k+1} < s the violation is
        (M_{k+1} - M_k)/dt - exp(c3 (s-t_k)^(1/4)) (c4 + K_k),
    M_k = exp(c3 (s-t_k)^(1/4)) I_k with I_k the kernel-energy integral and
    K_k the discrepancy kernel term. c4 is the smallest nonnegative constant
    closing all violations; c3 scans a fixed grid and keeps the minimizer.
    """
    from .measures import snapshot

    recs = [(i, f) for i, f in traj.recorded
            if f.t < probe.s and f.t >= t_min]
    if len(recs) < 3:
        raise ValidationError("need at least 3 recorded times before s")
    times = np.array([f.t for _, f in recs])
    I = np.zeros(len(recs))
    K = np.zeros(len(recs))
    for j, (_, f) in enumerate(recs):
        m = snapshot(f, g, p)
        ker = kernel_values(g, probe.y, probe.s, f.t, variant)
        I[j] = float(np.sum(ker * m.e * m.w))
        K[j] = float(np.sum(ker / (2.0 * (probe.s - f.t)) * m.xi * m.w))

    best = None
    for c3 in c3_grid:
        w = np.exp(c3 * (probe.s - times) ** 0.25)
        M = w * I
        dM = np.diff(M) / np.diff(times)
        need = dM / w[:-1] - K[:-1]
        c4 = float(max(0.0, need.max()))
        if best is None or c4 < best[1]:
            best = (c3, c4)
    c3, c4 = best
    w = np.exp(c3 * (probe.s - times) ** 0.25)
    M = w * I
    viol = np.diff(M) / np.diff(times) - w[:-1] * (c4 + K[:-1])
    return {"t": times, "M": M, "I": I, "K": K, "violation": viol,
            "c3": c3, "c4": c4, "variant": variant}


def gaussian_density(m: MeasureSnapshot, y, r, g) -> float:
    """Two-branch Gaussian density ratio at scale r.

    Centers in N_{c2/2} add the reflected term; normalization (2 sqrt(pi) r)
    makes a flat unit-density line through y read its line density.
    """
    if r <= 0:
        raise ValidationError("gaussian_density needs r > 0")
    y = np.asarray(y, dtype=float)
    X, Y = g.cell_centers()
    d2 = (X - y[0]) ** 2 + (Y - y[1]) ** 2
    ker = eta_cutoff(np.sqrt(d2), g.c2) * np.exp(-d2 / (4.0 * r * r))
    if _dist_to_boundary(g, y) < g.c2 / 2.0:
        with np.errstate(invalid="ignore"):
            dt2 = (g.tilde_x - y[0]) ** 2 + (g.tilde_y - y[1]) ** 2
        ok = g.collar & np.isfinite(dt2)
        dt2 = np.where(ok, dt2, np.inf)
        ker = ker + np.where(ok, eta_cutoff(np.sqrt(dt2), g.c2)
                             * np.exp(-dt2 / (4.0 * r * r)), 0.0)
    return float(np.sum(ker * m.e * m.w) / (2.0 * np.sqrt(np.pi) * r))


def clearing_out_probe(traj, y, t, delta0, g, p, alpha=None) -> dict:
    """Estimate limsup of the parabolic Gaussian density just after t, and
    whether transition cells survive near y at the doubled horizon.

    The limsup is read off the recorded times closest to t; the propagation
    check looks for cells with |u| < alpha inside B_{sqrt(s-t)/2}(y) at the
    recorded time nearest 2s - t for the smallest available s.
    """
    from .measures import snapshot

    if alpha is None:
        alpha = p.alpha
    y = np.asarray(y, dtype=float)
    later = [f for _, f in traj.recorded if f.t > t + 1e-14]
    if not later:
        raise ValidationError("no recorded times after t")
    vals = []
    for f in later[:3]:
        r = np.sqrt(f.t - t)
        m = snapshot(f, g, p)
        vals.append(gaussian_density(m, y, r, g))
    limsup = float(max(vals))
    s_star = later[0].t
    t_prime = 2.0 * s_star - t
    ts = np.array([f.t for _, f in traj.recorded])
    fq = traj.recorded[int(np.argmin(np.abs(ts - t_prime)))][1]
    rr = max(np.sqrt(s_star - t) / 2.0, 1.5 * g.h)   # grid resolution floor
    X, Y = g.cell_centers()
    near = g.inside & ((X - y[0]) ** 2 + (Y - y[1]) ** 2 < rr * rr)
    has_alpha = bool(np.any(np.abs(fq.u[near]) < alpha))
    clear = limsup < delta0
    return {"limsup": limsup, "clear": clear, "alpha_cells_later": has_alpha,
            "consistent": (not clear) or (not has_alpha),
            "samples": vals, "t_prime": float(fq.t)}
