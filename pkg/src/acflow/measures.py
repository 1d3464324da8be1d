"""Diffused surface measure, discrepancy, density ratios, barrier diagnostic.

All cell sums use the same quadrature as solver.energy (inside cells, band
cells weighted by inside volume fraction), so the total measure equals the
energy to round-off. Ball masses over many centers are evaluated with FFT
convolutions against disk indicators; reflected-ball masses convolve the
measure pushed forward through the reflection map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .solver import PhaseField, apply_ghosts, grad_centered

OMEGA1 = 2.0               # measure of the unit 1-ball (2D normalization)
EXP_CUTOFF = -40.0         # kernel tails below e^-40 are dropped


@dataclass
class MeasureSnapshot:
    """Cell-weighted energy and discrepancy densities at one time."""

    e: np.ndarray            # eps |grad u|^2/2 + W(u)/eps per cell
    xi: np.ndarray           # eps |grad u|^2/2 - W(u)/eps per cell
    w: np.ndarray            # quadrature weight per cell (h^2 * fraction)
    t: float
    eps: float
    u: np.ndarray = None
    grad: tuple = None

    @property
    def ew(self):
        return self.e * self.w

    def total(self):
        return float(np.sum(self.e * self.w))


@dataclass
class DensityReport:
    value: float
    center: tuple
    radius: float
    reflected_branch: bool
    lam_prime: float
    lattice_spacing: float
    radii: tuple


def snapshot(f: PhaseField, g, p) -> MeasureSnapshot:
    """Densities by centered differences on the ghost-extended field."""
    apply_ghosts(f.u, g)
    gx, gy = grad_centered(f.u, g.h)
    kin = f.eps * (gx * gx + gy * gy) / 2.0
    pot = p.W(f.u) / f.eps
    w = g.frac * g.h * g.h
    return MeasureSnapshot(e=kin + pot, xi=kin - pot, w=w, t=f.t, eps=f.eps,
                           u=f.u, grad=(gx, gy))


def _disk_kernel(r, h):
    n = int(np.floor(r / h)) + 1
    off = h * np.arange(-n, n + 1)
    OX, OY = np.meshgrid(off, off)
    return (OX * OX + OY * OY < r * r).astype(float)


def ball_mass_field(density_w, g, r):
    """mu(B_r(center)) for every grid cell center, via FFT convolution."""
    ker = _disk_kernel(r, g.h)
    return fftconvolve(density_w, ker, mode="same")


def reflected_density(density_w, g):
    """Push the cell measure through the reflection map (bilinear deposit).

    Only collar cells carry a reflection; everything else contributes zero.
    Reflected positions can land beyond the domain's grid margin, so the
    deposit lives on a padded scratch grid; returns (padded array, pad).
    Ball sums of it approximate mu(B~_r(y)) = mu({x : |x~ - y| < r}).
    """
    m = g.collar & g.inside & (density_w != 0)
    vals = density_w[m]
    tx = g.tilde_x[m]
    ty = g.tilde_y[m]
    pad = int(np.ceil(6.0 * g.c2 / g.h)) + 2
    out = np.zeros((g.ny + 2 * pad, g.nx + 2 * pad))
    fx = (tx - g.x0) / g.h + pad
    fy = (ty - g.y0) / g.h + pad
    ix = np.floor(fx).astype(int)
    iy = np.floor(fy).astype(int)
    if ix.size and (ix.min() < 0 or iy.min() < 0 or ix.max() >= out.shape[1] - 1
                    or iy.max() >= out.shape[0] - 1):
        raise ValueError("reflected point beyond the padded deposit grid")
    ax = fx - ix
    ay = fy - iy
    np.add.at(out, (iy, ix), vals * (1 - ax) * (1 - ay))
    np.add.at(out, (iy, ix + 1), vals * ax * (1 - ay))
    np.add.at(out, (iy + 1, ix), vals * (1 - ax) * ay)
    np.add.at(out, (iy + 1, ix + 1), vals * ax * ay)
    return out, pad


def reflected_ball_mass_field(density_w, g, r):
    """mu(B~_r(center)) for every grid cell center, via the padded deposit."""
    arr, pad = reflected_density(density_w, g)
    ker = _disk_kernel(r, g.h)
    full = fftconvolve(arr, ker, mode="same")
    return full[pad:-pad, pad:-pad]


def _center_lattice(g, spacing_cells):
    iy = np.arange(0, g.ny, spacing_cells)
    ix = np.arange(0, g.nx, spacing_cells)
    return np.ix_(iy, ix)


def plain_ball_sup(density_w, g, radii=None, halo=0.5):
    """sup over lattice centers and radii of mu(B_r) / (omega_1 r).

    Centers run over the closed domain (cells with d below halo*h); this is
    the assumption-(6)-style ratio with no reflected term and unrestricted
    dyadic radii up to the domain diameter.
    """
    if radii is None:
        diam = g.h * max(g.nx, g.ny)
        radii = []
        r = diam
        while r >= 4 * g.h:
            radii.append(r)
            r /= 2.0
    spacing = max(1, int(round(g.c2 / (8.0 * g.h))))
    lat = _center_lattice(g, spacing)
    ok = g.d[lat] < halo * g.h
    best = 0.0
    arg = (0.0, 0.0, 0.0)
    for r in radii:
        mass = ball_mass_field(density_w, g, r)[lat]
        ratio = mass / (OMEGA1 * r)
        ratio = np.where(ok, ratio, -np.inf)
        j = np.unravel_index(np.argmax(ratio), ratio.shape)
        if ratio[j] > best:
            best = float(ratio[j])
            arg = (float(g.xs[lat[1].ravel()[j[1]]]),
                   float(g.ys[lat[0].ravel()[j[0]]]), float(r))
    return best, arg, tuple(radii)


def density_ratio(m: MeasureSnapshot, g, lam=0.6) -> DensityReport:
    """Two-branch supremal ball-mass ratio on a deterministic lattice.

    Centers within N_{c2/2} of the boundary add the reflected-ball mass;
    radii are dyadic fractions of c2, kept above 4h when possible (c2 itself
    is always included so coarse grids still report a value).
    """
    radii = []
    r = g.c2
    while r >= max(4 * g.h, g.c2 / 64.0):
        radii.append(r)
        r /= 2.0
    if not radii:
        radii = [g.c2]
    spacing = max(1, int(round(g.c2 / (8.0 * g.h))))
    lat = _center_lattice(g, spacing)
    dlat = g.d[lat]
    in_closed = dlat < 0.5 * g.h
    near = in_closed & (np.abs(dlat) < g.c2 / 2.0)
    interior = in_closed & ~near & (dlat < 0)

    dens = m.ew
    refl, pad = reflected_density(dens, g)
    best = 0.0
    arg_c, arg_r, arg_branch = (0.0, 0.0), 0.0, False
    for r in radii:
        mass = ball_mass_field(dens, g, r)[lat]
        rmass = fftconvolve(refl, _disk_kernel(r, g.h),
                            mode="same")[pad:-pad, pad:-pad][lat]
        ratio_near = np.where(near, (mass + rmass) / (OMEGA1 * r), -np.inf)
        ratio_int = np.where(interior, mass / (OMEGA1 * r), -np.inf)
        for ratio, branch in ((ratio_near, True), (ratio_int, False)):
            j = np.unravel_index(np.argmax(ratio), ratio.shape)
            if ratio[j] > best:
                best = float(ratio[j])
                arg_c = (float(g.xs[lat[1].ravel()[j[1]]]),
                         float(g.ys[lat[0].ravel()[j[0]]]))
                arg_r, arg_branch = float(r), branch
    return DensityReport(value=best, center=arg_c, radius=arg_r,
                         reflected_branch=arg_branch,
                         lam_prime=(1.0 + lam) / 2.0,
                         lattice_spacing=spacing * g.h, radii=tuple(radii))


def discrepancy_norms(m: MeasureSnapshot, g):
    """(positive-part sup, L1) of the discrepancy over inside cells."""
    xi_in = m.xi[g.inside]
    sup_pos = float(max(xi_in.max(), 0.0))
    l1 = float(np.sum(np.abs(m.xi) * m.w))
    return sup_pos, l1


def _psi_clamped(s, c2):
    """C^2 ramp: identity on [0, c2/2], slope easing to 0 by c2, flat after.

    Slope on the easing interval is 1 - (3x^2 - 2x^3), so |psi'| <= 1 and
    |psi''| <= 3/c2 <= 4/c2.
    """
    s = np.asarray(s, dtype=float)
    lo = c2 / 2.0
    x = np.clip((s - lo) / lo, 0.0, 1.0)
    ease = x - (x ** 3 - x ** 4 / 2.0)
    ease_at_1 = 1.0 - 0.5
    out = np.where(s <= lo, s, lo + lo * ease)
    out = np.where(s >= c2, lo + lo * ease_at_1, out)
    return out


def barrier_diagnostic(f: PhaseField, g, p, lam=0.6, c3=None) -> dict:
    """Grid maximum of the rescaled comparison function.

    In unit-scale variables v(y) = u(eps y), evaluates
        |grad v|^2/2 - W(v) - G(v) + eps phi(y),
    with G(s) = eps^(1-lam) (1 - (s-gamma)^2/8) and phi built from the
    boundary distance ramp. c3 defaults to the field's own sup eps |grad u|.
    """
    m = snapshot(f, g, p)
    eps = f.eps
    gx, gy = m.grad
    if c3 is None:
        gn = np.hypot(gx, gy)
        c3 = float((eps * gn[g.inside]).max())
    G = eps ** (1.0 - lam) * (1.0 - (f.u - p.gamma) ** 2 / 8.0)
    # psi takes the rescaled boundary distance |d|/eps against the same c2
    phi = g.kappa * (c3 * c3 + 1.0) * _psi_clamped(np.abs(g.d) / eps, g.c2)
    xi_tilde = eps * m.xi - G + eps * phi
    val = float(xi_tilde[g.inside].max())
    return {"max": val, "normalized": val / eps ** (1.0 - lam), "c3": c3,
            "lam": lam}
