"""First variation of the associated varifold, up to the boundary.

The level-set tangent projection I - n ⊗ n (n = grad u / |grad u|) paired
against grad g gives the direct first variation; the flow identity rewrites
it as a transport term, a discrepancy-weighted term, a boundary energy term,
and a zero-gradient remainder. The Brakke test-function identity and the
contact angle of the zero level set live here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure as _skmeasure

from .errors import ValidationError
from .measures import snapshot
from .solver import PhaseField, Trajectory, apply_ghosts, grad_centered

TANGENCY_TOL = 1e-8
ZERO_GRAD_SCALE = 1e-12     # |grad u| below ZERO_GRAD_SCALE/eps is "flat"
FD_DELTA = 1e-6             # step for fallback finite-difference grad g


@dataclass
class VectorFieldSpec:
    """Vector field g with an optional analytic Jacobian.

    func(X, Y) -> (G1, G2); jac(X, Y) -> (d1G1, d2G1, d1G2, d2G2).
    When tangent=True the field claims <g, nu> = 0 on the wall, checked
    against the boundary quadrature.
    """

    func: callable
    jac: callable = None
    tangent: bool = False

    def eval(self, X, Y):
        G1, G2 = self.func(X, Y)
        return np.broadcast_to(G1, X.shape).astype(float), \
            np.broadcast_to(G2, X.shape).astype(float)

    def eval_jac(self, X, Y):
        if self.jac is not None:
            out = self.jac(X, Y)
            return tuple(np.broadcast_to(c, X.shape).astype(float)
                         for c in out)
        d = FD_DELTA
        gxp = self.func(X + d, Y)
        gxm = self.func(X - d, Y)
        gyp = self.func(X, Y + d)
        gym = self.func(X, Y - d)
        return ((gxp[0] - gxm[0]) / (2 * d), (gyp[0] - gym[0]) / (2 * d),
                (gxp[1] - gxm[1]) / (2 * d), (gyp[1] - gym[1]) / (2 * d))

    def check_tangency(self, g):
        G1, G2 = self.func(g.boundary_pts[:, 0], g.boundary_pts[:, 1])
        dot = np.abs(G1 * g.boundary_normals[:, 0]
                     + G2 * g.boundary_normals[:, 1])
        worst = float(np.max(dot))
        if worst > TANGENCY_TOL:
            raise ValidationError(
                f"vector field claims tangency but <g,nu> reaches {worst:.3g}")
        return worst


@dataclass
class FirstVariationReport:
    direct: float
    transport: float
    discrepancy: float
    boundary: float
    zero_grad: float
    residual: float
    zero_grad_cells: int


def first_variation(f: PhaseField, gfield: VectorFieldSpec, geo, p) \
        -> FirstVariationReport:
    """Direct first variation against its four-term flow-identity rewrite.

    Requires f.last_rhs (the cached du/dt); cells with |grad u| below the
    zero-gradient threshold contribute through the potential remainder term.
    """
    if f.last_rhs is None:
        raise ValidationError("first_variation needs the cached du/dt "
                              "(run solver.compute_rhs first)")
    if gfield.tangent:
        gfield.check_tangency(geo)
    m = snapshot(f, geo, p)
    gx, gy = m.grad
    X, Y = geo.cell_centers()
    G1, G2 = gfield.eval(X, Y)
    d1G1, d2G1, d1G2, d2G2 = gfield.eval_jac(X, Y)

    gn = np.hypot(gx, gy)
    live = gn > ZERO_GRAD_SCALE / f.eps
    inv = np.where(live, 1.0 / np.where(live, gn, 1.0), 0.0)
    nx = gx * inv
    ny = gy * inv
    # grad g : (n ⊗ n) with n the level-set normal
    nn = d1G1 * nx * nx + d2G1 * nx * ny + d1G2 * ny * nx + d2G2 * ny * ny
    tr = d1G1 + d2G2
    w = m.w
    direct = float(np.sum(np.where(live, (tr - nn) * m.e, 0.0) * w))
    transport = float(np.sum(f.eps * f.last_rhs * (G1 * gx + G2 * gy) * w))
    disc = float(np.sum(np.where(live, nn * m.xi, 0.0) * w))
    eb = geo.interp(m.e, geo.boundary_pts)
    Gb1, Gb2 = gfield.func(geo.boundary_pts[:, 0], geo.boundary_pts[:, 1])
    boundary = float(np.sum((Gb1 * geo.boundary_normals[:, 0]
                             + Gb2 * geo.boundary_normals[:, 1])
                            * eb * geo.boundary_weights))
    flat = (~live) & geo.inside
    zero_grad = float(np.sum(np.where(flat, (p.W(f.u) / f.eps) * tr, 0.0) * w))
    residual = direct - (transport + disc + boundary - zero_grad)
    return FirstVariationReport(direct=direct, transport=transport,
                                discrepancy=disc, boundary=boundary,
                                zero_grad=zero_grad, residual=residual,
                                zero_grad_cells=int(np.count_nonzero(flat)))


def boundary_energy(f: PhaseField, geo, p) -> dict:
    """Boundary trace of the energy density and its interior comparison.

    Returns the arclength integral of e over the wall together with the
    dissipation integral int eps (du/dt)^2 dx; the additive constant that
    bounds their difference is calibrated by the caller and frozen.
    """
    if f.last_rhs is None:
        raise ValidationError("boundary_energy needs the cached du/dt")
    m = snapshot(f, geo, p)
    eb = geo.interp(m.e, geo.boundary_pts)
    integral = float(np.sum(eb * geo.boundary_weights))
    transport_sq = float(np.sum(f.eps * f.last_rhs ** 2 * m.w))
    return {"boundary_integral": integral, "transport_sq": transport_sq}


def brakke_identity_residual(traj: Trajectory, phi, t1, t2) -> float:
    """Relative residual of the test-function identity between t1 and t2.

    phi is the index of a test function registered with the run (0 is the
    constant), or a grid array matching one of them. The identity requires
    <grad phi, nu> = 0 on the wall; static test functions only.
    """
    if isinstance(phi, (int, np.integer)):
        idx = int(phi)
    else:
        phi = np.asarray(phi, dtype=float)
        idx = next((j for j, ph in enumerate(traj.phis)
                    if ph.shape == phi.shape and np.array_equal(ph, phi)), -1)
        if idx < 0:
            raise ValidationError("phi was not registered with this run")
    g = traj.g
    ph = traj.phis[idx]
    gpx, gpy = grad_centered(ph, g.h)
    dn = (g.interp(gpx, g.boundary_pts) * g.boundary_normals[:, 0]
          + g.interp(gpy, g.boundary_pts) * g.boundary_normals[:, 1])
    scale = max(float(np.hypot(gpx, gpy).max()), 1.0)
    if np.abs(dn).max() > TANGENCY_TOL * scale:
        raise ValidationError(
            "test function is not Neumann-compatible "
            f"(<grad phi, nu> reaches {np.abs(dn).max():.3g})")
    k1 = traj.step_index(t1)
    k2 = traj.step_index(t2)
    if not k1 < k2:
        raise ValidationError("need t1 < t2 within the trajectory")
    lhs = traj.mu_phi[idx, k2] - traj.mu_phi[idx, k1]
    rhs = traj.phi_cum[idx, k2] - traj.phi_cum[idx, k1]
    ref = traj.mu_phi[idx, k1]
    res = abs(lhs - rhs)
    return float(res / ref) if ref > 0 else float(res)


def _zero_contours(f: PhaseField, g):
    """Zero level set of u restricted to live cells (inside + ghost band)."""
    apply_ghosts(f.u, g)
    live = g.inside.copy()
    live[g.ghost_iy, g.ghost_ix] = True
    u = np.where(live, f.u, 1.0)
    out = []
    for c in _skmeasure.find_contours(u, 0.0):
        out.append(np.stack([g.x0 + c[:, 1] * g.h, g.y0 + c[:, 0] * g.h],
                            axis=1))
    return out


def contact_angle(f: PhaseField, geo) -> list:
    """Angle between the zero level set and the wall at each crossing.

    Returns [(crossing point, angle in degrees)], angle measured between
    the level-set direction (least-squares line over a 6 eps window of
    inside contour points) and the boundary tangent; 90 means orthogonal.
    """
    window = 6.0 * f.eps
    out = []
    for poly in _zero_contours(f, geo):
        if len(poly) < 3:
            continue
        dv = geo.interp(geo.d, poly)
        sgn = np.sign(dv)
        flips = np.nonzero(sgn[1:] * sgn[:-1] < 0)[0]
        for i in flips:
            a, b = dv[i], dv[i + 1]
            t = a / (a - b)
            cross = poly[i] * (1 - t) + poly[i + 1] * t
            sel = (np.linalg.norm(poly - cross, axis=1) < window) & (dv <= 0)
            pts = poly[sel]
            if len(pts) < 3:
                continue
            ctr = pts.mean(axis=0)
            _, _, vt = np.linalg.svd(pts - ctr, full_matrices=False)
            tang = vt[0]
            xi, _, nu = geo._projector.project(cross[None, :], geo._sign)
            tau = np.array([nu[0, 1], -nu[0, 0]])
            cosang = np.clip(np.abs(tang @ tau), 0.0, 1.0)
            out.append((cross, float(np.degrees(np.arccos(cosang)))))
    return out
