"""Time integration of the scaled reaction-diffusion flow with zero flux.

du/dt = lap(u) - W'(u)/eps^2 on the inside cells; the zero-flux condition is
enforced by reflection ghost cells, u(ghost) = u interpolated at the
reflected point, reusing the geometry module's reflection map. Explicit
stepping preserves the maximum principle under the CFL policy; the
semi-implicit variant treats the Laplacian implicitly (sparse direct solve,
checked to the CG tolerance contract) and allows much larger steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import NumericalAbort, ValidationError

MAXNORM_TOL = 1e-6          # discrete maximum principle allowance
LINEAR_TOL = 1e-9           # relative residual contract for implicit solves
RESOLUTION_CAP = 1.0 / 3.0  # runs with h > eps/3 refuse to start


@dataclass
class PhaseField:
    """Scalar field on the full grid at one time, with the cached step rate."""

    u: np.ndarray
    eps: float
    t: float
    h: float
    last_rhs: np.ndarray | None = None   # du/dt on the full grid (0 outside)

    def copy(self):
        return PhaseField(self.u.copy(), self.eps, self.t, self.h,
                          None if self.last_rhs is None else self.last_rhs.copy())


@dataclass
class StepPolicy:
    dt: float
    scheme: str = "explicit"           # or "semi-implicit"
    safety: float = 0.2

    @classmethod
    def explicit_default(cls, g, p, eps, safety=0.2):
        return cls(dt=safety * explicit_dt_limit(g, p, eps), safety=safety)


def explicit_dt_limit(g, p, eps):
    """Unsafetied explicit step cap min(h^2/4, eps^2 / max |W''|)."""
    return min(g.h * g.h / 4.0, eps * eps / p.max_d2w())


def check_resolution(g, eps):
    if g.h > eps * RESOLUTION_CAP + 1e-15:
        raise ValidationError(
            f"h = {g.h:.4g} exceeds eps/3 = {eps/3:.4g}; refusing to run")


def make_field(u, g, eps, t=0.0):
    u = np.asarray(u, dtype=float)
    if u.shape != (g.ny, g.nx):
        raise ValidationError("field shape does not match the grid")
    return PhaseField(u=u.copy(), eps=float(eps), t=float(t), h=g.h)


def apply_ghosts(u, g):
    """Populate the ghost band by interpolation at the reflected points."""
    from .geometry import ghost_values
    u[g.ghost_iy, g.ghost_ix] = ghost_values(g, u[g.inside_iy, g.inside_ix])


def laplacian5(u, h, out=None):
    """5-point Laplacian, valid wherever a cell's 4-neighborhood has values."""
    if out is None:
        out = np.zeros_like(u)
    out[1:-1, 1:-1] = (u[1:-1, 2:] + u[1:-1, :-2] + u[2:, 1:-1]
                       + u[:-2, 1:-1] - 4.0 * u[1:-1, 1:-1]) / (h * h)
    return out


def laplacian4(u, h, out=None):
    """4th-order centered Laplacian; independent of the solver stencil, used
    by diagnostics that must not inherit the scheme's own spatial error."""
    if out is None:
        out = np.zeros_like(u)
    c = 12.0 * h * h
    out[2:-2, 2:-2] = (
        (-u[2:-2, 4:] + 16 * u[2:-2, 3:-1] - 30 * u[2:-2, 2:-2]
         + 16 * u[2:-2, 1:-3] - u[2:-2, :-4])
        + (-u[4:, 2:-2] + 16 * u[3:-1, 2:-2] - 30 * u[2:-2, 2:-2]
           + 16 * u[1:-3, 2:-2] - u[:-4, 2:-2])) / c
    return out


def grad_centered(u, h):
    """4th-order centered gradient (gx, gy); zero on a 2-cell margin."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, 2:-2] = (-u[:, 4:] + 8 * u[:, 3:-1] - 8 * u[:, 1:-3] + u[:, :-4]) \
        / (12 * h)
    gy[2:-2, :] = (-u[4:, :] + 8 * u[3:-1, :] - 8 * u[1:-3, :] + u[:-4, :]) \
        / (12 * h)
    return gx, gy


def compute_rhs(f: PhaseField, g, p) -> PhaseField:
    """Fill ghosts and cache the spatial operator value as du/dt."""
    apply_ghosts(f.u, g)
    lap = laplacian5(f.u, g.h)
    rhs = lap - p.dW(f.u) / (f.eps * f.eps)
    rhs[~g.inside] = 0.0
    f.last_rhs = rhs
    return f


def _semi_implicit_matrix(g, dt):
    """Extended system [inside; ghosts] for I - dt * Laplacian.

    Ghost values are unknowns slaved to the reflection interpolation,
    (I - G) v = B u, so the Laplacian rows can reference them directly
    instead of folding a dense inverse into the inside block.
    """
    h2 = g.h * g.h
    n = len(g.inside_iy)
    ng = len(g.ghost_iy)
    ids = -np.ones((g.ny, g.nx), dtype=np.int64)
    ids[g.inside_iy, g.inside_ix] = np.arange(n)
    gids = -np.ones((g.ny, g.nx), dtype=np.int64)
    gids[g.ghost_iy, g.ghost_ix] = np.arange(len(g.ghost_iy))

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 1.0 + 4.0 * dt / h2)]
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        niy = g.inside_iy + dy
        nix = g.inside_ix + dx
        nid = ids[niy, nix]
        gid = gids[niy, nix]
        hit = nid >= 0
        ghit = gid >= 0
        if not (hit | ghit).all():
            raise ValidationError("stencil leaks outside the ghost band")
        rows.append(np.nonzero(hit)[0])
        cols.append(nid[hit])
        vals.append(np.full(int(hit.sum()), -dt / h2))
        rows.append(np.nonzero(ghit)[0])
        cols.append(n + gid[ghit])
        vals.append(np.full(int(ghit.sum()), -dt / h2))
    top = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n + ng))
    bottom = sparse.hstack(
        [-g.ghost_B, sparse.identity(ng, format="csr") - g.ghost_G],
        format="csr")
    return sparse.vstack([top, bottom], format="csc")


class _Stepper:
    """Owns the mutable field during stepping; reuses buffers and factors."""

    def __init__(self, g, p, eps, pol):
        check_resolution(g, eps)
        self.g, self.p, self.eps, self.pol = g, p, eps, pol
        if pol.scheme not in ("explicit", "semi-implicit"):
            raise ValidationError(f"unknown scheme {pol.scheme!r}")
        if pol.scheme == "explicit":
            cap = pol.safety * explicit_dt_limit(g, p, eps)
            if pol.dt > cap * (1 + 1e-12):
                raise ValidationError(
                    f"explicit dt {pol.dt:.3g} violates the CFL policy cap "
                    f"{cap:.3g}")
            self._lu = None
            self._A = None
        else:
            self._A = _semi_implicit_matrix(g, pol.dt)
            self._lu = splu(self._A)
        self._lapbuf = None

    def advance(self, f: PhaseField) -> PhaseField:
        g, p, dt = self.g, self.p, self.pol.dt
        eps2 = f.eps * f.eps
        u = f.u
        apply_ghosts(u, g)
        if self._lapbuf is None:
            self._lapbuf = np.zeros_like(u)
        lap = laplacian5(u, g.h, out=self._lapbuf)
        rhs = lap - p.dW(u) / eps2
        if self.pol.scheme == "explicit":
            unew = u.copy()
            uin = u[g.inside_iy, g.inside_ix] \
                + dt * rhs[g.inside_iy, g.inside_ix]
            unew[g.inside_iy, g.inside_ix] = uin
            rate = np.zeros_like(u)
            rate[g.inside_iy, g.inside_ix] = rhs[g.inside_iy, g.inside_ix]
        else:
            n = len(g.inside_iy)
            b = np.zeros(self._A.shape[0])
            b[:n] = u[g.inside_iy, g.inside_ix] \
                - dt * p.dW(u[g.inside_iy, g.inside_ix]) / eps2
            z = self._lu.solve(b)
            res = np.linalg.norm(self._A @ z - b)
            if not np.isfinite(res) or res > LINEAR_TOL * max(np.linalg.norm(b), 1e-300):
                raise NumericalAbort(
                    f"implicit solve residual {res:.3g} above tolerance")
            uin = z[:n]
            unew = u.copy()
            unew[g.inside_iy, g.inside_ix] = uin
            rate = np.zeros_like(u)
            rate[g.inside_iy, g.inside_ix] = \
                (uin - u[g.inside_iy, g.inside_ix]) / dt
        if not np.isfinite(uin).all():
            err = NumericalAbort(f"NaN detected at t = {f.t:.6g}")
            err.field = f
            raise err
        out = PhaseField(u=unew, eps=f.eps, t=f.t + dt, h=f.h, last_rhs=rate)
        apply_ghosts(out.u, g)
        return out


def step(f: PhaseField, pol: StepPolicy, g, p) -> PhaseField:
    """Advance one step; per-call stepper (use Trajectory runs for speed)."""
    return _Stepper(g, p, f.eps, pol).advance(f)


# -- energy and identities ----------------------------------------------------

def energy_density(f: PhaseField, g, p):
    """Pointwise eps |grad u|^2 / 2 + W(u)/eps with centered differences."""
    apply_ghosts(f.u, g)
    gx, gy = grad_centered(f.u, g.h)
    return f.eps * (gx * gx + gy * gy) / 2.0 + p.W(f.u) / f.eps


def energy(f: PhaseField, g, p) -> float:
    """Total energy: midpoint sum over inside cells, band cells weighted by
    their inside volume fraction."""
    e = energy_density(f, g, p)
    return float(np.sum(e * g.frac) * g.h * g.h)


@dataclass
class Trajectory:
    """A completed run: per-step scalars plus recorded field snapshots.

    `phis` are Neumann-compatible test functions registered before the run;
    index 0 is always the constant 1, whose accumulator is the plain
    dissipation integral.
    """

    g: object
    p: object
    pol: StepPolicy
    eps: float
    times: np.ndarray = None                 # every step (nsteps+1,)
    energies: np.ndarray = None
    max_abs_u: np.ndarray = None
    diss_cum: np.ndarray = None               # cumulative int eps (du/dt)^2
    phi_cum: np.ndarray = None                # (nphi, nsteps+1) Brakke integrals
    mu_phi: np.ndarray = None                 # (nphi, nsteps+1) mu_t(phi)
    recorded: list = field(default_factory=list)   # (index, PhaseField)
    phis: list = field(default_factory=list)

    def recorded_times(self):
        return np.array([f.t for _, f in self.recorded])

    def field_at(self, t):
        ts = self.recorded_times()
        return self.recorded[int(np.argmin(np.abs(ts - t)))][1]

    def step_index(self, t):
        return int(np.argmin(np.abs(self.times - t)))


def evolve(f0: PhaseField, pol: StepPolicy, g, p, T, record_every=None,
           phis=None) -> Trajectory:
    """Run from f0 to t = f0.t + T, recording snapshots every `record_every`
    steps (None records only the endpoints)."""
    nsteps = int(np.ceil(T / pol.dt - 1e-12))
    stepper = _Stepper(g, p, f0.eps, pol)
    w = g.frac * g.h * g.h
    phi_list = [np.ones_like(f0.u)] + [np.asarray(ph, dtype=float)
                                       for ph in (phis or [])]
    gphi = [grad_centered(ph, g.h) for ph in phi_list]
    nphi = len(phi_list)

    traj = Trajectory(g=g, p=p, pol=pol, eps=f0.eps)
    times = np.zeros(nsteps + 1)
    energies = np.zeros(nsteps + 1)
    maxu = np.zeros(nsteps + 1)
    diss = np.zeros(nsteps + 1)
    phic = np.zeros((nphi, nsteps + 1))
    muphi = np.zeros((nphi, nsteps + 1))
    traj.phis = phi_list

    f = compute_rhs(f0.copy(), g, p)
    e = energy_density(f, g, p)
    times[0], energies[0] = f.t, float(np.sum(e * w))
    maxu[0] = float(np.abs(f.u[g.inside_iy, g.inside_ix]).max())
    for j, ph in enumerate(phi_list):
        muphi[j, 0] = float(np.sum(e * ph * w))
    traj.recorded.append((0, f.copy()))

    for k in range(nsteps):
        fn = stepper.advance(f)
        rate = fn.last_rhs
        gx, gy = grad_centered(f.u, g.h)   # gradient at the step start
        dt = pol.dt
        diss[k + 1] = diss[k] + dt * f.eps * float(np.sum(rate * rate * w))
        e = energy_density(fn, g, p)
        times[k + 1] = fn.t
        energies[k + 1] = float(np.sum(e * w))
        maxu[k + 1] = float(np.abs(fn.u[g.inside_iy, g.inside_ix]).max())
        for j, ph in enumerate(phi_list):
            gpx, gpy = gphi[j]
            tr = float(np.sum(rate * (gpx * gx + gpy * gy) * w))
            sq = float(np.sum(rate * rate * ph * w))
            phic[j, k + 1] = phic[j, k] + dt * f.eps * (-sq - tr)
            muphi[j, k + 1] = float(np.sum(e * ph * w))
        f = fn
        if record_every and (k + 1) % record_every == 0:
            traj.recorded.append((k + 1, f.copy()))
    if traj.recorded[-1][0] != nsteps:
        traj.recorded.append((nsteps, f.copy()))

    traj.times, traj.energies, traj.max_abs_u = times, energies, maxu
    traj.diss_cum = diss
    traj.phi_cum, traj.mu_phi = phic, muphi
    return traj


def dissipation_identity_residual(traj: Trajectory, upto=None) -> float:
    """|E(T) + sum_k dt int eps (du/dt)^2 - E(0)| relative to E(0)."""
    k = len(traj.times) - 1 if upto is None else traj.step_index(upto)
    e0 = traj.energies[0]
    res = abs(traj.energies[k] + traj.diss_cum[k] - e0)
    return float(res / e0) if e0 > 1e-12 else float(res)


def neumann_residual(f: PhaseField, g) -> float:
    """max |<grad u, nu>| over the boundary quadrature points."""
    apply_ghosts(f.u, g)
    gx, gy = grad_centered(f.u, g.h)
    gxb = g.interp(gx, g.boundary_pts)
    gyb = g.interp(gy, g.boundary_pts)
    nrm = g.boundary_normals
    return float(np.abs(gxb * nrm[:, 0] + gyb * nrm[:, 1]).max())


def parabolic_rescale_check(f: PhaseField, pol: StepPolicy, g, p,
                            eps_override=None) -> float:
    """Residual of the unit-scale equation after y = x/eps, tau = t/eps^2.

    Takes two steps from f and evaluates d_tau v - lap_y v + W'(v) at the
    middle field by the chain rule, with a centered time difference between
    the stored neighbors. An eps_override deliberately mismatched to the
    field's eps serves as a negative control.
    """
    eps = f.eps if eps_override is None else float(eps_override)
    stepper = _Stepper(g, p, f.eps, pol)
    f0 = compute_rhs(f.copy(), g, p)
    f1 = stepper.advance(f0)
    f2 = stepper.advance(f1)
    dtau = pol.dt / (eps * eps)
    dv = (f2.u - f0.u) / (2.0 * dtau)
    apply_ghosts(f1.u, g)
    lap = laplacian4(f1.u, g.h) * (eps * eps)
    res = dv - lap + p.dW(f1.u)
    core = g.inside & (g.d < -2.0 * g.h)
    return float(np.abs(res[core][::2]).max())
