"""Front-tracking oracle: polyline evolution by curvature in 2D.

Interior nodes move by the three-point curvature vector; endpoint-
constrained fronts keep their ends on the wall with the last segment
orthogonal to it (the endpoint is re-projected each step, which is exactly
the sliding that preserves orthogonality). Used to cross-check the
phase-field interface location, never as part of the solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrontExtinct, ValidationError

MIN_NODES = 6
CFL_FACTOR = 0.2


@dataclass
class Front:
    nodes: np.ndarray            # (K, 2), ordered
    closed: bool
    t: float = 0.0
    target_spacing: float = None

    @classmethod
    def circle(cls, center, radius, n=128):
        th = np.linspace(0, 2 * np.pi, n, endpoint=False)
        pts = np.stack([center[0] + radius * np.cos(th),
                        center[1] + radius * np.sin(th)], axis=1)
        return cls(nodes=pts, closed=True,
                   target_spacing=2 * np.pi * radius / n)

    @classmethod
    def chord(cls, geo, spec_line, spacing=None):
        """Straight front across the domain along an initial_data line spec."""
        a = np.deg2rad(spec_line.angle_deg)
        n = np.array([np.cos(a), np.sin(a)])
        v = np.array([-n[1], n[0]])
        base = spec_line.offset * n
        ts = np.linspace(-10, 10, 4001)
        pts = base[None, :] + ts[:, None] * v[None, :]
        dd = geo.signed_distance(pts)
        ins = np.nonzero(dd < 0)[0]
        if len(ins) < 3:
            raise ValidationError("chord misses the domain")
        lo, hi = ts[ins[0]], ts[ins[-1]]
        spacing = spacing or 2 * geo.h
        m = max(MIN_NODES + 2, int(np.ceil((hi - lo) / spacing)))
        ts = np.linspace(lo, hi, m)
        nodes = base[None, :] + ts[:, None] * v[None, :]
        fr = cls(nodes=nodes, closed=False, target_spacing=spacing)
        _project_endpoints(fr, geo)
        return fr

    def length(self):
        seg = np.diff(self.nodes, axis=0)
        L = float(np.linalg.norm(seg, axis=1).sum())
        if self.closed:
            L += float(np.linalg.norm(self.nodes[0] - self.nodes[-1]))
        return L

    def area(self):
        if not self.closed:
            raise ValidationError("area needs a closed front")
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        return 0.5 * float(np.abs(np.dot(x, np.roll(y, -1))
                                  - np.dot(y, np.roll(x, -1))))

    def spacings(self):
        seg = np.diff(self.nodes, axis=0)
        s = np.linalg.norm(seg, axis=1)
        if self.closed:
            s = np.append(s, np.linalg.norm(self.nodes[0] - self.nodes[-1]))
        return s


def _project_endpoints(fr, geo):
    from .geometry import nearest_point
    fr.nodes[0] = nearest_point(geo, fr.nodes[1])
    fr.nodes[-1] = nearest_point(geo, fr.nodes[-2])


def _curvature_vector(nodes, closed):
    """Three-point second derivative with respect to arclength."""
    if closed:
        prv = np.roll(nodes, 1, axis=0)
        nxt = np.roll(nodes, -1, axis=0)
        sp = np.linalg.norm(nodes - prv, axis=1)
        sn = np.linalg.norm(nxt - nodes, axis=1)
        return 2.0 * ((nxt - nodes) / sn[:, None] - (nodes - prv) / sp[:, None]) \
            / (sp + sn)[:, None]
    prv = nodes[:-2]
    cur = nodes[1:-1]
    nxt = nodes[2:]
    sp = np.linalg.norm(cur - prv, axis=1)
    sn = np.linalg.norm(nxt - cur, axis=1)
    out = np.zeros_like(nodes)
    out[1:-1] = 2.0 * ((nxt - cur) / sn[:, None] - (cur - prv) / sp[:, None]) \
        / (sp + sn)[:, None]
    return out


def _resample(fr):
    nodes = fr.nodes
    if fr.closed:
        pts = np.vstack([nodes, nodes[:1]])
    else:
        pts = nodes
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate(([0.0], np.cumsum(seg)))
    L = s[-1]
    m = max(MIN_NODES, int(round(L / fr.target_spacing)))
    if fr.closed:
        snew = np.linspace(0.0, L, m, endpoint=False)
    else:
        snew = np.linspace(0.0, L, m)
    fr.nodes = np.stack([np.interp(snew, s, pts[:, 0]),
                         np.interp(snew, s, pts[:, 1])], axis=1)


def evolve_front(fr: Front, dt, geo=None) -> Front:
    """One curvature step; resamples when the spacing drifts out of band.

    Raises FrontExtinct when fewer than MIN_NODES nodes survive.
    """
    sp = fr.spacings()
    if len(fr.nodes) < MIN_NODES or (fr.closed and fr.length() <
                                     MIN_NODES * fr.target_spacing / 2):
        raise FrontExtinct("front has collapsed")
    cap = CFL_FACTOR * float(sp.min()) ** 2
    if dt > cap * (1 + 1e-12):
        raise ValidationError(f"front dt {dt:.3g} above stability cap {cap:.3g}")
    kv = _curvature_vector(fr.nodes, fr.closed)
    nodes = fr.nodes + dt * kv
    out = Front(nodes=nodes, closed=fr.closed, t=fr.t + dt,
                target_spacing=fr.target_spacing)
    if not fr.closed:
        if geo is None:
            raise ValidationError("open fronts need the geometry")
        _project_endpoints(out, geo)
    sp = out.spacings()
    if sp.min() < 0.6 * out.target_spacing or sp.max() > 1.7 * out.target_spacing:
        _resample(out)
        if not out.closed:
            _project_endpoints(out, geo)
    if len(out.nodes) < MIN_NODES:
        raise FrontExtinct("front has collapsed")
    return out


def run_front(fr: Front, T, geo=None, dt=None, record_every=None):
    """Evolve to t + T with a per-step stability-capped dt.

    Returns (front, [(t, nodes), ...]). The requested dt is an upper bound;
    each step uses min(dt, 0.9 * cap) for the current spacing, so shrinking
    fronts stay stable until extinction.
    """
    rec = [(fr.t, fr.nodes.copy())]
    t_end = fr.t + T
    est = CFL_FACTOR * float(fr.spacings().min()) ** 2 * 0.9
    stride = record_every or max(1, int(np.ceil(T / est)) // 50)
    k = 0
    while fr.t < t_end - 1e-14:
        cap = 0.9 * CFL_FACTOR * float(fr.spacings().min()) ** 2
        dt_k = min(dt, cap) if dt else cap
        dt_k = min(dt_k, t_end - fr.t)
        fr = evolve_front(fr, dt_k, geo)
        k += 1
        if k % stride == 0:
            rec.append((fr.t, fr.nodes.copy()))
        if k > 10_000_000:
            raise ValidationError("front run exceeded the step budget")
    if rec[-1][0] != fr.t:
        rec.append((fr.t, fr.nodes.copy()))
    return fr, rec


def endpoint_orthogonality_deg(fr: Front, geo) -> float:
    """Worst angle (degrees) between an end segment and the wall normal."""
    if fr.closed:
        raise ValidationError("closed fronts have no endpoints")
    out = 0.0
    for end, adj in ((0, 1), (-1, -2)):
        seg = fr.nodes[adj] - fr.nodes[end]
        seg = seg / max(np.linalg.norm(seg), 1e-300)
        _, _, nu = geo._projector.project(fr.nodes[end][None, :], geo._sign)
        cosang = abs(float(seg @ nu[0]))
        out = max(out, np.degrees(np.arccos(min(cosang, 1.0))))
    return out


def hausdorff_distance(fr: Front, f, g) -> float:
    """Symmetric Hausdorff distance between the front and the zero set of u.

    Both curves are densified to half-cell resolution; an empty zero set
    reports infinity.
    """
    from scipy.spatial import cKDTree
    from .varifold import _zero_contours

    contours = _zero_contours(f, g)
    pts_u = []
    for c in contours:
        keep = g.interp(g.d, c) <= g.h     # clip mask-edge artifacts
        if keep.sum() >= 2:
            pts_u.append(c[keep])
    if not pts_u:
        return float("inf")
    A = np.vstack([_densify(c, g.h / 2.0) for c in pts_u])
    nodes = fr.nodes if not fr.closed else np.vstack([fr.nodes, fr.nodes[:1]])
    B = _densify(nodes, g.h / 2.0)
    da = cKDTree(B).query(A)[0].max()
    db = cKDTree(A).query(B)[0].max()
    return float(max(da, db))


def _densify(poly, target):
    seg = np.diff(poly, axis=0)
    ln = np.linalg.norm(seg, axis=1)
    out = [poly[:1]]
    for i in range(len(seg)):
        k = max(1, int(np.ceil(ln[i] / target)))
        ts = np.linspace(0, 1, k + 1)[1:]
        out.append(poly[i] + ts[:, None] * seg[i])
    return np.vstack(out)
