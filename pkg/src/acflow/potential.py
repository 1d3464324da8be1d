"""Double-well potential, its structural constants, and the 1D standing wave.

The default quartic well W(s) = (1 - s^2)^2 / 4 admits alpha = sqrt(2/3),
beta = 1, gamma = 0. The standing wave q solves q' = sqrt(2 W(q)), q(0) = 0,
and carries the surface tension sigma = integral of sqrt(2 W) over [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import ValidationError

_NSAMPLE = 10_000       # validation sample density on [-1.05, 1.05]
_Q_TAIL = 1e-9          # table stops when 1 - |q| reaches this
_S_STALL = 60.0         # if |q| < 1 - 1e-6 beyond this s, the well is too flat


@dataclass
class PotentialSpec:
    """Double-well W with its derivatives and structural constants."""

    W: callable
    dW: callable
    d2W: callable
    alpha: float
    beta: float
    gamma: float
    name: str = "quartic"

    @classmethod
    def quartic(cls):
        return cls(W=lambda s: (1.0 - s * s) ** 2 / 4.0,
                   dW=lambda s: s * s * s - s,
                   d2W=lambda s: 3.0 * s * s - 1.0,
                   alpha=np.sqrt(2.0 / 3.0), beta=1.0, gamma=0.0)

    @classmethod
    def polynomial(cls, coeffs, alpha, beta, gamma, name="polynomial"):
        """W given by polynomial coefficients (numpy order, highest first)."""
        p = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float)[::-1])
        dp = p.deriv()
        d2p = dp.deriv()
        return cls(W=p, dW=dp, d2W=d2p, alpha=float(alpha), beta=float(beta),
                   gamma=float(gamma), name=name)

    def max_sqrt2w(self):
        s = np.linspace(-1.0, 1.0, _NSAMPLE)
        return float(np.sqrt(2.0 * self.W(s)).max())

    def max_d2w(self):
        s = np.linspace(-1.0, 1.0, _NSAMPLE)
        return float(np.abs(self.d2W(s)).max())


def validate_potential(p: PotentialSpec) -> dict:
    """Check the three structural conditions by dense sampling.

    Returns {"ok": bool, "conditions": [...]} where each condition carries its
    worst-case margin and a witness point when violated.
    """
    s = np.linspace(-1.05, 1.05, _NSAMPLE)
    conds = []

    ws = p.W(s)
    inner = np.abs(np.abs(s) - 1.0) > 1e-3
    w1_viol = (abs(p.W(1.0)) > 1e-10 or abs(p.W(-1.0)) > 1e-10
               or ws[inner].min() <= 0)
    witness1 = float(s[inner][np.argmin(ws[inner])]) if w1_viol else None
    conds.append({"name": "wells", "ok": not w1_viol,
                  "margin": float(ws[inner].min()), "witness": witness1})

    hi = s[(s > p.gamma + 1e-6) & (s < 1.0 - 1e-9)]
    lo = s[(s < p.gamma - 1e-6) & (s > -1.0 + 1e-9)]
    dhi = p.dW(hi)
    dlo = p.dW(lo)
    ok2 = bool((dhi < 0).all() and (dlo > 0).all())
    wit2 = None
    if not ok2:
        bad = hi[dhi >= 0]
        wit2 = float(bad[0]) if len(bad) else float(lo[dlo <= 0][0])
    conds.append({"name": "monotone-toward-wells", "ok": ok2,
                  "margin": float(min(-dhi.max(), dlo.min())), "witness": wit2})

    outer = s[(np.abs(s) >= p.alpha) & (np.abs(s) <= 1.0)]
    outer = np.concatenate([outer, [-1.0, -p.alpha, p.alpha, 1.0]])
    d2 = p.d2W(outer)
    margin3 = float(d2.min() - p.beta)
    ok3 = margin3 >= -1e-12
    wit3 = None if ok3 else float(outer[np.argmin(d2)])
    conds.append({"name": "convex-near-wells", "ok": ok3, "margin": margin3,
                  "witness": wit3})

    report = {"ok": all(c["ok"] for c in conds), "conditions": conds}
    return report


@dataclass
class StandingWave:
    """Transition profile q and surface tension sigma for a validated well."""

    sigma: float
    s_max: float
    _spline: CubicSpline = field(repr=False, default=None)

    def q(self, s):
        s = np.asarray(s, dtype=float)
        return np.clip(self._spline(np.clip(s, -self.s_max, self.s_max)),
                       -1.0, 1.0)

    def dq(self, s):
        s = np.asarray(s, dtype=float)
        out = self._spline.derivative()(np.clip(s, -self.s_max, self.s_max))
        return np.where(np.abs(s) >= self.s_max, 0.0, out)


def standing_wave(p: PotentialSpec) -> StandingWave:
    """Build q by quadrature in the profile variable.

    The substitution q = gamma + (1 - gamma) tanh(v) (resp. the mirrored form
    for q < gamma) turns s(q) = integral dq / sqrt(2 W(q)) into an integral
    with a smooth, bounded integrand, dodging the degenerate wells at +-1.
    """
    rep = validate_potential(p)
    if not rep["ok"]:
        bad = [c["name"] for c in rep["conditions"] if not c["ok"]]
        raise ValidationError(f"potential failed validation: {bad}")

    def branch(sign):
        # q runs from gamma toward sign*1
        span = sign * 1.0 - p.gamma
        vmax = np.arctanh(1.0 - _Q_TAIL / abs(span))
        n = 60_001
        v = np.linspace(0.0, vmax, n)
        q = p.gamma + span * np.tanh(v)
        dqdv = span / np.cosh(v) ** 2
        w = np.maximum(p.W(q), 1e-300)
        integrand = np.abs(dqdv) / np.sqrt(2.0 * w)
        s = integrate.cumulative_simpson(integrand, x=v, initial=0.0)
        return sign * s, q

    s_pos, q_pos = branch(+1.0)
    s_neg, q_neg = branch(-1.0)
    s_all = np.concatenate([s_neg[::-1][:-1], s_pos])
    q_all = np.concatenate([q_neg[::-1][:-1], q_pos])

    # stall check: how much arclength to get within 1e-6 of the wells
    i6 = np.searchsorted(q_pos, 1.0 - 1e-6)
    if i6 >= len(s_pos) or s_pos[min(i6, len(s_pos) - 1)] > _S_STALL:
        raise ValidationError("potential too flat: profile stalls before "
                              "reaching the wells within |s| <= 60")
    j6 = np.searchsorted(-q_neg, 1.0 - 1e-6)
    if j6 >= len(s_neg) or -s_neg[min(j6, len(s_neg) - 1)] > _S_STALL:
        raise ValidationError("potential too flat: profile stalls before "
                              "reaching the wells within |s| <= 60")

    sigma, _ = integrate.quad(lambda t: np.sqrt(2.0 * max(p.W(t), 0.0)),
                              -1.0, 1.0, limit=200, epsabs=1e-12, epsrel=1e-12)

    # spline directly over the quadrature nodes (the tanh substitution makes
    # them nearly uniform in s); an intermediate resample would cap the
    # derivative accuracy well above the 1e-8 residual target
    s_max = float(min(s_all[-1], -s_all[0]))
    keep = np.abs(s_all) <= s_max
    spline = CubicSpline(s_all[keep], q_all[keep], bc_type="natural")
    return StandingWave(sigma=float(sigma), s_max=s_max, _spline=spline)
