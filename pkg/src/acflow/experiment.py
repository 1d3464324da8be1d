"""Configuration, orchestration, sweeps, and deterministic artifacts.

Configs are plain text, one dotted key per line (`domain.kind = flower`),
language-neutral and hashable; outputs are CSVs with full-precision decimal
floats, per-run checkpoints in the PFLD v1 text format, and a manifest that
freezes every fitted constant so reruns can assert stability.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy
import skimage

from . import __version__
from .errors import NumericalAbort, ValidationError
from .geometry import DomainSpec, build_domain
from .initial_data import InterfaceSpec, prepare
from .kernels import KernelProbe, monotonicity_series
from .measures import barrier_diagnostic, density_ratio, discrepancy_norms, \
    snapshot
from .mcf_reference import Front, hausdorff_distance, run_front
from .potential import PotentialSpec, standing_wave
from .solver import PhaseField, StepPolicy, Trajectory, \
    dissipation_identity_residual, evolve, explicit_dt_limit, make_field
from .varifold import brakke_identity_residual, contact_angle, \
    boundary_energy

SERIES_COLUMNS = ("t", "E", "dissipation_residual", "sup_disc_pos",
                  "l1_disc", "density_ratio", "contact_angle_deg",
                  "brakke_residual", "boundary_energy", "barrier_max")


# -- config ------------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """Flat dotted-key config; values are int, float, float lists, or str."""
    cfg = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {ln}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        cfg[key] = _parse_value(val)
    return cfg


def _parse_value(val):
    parts = val.split()
    if len(parts) > 1:
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            return val
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        return val


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_hash(cfg: dict) -> str:
    canon = "\n".join(f"{k} = {cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _domain_spec(cfg) -> DomainSpec:
    kind = cfg.get("domain.kind", "disk")
    if kind == "disk":
        return DomainSpec.disk(cfg.get("domain.radius", 1.0))
    if kind == "flower":
        return DomainSpec.flower(cfg.get("domain.r0", 1.0),
                                 cfg.get("domain.amplitude", 0.2),
                                 int(cfg.get("domain.petals", 3)))
    if kind == "capsule":
        return DomainSpec.capsule(cfg.get("domain.length", 2.4),
                                  cfg.get("domain.width", 0.8))
    if kind == "custom":
        bbox = cfg.get("domain.bbox")
        if bbox is None or len(bbox) != 4:
            raise ValidationError("custom domain needs domain.bbox = "
                                  "xmin xmax ymin ymax")
        return DomainSpec.custom(cfg.get("domain.expr", ""),
                                 ((bbox[0], bbox[1]), (bbox[2], bbox[3])))
    raise ValidationError(f"unknown domain.kind {kind!r}")


def _potential_spec(cfg) -> PotentialSpec:
    name = cfg.get("potential.name", "quartic")
    if name == "quartic":
        return PotentialSpec.quartic()
    if name == "polynomial":
        coeffs = cfg.get("potential.coeffs")
        if coeffs is None:
            raise ValidationError("polynomial potential needs "
                                  "potential.coeffs")
        return PotentialSpec.polynomial(
            coeffs, cfg.get("potential.alpha", np.sqrt(2 / 3)),
            cfg.get("potential.beta", 1.0), cfg.get("potential.gamma", 0.0))
    raise ValidationError(f"unknown potential.name {name!r}")


def _interface_spec(cfg) -> InterfaceSpec:
    kind = cfg.get("interface.kind", "line")
    orient = float(cfg.get("interface.orientation", 1.0))
    if kind == "line":
        return InterfaceSpec.line(cfg.get("interface.offset", 0.0),
                                  cfg.get("interface.angle_deg", 0.0),
                                  orient)
    if kind == "circle":
        center = cfg.get("interface.center", (0.0, 0.0))
        return InterfaceSpec.circle(center,
                                    cfg.get("interface.radius", 0.5), orient)
    if kind == "polyline":
        pts = cfg.get("interface.points")
        if pts is None or len(pts) % 2:
            raise ValidationError("interface.points needs x y pairs")
        pairs = [(pts[i], pts[i + 1]) for i in range(0, len(pts), 2)]
        return InterfaceSpec.polyline(pairs, orient)
    raise ValidationError(f"unknown interface.kind {kind!r}")


def _eps_list(cfg):
    eps = cfg.get("eps.list", cfg.get("eps.value", 0.08))
    if isinstance(eps, (int, float)):
        return [float(eps)]
    return [float(e) for e in eps]


def _h_for(cfg, eps):
    rule = cfg.get("h.rule", "eps/4")
    try:
        h = eval(str(rule), {"__builtins__": {}}, {"eps": eps})
    except Exception as exc:
        raise ValidationError(f"bad h.rule {rule!r}: {exc}") from exc
    h = float(h)
    if h > eps / 3.0 + 1e-15:
        raise ValidationError(f"h.rule gives h = {h:.4g} > eps/3 for "
                              f"eps = {eps}")
    return h


def _policy(cfg, g, p, eps) -> StepPolicy:
    scheme = cfg.get("dt.scheme", "explicit")
    safety = float(cfg.get("dt.safety", 0.2))
    if scheme == "explicit":
        dt = cfg.get("dt.value")
        cap = safety * explicit_dt_limit(g, p, eps)
        return StepPolicy(dt=float(dt) if dt else cap, scheme="explicit",
                          safety=safety)
    if scheme == "semi-implicit":
        dt = cfg.get("dt.value")
        if dt is None:
            raise ValidationError("semi-implicit runs need dt.value")
        return StepPolicy(dt=float(dt), scheme="semi-implicit", safety=safety)
    raise ValidationError(f"unknown dt.scheme {scheme!r}")


def _bump_phi(cfg, g):
    """Neumann-compatible test function 1 + A * bump for the Brakke column."""
    c = cfg.get("brakke.center", (0.0, 0.0))
    R = float(cfg.get("brakke.radius", 0.0))
    A = float(cfg.get("brakke.amplitude", 1.0))
    if R <= 0:
        # auto: largest bump fitting well inside the domain around its center
        dc = abs(float(g.signed_distance(np.array([c], dtype=float))[0]))
        R = 0.6 * dc
    X, Y = g.cell_centers()
    rho2 = ((X - c[0]) ** 2 + (Y - c[1]) ** 2) / (R * R)
    bump = np.where(rho2 < 1.0, (1.0 - rho2) ** 3, 0.0)
    return 1.0 + A * bump


# -- formatting ---------------------------------------------------------------

def _fmt(x):
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "nan"
    return repr(float(x))


def write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def save_checkpoint(path, f: PhaseField, g):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"PFLD v1 {g.nx} {g.ny} {_fmt(g.h)} {_fmt(f.eps)} "
                 f"{_fmt(f.t)}\n")
        for iy in range(g.ny):
            fh.write(" ".join(_fmt(v) for v in f.u[iy]) + "\n")


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline().split()
        if head[:2] != ["PFLD", "v1"]:
            raise ValidationError(f"{path}: not a PFLD v1 checkpoint")
        nx, ny = int(head[2]), int(head[3])
        h, eps, t = float(head[4]), float(head[5]), float(head[6])
        u = np.loadtxt(fh, dtype=float).reshape(ny, nx)
    return {"u": u, "nx": nx, "ny": ny, "h": h, "eps": eps, "t": t}


# -- single run ---------------------------------------------------------------

class RunResult:
    def __init__(self, outdir, traj, g, p, wave, prepared, rows, fitted):
        self.outdir = outdir
        self.traj = traj
        self.g = g
        self.p = p
        self.wave = wave
        self.prepared = prepared
        self.rows = rows
        self.fitted = fitted


def run(cfg: dict, outdir, eps=None, seed=0) -> RunResult:
    """Execute one run and write series.csv, checkpoints, and the manifest."""
    os.makedirs(outdir, exist_ok=True)
    eps = float(eps if eps is not None else _eps_list(cfg)[0])
    T = float(cfg.get("time.final", 0.02))
    if T <= 0:
        raise ValidationError("time.final must be positive")
    lam = float(cfg.get("initial.lam", 0.6))

    p = _potential_spec(cfg)
    wave = standing_wave(p)
    g = build_domain(_domain_spec(cfg), _h_for(cfg, eps))
    pf = prepare(g, p, _interface_spec(cfg), eps, lam=lam, wave=wave)
    noise = float(cfg.get("initial.noise_amp", 0.0))
    if noise > 0:
        rng = np.random.default_rng(int(cfg.get("seed", seed)))
        pf.field.u = np.clip(
            pf.field.u + noise * rng.standard_normal(pf.field.u.shape),
            -1.0, 1.0)

    pol = _policy(cfg, g, p, eps)
    nrec = int(cfg.get("record.count", 40))
    nsteps = int(np.ceil(T / pol.dt))
    stride = max(1, nsteps // max(nrec, 1))
    phi = _bump_phi(cfg, g)
    traj = evolve(pf.field, pol, g, p, T=T, record_every=stride, phis=[phi])

    rows = []
    dens_report = None
    zrows = []
    for idx, f in traj.recorded:
        for poly in _zero_polylines(f, g):
            for x, y in poly:
                zrows.append((f.t, x, y))
        m = snapshot(f, g, p)
        sup_pos, l1 = discrepancy_norms(m, g)
        dens = density_ratio(m, g, lam=lam)
        dens_report = dens
        crossings = contact_angle(f, g)
        if crossings:
            worst = max(crossings, key=lambda c: abs(c[1] - 90.0))[1]
        else:
            worst = float("nan")
        brk = 0.0 if idx == 0 else \
            brakke_identity_residual(traj, 1, traj.times[0], f.t)
        be = boundary_energy(f, g, p)
        bar = barrier_diagnostic(f, g, p, lam=lam)
        rows.append((f.t, traj.energies[idx],
                     dissipation_identity_residual(traj, upto=f.t),
                     sup_pos, l1, dens.value, worst, brk,
                     be["boundary_integral"], bar["normalized"]))
    write_csv(os.path.join(outdir, "series.csv"), SERIES_COLUMNS, rows)
    write_csv(os.path.join(outdir, "zeroset.csv"), ("t", "x", "y"), zrows)

    ck_stride = int(cfg.get("checkpoint.stride", 1))
    for j, (idx, f) in enumerate(traj.recorded):
        if j % ck_stride == 0 or j == len(traj.recorded) - 1:
            save_checkpoint(
                os.path.join(outdir, f"checkpoint_{idx:08d}.pfld"), f, g)

    fitted = {
        "D0": pf.D0,
        "c8_normalized_sup_disc": next(
            r["normalized"] for r in pf.report["rows"]
            if r["name"] == "discrepancy-sup"),
        "c18_boundary_energy": _calibrate_c18(traj, g, p),
        "sigma": wave.sigma,
        "kappa": g.kappa, "c2": g.c2,
        "density_lattice_spacing": dens_report.lattice_spacing
        if dens_report else float("nan"),
    }
    fitted.update(_probe_monotonicity(cfg, traj, g, p, outdir))
    _write_manifest(outdir, cfg, eps, pol, fitted)
    return RunResult(outdir, traj, g, p, wave, pf, rows, fitted)


def _zero_polylines(f, g):
    from .varifold import _zero_contours
    out = []
    for poly in _zero_contours(f, g):
        keep = g.interp(g.d, poly) <= g.h
        if keep.sum() >= 2:
            out.append(poly[keep])
    return out


def _calibrate_c18(traj, g, p):
    """Smallest additive constant closing the boundary-energy comparison
    over the recorded trajectory."""
    worst = 0.0
    for _, f in traj.recorded:
        be = boundary_energy(f, g, p)
        worst = max(worst, be["boundary_integral"] - be["transport_sq"])
    return worst


def _probe_monotonicity(cfg, traj, g, p, outdir):
    fitted = {}
    idents = sorted({k.split(".")[1] for k in cfg
                     if k.startswith("probe.") and k.endswith(".center")})
    for ident in idents:
        c = cfg[f"probe.{ident}.center"]
        s = float(cfg.get(f"probe.{ident}.s", traj.times[-1] * 1.25))
        variant = cfg.get(f"probe.{ident}.variant", "rho1+rho2")
        probe = KernelProbe(y=(c[0], c[1]), s=s, ident=ident)
        rep = monotonicity_series(traj, probe, g, p, variant=variant)
        rows = [(t, m, v, rep["c3"], rep["c4"])
                for t, m, v in zip(rep["t"][:-1], rep["M"][:-1],
                                   rep["violation"])]
        write_csv(os.path.join(outdir, f"monotonicity_{ident}.csv"),
                  ("t", "M", "violation", "fitted_c3", "fitted_c4"), rows)
        fitted[f"probe_{ident}_c3"] = rep["c3"]
        fitted[f"probe_{ident}_c4"] = rep["c4"]
    return fitted


def _write_manifest(outdir, cfg, eps, pol, fitted):
    lines = [f"acflow = {__version__}",
             f"numpy = {np.__version__}",
             f"scipy = {scipy.__version__}",
             f"scikit-image = {skimage.__version__}",
             f"config_hash = {config_hash(cfg)}",
             f"eps = {_fmt(eps)}",
             f"scheme = {pol.scheme}",
             f"dt = {_fmt(pol.dt)}"]
    for k in sorted(fitted):
        lines.append(f"fitted.{k} = {_fmt(fitted[k])}")
    with open(os.path.join(outdir, "manifest.txt"), "w",
              encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# -- sweep --------------------------------------------------------------------

def _sweep_one(args):
    cfg, outdir, eps, seed = args
    return eps, run(cfg, outdir, eps=eps, seed=seed).outdir


def sweep(cfg: dict, outdir, threads=1, seed=0) -> dict:
    """Run every eps in the list (descending) and tabulate the trends."""
    eps_list = _eps_list(cfg)
    if len(eps_list) < 2:
        raise ValidationError("sweep needs at least two eps values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValidationError("eps.list must be strictly descending")
    os.makedirs(outdir, exist_ok=True)

    jobs = [(cfg, os.path.join(outdir, f"eps_{_fmt(e)}"), e, seed)
            for e in eps_list]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = dict(ex.map(_sweep_one, jobs))
    else:
        results = dict(_sweep_one(j) for j in jobs)

    lam = float(cfg.get("initial.lam", 0.6))
    table = []
    failures = []
    for e in eps_list:
        try:
            row = _sweep_row(cfg, results[e], e, lam)
        except Exception as exc:     # partial report with the failure marked
            failures.append((e, repr(exc)))
            row = (e,) + (float("nan"),) * 5
        table.append(row)
    cols = ("eps", "l1_disc_avg", "sup_disc_eps_lam", "density_ratio_max",
            "final_contact_angle_deg", "hausdorff_to_front")
    write_csv(os.path.join(outdir, "sweep.csv"), cols, table)

    verdicts = _verdicts(table)
    with open(os.path.join(outdir, "verdicts.txt"), "w",
              encoding="utf-8") as fh:
        for name, ok, detail in verdicts:
            fh.write(f"{name} = {'pass' if ok else 'fail'}  # {detail}\n")
        for e, msg in failures:
            fh.write(f"run_failure eps={e} = {msg}\n")
    return {"table": table, "verdicts": verdicts, "failures": failures,
            "rundirs": results}


def _read_series(outdir):
    with open(os.path.join(outdir, "series.csv"), "r",
              encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return {name: data[:, j] for j, name in enumerate(header)}


def _sweep_row(cfg, rundir, eps, lam):
    series = _read_series(rundir)
    l1_avg = float(np.mean(series["l1_disc"]))
    sup_lam = float(np.max(series["sup_disc_pos"]) * eps ** lam)
    dmax = float(np.max(series["density_ratio"]))
    ang = series["contact_angle_deg"]
    ang = ang[np.isfinite(ang)]
    final_angle = float(ang[-1]) if len(ang) else float("nan")
    hd = _front_hausdorff(cfg, rundir, eps)
    return (eps, l1_avg, sup_lam, dmax, final_angle, hd)


def _front_hausdorff(cfg, rundir, eps):
    """Max Hausdorff distance between checkpoints and the front oracle."""
    p = _potential_spec(cfg)
    g = build_domain(_domain_spec(cfg), _h_for(cfg, eps))
    spec = _interface_spec(cfg)
    if spec.kind == "circle":
        fr = Front.circle(spec.center, spec.radius,
                          n=max(96, int(2 * np.pi * spec.radius / g.h)))
    elif spec.kind == "line":
        fr = Front.chord(g, spec)
    else:
        return float("nan")
    ckpts = sorted(fn for fn in os.listdir(rundir) if fn.endswith(".pfld"))
    worst = 0.0
    t_now = 0.0
    frows = []
    for fn in ckpts:
        ck = load_checkpoint(os.path.join(rundir, fn))
        if ck["t"] > t_now:
            try:
                fr, _ = run_front(fr, ck["t"] - t_now, geo=g)
            except Exception:
                break
            t_now = ck["t"]
        f = make_field(ck["u"], g, eps, t=ck["t"])
        worst = max(worst, hausdorff_distance(fr, f, g))
        for x, y in fr.nodes:
            frows.append((ck["t"], x, y))
    write_csv(os.path.join(rundir, "front.csv"), ("t", "x", "y"), frows)
    return worst if frows else float("nan")


def _verdicts(table):
    arr = np.array([row[1:] for row in table], dtype=float)
    l1 = arr[:, 0]
    sup = arr[:, 1]
    ang = arr[:, 3]
    hd = arr[:, 4]
    out = []
    ok = np.all(np.diff(l1) < 0) and np.all(l1[:-1] / l1[1:] >= 1.5)
    out.append(("l1_discrepancy_halving", bool(ok),
                f"values {[float(v) for v in l1]}"))
    ok = np.all(sup[1:] <= 1.5 * sup[0])
    out.append(("sup_disc_eps_lam_bounded", bool(ok),
                f"values {[float(v) for v in sup]}"))
    dev = np.abs(ang - 90.0)
    if np.isnan(dev).all():
        out.append(("contact_angle_improves", True,
                    "no boundary crossings (interior interface)"))
    else:
        out.append(("contact_angle_improves", bool(np.all(np.diff(dev) < 0)),
                    f"deviations {[float(v) for v in dev]}"))
    ok = np.all(hd[:-1] / hd[1:] >= 1.5)
    out.append(("hausdorff_shrinks", bool(ok),
                f"values {[float(v) for v in hd]}"))
    return out
