"""Command-line entry points.

Subcommands mirror the workflow: validate a domain, build and verify
initial data, run, sweep, recompute diagnostics from a checkpoint, and run
the front-tracking oracle alone. Exit codes: 0 success, 2 validation
failure, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import NumericalAbort, ValidationError


def _add_common(sp):
    sp.add_argument("--config", required=True, help="config file path")
    sp.add_argument("--out", default="out", help="output directory")
    sp.add_argument("--threads", type=int, default=1,
                    help="parallel workers for sweeps")
    sp.add_argument("--seed", type=int, default=0,
                    help="noise controls only")


def build_parser():
    ap = argparse.ArgumentParser(prog="acflow")
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("geometry", "prepare", "run", "sweep", "mcf"):
        _add_common(sub.add_parser(name))
    dg = sub.add_parser("diagnose")
    dg.add_argument("checkpoint")
    _add_common(dg)
    return ap


def cmd_geometry(args, cfg):
    from .experiment import _domain_spec, _eps_list, _h_for
    from .geometry import build_domain
    eps = _eps_list(cfg)[0]
    g = build_domain(_domain_spec(cfg), _h_for(cfg, eps))
    print(f"kind = {g.spec.kind}")
    print(f"grid = {g.ny} x {g.nx}, h = {g.h}")
    print(f"kappa = {g.kappa:.6g}")
    print(f"c2 = {g.c2:.6g} (clearance estimate {g.clearance:.6g})")
    print(f"inside cells = {g.inside_count}")
    print(f"boundary quadrature points = {len(g.boundary_pts)}")
    return 0


def cmd_prepare(args, cfg):
    from .experiment import _domain_spec, _eps_list, _h_for, \
        _interface_spec, _potential_spec
    from .geometry import build_domain
    from .initial_data import prepare
    eps = _eps_list(cfg)[0]
    p = _potential_spec(cfg)
    g = build_domain(_domain_spec(cfg), _h_for(cfg, eps))
    pf = prepare(g, p, _interface_spec(cfg), eps,
                 lam=float(cfg.get("initial.lam", 0.6)))
    print(f"eps = {eps}, D0 = {pf.D0:.6g}, sigma = {pf.sigma:.6g}")
    for row in pf.report["rows"]:
        bound = "-" if row.get("bound") is None else f"{row['bound']:.6g}"
        print(f"{row['name']:16s} measured = {row['measured']:.6g} "
              f"bound = {bound:10s} {'ok' if row['ok'] else 'FAIL'}")
    return 0 if pf.report["ok"] else 2


def cmd_run(args, cfg):
    from .experiment import run
    res = run(cfg, args.out, seed=args.seed)
    print(f"wrote {res.outdir}/series.csv ({len(res.rows)} rows)")
    return 0


def cmd_sweep(args, cfg):
    from .experiment import sweep
    rep = sweep(cfg, args.out, threads=args.threads, seed=args.seed)
    for name, ok, detail in rep["verdicts"]:
        print(f"{name}: {'pass' if ok else 'fail'}  ({detail})")
    if rep["failures"]:
        for eps, msg in rep["failures"]:
            print(f"run failure at eps={eps}: {msg}", file=sys.stderr)
        return 3
    return 0


def cmd_diagnose(args, cfg):
    from .experiment import _domain_spec, _potential_spec, load_checkpoint
    from .geometry import build_domain
    from .measures import barrier_diagnostic, density_ratio, \
        discrepancy_norms, snapshot
    from .solver import compute_rhs, energy, make_field, neumann_residual
    from .varifold import boundary_energy, contact_angle
    ck = load_checkpoint(args.checkpoint)
    p = _potential_spec(cfg)
    g = build_domain(_domain_spec(cfg), ck["h"])
    f = make_field(ck["u"], g, ck["eps"], t=ck["t"])
    compute_rhs(f, g, p)
    m = snapshot(f, g, p)
    sup_pos, l1 = discrepancy_norms(m, g)
    dens = density_ratio(m, g)
    ang = contact_angle(f, g)
    worst = max((abs(a - 90.0) for _, a in ang), default=float("nan"))
    print(f"t = {f.t}")
    print(f"E = {energy(f, g, p):.9g}")
    print(f"sup_disc_pos = {sup_pos:.6g}, l1_disc = {l1:.6g}")
    print(f"density_ratio = {dens.value:.6g} at r = {dens.radius:.6g}")
    print(f"contact angle worst deviation = {worst:.3f} deg "
          f"({len(ang)} crossings)")
    print(f"boundary_energy = "
          f"{boundary_energy(f, g, p)['boundary_integral']:.6g}")
    print(f"barrier_max_normalized = "
          f"{barrier_diagnostic(f, g, p)['normalized']:.6g}")
    print(f"neumann_residual = {neumann_residual(f, g):.6g}")
    return 0


def cmd_mcf(args, cfg):
    from .experiment import _domain_spec, _eps_list, _fmt, _h_for, \
        _interface_spec
    from .geometry import build_domain
    from .mcf_reference import Front, run_front
    eps = _eps_list(cfg)[0]
    g = build_domain(_domain_spec(cfg), _h_for(cfg, eps))
    spec = _interface_spec(cfg)
    if spec.kind == "circle":
        fr = Front.circle(spec.center, spec.radius,
                          n=max(96, int(2 * np.pi * spec.radius / g.h)))
    elif spec.kind == "line":
        fr = Front.chord(g, spec)
    else:
        raise ValidationError("mcf oracle supports line and circle fronts")
    T = float(cfg.get("time.final", 0.02))
    fr, rec = run_front(fr, T, geo=g)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "front.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,x,y\n")
        for t, nodes in rec:
            for x, y in nodes:
                fh.write(f"{_fmt(t)},{_fmt(x)},{_fmt(y)}\n")
    print(f"wrote {path} ({len(rec)} recorded times)")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    from .experiment import load_config
    try:
        cfg = load_config(args.config)
        handler = {"geometry": cmd_geometry, "prepare": cmd_prepare,
                   "run": cmd_run, "sweep": cmd_sweep,
                   "diagnose": cmd_diagnose, "mcf": cmd_mcf}[args.cmd]
        return handler(args, cfg)
    except ValidationError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
