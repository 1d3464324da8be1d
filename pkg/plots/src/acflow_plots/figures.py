"""Figure builders over the documented CSV schemas.

Inputs are a run directory (series.csv, zeroset.csv, monotonicity_*.csv)
or a sweep directory (sweep.csv plus eps_* run subdirectories). Output is
deterministic SVG: fixed hash salt, no timestamps, axes derived from the
data only.
"""

from __future__ import annotations

import glob
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["svg.hashsalt"] = "acflow-plots"

FIGURES = ("energy", "discrepancy", "monotonicity", "contact", "overlay")


class MissingColumn(KeyError):
    pass


class MissingArtifact(FileNotFoundError):
    pass


def read_csv(path):
    if not os.path.exists(path):
        raise MissingArtifact(f"missing artifact: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError:
            data = np.zeros((0, len(header)))
    if data.size == 0:
        data = np.zeros((0, len(header)))
    return {name: data[:, j] for j, name in enumerate(header)}


def need(table, name, where):
    if name not in table:
        raise MissingColumn(f"missing column {name!r} in {where}")
    return table[name]


def _run_dirs(indir):
    """A sweep directory lists eps_* run subdirectories; a run directory is
    its own single entry."""
    subs = sorted(glob.glob(os.path.join(indir, "eps_*")))
    subs = [s for s in subs if os.path.isdir(s)]
    if subs:
        return subs
    if os.path.exists(os.path.join(indir, "series.csv")):
        return [indir]
    raise MissingArtifact(f"no series.csv or eps_* runs under {indir}")


def _eps_of(rundir):
    base = os.path.basename(rundir.rstrip("/"))
    if base.startswith("eps_"):
        return float(base[4:])
    return None


def _save(fig, outdir, name):
    path = os.path.join(outdir, name + ".svg")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def fig_energy(indir, outdir):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for rd in _run_dirs(indir):
        s = read_csv(os.path.join(rd, "series.csv"))
        t = need(s, "t", rd)
        E = need(s, "E", rd)
        eps = _eps_of(rd)
        label = f"eps = {eps:g}" if eps else "run"
        ax.plot(t, E, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("E")
    ax.set_title("energy decay")
    ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, outdir, "energy")


def fig_discrepancy(indir, outdir):
    """Log-log discrepancy against eps with the fitted slope annotated.

    Works from sweep.csv when present; a single run falls back to the
    in-run series (no slope fit possible with one eps)."""
    sweep_path = os.path.join(indir, "sweep.csv")
    fig, ax = plt.subplots(figsize=(5, 3.4))
    if os.path.exists(sweep_path):
        s = read_csv(sweep_path)
        eps = need(s, "eps", sweep_path)
        l1 = need(s, "l1_disc_avg", sweep_path)
        ax.loglog(eps, l1, "o-", label="time-averaged L1 discrepancy")
        if len(eps) >= 2 and np.all(l1 > 0):
            slope = np.polyfit(np.log(eps), np.log(l1), 1)[0]
            ax.annotate(f"slope = {slope:.2f}",
                        xy=(eps[len(eps) // 2], l1[len(l1) // 2]),
                        xytext=(6, 6), textcoords="offset points")
        sup = need(s, "sup_disc_eps_lam", sweep_path)
        ax.loglog(eps, sup, "s--", label="sup+ xi * eps^lam")
        ax.set_xlabel("eps")
        ax.legend(loc="best")
    else:
        rd = _run_dirs(indir)[0]
        s = read_csv(os.path.join(rd, "series.csv"))
        ax.semilogy(need(s, "t", rd), need(s, "l1_disc", rd),
                    label="L1 discrepancy")
        ax.set_xlabel("t")
        ax.legend(loc="best")
    ax.set_title("discrepancy")
    fig.tight_layout()
    return _save(fig, outdir, "discrepancy")


def fig_monotonicity(indir, outdir):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    found = False
    for rd in _run_dirs(indir):
        for path in sorted(glob.glob(os.path.join(rd, "monotonicity_*.csv"))):
            s = read_csv(path)
            t = need(s, "t", path)
            M = need(s, "M", path)
            ident = os.path.basename(path)[len("monotonicity_"):-4]
            eps = _eps_of(rd)
            label = f"{ident}" + (f" (eps={eps:g})" if eps else "")
            ax.plot(t, M, label=label)
            found = True
    if not found:
        raise MissingArtifact(f"no monotonicity_*.csv under {indir}")
    ax.set_xlabel("t")
    ax.set_ylabel("weighted kernel mass M")
    ax.set_title("boundary monotonicity quantity")
    ax.legend(loc="best", fontsize=7)
    fig.tight_layout()
    return _save(fig, outdir, "monotonicity")


def fig_contact(indir, outdir):
    fig, ax = plt.subplots(figsize=(5, 3.4))
    for rd in _run_dirs(indir):
        s = read_csv(os.path.join(rd, "series.csv"))
        t = need(s, "t", rd)
        a = need(s, "contact_angle_deg", rd)
        ok = np.isfinite(a)
        eps = _eps_of(rd)
        ax.plot(t[ok], a[ok], label=f"eps = {eps:g}" if eps else "run")
    ax.axhline(90.0, color="k", lw=0.6, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("contact angle (deg)")
    ax.set_title("contact angle vs time")
    ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, outdir, "contact")


def fig_overlay(indir, outdir):
    """Zero-set polylines against the front-tracking oracle at the latest
    common recorded time in each run."""
    fig, ax = plt.subplots(figsize=(4.6, 4.6))
    drew = False
    for rd in _run_dirs(indir):
        zpath = os.path.join(rd, "zeroset.csv")
        if not os.path.exists(zpath):
            continue
        z = read_csv(zpath)
        tz = need(z, "t", zpath)
        if len(tz) == 0:
            continue
        t_last = tz.max()
        sel = tz == t_last
        ax.plot(z["x"][sel], z["y"][sel], ".", ms=1.5,
                label=f"zero set t={t_last:g}")
        drew = True
        fpath = os.path.join(rd, "front.csv")
        if os.path.exists(fpath):
            fdat = read_csv(fpath)
            tf = need(fdat, "t", fpath)
            if len(tf):
                tf_last = tf[np.argmin(np.abs(tf - t_last))]
                fsel = tf == tf_last
                ax.plot(fdat["x"][fsel], fdat["y"][fsel], "-", lw=0.8,
                        label=f"front t={tf_last:g}")
    if not drew:
        raise MissingArtifact(f"no zeroset.csv under {indir}")
    ax.set_aspect("equal")
    ax.set_title("zero set vs front oracle")
    ax.legend(loc="best", fontsize=7)
    fig.tight_layout()
    return _save(fig, outdir, "overlay")


BUILDERS = {"energy": fig_energy, "discrepancy": fig_discrepancy,
            "monotonicity": fig_monotonicity, "contact": fig_contact,
            "overlay": fig_overlay}


def render(indir, outdir, figs=("all",)):
    """Render the selected figures; returns the list of files written."""
    names = list(FIGURES) if "all" in figs else list(figs)
    bad = [n for n in names if n not in BUILDERS]
    if bad:
        raise KeyError(f"unknown figures: {bad}")
    os.makedirs(outdir, exist_ok=True)
    return [BUILDERS[n](indir, outdir) for n in names]
