"""Analytic curves behind the main figures, written as CSV files.

    python3 scripts/reproduce_figures.py --out figures/ [--png]

Files: short- and long-range correlations and visibility at the default
parameters, visibility for detuned sources, V_HOM(0) and background versus
eta, and the same-port bunching curves. ``--png`` also draws them when
matplotlib is installed.
"""

import argparse
from pathlib import Path

import numpy as np

from homsim import analysis, model
from homsim.cli import model_csv
from homsim.model import ModelParams


def write_scan(path: Path, p: ModelParams):
    scan = analysis.scan_eta(p, np.round(np.arange(0.0, 2.0 + 1e-9, 0.01), 10))
    lines = ["eta,v_hom0,background_peak"] + [",".join(repr(float(x)) for x in row) for row in scan.rows()]
    path.write_text("\n".join(lines) + "\n")


def curves(p: ModelParams):
    short = np.arange(-2_000, 2_001, 5.0)
    long = np.arange(-600_000, 600_001, 500.0)
    yield "dip_short.csv", p, short, False
    yield "dip_long.csv", p, long, False
    for df in (10e6, 50e6):
        yield f"beat_{int(df / 1e6)}MHz.csv", p.with_(delta_f_hz=df), np.arange(-150_000, 150_001, 100.0), False
    yield "same_port_short.csv", p, short, True
    yield "same_port_long.csv", p, long, True


def plot(out: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(2, 3, figsize=(13, 7))
    for ax, name in zip(axes.flat, ["dip_short", "dip_long", "beat_10MHz", "beat_50MHz", "same_port_short"]):
        d = np.genfromtxt(out / f"{name}.csv", delimiter=",", names=True)
        ax.plot(d["tau_ps"] / 1e3, d["g2_perp"], label="perp")
        ax.plot(d["tau_ps"] / 1e3, d["g2_par"], label="par")
        ax.plot(d["tau_ps"] / 1e3, d["v_hom"], label="V", lw=0.8)
        ax.set_title(name)
        ax.set_xlabel("delay (ns)")
    axes[0, 0].legend()
    s = np.genfromtxt(out / "eta_scan.csv", delimiter=",", names=True)
    ax = axes[1, 2]
    ax.plot(s["eta"], s["v_hom0"], label="V_HOM(0)")
    ax.plot(s["eta"], s["background_peak"], label="background")
    ax.axhline(0.5, ls=":", c="k")
    ax.set_xlabel("eta")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "figures.png", dpi=120)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figures")
    ap.add_argument("--png", action="store_true")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    p = ModelParams()
    for name, params, tau, same in curves(p):
        (out / name).write_text(model_csv(params, tau, same))
    write_scan(out / "eta_scan.csv", p)
    print(f"V_HOM(0) = {float(model.v_hom(0.0, p)):.4f}, background = {model.background_peak(p.eta, p.v0):.4f}, "
          f"optimal eta = {model.optimal_eta(p.g2_sp0):.4f}")
    c, n0 = model.cqed_figures(model.CqedParams())
    print(f"cooperativity = {c:.2f}, critical photon number = {n0:.3g}")
    if args.png:
        plot(out)
    print(f"wrote {out}/")


if __name__ == "__main__":
    main()
