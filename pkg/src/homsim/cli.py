"""Command-line interface: ``homsim {model,simulate,correlate,fit,scan-eta}``.

Exit codes: 0 success, 2 invalid input or configuration, 3 I/O failure,
4 malformed data file.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from homsim import analysis, correlator, model, ptt
from homsim.errors import FormatError, HomsimError
from homsim.interfere import CHANNEL_NAMES
from homsim.pipeline import load_config, model_params_from_dict, simulate
from homsim.units import parse_freq_hz, parse_time_ps, parse_time_ps_int

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_FORMAT = 4

CHANNELS = {name: ch for ch, name in CHANNEL_NAMES.items()}


def _fmt(x) -> str:
    return repr(float(x))


def _write_text(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)


# -- model -------------------------------------------------------------------


def model_csv(params: model.ModelParams, tau_ps: np.ndarray, same_port: bool = False) -> str:
    if same_port:
        gp = model.g2_auto_perp(tau_ps, params)
        gq = model.g2_auto_par(tau_ps, params)
        v = model.v_same_port(tau_ps, params)
    else:
        gp = model.g2_cross_perp(tau_ps, params)
        gq = model.g2_cross_par(tau_ps, params)
        v = model.v_hom(tau_ps, params)
    out = io.StringIO()
    out.write("tau_ps,g2_perp,g2_par,v_hom\n")
    for row in zip(tau_ps, np.atleast_1d(gp), np.atleast_1d(gq), np.atleast_1d(v)):
        out.write(",".join(_fmt(x) for x in row) + "\n")
    return out.getvalue()


def cmd_model(args) -> int:
    p = model.ModelParams(
        eta=args.eta, v0=args.v0, r=args.r, t=args.t,
        tau_l_ps=parse_time_ps(args.tau_l), tau_c_ps=parse_time_ps(args.tau_c),
        g2_sp0=args.g2sp0, delta_f_hz=parse_freq_hz(args.df),
    )
    tau_max = parse_time_ps(args.tau_max)
    step = parse_time_ps(args.step)
    if step <= 0 or tau_max <= 0:
        raise HomsimError("--step and --tau-max must be > 0")
    n = int(round(tau_max / step))
    tau = np.arange(-n, n + 1) * step
    _write_text(model_csv(p, tau, args.same_port), args.output)
    return EXIT_OK


# -- simulate ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    out = args.output or cfg.outputs.get("ptt")
    if not out:
        raise HomsimError("no output path: pass -o or set output.ptt in the config")
    res = simulate(cfg)
    ptt.write_ptt(out, ptt.records_from_channels(res.clicks))
    manifest = dict(res.manifest, ptt=str(out))
    sys.stdout.write(json.dumps(manifest, sort_keys=True) + "\n")
    return EXIT_OK


# -- correlate -----------------------------------------------------------------


def _channel(name: str) -> int:
    key = name.upper()
    if key in CHANNELS:
        return CHANNELS[key]
    try:
        return int(name)
    except ValueError:
        raise HomsimError(f"unknown channel {name!r}; use D1, D2 or an index") from None


def cmd_correlate(args) -> int:
    f = ptt.read_ptt(args.input)
    w = parse_time_ps_int(args.bin)
    tmax = parse_time_ps_int(args.tau_max)
    tmin = parse_time_ps_int(args.tau_min) if args.tau_min is not None else None
    if args.auto:
        a = f.channel_ps(_channel(args.channel))
        b = None
    else:
        ca, cb = (_channel(c) for c in args.channels)
        a, b = f.channel_ps(ca), f.channel_ps(cb)
    duration = parse_time_ps_int(args.duration) if args.duration else None
    if a.size == 0 or (b is not None and b.size == 0):
        # nothing to correlate: header-only CSV
        _write_text(correlator.histogram_csv_text(None), args.output)
        return EXIT_OK
    if b is None:
        h = correlator.auto_correlate(a, w, tmax, duration, tmin)
    else:
        h = correlator.cross_correlate(a, b, w, tmax, duration, tmin)
    _write_text(correlator.histogram_csv_text(correlator.normalize(h)), args.output)
    return EXIT_OK


# -- fit -------------------------------------------------------------------------


def cmd_fit(args) -> int:
    if len(args.perp) != len(args.par):
        raise HomsimError("give one --par for every --perp")
    perps = [correlator.read_histogram_csv(p) for p in args.perp]
    pars = [correlator.read_histogram_csv(p) for p in args.par]
    init_doc = json.loads(Path(args.init).read_text()) if args.init else {}
    free = init_doc.pop("free", None) if isinstance(init_doc, dict) else None
    init = model_params_from_dict(init_doc)
    if args.free:
        free = [s.strip() for s in args.free.split(",") if s.strip()]
    fit = analysis.fit_hom(
        perps, pars, init, free, oversample=args.oversample, jitter_sigma_ps=parse_time_ps(args.jitter)
    )
    doc = fit.to_json()
    v0, sv0 = analysis.v_hom0_from_fit(fit)
    doc["v_hom0"] = v0
    doc["v_hom0_stderr"] = sv0 if np.isfinite(sv0) else None
    _write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.output)
    return EXIT_OK


# -- scan-eta ----------------------------------------------------------------------


def cmd_scan_eta(args) -> int:
    p = model.ModelParams(v0=args.v0, g2_sp0=args.g2sp0)
    grid = np.arange(args.eta_min, args.eta_max + args.eta_step / 2, args.eta_step)
    scan = analysis.scan_eta(p, grid)
    out = io.StringIO()
    out.write("eta,v_hom0,background_peak\n")
    for row in scan.rows():
        out.write(",".join(_fmt(x) for x in row) + "\n")
    _write_text(out.getvalue(), args.output)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="homsim", description="Laser / single-photon two-photon interference toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    m = sub.add_parser("model", help="analytic correlation and visibility curves as CSV")
    m.add_argument("--eta", type=float, default=0.2)
    m.add_argument("--v0", type=float, default=0.85)
    m.add_argument("--r", type=float, default=0.5)
    m.add_argument("--t", type=float, default=0.5)
    m.add_argument("--tau-l", default="150ns")
    m.add_argument("--tau-c", default="115ps")
    m.add_argument("--g2sp0", type=float, default=0.03)
    m.add_argument("--df", default="0")
    m.add_argument("--tau-max", default="2ns", help="half-width of the delay grid")
    m.add_argument("--step", default="10ps", help="delay grid spacing")
    m.add_argument("--same-port", action="store_true", help="same-port (autocorrelation) topology")
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_model)

    s = sub.add_parser("simulate", help="run sources, beam splitter and detectors; write a PTT file")
    s.add_argument("config")
    s.add_argument("-o", "--output")
    s.add_argument("--seed", type=lambda x: int(x, 0))
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("correlate", help="normalized correlation histogram of a PTT file")
    c.add_argument("input")
    c.add_argument("--channels", nargs=2, default=["D1", "D2"], metavar=("A", "B"))
    c.add_argument("--auto", action="store_true")
    c.add_argument("--channel", default="D1")
    c.add_argument("--bin", default="10ps")
    c.add_argument("--tau-max", default="2ns")
    c.add_argument("--tau-min")
    c.add_argument("--duration", help="acquisition time for normalisation (default: span of the data)")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_correlate)

    f = sub.add_parser("fit", help="joint fit of perpendicular and parallel histograms")
    f.add_argument("--perp", action="append", required=True)
    f.add_argument("--par", action="append", required=True)
    f.add_argument("--init", help="JSON object of starting parameters, optional 'free' list")
    f.add_argument("--free", help="comma-separated parameters to fit")
    f.add_argument("--oversample", type=int, default=1)
    f.add_argument("--jitter", default="0ps")
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("scan-eta", help="V_HOM(0) and background peak versus eta")
    e.add_argument("--v0", type=float, default=0.85)
    e.add_argument("--g2sp0", type=float, default=0.03)
    e.add_argument("--eta-min", type=float, default=0.0)
    e.add_argument("--eta-max", type=float, default=2.0)
    e.add_argument("--eta-step", type=float, default=0.01)
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_scan_eta)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"homsim: malformed data: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (HomsimError, ValueError) as exc:
        print(f"homsim: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"homsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
