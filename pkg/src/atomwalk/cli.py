"""Command-line front end: ``python -m atomwalk <command> [options]``.

Exit status is 0 on success, 1 for usage or configuration problems and 2
for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import observables as obs
from .config import COMMANDS, ConfigError, delta_grid, loads, preset
from .dynamics import IntegrationError, integrate, write_trajectory_csv
from .model import TruncationError

log = logging.getLogger("atomwalk")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="configuration file (key = value with sections)")
    common.add_argument("--preset", help="named figure preset, e.g. fig1a; a --config file is layered on top")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--workers", type=int, default=None, help="worker processes (default: available cores)")
    common.add_argument("--rel-tol", type=float, help="override system.rel_tol")
    common.add_argument("--abs-tol", type=float, help="override system.abs_tol")
    common.add_argument("--delta", type=float, help="override system.delta")
    common.add_argument("--p0", type=float, help="override initial.p0")
    common.add_argument("--z0", type=float, help="atom with initial inversion z0 (sets initial.atom = inversion)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any configuration key (repeatable)")
    common.add_argument("--plot", action="store_true", help="also write a gnuplot script")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="atomwalk", description="Atom walking in a quantized standing wave.")
    parser.add_argument("--version", action="version", version=f"atomwalk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "integrate one trajectory and write tau, x, p, z, P, S_L, S_N, E, R_drift",
        "spectrum": "power spectrum of the purity series",
        "lyapunov": "maximal Lyapunov exponent with convergence curve",
        "fidelity": "fidelity decay under a small detuning change",
        "sweep": "lambda and sigma_P over a detuning grid",
        "scatter": "exit times and turn counts over a momentum grid",
        "maps": "position or inversion map at fixed times",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _overrides(args) -> dict:
    ov = {}
    if args.rel_tol is not None:
        ov["system.rel_tol"] = repr(args.rel_tol)
    if args.abs_tol is not None:
        ov["system.abs_tol"] = repr(args.abs_tol)
    if args.delta is not None:
        ov["system.delta"] = repr(args.delta)
    if args.p0 is not None:
        ov["initial.p0"] = repr(args.p0)
    if args.z0 is not None:
        ov["initial.atom"] = "inversion"
        ov["initial.z0"] = repr(args.z0)
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        ov[key.strip()] = val.strip()
    return ov


def resolve_config(args):
    base = preset(args.preset) if args.preset else None
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    return loads(text, args.command, _overrides(args), base)


def _header(cfg):
    h = {"atomwalk": __version__}
    h.update(cfg.echo())
    return h


def _write_manifest(cfg, out: Path, extra: dict | None = None):
    lines = [f"# atomwalk {__version__} run manifest",
             f"# rerun: python -m atomwalk {cfg.command} --config {cfg.command}.manifest",
             "# deterministic: no random seeds; output is independent of --workers"]
    for k, v in (extra or {}).items():
        lines.append(f"# result {k} = {v}")
    (out / f"{cfg.command}.manifest").write_text("\n".join(lines) + "\n" + cfg.manifest())


def _plot_script(out: Path, name: str, using: list[tuple[int, int, str]], logy=False, xlabel="", ylabel=""):
    body = [f'set datafile separator ","', f'set xlabel "{xlabel}"', f'set ylabel "{ylabel}"']
    if logy:
        body.append("set logscale y")
    plots = ", ".join(f'"{name}.csv" every ::1 using {a}:{b} with lines title "{t}"' for a, b, t in using)
    body.append(f"plot {plots}")
    (out / f"{name}.gp").write_text("\n".join(body) + "\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(cfg, out: Path, args):
    opt = cfg.section("simulate")
    params = cfg.params
    traj = integrate(cfg.initial.build(params), params, opt["tau_end"],
                     sample_dt=opt["sample_dt"], form=opt["form"])
    write_trajectory_csv(traj, out / "simulate.csv", _header(cfg))
    _write_manifest(cfg, out, {"max_R_drift": traj.stats["max_R_drift"],
                               "max_E_drift": traj.stats["max_E_drift"]})
    if args.plot:
        _plot_script(out, "simulate", [(1, 5, "P")], xlabel="tau", ylabel="purity")
    print(f"simulate: {len(traj)} samples, max R drift {traj.stats['max_R_drift']:.2e}, "
          f"max E drift {traj.stats['max_E_drift']:.2e}")


def cmd_spectrum(cfg, out: Path, args):
    opt = cfg.section("spectrum")
    params = cfg.params
    traj = integrate(cfg.initial.build(params), params, opt["tau_end"],
                     sample_dt=opt["sample_dt"], form=opt["form"])
    series = obs.TimeSeries.from_samples(traj.tau, obs.purity(traj)).window(opt["t_min"])
    window = None if opt["window"] == "none" else opt["window"]
    freqs, mag = obs.power_spectrum(series, window)
    obs.write_spectrum_csv(freqs, mag, out / "spectrum.csv", _header(cfg))
    peak = float(freqs[1:][np.argmax(mag[1:])])
    _write_manifest(cfg, out, {"peak_frequency": peak})
    if args.plot:
        _plot_script(out, "spectrum", [(1, 2, "|P(f)|")], xlabel="omega/2pi", ylabel="magnitude")
    print(f"spectrum: dominant peak at omega/2pi = {peak:.6g}")


def cmd_lyapunov(cfg, out: Path, args):
    opt = cfg.section("lyapunov")
    res = an.lyapunov_max(cfg.params, cfg.initial, opt["horizon"], opt["renorm_interval"], opt["d0"])
    stride = max(1, res.curve_tau.size // max(opt["curve_points"], 1))
    idx = np.arange(stride - 1, res.curve_tau.size, stride)
    an.write_rows_csv(out / "lyapunov.csv", ["tau", "lambda"],
                      zip(res.curve_tau[idx], res.curve_lambda[idx]), _header(cfg))
    summary = {"lambda": res.lam, "lambda_raw": res.raw, "stderr": res.stderr,
               "last_quarter_spread": res.spread, "horizon": res.horizon}
    _write_manifest(cfg, out, summary)
    if args.plot:
        _plot_script(out, "lyapunov", [(1, 2, "lambda(tau)")], xlabel="tau", ylabel="lambda")
    print("lyapunov: " + ", ".join(f"{k} = {v:.6g}" for k, v in summary.items()))


def cmd_fidelity(cfg, out: Path, args):
    opt = cfg.section("fidelity")
    res = an.fidelity_decay(cfg.params, cfg.initial, opt["delta_delta"], opt["horizon"],
                            opt["sample_dt"], opt["fit_level"])
    s = res.series
    an.write_rows_csv(out / "fidelity.csv", ["tau", "f", "log10_1mf"],
                      zip(s.times, s.values, res.log10_infidelity), _header(cfg))
    summary = {"rate": res.rate, "separation_rate": res.separation_rate, "fit_end": res.fit_end}
    _write_manifest(cfg, out, summary)
    if args.plot:
        _plot_script(out, "fidelity", [(1, 3, "log10(1-f)")], xlabel="tau", ylabel="log10(1-f)")
    print("fidelity: " + ", ".join(f"{k} = {v:.6g}" for k, v in summary.items()))


def cmd_sweep(cfg, out: Path, args):
    opt = cfg.section("sweep")
    rows = an.detuning_sweep(delta_grid(opt), cfg.params, cfg.initial, opt["horizon"],
                             (opt["window_min"], opt["window_max"]), opt["sample_dt"],
                             opt["flatness_threshold"], opt["f_max"], workers=args.workers)
    an.write_rows_csv(out / "sweep.csv", ["delta", "lambda", "sigma_P", "flatness", "irregular"],
                      ((r.delta, r.lam, r.sigma_P, r.flatness, r.irregular) for r in rows), _header(cfg))
    failed = [r for r in rows if not (math.isfinite(r.lam) and math.isfinite(r.sigma_P))]
    for r in failed:
        log.error("sweep row delta=%g failed: %s", r.delta, r.meta)
    chaotic = {r.delta for r in rows if r.lam > 0.01}
    irregular = {r.delta for r in rows if r.irregular}
    _write_manifest(cfg, out, {"rows": len(rows), "failed_rows": len(failed),
                               "jaccard": an.jaccard(chaotic, irregular)})
    if args.plot:
        _plot_script(out, "sweep", [(1, 2, "lambda"), (1, 3, "sigma_P")], xlabel="delta")
    print(f"sweep: {len(rows)} rows, {len(failed)} failed, Jaccard(lambda>0.01, irregular) = "
          f"{an.jaccard(chaotic, irregular):.3f}")
    if rows and len(failed) == len(rows):
        raise IntegrationError("every sweep row failed")


def cmd_scatter(cfg, out: Path, args):
    opt = cfg.section("scatter")
    grid = np.linspace(opt["p0_min"], opt["p0_max"], opt["points"])
    recs = an.scattering_scan(grid, cfg.params, cfg.initial, opt["tau_max"], opt["p_hyst"],
                              workers=args.workers)
    an.write_rows_csv(out / "scatter.csv", ["p0", "T", "m", "x_exit", "z_out", "timed_out"],
                      ((r.p0, r.T, r.m, r.x_exit, r.z_out, r.timed_out) for r in recs), _header(cfg))
    segs = an.count_monotone_segments([r.T for r in recs])
    n_to = sum(r.timed_out for r in recs)
    _write_manifest(cfg, out, {"monotone_segments": segs, "timed_out": n_to})
    if args.plot:
        _plot_script(out, "scatter", [(1, 2, "T(p0)"), (1, 3, "m(p0)")], xlabel="p0")
    print(f"scatter: {len(recs)} launches, {n_to} timed out, {segs} monotone segments of T(p0)")


def cmd_maps(cfg, out: Path, args):
    opt = cfg.section("maps")
    grid = np.linspace(opt["grid_min"], opt["grid_max"], opt["points"])
    taus = opt["tau_snap"]
    if opt["kind"] == "position":
        rows = an.position_map(grid, cfg.params, cfg.initial, taus, workers=args.workers)
        cols = ["p0"] + [f"x_out_{t:g}" for t in taus]
    else:
        rows = an.inversion_map(grid, cfg.params, cfg.initial, taus, opt["phase"], workers=args.workers)
        cols = ["z_in"] + [f"z_out_{t:g}" for t in taus]
    an.write_rows_csv(out / "maps.csv", cols, rows, _header(cfg))
    arr = np.array(rows)
    tv = {f"total_variation_{t:g}": an.total_variation(arr[:, i + 1]) for i, t in enumerate(taus)}
    _write_manifest(cfg, out, tv)
    if args.plot:
        _plot_script(out, "maps", [(1, i + 2, c) for i, c in enumerate(cols[1:])], xlabel=cols[0])
    print("maps: " + ", ".join(f"{k} = {v:.6g}" for k, v in tv.items()))


HANDLERS = {
    "simulate": cmd_simulate, "spectrum": cmd_spectrum, "lyapunov": cmd_lyapunov,
    "fidelity": cmd_fidelity, "sweep": cmd_sweep, "scatter": cmd_scatter, "maps": cmd_maps,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"atomwalk: usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.workers is not None and args.workers < 1:
            raise UsageError("--workers must be >= 1")
    except (ConfigError, UsageError, TruncationError) as exc:
        print(f"atomwalk: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"atomwalk: cannot prepare output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        HANDLERS[args.command](cfg, out, args)
    except TruncationError as exc:
        print(f"atomwalk: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, FloatingPointError) as exc:
        print(f"atomwalk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
