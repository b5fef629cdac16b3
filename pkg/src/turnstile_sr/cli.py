"""Command-line entry point: ``turnstile-sr <subcommand> [options]``.

Exit status: 0 on success, 1 on a runtime failure, 2 on a usage or config error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .circuit_model import E_CHARGE, derive_params, stability_map
from .experiment import (
    ConfigError, ExperimentConfig, SweepResult, format_config, load_config, observable, run_fit,
    run_sweep, theory_rows, write_fit_summary,
)
from .orthodox_mc import SimTrace, average_current, simulate
from .spectral import estimate_psd, snr_from_psd
from .theory_fit import BRANCHES

log = logging.getLogger("turnstile_sr")


class UsageError(Exception):
    pass


def _floats(s: str) -> list:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--ensembles", type=int)
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--Aq", type=_floats, help="input charge amplitudes, units of e")
    common.add_argument("--DV", type=_floats, help="noise variances, V^2")
    common.add_argument("--Vb", type=float, help="bias voltage, mV")
    common.add_argument("--segments", type=int, help="PSD segments per run")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="turnstile-sr", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="dump one Monte Carlo trace")
    ps = sub.add_parser("psd", parents=[common], help="PSD and SNR of a trace")
    ps.add_argument("--trace", type=Path, help="trace.csv to analyse (default: simulate one)")
    ps.add_argument("--column", choices=("n", "island_voltage"), default="n")
    sub.add_parser("sweep", parents=[common], help="SNR vs noise sweep with theory fits")
    sub.add_parser("theory", parents=[common], help="closed-form SNR curves only")
    pf = sub.add_parser("fit", parents=[common], help="fit beta / lambda to a sweep")
    pf.add_argument("--sweep", type=Path, help="sweep.csv (default: <out>/sweep.csv)")
    pf.add_argument("--branch", choices=BRANCHES)
    pst = sub.add_parser("stability", parents=[common], help="zero-temperature stability map")
    pst.add_argument("--grid", type=int, nargs=2, default=(241, 161), metavar=("NVG", "NVB"))
    sub.add_parser("config", parents=[common], help="print the effective config")
    return p


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        if not args.config.is_file():
            raise UsageError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.ensembles is not None:
        over["ensembles"] = args.ensembles
    if args.Aq is not None:
        over["Aq"] = tuple(a * E_CHARGE for a in args.Aq)
    if args.DV is not None:
        over["DV"] = tuple(args.DV)
    if args.Vb is not None:
        over["Vb"] = args.Vb * 1e-3
    if args.out is not None:
        over["out"] = str(args.out)
    if args.segments is not None:
        over["spectral"] = replace(cfg.spectral, segments=args.segments)
    return replace(cfg, **over) if over else cfg


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg, args):
    out = _outdir(cfg)
    trace = simulate(cfg.sim_config(cfg.amplitudes()[0], cfg.DV[0], cfg.ensemble_seed(0)))
    trace.write_csv(out / "trace.csv")
    print(f"wrote {out / 'trace.csv'}: {len(trace.n_trace)} samples, {trace.events} events, "
          f"I = {average_current(trace):.6e} A")


def cmd_psd(cfg, args):
    out = _outdir(cfg)
    sc = cfg.spectral
    if args.trace is not None:
        if not args.trace.is_file():
            raise UsageError(f"trace file not found: {args.trace}")
        trace = SimTrace.read_csv(args.trace)
        x = observable(trace, args.column)
        if x.size < sc.samples_needed:
            sc = replace(sc, segments=max(1, x.size // sc.seg_len))
    else:
        trace = simulate(cfg.sim_config(cfg.amplitudes()[0], cfg.DV[0], cfg.ensemble_seed(0)))
        x = observable(trace, cfg.observable)
    psd = estimate_psd(x, sc)
    psd.write_csv(out / "psd.csv")
    snr = snr_from_psd(psd, cfg.fs, sc.peak_bins, sc.noise_bins)
    print(f"wrote {out / 'psd.csv'}; SNR at {cfg.fs:.4g} Hz = {snr.snr_db:.3f} dB")


def _fit_and_write(sweep, cfg, out, branches):
    reports = {}
    for b in branches:
        rep = run_fit(sweep, b, cfg)
        rep.write_overlay(out / f"overlay_{b}.csv")
        reports[b] = rep
        print(f"{b}: {rep.fit.value:.6g} (residual {rep.fit.residual:.4g} dB^2, "
              f"{rep.fit.excluded} excluded)")
    write_fit_summary(out / "fit.txt", reports)


def cmd_sweep(cfg, args):
    out = _outdir(cfg)
    (out / "config.cfg").write_text(format_config(cfg))
    sweep = run_sweep(cfg, jobs=args.jobs)
    sweep.write_csv(out / "sweep.csv")
    print(f"wrote {out / 'sweep.csv'} ({len(sweep.rows)} rows, {len(sweep.failures)} failed runs)")
    _fit_and_write(sweep, cfg, out, BRANCHES)
    return 1 if sweep.failures and not any(
        r.valid_points for r in sweep.rows if r.provenance == "simulation") else 0


def cmd_theory(cfg, args):
    out = _outdir(cfg)
    SweepResult(theory_rows(cfg)).write_csv(out / "theory.csv")
    print(f"wrote {out / 'theory.csv'}")


def cmd_fit(cfg, args):
    out = _outdir(cfg)
    path = args.sweep or out / "sweep.csv"
    if not Path(path).is_file():
        raise UsageError(f"sweep file not found: {path}")
    sweep = SweepResult.read_csv(path)
    _fit_and_write(sweep, cfg, out, [args.branch] if args.branch else BRANCHES)


def cmd_stability(cfg, args):
    out = _outdir(cfg)
    p = cfg.circuit
    d = derive_params(p)
    nvg, nvb = args.grid
    vg = np.linspace(-1.0, 3.0, nvg) * E_CHARGE / (p.Cg + d.Cext)
    vb = np.linspace(-1.0, 1.0, nvb) * E_CHARGE / (p.C + d.Cext)
    smap = stability_map(p, vg, vb)
    smap.write_csv(out / "stability.csv")
    print(f"wrote {out / 'stability.csv'} ({nvg}x{nvb} grid)")


def cmd_config(cfg, args):
    sys.stdout.write(format_config(cfg))


COMMANDS = {
    "simulate": cmd_simulate, "psd": cmd_psd, "sweep": cmd_sweep, "theory": cmd_theory,
    "fit": cmd_fit, "stability": cmd_stability, "config": cmd_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args) or 0
    except (UsageError, ConfigError) as exc:
        print(f"turnstile-sr: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"turnstile-sr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
