"""SNR versus noise variance for the turnstile, with both theory fits.

    python3 scripts/reproduce_sr_sweep.py --config configs/paper.cfg --out out/sr --jobs 4

The full paper config (3 amplitudes x 13 variances x 100 ensembles) takes
about 25 CPU-minutes; use --ensembles / --segments for a quick look.
"""
import argparse
import logging
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from turnstile_sr.experiment import (
    ExperimentConfig, format_config, load_config, run_fit, run_sweep, write_fit_summary,
)
from turnstile_sr.theory_fit import BRANCHES


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path, default=Path(__file__).resolve().parents[1] / "configs" / "paper.cfg")
    ap.add_argument("--out", type=Path, default=Path("out/sr"))
    ap.add_argument("--ensembles", type=int)
    ap.add_argument("--segments", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg: ExperimentConfig = load_config(args.config)
    if args.ensembles:
        cfg = replace(cfg, ensembles=args.ensembles)
    if args.segments:
        cfg = replace(cfg, spectral=replace(cfg.spectral, segments=args.segments))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config.cfg").write_text(format_config(cfg))

    t0 = time.perf_counter()
    sweep = run_sweep(cfg, jobs=args.jobs)
    sweep.write_csv(args.out / "sweep.csv")
    print(f"sweep: {time.perf_counter() - t0:.0f} s, {len(sweep.failures)} failed runs")

    reports = {b: run_fit(sweep, b, cfg) for b in BRANCHES}
    for b, rep in reports.items():
        rep.write_overlay(args.out / f"overlay_{b}.csv")
    write_fit_summary(args.out / "fit.txt", reports)

    for c in sweep.curves():
        i = int(np.argmax(c.snr_db))
        print(f"Aq = {c.amplitude:.3e} C: peak {c.snr_db[i]:.2f} dB at D_V = {c.D_V[i]:.3g} V^2")
        for d, s in zip(c.D_V, c.snr_db):
            print(f"  {d:10.3e}  {s:7.2f} " + "#" * int(max(0.0, s)))
    for b, rep in reports.items():
        print(f"{b}: {rep.fit.value:.5g} (residual {rep.fit.residual:.3g} dB^2, "
              f"{rep.fit.excluded} points excluded)")


if __name__ == "__main__":
    main()
