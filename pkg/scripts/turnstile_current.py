"""Pumped current versus gate drive amplitude at zero noise.

Below threshold the central occupancy never flips and no charge moves;
once the drive crosses both switching thresholds one electron is carried
per cycle, I = e*fs.
"""
import argparse

import numpy as np

from turnstile_sr.circuit_model import (
    E_CHARGE, BiasPoint, CircuitParams, SignalParams, derive_params, thresholds,
)
from turnstile_sr.noise import NoiseParams
from turnstile_sr.orthodox_mc import SimConfig, average_current, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fs", type=float, default=100e6)
    ap.add_argument("--cycles", type=int, default=100)
    ap.add_argument("--Vb", type=float, default=50e-3)
    args = ap.parse_args()

    p = CircuitParams()
    d = derive_params(p)
    th = thresholds(d, args.Vb, p)
    print(f"thresholds: Vt1 = {th.Vt1:.6f} V, Vt0 = {th.Vt0:.6f} V, half-width {th.Vt0 - d.Vg0:.4f} V")
    for Av in np.linspace(0, 0.03, 13):
        cfg = SimConfig(circuit=p, bias=BiasPoint.from_vb(p, args.Vb),
                        signal=SignalParams.from_voltage(Av, args.fs, p.Cg), noise=NoiseParams(),
                        duration=args.cycles / args.fs)
        tr = simulate(cfg)
        I = average_current(tr)
        print(f"Av = {Av * 1e3:5.1f} mV  I = {I * 1e12:8.4f} pA  I/(e fs) = {I / (E_CHARGE * args.fs):6.3f}")


if __name__ == "__main__":
    main()
