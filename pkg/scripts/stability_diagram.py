"""Zero-temperature stability diagram of the central-island charge.

Writes stability.csv and prints a coarse text rendering: '.' no stable
state, digits for a single stable occupancy, letters for overlaps
(a: -1/0, b: 0/1, c: 1/2).
"""
import argparse
from pathlib import Path

import numpy as np

from turnstile_sr.circuit_model import E_CHARGE, CircuitParams, derive_params, stability_map

OVERLAP = {(-1, 0): "a", (0, 1): "b", (1, 2): "c"}


def symbol(states):
    if not states:
        return "."
    if len(states) == 1:
        return str(states[0]) if states[0] >= 0 else "-"
    return OVERLAP.get(tuple(states), "*")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out/stability"))
    ap.add_argument("--nvg", type=int, default=97)
    ap.add_argument("--nvb", type=int, default=33)
    args = ap.parse_args()

    p = CircuitParams()
    d = derive_params(p)
    vg = np.linspace(-1.0, 3.0, args.nvg) * E_CHARGE / (p.Cg + d.Cext)
    vb = np.linspace(-1.0, 1.0, args.nvb) * E_CHARGE / (p.C + d.Cext)
    smap = stability_map(p, vg, vb)
    args.out.mkdir(parents=True, exist_ok=True)
    smap.write_csv(args.out / "stability.csv")

    for i in reversed(range(len(vb))):
        print("".join(symbol(smap.at(i, j)) for j in range(len(vg))))
    print(f"Vg: {vg[0]:.3f} .. {vg[-1]:.3f} V (left to right); Vb: {vb[0] * 1e3:.1f} .. {vb[-1] * 1e3:.1f} mV "
          f"(bottom to top); Vg0 = {d.Vg0:.6f} V, Vb0 = {d.Vb0 * 1e3:.3f} mV")


if __name__ == "__main__":
    main()
