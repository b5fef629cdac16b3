"""Closed-form physics of the four-junction single-electron turnstile.

Thresholds, the hysteretic switching rule, the continuous two-state
relaxation model with its potential, the critical noise that erases the
barrier, and the zero-temperature stability diagram.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import constants
from scipy.optimize import brentq

E_CHARGE = constants.e  # C
K_B = constants.k  # J/K


class InvalidParameterError(ValueError):
    pass


class NoBarrierError(ValueError):
    """Raised when the two-state potential has no barrier to erase."""


class StepSizeError(ValueError):
    pass


class AdiabaticWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CircuitParams:
    C: float = 1.0e-18
    Cg: float = 0.5e-18
    Rt: float = 100e3
    T: float = 30e-3

    def __post_init__(self):
        if not (self.C > 0 and self.Cg > 0):
            raise InvalidParameterError("capacitances must be positive")
        if not self.Rt > 0:
            raise InvalidParameterError("tunnel resistance must be positive")
        if not self.T >= 0:
            raise InvalidParameterError("temperature must be non-negative")


@dataclass(frozen=True)
class DerivedParams:
    Cext: float
    Vg0: float
    Vb0: float


@dataclass(frozen=True)
class BiasPoint:
    Vg_dc: float
    Vb: float
    epsilon: float

    @classmethod
    def from_vb(cls, p: CircuitParams, Vb: float, Vg_dc: float | None = None) -> "BiasPoint":
        d = derive_params(p)
        return cls(Vg_dc=d.Vg0 if Vg_dc is None else Vg_dc, Vb=Vb, epsilon=d.Vb0 - Vb)

    @property
    def bistable(self) -> bool:
        return self.epsilon > 0


@dataclass(frozen=True)
class SignalParams:
    """Periodic input: charge amplitude ``Aq`` on the gate, frequency ``fs``."""

    Aq: float
    fs: float
    Cg: float

    def __post_init__(self):
        if not self.fs > 0:
            raise InvalidParameterError("signal frequency must be positive")

    @classmethod
    def from_voltage(cls, Av: float, fs: float, Cg: float) -> "SignalParams":
        return cls(Aq=Av * Cg, fs=fs, Cg=Cg)

    @property
    def Av(self) -> float:
        return self.Aq / self.Cg

    def charge(self, t):
        return self.Aq * np.sin(2 * np.pi * self.fs * np.asarray(t))

    def voltage(self, t):
        return self.Av * np.sin(2 * np.pi * self.fs * np.asarray(t))

    def check_adiabatic(self, tau_t: float, factor: float = 100.0) -> bool:
        ok = 1.0 / self.fs >= factor * tau_t
        if not ok:
            warnings.warn(
                f"signal period {1 / self.fs:.3g} s is not >> tau_t = {tau_t:.3g} s",
                AdiabaticWarning,
                stacklevel=2,
            )
        return ok


@dataclass(frozen=True)
class Thresholds:
    Vt0: float  # 0 -> 1
    Vt1: float  # 1 -> 0

    @property
    def width(self) -> float:
        return self.Vt0 - self.Vt1


@dataclass(frozen=True)
class TwoStateModel:
    beta: float
    thresholds: Thresholds
    tau_t: float = 30e-12
    n: float = 0.0

    def __post_init__(self):
        if not (self.beta > 0 and self.tau_t > 0):
            raise InvalidParameterError("beta and tau_t must be positive")
        if not 0.0 <= self.n <= 1.0:
            raise InvalidParameterError("occupancy must lie in [0, 1]")


def derive_params(p: CircuitParams) -> DerivedParams:
    C, Cg = p.C, p.Cg
    if not (C > 0 and Cg > 0):
        raise InvalidParameterError("capacitances must be positive")
    Cext = C * (C / 2 + Cg) / (3 * C / 2 + Cg)
    return DerivedParams(
        Cext=Cext,
        Vg0=E_CHARGE / (Cg + Cext),
        Vb0=E_CHARGE / (2 * (C + Cext)),
    )


def thresholds(d: DerivedParams, Vb: float, p: CircuitParams) -> Thresholds:
    """Gate voltages at which the central occupancy flips, for bias ``Vb``."""
    if not Vb > 0:
        raise InvalidParameterError("bias voltage must be positive")
    Vt1 = 2 * Vb * (p.C + d.Cext) / (p.Cg + d.Cext)
    return Thresholds(Vt0=2 * d.Vg0 - Vt1, Vt1=Vt1)


def _z(n, Vg, th: Thresholds):
    return (th.Vt0 - th.Vt1) * n - th.Vt0 + Vg


def deterministic_switch(n_prev: int, Vg: float, th: Thresholds) -> int:
    """Zero-temperature Schmitt-trigger update; an exact tie keeps ``n_prev``."""
    if n_prev not in (0, 1):
        raise InvalidParameterError("n_prev must be 0 or 1")
    z = _z(n_prev, Vg, th)
    if z > 0:
        return 1
    if z < 0:
        return 0
    return n_prev


def switch_sequence(Vg, th: Thresholds, n0: int = 0) -> np.ndarray:
    """Apply :func:`deterministic_switch` sample by sample."""
    out = np.empty(len(Vg), dtype=np.int64)
    n = n0
    for i, v in enumerate(Vg):
        n = deterministic_switch(n, v, th)
        out[i] = n
    return out


def two_state_rhs(m: TwoStateModel, Vg, n=None):
    """dn/dt of the relaxation model; ``n`` defaults to ``m.n``."""
    n = m.n if n is None else n
    z = _z(n, Vg, m.thresholds)
    return -(n - 0.5 * (np.tanh(m.beta * z) + 1.0)) / m.tau_t


def integrate_two_state(m: TwoStateModel, drive, dt: float) -> np.ndarray:
    """Explicit Euler integration of the relaxation model over a sampled gate trace.

    Returns the occupancy after each drive sample. Requires ``dt <= tau_t/10``;
    each step is then a convex combination, so the trace stays in [0, 1].
    """
    if dt > m.tau_t / 10:
        raise StepSizeError(f"dt={dt:.3g} s exceeds tau_t/10={m.tau_t / 10:.3g} s")
    drive = np.asarray(drive, dtype=float)
    th, beta = m.thresholds, m.beta
    width = th.Vt0 - th.Vt1
    a = dt / m.tau_t
    out = np.empty_like(drive)
    n = m.n
    for i, v in enumerate(drive):
        target = 0.5 * (math.tanh(beta * (width * n - th.Vt0 + v)) + 1.0)
        n = n + a * (target - n)
        out[i] = n
    return out


def _log_cosh(y):
    y = np.abs(y)
    return y + np.log1p(np.exp(-2 * y)) - math.log(2.0)


def potential(n, Vg, m: TwoStateModel):
    """Potential whose negative n-derivative is :func:`two_state_rhs` (units 1/s)."""
    width = m.thresholds.Vt0 - m.thresholds.Vt1
    z = _z(n, Vg, m.thresholds)
    return (0.5 * n * (n - 1) - _log_cosh(m.beta * z) / (2 * m.beta * width)) / m.tau_t


def barrier_heights(Vg: float, m: TwoStateModel, grid: int = 20001) -> tuple[float, float]:
    """Barrier seen from the lower and the upper well; zeros if monostable."""
    f = lambda n: float(two_state_rhs(m, Vg, n))
    ns = np.linspace(-0.01, 1.01, grid)  # wells can sit exactly on 0 or 1
    vals = two_state_rhs(m, Vg, ns)
    roots = [float(x) for x in ns[vals == 0]]
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        roots.append(brentq(f, ns[i], ns[i + 1], xtol=1e-15))
    roots.sort()
    if len(roots) < 3:
        return 0.0, 0.0
    lo, top, hi = roots[0], roots[1], roots[-1]
    u_top = potential(top, Vg, m)
    return float(u_top - potential(lo, Vg, m)), float(u_top - potential(hi, Vg, m))


def asech(x: float) -> float:
    return math.log((1 + math.sqrt(1 - x * x)) / x)


def critical_noise(Vs: float, m: TwoStateModel, Vg_dc: float) -> tuple[float, float]:
    """Return ``(V_NC, mu)``: the noise voltage that erases the barrier out of n=0."""
    th = m.thresholds
    width = th.Vt0 - th.Vt1
    if width <= 0:
        raise NoBarrierError("no hysteresis window (Vb >= Vb0)")
    x = math.sqrt(2 / (m.beta * width))
    if not 0 < x < 1:
        raise NoBarrierError(f"beta*(Vt0-Vt1)={m.beta * width:.3g} too small for bistability")
    mu = 0.5 * width * (math.sqrt((1 + x) * (1 - x)) - 1) + th.Vt0 - Vg_dc - asech(x) / m.beta
    return mu - Vs, mu


def inflection_occupancy(m: TwoStateModel) -> float:
    """Occupancy at which the lower well merges with the barrier top."""
    width = m.thresholds.Vt0 - m.thresholds.Vt1
    x = math.sqrt(2 / (m.beta * width))
    return 0.5 - 0.5 * math.sqrt(1 - x * x)


@dataclass
class StabilityMap:
    vg: np.ndarray
    vb: np.ndarray
    # states[i][j]: sorted central occupancies stable at (vb[i], vg[j])
    states: list = field(default_factory=list)
    p: CircuitParams | None = None

    def at(self, i: int, j: int) -> tuple[int, ...]:
        return self.states[i][j]

    def write_csv(self, path) -> None:
        d = derive_params(self.p)
        gscale = (self.p.Cg + d.Cext) / E_CHARGE
        bscale = (self.p.C + d.Cext) / E_CHARGE
        with Path(path).open("w", newline="") as fh:
            fh.write("# turnstile-sr v1\n")
            w = csv.writer(fh)
            w.writerow(["Vg_norm", "Vb_norm", "stable_states"])
            for i, vb in enumerate(self.vb):
                for j, vg in enumerate(self.vg):
                    w.writerow([f"{vg * gscale:.9e}", f"{vb * bscale:.9e}",
                                ";".join(str(n) for n in self.states[i][j])])


def stability_map(p: CircuitParams, vg, vb, n_range=(-2, 3), outer_range=(-1, 1)) -> StabilityMap:
    """Zero-temperature map of stable central occupancies over a (Vg, Vb) grid.

    A charge configuration is stable when every one of the 8 single-electron
    moves raises the free energy. Configurations are enumerated with the
    central count in ``n_range`` and the outer counts in ``outer_range``.
    """
    from .orthodox_mc import delta_f_all

    vg = np.atleast_1d(np.asarray(vg, dtype=float))
    vb = np.atleast_1d(np.asarray(vb, dtype=float))
    VG, VB = np.meshgrid(vg, vb)
    stable = [[set() for _ in vg] for _ in vb]
    outer = range(outer_range[0], outer_range[1] + 1)
    for n2 in range(n_range[0], n_range[1] + 1):
        for n1 in outer:
            for n3 in outer:
                dF = delta_f_all((n1, n2, n3), VG, VB, p)
                ok = np.all(dF > 0, axis=0)
                for i, j in zip(*np.nonzero(ok)):
                    stable[i][j].add(n2)
    states = [[tuple(sorted(s)) for s in row] for row in stable]
    return StabilityMap(vg=vg, vb=vb, states=states, p=p)
