"""Orthodox sequential-tunneling Monte Carlo for the four-junction turnstile.

Chain layout (nodes 0..4)::

    lead L (+Vb) -J1- island 1 -J2- island 2 (gate Cg) -J3- island 3 -J4- lead R (-Vb)

Island 2 is the central island whose occupancy is the two-state output.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numba
import numpy as np

from .circuit_model import E_CHARGE, K_B, BiasPoint, CircuitParams, SignalParams, StepSizeError
from .noise import NoiseParams, OUNoise

# (junction, direction); direction +1 moves an electron from the left node to the right node
EVENTS = [(j, d) for j in (1, 2, 3, 4) for d in (1, -1)]
_SRC = np.array([j - 1 if d == 1 else j for j, d in EVENTS], dtype=np.int64)
_DST = np.array([j if d == 1 else j - 1 for j, d in EVENTS], dtype=np.int64)

# Events with dF above this many kT are treated as frozen (rate < 1e-16 /s at 30 mK).
FROZEN_KT = 60.0
MAX_EVENTS_PER_SUBSTEP = 100_000


@lru_cache(maxsize=64)
def _inverse_capacitance(C: float, Cg: float) -> np.ndarray:
    m = np.array([[2 * C, -C, 0.0], [-C, 2 * C + Cg, -C], [0.0, -C, 2 * C]])
    inv = np.linalg.inv(m)
    inv.setflags(write=False)
    return inv


def inverse_capacitance(p: CircuitParams) -> np.ndarray:
    return _inverse_capacitance(p.C, p.Cg)


def _lead_voltages(Vb):
    return Vb, -Vb


def _induced_charge(Vg, Vb, p: CircuitParams):
    VL, VR = _lead_voltages(Vb)
    Vg, VL, VR = np.broadcast_arrays(np.asarray(Vg, float), np.asarray(VL, float), np.asarray(VR, float))
    return np.stack([p.C * VL, p.Cg * Vg, p.C * VR])


def _charging_energy(n, Vg, Vb, p: CircuitParams):
    q = -E_CHARGE * np.asarray(n, dtype=float).reshape((3,) + (1,) * np.ndim(Vg)) + _induced_charge(Vg, Vb, p)
    return 0.5 * np.einsum("i...,ij,j...->...", q, inverse_capacitance(p), q)


def apply_event(state, k: int) -> tuple[int, int, int]:
    """State after event index ``k`` (0..7, see ``EVENTS``)."""
    s = list(state)
    src, dst = _SRC[k], _DST[k]
    if 1 <= src <= 3:
        s[src - 1] -= 1
    if 1 <= dst <= 3:
        s[dst - 1] += 1
    return tuple(s)


def _source_work(k: int, Vb):
    """Work the sources must be credited with; added to the electrostatic change."""
    VL, VR = _lead_voltages(Vb)
    w = 0.0
    src, dst = _SRC[k], _DST[k]
    if src == 0:
        w = w + E_CHARGE * VL
    elif src == 4:
        w = w + E_CHARGE * VR
    if dst == 0:
        w = w - E_CHARGE * VL
    elif dst == 4:
        w = w - E_CHARGE * VR
    return w


def free_energy_delta(s, junction: int, direction: int, Vg, Vb, p: CircuitParams):
    """Free-energy change (J) of one tunnel event out of charge state ``s``."""
    if (junction, direction) not in EVENTS:
        raise ValueError(f"invalid event junction={junction} direction={direction}")
    k = EVENTS.index((junction, direction))
    after = apply_event(s, k)
    return (_charging_energy(after, Vg, Vb, p) - _charging_energy(s, Vg, Vb, p)
            + _source_work(k, Vb))


def delta_f_all(s, Vg, Vb, p: CircuitParams) -> np.ndarray:
    """Stacked free-energy changes of all 8 events, shape ``(8,) + broadcast(Vg, Vb)``."""
    base = _charging_energy(s, Vg, Vb, p)
    return np.stack([_charging_energy(apply_event(s, k), Vg, Vb, p) - base + _source_work(k, Vb)
                     for k in range(8)])


def island_voltage(s, Vg, Vb, p: CircuitParams):
    q = -E_CHARGE * np.asarray(s, dtype=float) + _induced_charge(Vg, Vb, p).reshape(3)
    return float((inverse_capacitance(p) @ q)[1])


def tunnel_rate(dF, Rt: float, T: float):
    """Orthodox golden-rule rate (1/s) for free-energy change ``dF`` (J)."""
    dF = np.asarray(dF, dtype=float)
    g = 1.0 / (E_CHARGE**2 * Rt)
    if T == 0:
        return np.where(dF < 0, -dF * g, 0.0)
    kT = K_B * T
    x = dF / kT
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    # kT*g * x/expm1(x); series 1 - x/2 near zero; expm1 overflow gives 0
    with np.errstate(over="ignore"):
        return np.where(small, kT * g * (1 - x / 2), kT * g * xs / np.expm1(xs))


@numba.njit(cache=True)
def _seed_kernel(seed):
    np.random.seed(seed)


@numba.njit(cache=True)
def _rate(dF, g, kT):
    if kT == 0.0:
        return -dF * g if dF < 0.0 else 0.0
    x = dF / kT
    if x > 700.0:
        return 0.0
    if abs(x) < 1e-8:
        return kT * g * (1.0 - 0.5 * x)
    return dF * g / math.expm1(x)


@numba.njit(cache=True)
def _kernel(state, counters, minv, ec, src, dst, vg_sub, oversample, h, C, Cg, VL, VR,
            g, kT, frozen, out_n, out_v, out_qv, out_tr, out_vg, out_ev, offset):
    """Advance over ``vg_sub`` substeps; Vg is held constant within each substep.

    Events inside a substep are drawn exactly (Gillespie) with the rates of
    that substep. ``counters`` holds (transferred, events). Returns 0 or an
    error code (1: event runaway).
    """
    e = E_CHARGE
    nodes = np.empty(5)
    nodes[0] = VL
    nodes[4] = VR
    dF = np.empty(8)
    rates = np.empty(8)
    nsub = vg_sub.shape[0]
    for k in range(nsub):
        vg = vg_sub[k]
        b0 = C * VL
        b1 = Cg * vg
        b2 = C * VR
        remaining = h
        nev = 0
        while True:
            q0 = -e * state[0] + b0
            q1 = -e * state[1] + b1
            q2 = -e * state[2] + b2
            for i in range(3):
                nodes[i + 1] = minv[i, 0] * q0 + minv[i, 1] * q1 + minv[i, 2] * q2
            dmin = 1e300
            for j in range(8):
                dF[j] = -e * (nodes[dst[j]] - nodes[src[j]]) + ec[j]
                if dF[j] < dmin:
                    dmin = dF[j]
            if dmin > frozen * kT:
                break
            total = 0.0
            for j in range(8):
                rates[j] = _rate(dF[j], g, kT)
                total += rates[j]
            if total <= 0.0:
                break
            tau = -math.log(1.0 - np.random.random()) / total
            if tau >= remaining:
                break
            remaining -= tau
            r = np.random.random() * total
            j = 0
            acc = rates[0]
            while acc < r and j < 7:
                j += 1
                acc += rates[j]
            s, d = src[j], dst[j]
            if s >= 1 and s <= 3:
                state[s - 1] -= 1
            if d >= 1 and d <= 3:
                state[d - 1] += 1
            if d == 0:
                counters[0] += 1
            elif s == 0:
                counters[0] -= 1
            counters[1] += 1
            nev += 1
            if nev > MAX_EVENTS_PER_SUBSTEP:
                return 1
        if (k + 1) % oversample == 0:
            i = offset + (k + 1) // oversample - 1
            q0 = -e * state[0]
            q1 = -e * state[1]
            q2 = -e * state[2]
            qv = minv[1, 0] * q0 + minv[1, 1] * q1 + minv[1, 2] * q2
            out_n[i] = state[1]
            out_qv[i] = qv
            out_v[i] = qv + minv[1, 0] * b0 + minv[1, 1] * b1 + minv[1, 2] * b2
            out_tr[i] = counters[0]
            out_vg[i] = vg
            out_ev[i] = counters[1]
    return 0


@dataclass(frozen=True)
class SimConfig:
    circuit: CircuitParams
    bias: BiasPoint
    signal: SignalParams
    noise: NoiseParams
    dt: float = 0.5e-9
    duration: float = 1e-6
    seed: int = 0
    oversample: int = 20
    warmup: bool = True

    def __post_init__(self):
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        if not (self.dt > 0 and self.duration > 0):
            raise ValueError("dt and duration must be positive")
        ratio = self.duration / self.dt
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ValueError("duration must be an integer number of samples")

    @property
    def samples(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def warmup_samples(self) -> int:
        return int(round(1.0 / (self.signal.fs * self.dt))) if self.warmup else 0


@dataclass
class SimTrace:
    dt: float
    island_voltage: np.ndarray
    charge_voltage: np.ndarray  # island voltage set by the island charges alone
    n_trace: np.ndarray
    transferred: np.ndarray  # cumulative electrons delivered to the +Vb lead
    vg: np.ndarray
    events: int = 0
    final_state: tuple = field(default=(0, 0, 0))

    @property
    def duration(self) -> float:
        return len(self.n_trace) * self.dt

    @property
    def total_transferred(self) -> int:
        return int(self.transferred[-1]) if len(self.transferred) else 0

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write("# turnstile-sr v1\n")
            w = csv.writer(fh)
            w.writerow(["t", "island_voltage", "n", "transferred"])
            for k in range(len(self.n_trace)):
                w.writerow([f"{k * self.dt:.9e}", f"{self.island_voltage[k]:.9e}",
                            int(self.n_trace[k]), int(self.transferred[k])])

    @classmethod
    def read_csv(cls, path) -> "SimTrace":
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
        t = data[:, 0]
        dt = float(t[1] - t[0]) if len(t) > 1 else 0.0
        n = data[:, 2].astype(np.int64)
        return cls(dt=dt, island_voltage=data[:, 1], charge_voltage=np.full(len(n), np.nan),
                   n_trace=n, transferred=data[:, 3].astype(np.int64), vg=np.full(len(n), np.nan))


def _event_charging_energies(p: CircuitParams) -> np.ndarray:
    minv = inverse_capacitance(p)
    ec = np.empty(8)
    for k in range(8):
        d = np.zeros(3)
        if 1 <= _SRC[k] <= 3:
            d[_SRC[k] - 1] -= 1
        if 1 <= _DST[k] <= 3:
            d[_DST[k] - 1] += 1
        ec[k] = 0.5 * E_CHARGE**2 * d @ minv @ d
    return ec


def simulate(cfg: SimConfig, chunk_samples: int = 50_000) -> SimTrace:
    """Run one seeded Monte Carlo trajectory and sample it every ``cfg.dt``.

    The gate follows Vg_dc + Vs(t) + V_N(t) with the noise resolved on the
    substep grid. One signal period of warm-up is simulated and discarded.
    """
    p = cfg.circuit
    n_warm = cfg.warmup_samples
    n_total = n_warm + cfg.samples
    h = cfg.dt / cfg.oversample
    VL, VR = _lead_voltages(cfg.bias.Vb)
    minv = np.ascontiguousarray(inverse_capacitance(p))
    ec = _event_charging_energies(p)
    g = 1.0 / (E_CHARGE**2 * p.Rt)
    kT = K_B * p.T

    ss = np.random.SeedSequence(cfg.seed)
    noise_ss, event_ss = ss.spawn(2)
    noise = OUNoise(cfg.noise, h, np.random.default_rng(noise_ss))
    _seed_kernel(int(event_ss.generate_state(1, np.uint32)[0]))

    out_n = np.empty(n_total, dtype=np.int64)
    out_tr = np.empty(n_total, dtype=np.int64)
    out_ev = np.empty(n_total, dtype=np.int64)
    out_v = np.empty(n_total)
    out_qv = np.empty(n_total)
    out_vg = np.empty(n_total)
    state = np.zeros(3, dtype=np.int64)
    counters = np.zeros(2, dtype=np.int64)
    omega = 2 * np.pi * cfg.signal.fs
    Av = cfg.signal.Av
    t_start = -n_warm * cfg.dt

    for start in range(0, n_total, chunk_samples):
        stop = min(n_total, start + chunk_samples)
        ksub = np.arange(start * cfg.oversample, stop * cfg.oversample)
        t = t_start + (ksub + 1) * h
        vg = cfg.bias.Vg_dc + Av * np.sin(omega * t) + noise.draw(len(ksub))
        status = _kernel(state, counters, minv, ec, _SRC, _DST, vg, cfg.oversample, h,
                         p.C, p.Cg, VL, VR, g, kT, FROZEN_KT,
                         out_n, out_v, out_qv, out_tr, out_vg, out_ev, start)
        if status:
            raise StepSizeError("event runaway inside one substep; reduce dt or oversample more")

    tr0 = out_tr[n_warm - 1] if n_warm else 0
    ev0 = out_ev[n_warm - 1] if n_warm else 0
    keep = slice(n_warm, n_total)
    return SimTrace(
        dt=cfg.dt,
        island_voltage=out_v[keep],
        charge_voltage=out_qv[keep],
        n_trace=out_n[keep],
        transferred=out_tr[keep] - tr0,
        vg=out_vg[keep],
        events=int(out_ev[-1] - ev0),
        final_state=tuple(int(x) for x in state),
    )


def average_current(trace: SimTrace) -> float:
    if not trace.duration > 0:
        raise ValueError("trace has zero duration")
    return E_CHARGE * trace.total_transferred / trace.duration
