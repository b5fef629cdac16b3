"""Experiment configuration, noise-variance sweeps and theory fits."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .circuit_model import E_CHARGE, BiasPoint, CircuitParams, SignalParams, derive_params, thresholds
from .noise import NoiseParams
from .orthodox_mc import SimConfig, simulate
from .spectral import SpectralConfig, estimate_psd, make_window, processing_gain, snr_from_psd
from .theory_fit import BRANCHES, FitError, FitResult, SnrCurve, TheoryContext, fit_parameter, snr_curve

log = logging.getLogger(__name__)

CSV_TAG = "# turnstile-sr v1"
OBSERVABLES = ("charge_voltage", "island_voltage", "n")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    circuit: CircuitParams = field(default_factory=CircuitParams)
    Vb: float = 50e-3
    Vg_dc: float = 0.160218
    fs: float = 100e6
    tau_N: float = 125e-12
    tau_t: float = 30e-12
    Aq: tuple = ()  # C; empty -> derived from Aq_mu_fraction
    Aq_mu_fraction: tuple = (0.25, 0.5, 0.75)
    DV: tuple = tuple(np.geomspace(1e-6, 1e-3, 13))
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    segment_cycles: int = 100
    beta: float = 4900.0
    lam: float = 1.63
    ensembles: int = 100
    seed: int = 0
    oversample: int = 20
    average: str = "db"
    observable: str = "charge_voltage"
    out: str = "out"

    def __post_init__(self):
        if self.ensembles < 1:
            raise ConfigError("ensembles must be >= 1")
        dv = np.asarray(self.DV, dtype=float)
        if dv.size == 0 or np.any(np.diff(dv) <= 0) or np.any(dv < 0):
            raise ConfigError("noise grid must be nonempty, non-negative and increasing")
        if self.average not in ("db", "linear"):
            raise ConfigError("average must be 'db' or 'linear'")
        if self.observable not in OBSERVABLES:
            raise ConfigError(f"observable must be one of {OBSERVABLES}")
        per_cycle = self.spectral.f_sample / self.fs
        if self.spectral.pad_policy == "zero_pad" and abs(
                self.segment_cycles * per_cycle - self.spectral.segment_length) > 1e-9:
            raise ConfigError("segment_length must equal segment_cycles * f_sample / fs")

    @property
    def dt(self) -> float:
        return 1.0 / self.spectral.f_sample

    @property
    def bias(self) -> BiasPoint:
        return BiasPoint.from_vb(self.circuit, self.Vb, self.Vg_dc)

    def theory_context(self) -> TheoryContext:
        d = derive_params(self.circuit)
        sc = self.spectral
        w = make_window(sc.window, sc.seg_len)
        return TheoryContext(
            thresholds=thresholds(d, self.Vb, self.circuit),
            Vg_dc=self.Vg_dc,
            Cg=self.circuit.Cg,
            G=processing_gain(w, sc.N_FFT),
            delta=sc.delta,
            tau_N=self.tau_N,
            fs=self.fs,
            tau_t=self.tau_t,
        )

    def amplitudes(self) -> tuple:
        """Input charge amplitudes (C) of the sweep."""
        if self.Aq:
            return tuple(float(a) for a in self.Aq)
        mu = self.theory_context().mu(self.beta)
        return tuple(f * mu * self.circuit.Cg for f in self.Aq_mu_fraction)

    def sim_config(self, Aq: float, D_V: float, seed: int, duration: float | None = None) -> SimConfig:
        return SimConfig(
            circuit=self.circuit,
            bias=self.bias,
            signal=SignalParams(Aq=Aq, fs=self.fs, Cg=self.circuit.Cg),
            noise=NoiseParams(D_V=D_V, tau_N=self.tau_N, seed=seed),
            dt=self.dt,
            duration=self.spectral.samples_needed * self.dt if duration is None else duration,
            seed=seed,
            oversample=self.oversample,
        )

    def ensemble_seed(self, ensemble: int) -> int:
        # shared across grid points: every (Aq, D_V) sees the same noise shapes
        ss = np.random.SeedSequence(self.seed, spawn_key=(ensemble,))
        return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------- config file

# key -> (field, scale to SI)
_SCALAR_KEYS = {
    "C_aF": ("C", 1e-18), "Cg_aF": ("Cg", 1e-18), "Rt_kOhm": ("Rt", 1e3), "T_mK": ("T", 1e-3),
    "Vb_mV": ("Vb", 1e-3), "Vg_dc_V": ("Vg_dc", 1.0), "fs_MHz": ("fs", 1e6),
    "tau_N_ps": ("tau_N", 1e-12), "tau_t_ps": ("tau_t", 1e-12), "beta": ("beta", 1.0),
    "lambda": ("lam", 1.0),
}
_INT_KEYS = {"N_FFT", "segments", "segment_cycles", "peak_bins", "noise_bins", "ensembles", "seed",
             "oversample", "DV_points"}
_STR_KEYS = {"window", "pad_policy", "average", "observable", "out"}
_LIST_KEYS = {"Aq_e", "Aq_mu_fraction", "DV_V2"}
_OTHER_KEYS = {"fc_GHz", "f_sample_GHz", "DV_min_V2", "DV_max_V2"}


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse flat ``key = value`` lines (``#`` comments) into a config."""
    raw: dict[str, str] = {}
    known = set(_SCALAR_KEYS) | _INT_KEYS | _STR_KEYS | _LIST_KEYS | _OTHER_KEYS
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    try:
        return _build_config(raw, base or ExperimentConfig())
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _build_config(raw: dict, base: ExperimentConfig) -> ExperimentConfig:
    top, circ, spec = {}, {}, {}
    for key, (name, scale) in _SCALAR_KEYS.items():
        if key in raw:
            v = float(raw[key]) * scale
            (circ if name in ("C", "Cg", "Rt", "T") else top)[name] = v
    if "fc_GHz" in raw:
        top["tau_N"] = 1.0 / (2 * float(raw["fc_GHz"]) * 1e9)
    for key in ("ensembles", "seed", "oversample", "segment_cycles"):
        if key in raw:
            top[key] = int(raw[key])
    for key in ("N_FFT", "segments", "peak_bins", "noise_bins"):
        if key in raw:
            spec[key] = int(raw[key])
    for key in ("window", "pad_policy"):
        if key in raw:
            spec[key] = raw[key]
    for key in ("average", "observable", "out"):
        if key in raw:
            top[key] = raw[key]
    if "f_sample_GHz" in raw:
        spec["f_sample"] = float(raw["f_sample_GHz"]) * 1e9
    if "Aq_e" in raw:
        top["Aq"] = tuple(a * E_CHARGE for a in _floats(raw["Aq_e"]))
    if "Aq_mu_fraction" in raw:
        top["Aq_mu_fraction"] = _floats(raw["Aq_mu_fraction"])
        top.setdefault("Aq", ())
    if "DV_V2" in raw:
        top["DV"] = _floats(raw["DV_V2"])
    elif {"DV_min_V2", "DV_max_V2"} <= raw.keys():
        n = int(raw.get("DV_points", 13))
        top["DV"] = tuple(np.geomspace(float(raw["DV_min_V2"]), float(raw["DV_max_V2"]), n))
    circuit = replace(base.circuit, **circ)
    fs = top.get("fs", base.fs)
    cycles = top.get("segment_cycles", base.segment_cycles)
    f_sample = spec.get("f_sample", base.spectral.f_sample)
    spec["segment_length"] = int(round(cycles * f_sample / fs))
    spectral = replace(base.spectral, **spec)
    return replace(base, circuit=circuit, spectral=spectral, **top)


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


def format_config(cfg: ExperimentConfig) -> str:
    """Config text that :func:`parse_config_text` maps back to ``cfg``."""
    c, s = cfg.circuit, cfg.spectral
    lines = [
        "# turnstile-sr experiment config; SI prefixes in key names",
        "# bias convention: leads at +Vb and -Vb (symmetric)",
        f"C_aF = {c.C / 1e-18:.12g}", f"Cg_aF = {c.Cg / 1e-18:.12g}",
        f"Rt_kOhm = {c.Rt / 1e3:.12g}", f"T_mK = {c.T / 1e-3:.12g}",
        f"Vg_dc_V = {cfg.Vg_dc!r}", f"Vb_mV = {cfg.Vb / 1e-3:.12g}",
        f"fs_MHz = {cfg.fs / 1e6:.12g}", f"tau_N_ps = {cfg.tau_N / 1e-12:.12g}",
        f"tau_t_ps = {cfg.tau_t / 1e-12:.12g}",
    ]
    if cfg.Aq:
        lines.append("Aq_e = " + ", ".join(f"{a / E_CHARGE:.12g}" for a in cfg.Aq))
    else:
        lines.append("Aq_mu_fraction = " + ", ".join(repr(float(f)) for f in cfg.Aq_mu_fraction))
    lines += [
        "DV_V2 = " + ", ".join(repr(float(d)) for d in cfg.DV),
        f"N_FFT = {s.N_FFT}", f"f_sample_GHz = {s.f_sample / 1e9:.12g}",
        f"segment_cycles = {cfg.segment_cycles}", f"segments = {s.segments}",
        f"window = {s.window}", f"pad_policy = {s.pad_policy}",
        f"peak_bins = {s.peak_bins}", f"noise_bins = {s.noise_bins}",
        f"beta = {cfg.beta!r}", f"lambda = {cfg.lam!r}",
        f"ensembles = {cfg.ensembles}", f"seed = {cfg.seed}", f"oversample = {cfg.oversample}",
        f"average = {cfg.average}", f"observable = {cfg.observable}",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- sweep

@dataclass(frozen=True)
class SweepRow:
    Aq: float
    D_V: float
    snr_db_mean: float
    snr_db_stderr: float
    provenance: str
    valid_points: int


@dataclass
class SweepResult:
    rows: list
    failures: list = field(default_factory=list)

    def __post_init__(self):
        order = {p: i for i, p in enumerate(("simulation",) + BRANCHES)}
        self.rows = sorted(self.rows, key=lambda r: (r.Aq, order.get(r.provenance, 9), r.D_V))

    def amplitudes(self, provenance: str = "simulation") -> list:
        return sorted({r.Aq for r in self.rows if r.provenance == provenance})

    def curve(self, Aq: float, provenance: str = "simulation") -> SnrCurve:
        rows = [r for r in self.rows if r.provenance == provenance and r.Aq == Aq]
        return SnrCurve(D_V=[r.D_V for r in rows], snr_db=[r.snr_db_mean for r in rows],
                        amplitude=Aq, provenance=provenance)

    def curves(self, provenance: str = "simulation") -> list:
        return [self.curve(a, provenance) for a in self.amplitudes(provenance)]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write(CSV_TAG + "\n")
            w = csv.writer(fh)
            w.writerow(["Aq", "D_V", "snr_db_mean", "snr_db_stderr", "provenance", "valid_points"])
            for r in self.rows:
                w.writerow([f"{r.Aq:.9e}", f"{r.D_V:.9e}", f"{r.snr_db_mean:.9e}",
                            f"{r.snr_db_stderr:.9e}", r.provenance, r.valid_points])

    @classmethod
    def read_csv(cls, path) -> "SweepResult":
        with Path(path).open() as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        rows = [SweepRow(float(d["Aq"]), float(d["D_V"]), float(d["snr_db_mean"]),
                         float(d["snr_db_stderr"]), d["provenance"], int(d["valid_points"]))
                for d in csv.DictReader(lines)]
        return cls(rows)


def observable(trace, name: str) -> np.ndarray:
    if name == "n":
        return trace.n_trace.astype(float)
    return getattr(trace, name)


def run_point(cfg: ExperimentConfig, Aq: float, D_V: float, ensemble: int) -> float:
    """SNR (dB) of one seeded simulation at one grid point."""
    trace = simulate(cfg.sim_config(Aq, D_V, cfg.ensemble_seed(ensemble)))
    psd = estimate_psd(observable(trace, cfg.observable), cfg.spectral)
    return snr_from_psd(psd, cfg.fs, cfg.spectral.peak_bins, cfg.spectral.noise_bins).snr_db


def _run_task(args):
    cfg, ia, iv, e = args
    Aq, D_V = cfg.amplitudes()[ia], cfg.DV[iv]
    try:
        return (ia, iv, e), run_point(cfg, Aq, D_V, e), None
    except Exception as exc:  # recorded per grid point; the sweep goes on
        return (ia, iv, e), math.nan, f"{type(exc).__name__}: {exc}"


def _average(values: np.ndarray, mode: str) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    if mode == "db":
        se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return float(np.mean(values)), se
    lin = 10 ** (values / 10)
    m = float(np.mean(lin))
    se = float(np.std(lin, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return 10 * math.log10(m), 10 / math.log(10) * se / m


def theory_rows(cfg: ExperimentConfig, beta: float | None = None, lam: float | None = None) -> list:
    ctx = cfg.theory_context()
    params = {"tsironis": cfg.beta if beta is None else beta,
              "fokker-planck": cfg.lam if lam is None else lam}
    rows = []
    for Aq in cfg.amplitudes():
        for branch in BRANCHES:
            vals = snr_curve(branch, params[branch], np.asarray(cfg.DV), Aq / cfg.circuit.Cg, ctx)
            rows += [SweepRow(Aq, float(d), float(v), 0.0, branch, int(np.isfinite(v)))
                     for d, v in zip(cfg.DV, vals)]
    return rows


def run_sweep(cfg: ExperimentConfig, jobs: int = 1, theory: bool = True) -> SweepResult:
    """Ensemble-averaged SNR for every (Aq, D_V), plus both theory curves."""
    amps = cfg.amplitudes()
    tasks = [(cfg, ia, iv, e) for ia in range(len(amps)) for iv in range(len(cfg.DV))
             for e in range(cfg.ensembles)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_run_task(t) for t in tasks]
    values: dict = {}
    failures = []
    for (ia, iv, e), snr, err in results:
        if err is not None:
            failures.append((amps[ia], cfg.DV[iv], e, err))
            continue
        values.setdefault((ia, iv), []).append((e, snr))
    rows = []
    for ia, Aq in enumerate(amps):
        for iv, D_V in enumerate(cfg.DV):
            got = np.array([v for _, v in sorted(values.get((ia, iv), []))])
            mean, se = _average(got, cfg.average)
            rows.append(SweepRow(Aq, float(D_V), mean, se, "simulation", len(got)))
    if failures:
        log.warning("%d simulation runs failed; first: %s", len(failures), failures[0])
    if theory:
        rows += theory_rows(cfg)
    return SweepResult(rows, failures)


# ---------------------------------------------------------------- fit

@dataclass
class FitReport:
    fit: FitResult
    overlay: list  # (Aq, D_V, snr_sim, snr_theory)

    def write_overlay(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write(CSV_TAG + "\n")
            w = csv.writer(fh)
            w.writerow(["Aq", "D_V", "snr_db_sim", "snr_db_theory", "provenance"])
            for Aq, d, s, t in self.overlay:
                w.writerow([f"{Aq:.9e}", f"{d:.9e}", f"{s:.9e}", f"{t:.9e}", self.fit.branch])


def run_fit(sweep: SweepResult, branch: str, cfg: ExperimentConfig, search_range=None) -> FitReport:
    """Fit one theory branch jointly over every simulated amplitude."""
    curves = [c for c in sweep.curves("simulation") if len(c.D_V)]
    if not curves:
        raise FitError("sweep has no simulation rows")
    ctx = cfg.theory_context()
    fit = fit_parameter(curves, branch, ctx, search_range)
    overlay = []
    for c in curves:
        th = snr_curve(branch, fit.value, c.D_V, c.amplitude / ctx.Cg, ctx)
        overlay += list(zip([c.amplitude] * len(c.D_V), c.D_V, c.snr_db, th))
    return FitReport(fit, overlay)


def write_fit_summary(path, reports: dict) -> None:
    with Path(path).open("w") as fh:
        fh.write(CSV_TAG + "\n")
        for branch, rep in reports.items():
            name = "beta" if branch == "tsironis" else "lambda"
            f = rep.fit
            fh.write(f"{branch}.{name} = {f.value:.9e}\n")
            fh.write(f"{branch}.residual_dB2 = {f.residual:.9e}\n")
            fh.write(f"{branch}.excluded_points = {f.excluded}\n")
            fh.write(f"{branch}.at_boundary = {str(f.at_boundary).lower()}\n")


def default_jobs() -> int:
    return max(1, (os.cpu_count() or 1))
