"""Acceptance gate: one test (or group of sub-checks) per criterion.

Each check records a PASS/FAIL line that is printed in the terminal summary.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import special, stats

from conftest import ACCEPTANCE
from turnstile_sr.circuit_model import (
    E_CHARGE, K_B, BiasPoint, CircuitParams, SignalParams, derive_params, thresholds,
)
from turnstile_sr.experiment import ExperimentConfig, run_sweep
from turnstile_sr.noise import NoiseParams, ou_trace
from turnstile_sr.orthodox_mc import SimConfig, average_current, simulate, tunnel_rate
from turnstile_sr.spectral import (
    PsdEstimate, SpectralConfig, estimate_psd, hann_window, processing_gain, snr_from_psd,
)
from turnstile_sr.theory_fit import (
    SnrCurve, alpha_tsironis, fit_parameter, log_fp_integral, snr_curve, transition_rate,
)

P = CircuitParams(C=1.0e-18, Cg=0.5e-18, Rt=100e3, T=30e-3)
FS = 100e6
DV_GRID = tuple(np.geomspace(1e-6, 1e-3, 13))


def record(k, ok, detail):
    ACCEPTANCE.setdefault(k, []).append((bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
    assert ok, detail


def sim_cfg(Av, cycles, D_V=0.0, seed=0):
    return SimConfig(circuit=P, bias=BiasPoint.from_vb(P, 50e-3),
                     signal=SignalParams.from_voltage(Av, FS, P.Cg), noise=NoiseParams(D_V=D_V),
                     duration=cycles / FS, seed=seed)


@pytest.fixture(scope="module")
def sr_cfg():
    cfg = ExperimentConfig(circuit=P, Aq_mu_fraction=(0.5,), DV=DV_GRID, ensembles=10, seed=0)
    return cfg


@pytest.fixture(scope="module")
def sr_sweep(sr_cfg):
    t0 = time.perf_counter()
    res = run_sweep(sr_cfg, theory=False)
    elapsed = time.perf_counter() - t0
    curve = res.curves()[0]
    return curve, elapsed


# 1 -------------------------------------------------------------------------

def test_criterion_1_parameters():
    d = derive_params(P)
    th = thresholds(d, 50e-3, P)
    ok = (f"{d.Vg0:.6g}" == "0.160218" and math.isclose(d.Cext, 0.5e-18, rel_tol=1e-12)
          and math.isclose(th.Vt1, 0.150, rel_tol=1e-12) and abs(th.Vt0 - 0.170436) < 1e-6)
    record(1, ok, f"Vg0={d.Vg0:.9f} V, Cext={d.Cext / 1e-18:.6f} aF, "
                  f"Vt1={th.Vt1:.9f} V, Vt0={th.Vt0:.9f} V")


# 2 -------------------------------------------------------------------------

def test_criterion_2_quantization():
    t0 = time.perf_counter()
    tr = simulate(sim_cfg(Av=30e-3, cycles=100))
    elapsed = time.perf_counter() - t0
    current = average_current(tr)
    ok = abs(current / (E_CHARGE * FS) - 1) <= 0.01 and elapsed <= 10
    record(2, ok, f"I={current * 1e12:.4f} pA (e*fs={E_CHARGE * FS * 1e12:.4f} pA), "
                  f"{tr.total_transferred} e in 100 cycles, {elapsed:.2f} s")


# 3 -------------------------------------------------------------------------

def test_criterion_3_blockade():
    t0 = time.perf_counter()
    tr = simulate(sim_cfg(Av=0.0, cycles=1000))
    elapsed = time.perf_counter() - t0
    ok = tr.events == 0 and tr.duration == pytest.approx(10e-6) and elapsed <= 10
    record(3, ok, f"{tr.events} events in {tr.duration * 1e6:.1f} us, {elapsed:.2f} s")


# 4 -------------------------------------------------------------------------

def test_criterion_4_sr_peak(sr_sweep):
    curve, elapsed = sr_sweep
    y = curve.snr_db
    i = int(np.argmax(y))
    interior = 0 < i < len(y) - 1
    margin = min(y[i] - y[0], y[i] - y[-1])
    ok = interior and margin >= 3 and elapsed <= 600
    record(4, ok, f"max {y[i]:.2f} dB at D_V={curve.D_V[i]:.3g} V^2 (index {i}/{len(y) - 1}), "
                  f"margin over endpoints {margin:.2f} dB, sweep {elapsed:.0f} s")


# 5 -------------------------------------------------------------------------

def test_criterion_5_fp_peak_location(sr_cfg, sr_sweep):
    curve, _ = sr_sweep
    ctx = sr_cfg.theory_context()
    fit = fit_parameter(curve, "fokker-planck", ctx)
    fine = np.geomspace(DV_GRID[0], DV_GRID[-1], 400)
    th = snr_curve("fokker-planck", fit.value, fine, curve.amplitude / P.Cg, ctx)
    d_th = fine[int(np.nanargmax(th))]
    d_sim = curve.D_V[int(np.argmax(curve.snr_db))]
    ratio = max(d_th / d_sim, d_sim / d_th)
    record(5, ratio <= 2, f"lambda={fit.value:.4g}, theory argmax {d_th:.3g} V^2, "
                          f"simulated argmax {d_sim:.3g} V^2, ratio {ratio:.2f}")


# 6 -------------------------------------------------------------------------

def test_criterion_6_tsironis_rising_region(sr_cfg, sr_sweep):
    curve, _ = sr_sweep
    ctx = sr_cfg.theory_context()
    fit = fit_parameter(curve, "tsironis", ctx)
    i = int(np.argmax(curve.snr_db))
    d = curve.D_V[: i + 1]
    sim = curve.snr_db[: i + 1]
    th = snr_curve("tsironis", fit.value, d, curve.amplitude / P.Cg, ctx)
    rho = stats.spearmanr(sim, th).statistic if len(d) > 2 else math.nan
    mono_sim = bool(np.all(np.diff(sim) >= 0))
    mono_th = bool(np.all(np.diff(th) >= 0))
    ok = mono_sim and mono_th and rho >= 0.9
    record(6, ok, f"beta={fit.value:.4g}, {len(d)} rising points, sim monotone={mono_sim}, "
                  f"theory monotone={mono_th}, Spearman={rho:.3f}")


# 7 -------------------------------------------------------------------------

@pytest.mark.parametrize("branch,value", [("tsironis", 4900.0), ("fokker-planck", 1.63)])
def test_criterion_7_round_trip(sr_cfg, branch, value):
    ctx = sr_cfg.theory_context()
    mu = ctx.mu(4900.0)
    Av = 0.5 * mu
    target = SnrCurve(np.asarray(DV_GRID), snr_curve(branch, value, DV_GRID, Av, ctx), Av * P.Cg, "theory")
    t0 = time.perf_counter()
    fit = fit_parameter(target, branch, ctx)
    elapsed = time.perf_counter() - t0
    err = abs(fit.value / value - 1)
    record(7, err <= 0.01 and elapsed <= 1.0,
           f"{branch}: {fit.value:.6g} vs {value:g} (rel err {err:.1e}), {elapsed:.2f} s")


# 8 -------------------------------------------------------------------------

def test_criterion_8_alpha1_ratio(sr_cfg):
    mu = sr_cfg.theory_context().mu(4900.0)
    a0, a1 = alpha_tsironis(mu, np.asarray(DV_GRID), 125e-12)
    record(8, bool(np.all(a1 == a0 / mu)), "alpha1 == alpha0/mu exactly on the grid")


def test_criterion_8_quadrature_symmetry():
    thetas = np.geomspace(0.01, 20, 200)
    # phi(u) + phi(-u) = 1 folds the integral to exp(theta^2) * Dawson(theta)
    err = max(abs(log_fp_integral(t) - (t * t + math.log(special.dawsn(t)))) for t in thetas)
    record(8, err <= 1e-10, f"quadrature symmetry identity max log error {err:.1e}")


def test_criterion_8_alpha1_finite_difference(sr_cfg):
    mu = sr_cfg.theory_context().mu(4900.0)
    tau = 125e-12
    worst = 0.0
    for d in DV_GRID:
        a0, a1 = alpha_tsironis(mu, d, tau)
        h = 1e-6 * mu
        # -2 dW/d eta with the signal lowering the critical noise: V_NC = mu - eta
        fd = -2 * (transition_rate(mu - h, d, tau) - transition_rate(mu + h, d, tau)) / (2 * h)
        worst = max(worst, abs(fd - a1) / a1)
    record(8, worst <= 1e-6, f"alpha1 vs -2 dW/d eta: max relative error {worst:.3g}")


def test_criterion_8_hann_gain():
    g = processing_gain(hann_window(2048))
    record(8, abs(g - 2 / 3) <= 1e-3, f"Hann G(2048)={g:.6f}")


def test_criterion_8_detailed_balance(rng):
    x = rng.uniform(-40, 40, 10_000)
    T = rng.uniform(1e-3, 1.0, 10_000)
    kT = K_B * T
    worst = max(abs(tunnel_rate(xi * k, 100e3, t) / tunnel_rate(-xi * k, 100e3, t) / math.exp(-xi) - 1)
                for xi, k, t in zip(x, kT, T))
    record(8, worst <= 1e-12, f"detailed balance max relative error {worst:.1e}")


def test_criterion_8_threshold_identity(rng):
    worst = 0.0
    for C, Cg, f in zip(rng.uniform(0.05, 20, 10_000), rng.uniform(0.05, 20, 10_000),
                        rng.uniform(0.01, 1.5, 10_000)):
        p = CircuitParams(C=C * 1e-18, Cg=Cg * 1e-18)
        d = derive_params(p)
        th = thresholds(d, f * d.Vb0, p)
        worst = max(worst, abs((th.Vt0 + th.Vt1) / (2 * d.Vg0) - 1))
    record(8, worst <= 1e-12, f"Vt0+Vt1=2Vg0 max relative error {worst:.1e} over 1e4 draws")


# 9 -------------------------------------------------------------------------

def test_criterion_9_noise_statistics():
    D, tau = 1e-4, 125e-12
    dt, n, lag = tau / 10, 10**6, 10
    t0 = time.perf_counter()
    x = ou_trace(NoiseParams(D_V=D, tau_N=tau), dt, n, np.random.default_rng(2024))
    rho = math.exp(-dt / tau)
    xc = x - x.mean()
    var = float(np.mean(xc**2))
    acov = float(np.mean(xc[:-lag] * xc[lag:]))
    kurt = float(stats.kurtosis(x))
    elapsed = time.perf_counter() - t0
    # large-sample standard deviations of the moment estimators for a Gaussian AR(1) sequence
    sd_var = math.sqrt(2 * D**2 / n * (1 + rho**2) / (1 - rho**2))
    sd_r = math.sqrt(((1 + rho**2) * (1 + rho ** (2 * lag)) / (1 - rho**2) - 2 * lag * rho ** (2 * lag)) / n)
    sd_k = math.sqrt(24 / n * (1 + rho**4) / (1 - rho**4))
    zs = ((var - D) / sd_var, (acov / var - math.exp(-1)) / sd_r, kurt / sd_k)
    ok = all(abs(z) < 3 for z in zs) and elapsed <= 5
    record(9, ok, f"z(var)={zs[0]:+.2f}, z(lag tau_N acf)={zs[1]:+.2f}, z(kurtosis)={zs[2]:+.2f}, "
                  f"{elapsed:.2f} s")


# 10 ------------------------------------------------------------------------

def test_criterion_10_exact_bin_tone():
    cfg = SpectralConfig(window="rect", pad_policy="full", segments=4)
    t = np.arange(cfg.samples_needed) / cfg.f_sample
    A = 0.37
    p = estimate_psd(A * np.sin(2 * np.pi * 100 * cfg.delta * t + 1.1), cfg)
    err = abs(p.psd[100] * p.delta / (A**2 / 2) - 1)
    record(10, err <= 1e-9, f"exact-bin tone power relative error {err:.1e}")


def test_criterion_10_parseval(rng):
    cfg = SpectralConfig()
    sigma = 0.5
    p = estimate_psd(sigma * rng.standard_normal(cfg.samples_needed), cfg)
    w = hann_window(cfg.seg_len)
    sd = sigma**2 * math.sqrt(2 * np.sum(w**4) / np.sum(w**2) ** 2 / cfg.segments)
    z = (np.sum(p.psd) * p.delta - sigma**2) / sd
    record(10, abs(z) < 3, f"white-noise Parseval z={z:+.2f}")


def test_criterion_10_snr_nonnegative(rng, sr_sweep):
    vals = []
    for _ in range(2000):
        psd = rng.exponential(1.0, 1025) * rng.uniform(0, 2)
        vals.append(snr_from_psd(PsdEstimate(1e9 / 1024, psd, 0.65, 1), FS).snr_db)
    curve, _ = sr_sweep
    low = min(min(vals), float(np.min(curve.snr_db)))
    record(10, low >= 0, f"min snr_db over random spectra and the SR sweep {low:.3g} dB")


def test_criterion_10_zero_signal(sr_cfg):
    cfg = replace(sr_cfg, Aq=(0.0,))
    res = run_sweep(cfg, theory=False)
    y = np.array([r.snr_db_mean for r in res.rows])
    worst = float(np.max(np.abs(y)))
    record(10, worst <= 0.5, f"Aq=0 sweep max |snr_db| {worst:.3f} dB over {len(y)} points")
