"""Adiabatic two-state SNR predictions and least-squares fits of beta / lambda.

Two rate models feed the same linear-response SNR formula:

* ``tsironis``: colored-noise escape rate driven by the critical noise; the
  free parameter is the gain ``beta`` (through the barrier parameter mu) and
  the modulation amplitude is the gate amplitude Av.
* ``fokker-planck``: rate from the integral of exp(u^2)*phi(u); the free
  parameter is ``lambda`` (through gamma) and the modulation amplitude is
  Av / sqrt(2 D_V).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .circuit_model import NoBarrierError, Thresholds, TwoStateModel, critical_noise

log = logging.getLogger(__name__)

BRANCHES = ("tsironis", "fokker-planck")


class TheoryRangeError(ValueError):
    """Linear-response bracket of the S/N formula is not positive."""


class FitError(ValueError):
    pass


class BoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TheoryParams:
    beta: float = 4900.0
    lam: float = 1.63
    tau_N: float = 125e-12
    fs: float = 100e6
    tau_t: float = 30e-12


@dataclass(frozen=True)
class TheoryContext:
    """Everything a theory curve needs besides the fitted scalar."""

    thresholds: Thresholds
    Vg_dc: float
    Cg: float
    G: float
    delta: float
    tau_N: float = 125e-12
    fs: float = 100e6
    tau_t: float = 30e-12

    def mu(self, beta: float) -> float:
        m = TwoStateModel(beta=beta, thresholds=self.thresholds, tau_t=self.tau_t)
        return critical_noise(0.0, m, self.Vg_dc)[1]

    def gamma(self, lam: float) -> float:
        return lam * (self.thresholds.Vt0 - self.thresholds.Vt1) / 2


@dataclass
class SnrCurve:
    D_V: np.ndarray
    snr_db: np.ndarray
    amplitude: float  # Aq (C)
    provenance: str = "simulation"

    def __post_init__(self):
        self.D_V = np.asarray(self.D_V, dtype=float)
        self.snr_db = np.asarray(self.snr_db, dtype=float)
        if self.D_V.shape != self.snr_db.shape:
            raise ValueError("D_V and snr_db lengths differ")
        if np.any(np.diff(self.D_V) <= 0):
            raise ValueError("D_V values must be strictly increasing")


@dataclass
class FitResult:
    branch: str
    value: float
    residual: float
    excluded: int
    at_boundary: bool = False
    grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    grid_residuals: np.ndarray = field(default_factory=lambda: np.empty(0))


def transition_rate(V_NC, D_V, tau_N: float):
    """Colored-noise escape rate W (1/s) for critical noise ``V_NC``."""
    V_NC = np.asarray(V_NC, dtype=float)
    D_V = np.asarray(D_V, dtype=float)
    if np.any(D_V < 0):
        raise ValueError("noise variance must be non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        w = V_NC / (tau_N * np.sqrt(2 * np.pi * D_V)) * np.exp(-V_NC**2 / (2 * D_V))
    return np.where(D_V == 0, 0.0, w)


def alpha_tsironis(mu: float, D_V, tau_N: float):
    """``(alpha0, alpha1)`` with alpha1 = alpha0/mu."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    D_V = np.asarray(D_V, dtype=float)
    if np.any(D_V <= 0):
        raise ValueError("noise variance must be positive")
    a0 = 2 * mu / (tau_N * np.sqrt(2 * np.pi * D_V)) * np.exp(-mu**2 / (2 * D_V))
    return a0, a0 / mu


def phi(u):
    return 0.5 * (1 + special.erf(u))


def log_fp_integral(theta: float) -> float:
    """log of the integral of exp(u^2)*phi(u) over [-theta, theta].

    Integrated adaptively with the exp(theta^2) factor pulled out so the
    integrand stays in [0, 1] for any theta.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    t2 = theta * theta
    f = lambda u: math.exp(u * u - t2) * 0.5 * math.erfc(-u)
    # integrand piles up in a layer of width ~1/theta below the upper end
    cuts = sorted({c for c in (theta - k / theta for k in (1, 4, 16, 64)) if -theta < c < theta} | {0.0})
    edges = [-theta, *cuts, theta]
    total = 0.0
    with warnings.catch_warnings():
        # roundoff notices above theta ~ 1e3; the value is still exact there
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            total += integrate.quad(f, a, b, epsabs=1e-16, epsrel=1e-13, limit=200)[0]
    return t2 + math.log(total)


def alpha_fokker_planck(gamma: float, D_V: float, tau_N: float) -> tuple[float, float]:
    if not (gamma > 0 and D_V > 0):
        raise ValueError("gamma and D_V must be positive")
    theta = gamma / math.sqrt(2 * D_V)
    logI = log_fp_integral(theta)
    pref = 1.0 / (tau_N * math.sqrt(math.pi))
    a0 = pref * math.exp(-logI)
    a1 = pref * math.exp(-2 * logI + theta * theta) * math.erf(theta)
    return a0, a1


def signal_to_noise(alphas, eta0: float, fs: float) -> float:
    """Linear-response S/N (Hz) of the two-state output."""
    a0, a1 = alphas
    if a0 <= 0:
        raise TheoryRangeError("alpha0 must be positive")
    k = (a1 * eta0) ** 2
    bracket = 1 - k / (2 * (a0**2 + (2 * math.pi * fs) ** 2))
    if not bracket > 0:
        raise TheoryRangeError(f"linear-response bracket {bracket:.3g} <= 0")
    return k / (8 * a0) / bracket


def snr_theory(alphas, eta0: float, fs: float, G: float, delta: float) -> float:
    """SNR in dB for alphas and modulation amplitude, in the PSD's bin units."""
    return 10 * math.log10(1 + signal_to_noise(alphas, eta0, fs) * G / delta)


def snr_point(branch: str, param: float, D_V: float, Av: float, ctx: TheoryContext) -> float:
    """Theory SNR (dB) at one noise variance; raises TheoryRangeError when invalid."""
    if branch == "tsironis":
        try:
            mu = ctx.mu(param)
        except NoBarrierError as exc:
            raise TheoryRangeError(str(exc)) from exc
        if mu <= 0:
            raise TheoryRangeError("mu <= 0: signal-free barrier already erased")
        alphas = alpha_tsironis(mu, D_V, ctx.tau_N)
        eta0 = Av
    elif branch == "fokker-planck":
        alphas = alpha_fokker_planck(ctx.gamma(param), D_V, ctx.tau_N)
        eta0 = Av / math.sqrt(2 * D_V)
    else:
        raise ValueError(f"unknown theory branch {branch!r}")
    if alphas[0] == 0:
        # escape rate underflowed: no switching, no line
        return 0.0
    return snr_theory(alphas, eta0, ctx.fs, ctx.G, ctx.delta)


def snr_curve(branch: str, param: float, D_V, Av: float, ctx: TheoryContext) -> np.ndarray:
    """Theory SNR over a variance grid; NaN where the theory is out of range."""
    out = np.empty(len(D_V))
    for i, d in enumerate(D_V):
        try:
            out[i] = snr_point(branch, param, float(d), Av, ctx)
        except TheoryRangeError:
            out[i] = np.nan
    return out


def _as_curves(sim) -> list[SnrCurve]:
    return [sim] if isinstance(sim, SnrCurve) else list(sim)


def fit_objective(param: float, sim, branch: str, ctx: TheoryContext) -> tuple[float, int]:
    """Sum of squared dB residuals over valid points, and the excluded count.

    ``sim`` is one :class:`SnrCurve` or a sequence of them (one per amplitude).
    """
    total, excluded, used = 0.0, 0, 0
    for c in _as_curves(sim):
        theory = snr_curve(branch, param, c.D_V, c.amplitude / ctx.Cg, ctx)
        ok = np.isfinite(theory) & np.isfinite(c.snr_db)
        total += float(np.sum((theory[ok] - c.snr_db[ok]) ** 2))
        excluded += int(np.sum(~ok))
        used += int(np.sum(ok))
    return (total if used else math.inf), excluded


DEFAULT_RANGES = {"tsironis": (1e2, 1e5), "fokker-planck": (0.05, 20.0)}


def fit_parameter(sim: SnrCurve, branch: str, ctx: TheoryContext, search_range=None,
                  grid_points: int = 61) -> FitResult:
    """Least-squares fit of beta (tsironis) or lambda (fokker-planck).

    A log-spaced coarse grid locates the best bracket; golden-section search
    refines inside it.
    """
    if branch not in BRANCHES:
        raise ValueError(f"unknown theory branch {branch!r}")
    if sum(len(c.D_V) for c in _as_curves(sim)) < 5:
        raise FitError("need at least 5 simulated points")
    lo, hi = DEFAULT_RANGES[branch] if search_range is None else search_range
    grid = np.geomspace(lo, hi, grid_points)
    res = np.array([fit_objective(g, sim, branch, ctx)[0] for g in grid])
    if not np.isfinite(res).any():
        raise FitError("no valid theory points anywhere in the search range")
    i = int(np.nanargmin(np.where(np.isfinite(res), res, np.nan)))
    at_boundary = i in (0, grid_points - 1)
    if at_boundary:
        warnings.warn(f"{branch} fit minimum at search-range boundary {grid[i]:.4g}",
                      BoundaryWarning, stacklevel=2)
        best = float(grid[i])
    else:
        # golden section in log-parameter space over the bracketing grid cells
        f = lambda s: fit_objective(math.exp(s), sim, branch, ctx)[0]
        br = (math.log(grid[i - 1]), math.log(grid[i]), math.log(grid[i + 1]))
        sol = optimize.minimize_scalar(f, bracket=br, method="golden", tol=1e-10)
        best = math.exp(sol.x) if sol.fun <= res[i] else float(grid[i])
    residual, excluded = fit_objective(best, sim, branch, ctx)
    log.info("%s fit: %.6g (residual %.4g dB^2, %d excluded)", branch, best, residual, excluded)
    return FitResult(branch=branch, value=best, residual=residual, excluded=excluded,
                     at_boundary=at_boundary, grid=grid, grid_residuals=res)
