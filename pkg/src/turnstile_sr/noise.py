"""Exponentially correlated Gaussian gate noise (Ornstein-Uhlenbeck)."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter


class StrongColorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class NoiseParams:
    D_V: float = 0.0  # V^2
    tau_N: float = 125e-12  # s
    seed: int = 0

    def __post_init__(self):
        if self.D_V < 0:
            raise ValueError("noise variance must be non-negative")
        if not self.tau_N > 0:
            raise ValueError("correlation time must be positive")

    @classmethod
    def from_cutoff(cls, D_V: float, fc: float, seed: int = 0) -> "NoiseParams":
        return cls(D_V=D_V, tau_N=1.0 / (2.0 * fc), seed=seed)

    @property
    def fc(self) -> float:
        return 1.0 / (2.0 * self.tau_N)

    def charge(self, v_noise, Cg: float):
        """Gate-referred charge noise for a voltage trace."""
        return Cg * np.asarray(v_noise)

    def check_strong_color(self, tau_t: float, factor: float = 5.0) -> bool:
        ok = self.tau_N >= factor * tau_t
        if not ok:
            warnings.warn(
                f"tau_N={self.tau_N:.3g} s < {factor:g}*tau_t={factor * tau_t:.3g} s: "
                "colored-noise rate theory outside its strong-color regime",
                StrongColorWarning,
                stacklevel=2,
            )
        return ok


def ou_coefficients(params: NoiseParams, dt: float) -> tuple[float, float]:
    """One-step decay factor and innovation std of the exact discretization."""
    rho = math.exp(-dt / params.tau_N)
    return rho, math.sqrt(params.D_V * -math.expm1(-2 * dt / params.tau_N))


class OUNoise:
    """Stateful OU sampler; successive ``draw`` calls continue one trajectory."""

    def __init__(self, params: NoiseParams, dt: float, rng: np.random.Generator | None = None):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.params = params
        self.dt = dt
        self.rng = np.random.default_rng(params.seed) if rng is None else rng
        self.rho, self.sigma = ou_coefficients(params, dt)
        self._last = None

    def draw(self, count: int) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be >= 1")
        if self.params.D_V == 0:
            return np.zeros(count)
        xi = self.rng.standard_normal(count)
        if self._last is None:
            # first sample from the stationary law
            x0 = math.sqrt(self.params.D_V) * xi[0]
            rest = lfilter([self.sigma], [1.0, -self.rho], xi[1:], zi=[self.rho * x0])[0]
            out = np.concatenate(([x0], rest))
        else:
            out = lfilter([self.sigma], [1.0, -self.rho], xi, zi=[self.rho * self._last])[0]
        self._last = float(out[-1])
        return out


def ou_trace(params: NoiseParams, dt: float, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Stationary OU samples: x[k+1] = rho*x[k] + sqrt(D_V*(1-rho^2))*xi[k]."""
    return OUNoise(params, dt, rng).draw(count)


def write_noise_csv(path, v_noise, dt: float) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("# turnstile-sr v1\n")
        w = csv.writer(fh)
        w.writerow(["t", "V_N"])
        for k, v in enumerate(v_noise):
            w.writerow([f"{k * dt:.9e}", f"{v:.9e}"])
