"""Segment-averaged PSD estimation and SNR extraction at the signal frequency."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class InvalidWindowError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralConfig:
    N_FFT: int = 2048
    f_sample: float = 2e9
    window: str = "hann"
    segments: int = 100
    segment_length: int = 2000  # live samples per segment
    pad_policy: str = "zero_pad"  # "zero_pad": window the live samples, pad to N_FFT; "full": segments of N_FFT
    peak_bins: int = 5
    noise_bins: int = 10

    def __post_init__(self):
        if self.N_FFT < 2 or self.N_FFT & (self.N_FFT - 1):
            raise ValueError("N_FFT must be a power of two")
        if self.pad_policy not in ("zero_pad", "full"):
            raise ValueError(f"unknown pad policy {self.pad_policy!r}")
        if self.seg_len > self.N_FFT:
            raise ValueError("segment longer than N_FFT")
        if self.peak_bins < 1 or self.peak_bins % 2 == 0:
            raise ValueError("peak_bins must be odd")
        if self.noise_bins < 2 or self.noise_bins % 2:
            raise ValueError("noise_bins must be even")

    @property
    def seg_len(self) -> int:
        return self.segment_length if self.pad_policy == "zero_pad" else self.N_FFT

    @property
    def delta(self) -> float:
        return self.f_sample / self.N_FFT

    @property
    def samples_needed(self) -> int:
        return self.seg_len * self.segments


@dataclass
class PsdEstimate:
    delta: float
    psd: np.ndarray
    G: float
    segments_averaged: int

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(len(self.psd)) * self.delta

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write("# turnstile-sr v1\n")
            w = csv.writer(fh)
            w.writerow(["f_Hz", "psd"])
            for f, v in zip(self.freqs, self.psd):
                w.writerow([f"{f:.9e}", f"{v:.9e}"])


@dataclass(frozen=True)
class SnrResult:
    S: float
    N: float
    snr_db: float


def hann_window(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("window length must be >= 2")
    i = np.arange(n)
    return 0.5 * (1 - np.cos(2 * np.pi * i / (n - 1)))


def make_window(kind: str, n: int) -> np.ndarray:
    if kind in ("hann", "hanning"):
        return hann_window(n)
    if kind in ("rect", "rectangular", "boxcar"):
        return np.ones(n)
    raise ValueError(f"unknown window {kind!r}")


def processing_gain(w, n_fft: int | None = None) -> float:
    """(sum w)^2 / (N_FFT * sum w^2); ``n_fft`` defaults to ``len(w)``."""
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        raise InvalidWindowError("empty window")
    s2 = float(np.sum(w * w))
    if s2 == 0:
        raise InvalidWindowError("all-zero window")
    n_fft = w.size if n_fft is None else n_fft
    return float(np.sum(w)) ** 2 / (n_fft * s2)


def estimate_psd(x, cfg: SpectralConfig) -> PsdEstimate:
    """One-sided PSD averaged over ``cfg.segments`` contiguous segments.

    Normalized so that ``sum(psd) * delta`` equals ``sum((x*w)^2) / sum(w^2)``
    per segment, i.e. the window-corrected mean power.
    """
    x = np.asarray(x, dtype=float)
    L = cfg.seg_len
    if x.size < cfg.samples_needed:
        raise ValueError(f"need {cfg.samples_needed} samples, got {x.size}")
    w = make_window(cfg.window, L)
    segs = x[: cfg.samples_needed].reshape(cfg.segments, L)
    flat = np.ptp(segs, axis=1) == 0
    segs = segs - segs.mean(axis=1, keepdims=True)
    segs[flat] = 0.0
    spec = np.fft.rfft(segs * w, n=cfg.N_FFT, axis=1)
    power = (spec.real**2 + spec.imag**2).mean(axis=0)
    scale = 2.0 / (cfg.f_sample * np.sum(w * w))
    psd = power * scale
    psd[0] /= 2
    if cfg.N_FFT % 2 == 0:
        psd[-1] /= 2
    return PsdEstimate(delta=cfg.delta, psd=psd, G=processing_gain(w, cfg.N_FFT),
                       segments_averaged=cfg.segments)


def snr_db_from_powers(S: float, N: float, G: float, delta: float) -> float:
    """10*log10((S*G + N*delta)/(N*delta)); 0 dB when both powers vanish."""
    if N <= 0:
        return 0.0 if S <= 0 else math.inf
    return 10 * math.log10((S * G + N * delta) / (N * delta))


def snr_from_psd(p: PsdEstimate, fs: float, peak_bins: int = 5, noise_bins: int = 10) -> SnrResult:
    """SNR of the line at ``fs``.

    The peak spans ``peak_bins`` bins centred on the bin nearest ``fs``. The
    noise density is interpolated linearly to ``fs`` from the mean of
    ``noise_bins/2`` bins on each side of the peak. ``S`` is the peak power in
    excess of that floor, clipped at zero.
    """
    nyq = p.delta * (len(p.psd) - 1)
    if not 0 < fs < nyq:
        raise ValueError(f"fs={fs:.4g} Hz outside (0, {nyq:.4g}) Hz")
    k0 = int(round(fs / p.delta))
    hp, hn = peak_bins // 2, noise_bins // 2
    lo, hi = k0 - hp - hn, k0 + hp + hn
    if lo < 1 or hi > len(p.psd) - 1:
        raise ValueError("fs too close to DC or Nyquist for the peak and noise bins")
    left = np.arange(k0 - hp - hn, k0 - hp)
    right = np.arange(k0 + hp + 1, k0 + hp + hn + 1)
    nl, nr = p.psd[left].mean(), p.psd[right].mean()
    fl, fr = left.mean() * p.delta, right.mean() * p.delta
    N = float(nl + (nr - nl) * (fs - fl) / (fr - fl))
    peak = p.psd[k0 - hp: k0 + hp + 1]
    S = max(0.0, float(np.sum(peak - N)) * p.delta)
    return SnrResult(S=S, N=N, snr_db=snr_db_from_powers(S, N, p.G, p.delta))
