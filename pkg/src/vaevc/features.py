"""STFT analysis/synthesis and the spectral features built on it.

Frames are 25 ms (400 samples) every 5 ms (80 samples) at 16 kHz, Hann
windowed and zero-padded to a 1024-point FFT, giving 513 bins. Frame ``t``
covers samples ``[80 t, 80 t + 400)``; there is no centering or padding.

Spectra ("SP") are magnitude spectra. Each frame is normalized to unit sum
and its log-sum kept as a separate energy track.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

from .errors import LengthError, ShapeError, StatsError

SAMPLE_RATE = 16000
FFT_SIZE = 1024
N_BINS = FFT_SIZE // 2 + 1
HOP = 80
WINDOW = 400
LOG_FLOOR = 1e-10
ENERGY_FLOOR = 1e-10
MCC_ORDER = 24
MCC_ALPHA = 0.42
F0_MIN = 50.0
F0_MAX = 500.0
VOICING_THRESHOLD = 0.3


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise LengthError("waveform must be a nonempty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")


@dataclass
class Analysis:
    sp: np.ndarray
    phase: np.ndarray
    f0: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.sp.shape[0]


def hann(n: int = WINDOW) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(n_samples: int, window: int = WINDOW, hop: int = HOP) -> int:
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def _frames(x: np.ndarray, window: int = WINDOW, hop: int = HOP) -> np.ndarray:
    if x.size < window:
        raise LengthError(f"signal of {x.size} samples is shorter than one {window}-sample window")
    return sliding_window_view(x, window)[::hop]


def stft(x: np.ndarray) -> np.ndarray:
    """Complex spectra, shape ``(frames, 513)``."""
    fr = _frames(np.asarray(x, dtype=np.float64)) * hann()
    return np.fft.rfft(fr, n=FFT_SIZE, axis=1)


def istft(spec: np.ndarray) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`."""
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != N_BINS:
        raise ShapeError(f"spectrum shape {spec.shape}, expected (frames, {N_BINS})")
    n = spec.shape[0]
    if n == 0:
        return np.zeros(0)
    w = hann()
    fr = np.fft.irfft(spec, n=FFT_SIZE, axis=1)[:, :WINDOW] * w
    length = (n - 1) * HOP + WINDOW
    out = np.zeros(length)
    norm = np.zeros(length)
    for t in range(n):
        out[t * HOP : t * HOP + WINDOW] += fr[t]
        norm[t * HOP : t * HOP + WINDOW] += w * w
    return out / np.maximum(norm, 1e-8)


def estimate_f0(x: np.ndarray, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Per-frame F0 (Hz, 0 = unvoiced) by normalized cross-correlation.

    Each frame's 400 samples are correlated against the signal shifted by
    every lag in the 50-500 Hz period range. The first local maximum
    reaching 90% of the best correlation is taken (guards against octave
    errors) and refined by parabolic interpolation; the frame is voiced if
    that correlation exceeds 0.3.
    """
    x = np.asarray(x, dtype=np.float64)
    n = frame_count(x.size)
    min_lag = int(np.floor(sample_rate / F0_MAX))
    max_lag = int(np.ceil(sample_rate / F0_MIN))
    padded = np.concatenate([x, np.zeros(max_lag + 1)])
    f0 = np.zeros(n)
    for t in range(n):
        seg = padded[t * HOP : t * HOP + WINDOW + max_lag + 1]
        ref = seg[:WINDOW]
        e0 = float(ref @ ref)
        if e0 <= 1e-12:
            continue
        cross = np.correlate(seg, ref, mode="valid")
        cs = np.concatenate([[0.0], np.cumsum(seg * seg)])
        energies = cs[WINDOW : WINDOW + max_lag + 2] - cs[: max_lag + 2]
        r = cross / np.sqrt(np.maximum(e0 * energies[: cross.size], 1e-300))
        r[:min_lag] = -np.inf
        r[max_lag + 1 :] = -np.inf
        best = r.max()
        if best <= VOICING_THRESHOLD:
            continue
        lag = int(np.argmax(r))
        for k in range(min_lag, max_lag + 1):
            if r[k] >= 0.9 * best and r[k] >= r[k - 1] and r[k] >= r[k + 1]:
                lag = k
                break
        shift = 0.0
        if min_lag < lag < max_lag:
            a, b, c = r[lag - 1], r[lag], r[lag + 1]
            den = a - 2.0 * b + c
            if den < 0:
                shift = 0.5 * (a - c) / den
        f0[t] = np.clip(sample_rate / (lag + shift), F0_MIN, F0_MAX)
    return f0


def analyze(w: Waveform) -> Analysis:
    """Magnitude spectra, phases and F0 for every frame."""
    if w.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {w.sample_rate}")
    spec = stft(w.samples)
    return Analysis(np.abs(spec), np.angle(spec), estimate_f0(w.samples, w.sample_rate))


def normalize_energy(sp: np.ndarray):
    """Scale every frame to unit sum; return ``(unit_sp, log_sums)``.

    All-zero frames become uniform with energy ``log(ENERGY_FLOOR)``.
    """
    sp = np.asarray(sp, dtype=np.float64)
    if np.any(sp < 0):
        raise ValueError("spectra must be nonnegative")
    sums = sp.sum(axis=1)
    dead = sums <= ENERGY_FLOOR
    safe = np.where(dead, 1.0, sums)
    unit = sp / safe[:, None]
    unit[dead] = 1.0 / sp.shape[1]
    energy = np.log(np.where(dead, ENERGY_FLOOR, sums))
    return unit, energy


def denormalize_energy(unit_sp: np.ndarray, energy: np.ndarray) -> np.ndarray:
    unit_sp = np.asarray(unit_sp, dtype=np.float64)
    energy = np.asarray(energy, dtype=np.float64)
    if energy.shape != (unit_sp.shape[0],):
        raise ShapeError("one energy value per frame required")
    return unit_sp * np.exp(energy)[:, None]


def to_log_sp(unit_sp: np.ndarray) -> np.ndarray:
    return np.log(np.asarray(unit_sp, dtype=np.float64) + LOG_FLOOR)


def from_log_sp(log_sp: np.ndarray) -> np.ndarray:
    return np.maximum(np.exp(np.asarray(log_sp, dtype=np.float64)) - LOG_FLOOR, 0.0)


def warp_frequency(omega: np.ndarray, alpha: float) -> np.ndarray:
    """Phase response of the first-order all-pass ``(z^-1 - a) / (1 - a z^-1)``."""
    return omega + 2.0 * np.arctan(alpha * np.sin(omega) / (1.0 - alpha * np.cos(omega)))


def mcc(sp: np.ndarray, order: int = MCC_ORDER, alpha: float = MCC_ALPHA) -> np.ndarray:
    """Mel-cepstral coefficients 1..order (c0 dropped), one row per frame.

    Bin ``k`` of the N-bin spectrum is placed at ``pi (k + 1/2) / N``, the
    DCT-II sample grid. The log spectrum is read off at the linear
    frequencies that the all-pass warp maps onto that uniform grid, and a
    DCT-II scaled by ``1/(2N)`` gives the cepstrum, so ``alpha = 0`` is the
    plain real cepstrum of the log magnitude.
    """
    sp = np.atleast_2d(np.asarray(sp, dtype=np.float64))
    n = sp.shape[1]
    log_sp = np.log(np.maximum(sp, LOG_FLOOR))
    grid = np.pi * (np.arange(n) + 0.5) / n
    if alpha != 0.0:
        linear = warp_frequency(grid, -alpha)
        log_sp = np.stack([np.interp(linear, grid, row) for row in log_sp])
    c = dct(log_sp, type=2, axis=1) / (2.0 * n)
    return c[:, 1 : order + 1]


@dataclass
class F0Stats:
    mean: float
    std: float


def f0_stats(tracks: Iterable[np.ndarray]) -> F0Stats:
    voiced = [np.log(t[t > 0]) for t in map(np.asarray, tracks)]
    lf0 = np.concatenate(voiced) if voiced else np.zeros(0)
    if lf0.size == 0:
        raise StatsError("no voiced frames to compute F0 statistics from")
    std = float(lf0.std())
    if not std > 0:
        raise StatsError("log-F0 has zero variance")
    return F0Stats(float(lf0.mean()), std)


def f0_convert(f0: np.ndarray, src: F0Stats, tgt: F0Stats) -> np.ndarray:
    """Linear mean/variance mapping of voiced log-F0; unvoiced frames stay 0."""
    f0 = np.asarray(f0, dtype=np.float64)
    out = np.zeros_like(f0)
    v = f0 > 0
    out[v] = np.exp((np.log(f0[v]) - src.mean) * (tgt.std / src.std) + tgt.mean)
    return out


def synthesize(unit_sp: np.ndarray, energy: np.ndarray, phase: np.ndarray, clip: bool = True) -> Waveform:
    """Restore energy, attach the given phases and overlap-add."""
    unit_sp = np.asarray(unit_sp, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if unit_sp.shape != phase.shape or np.shape(energy) != (unit_sp.shape[0],):
        raise ShapeError(
            f"frame counts differ: sp {unit_sp.shape}, energy {np.shape(energy)}, phase {phase.shape}"
        )
    if unit_sp.shape[0] == 0:
        raise LengthError("nothing to synthesize")
    mag = denormalize_energy(unit_sp, energy)
    x = istft(mag * np.exp(1j * phase))
    if clip:
        x = np.clip(x, -1.0, 1.0)
    return Waveform(x)
