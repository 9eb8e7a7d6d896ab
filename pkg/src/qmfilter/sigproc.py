"""Signal conditioning and toy signal synthesis.

PSDs are one-sided densities: white noise of variance ``sigma**2`` sampled
at ``fs`` has a flat PSD of ``2 * sigma**2 / fs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import signal as sps

from .core import TimeSeries
from .simulator import make_rng

#: Total fraction of the series inside the cosine tapers applied before whitening.
WHITEN_TAPER = 0.125


@dataclass(frozen=True)
class PsdEstimate:
    frequencies: np.ndarray
    power: np.ndarray
    segment_length: int
    window: str = "hann"

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        p = np.asarray(self.power, dtype=float)
        if f.shape != p.shape or f.ndim != 1 or f.size < 2:
            raise ValueError("frequencies and power must be equal-length 1-d arrays")
        if np.any(p < 0):
            raise ValueError("PSD must be nonnegative")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "power", p)

    def __call__(self, freqs) -> np.ndarray:
        return np.interp(freqs, self.frequencies, self.power)


def welch_psd(ts: TimeSeries, segment_length: int = 512, window: str = "hann",
              overlap: int = 0) -> PsdEstimate:
    """Averaged windowed periodograms (no detrending, one-sided density)."""
    if segment_length > len(ts):
        raise ValueError(f"series of {len(ts)} samples is shorter than segment_length={segment_length}")
    if not 0 <= overlap < segment_length:
        raise ValueError("overlap must lie in [0, segment_length)")
    f, p = sps.welch(ts.samples, fs=ts.sample_rate, window=window, nperseg=segment_length,
                     noverlap=overlap, detrend=False, return_onesided=True, scaling="density")
    return PsdEstimate(f, p, segment_length, window)


def lowpass_downsample(ts: TimeSeries, cutoff_hz: float, out_rate: float) -> TimeSeries:
    """Brick-wall low-pass in the frequency domain, then keep every r-th sample."""
    fs = ts.sample_rate
    ratio = fs / out_rate
    if out_rate <= 0 or abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ValueError(f"out_rate {out_rate} must divide sample_rate {fs}")
    if not 0 < cutoff_hz < fs / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz must lie below the input Nyquist {fs / 2} Hz")
    if cutoff_hz > out_rate / 2:
        raise ValueError(f"cutoff {cutoff_hz} Hz exceeds the output Nyquist {out_rate / 2} Hz")
    n = len(ts)
    spec = np.fft.rfft(ts.samples)
    spec[np.fft.rfftfreq(n, 1 / fs) > cutoff_hz] = 0
    filtered = np.fft.irfft(spec, n)
    return TimeSeries(filtered[::int(round(ratio))], out_rate, ts.epoch)


def _tukey(n: int, fraction: float) -> np.ndarray:
    if fraction <= 0:
        return np.ones(n)
    return sps.windows.tukey(n, alpha=min(fraction, 1.0))


def whiten(ts: TimeSeries, psd: PsdEstimate, taper: float = WHITEN_TAPER) -> TimeSeries:
    """Scale every Fourier bin by ``1 / sqrt(PSD * fs / 2)``.

    Noise matching ``psd`` comes out white with unit variance. DC and
    Nyquist weights are copied from their nearest interior bin.
    """
    n = len(ts)
    fs = ts.sample_rate
    freqs = np.fft.rfftfreq(n, 1 / fs)
    if freqs[-1] > psd.frequencies[-1] * (1 + 1e-9):
        raise ValueError("PSD does not cover the series' band")
    power = psd(freqs)
    interior = slice(1, -1) if n % 2 == 0 else slice(1, None)
    if freqs.size > 2 and np.any(power[interior] <= 0):
        raise ValueError("PSD has zero or negative bins inside the band")
    with np.errstate(divide="ignore"):
        weight = np.where(power > 0, 1 / np.sqrt(power * fs / 2), 0.0)
    if freqs.size > 2:
        weight[0] = weight[1]
        if n % 2 == 0:
            weight[-1] = weight[-2]
    elif not np.all(weight > 0):
        raise ValueError("PSD has zero or negative bins inside the band")
    spec = np.fft.rfft(ts.samples * _tukey(n, taper))
    return TimeSeries(np.fft.irfft(spec * weight, n), fs, ts.epoch)


@dataclass(frozen=True)
class ChirpSpec:
    """Linear frequency sweep with a Tukey amplitude envelope."""

    f_start: float
    f_end: float
    duration: float
    amplitude: float = 1.0
    taper: float = 0.2

    def validate(self, rate: float) -> None:
        if not 0 < self.f_start <= self.f_end < rate / 2:
            raise ValueError(f"chirp band {self.f_start}..{self.f_end} Hz out of band "
                             f"for Nyquist {rate / 2} Hz")
        if self.duration <= 0:
            raise ValueError("chirp duration must be positive")


def synth_chirp(spec: ChirpSpec, rate: float) -> TimeSeries:
    spec.validate(rate)
    n = max(1, int(round(spec.duration * rate)))
    t = np.arange(n) / rate
    sweep = (spec.f_end - spec.f_start) / spec.duration
    phase = 2 * np.pi * (spec.f_start * t + 0.5 * sweep * t ** 2)
    return TimeSeries(spec.amplitude * _tukey(n, spec.taper) * np.sin(phase), rate)


def colored_psd(f_knee: float = 4.0, floor: float = 0.0, scale: float = 1.0) -> Callable:
    """``scale / (f**2 + f_knee**2) + floor``: a red spectrum with finite DC."""
    return lambda f: scale / (np.asarray(f, dtype=float) ** 2 + f_knee ** 2) + floor


def synth_noise(length: int, rate: float, seed, psd: Callable | PsdEstimate | None = None,
                sigma: float = 1.0) -> TimeSeries:
    """Gaussian noise with one-sided PSD ``psd`` (white with ``sigma`` if None)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = make_rng(seed)
    white = rng.standard_normal(length)
    if psd is None:
        return TimeSeries(sigma * white, rate)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(length, 1 / rate)
    spec *= np.sqrt(np.clip(psd(freqs), 0, None) * rate / 2)
    return TimeSeries(np.fft.irfft(spec, length), rate)


def inject(data: TimeSeries, signal: TimeSeries, at_index: int, scale: float = 1.0) -> TimeSeries:
    """Add ``scale * signal`` to ``data`` starting at sample ``at_index``."""
    if not math.isclose(data.sample_rate, signal.sample_rate):
        raise ValueError("signal and data sample rates differ")
    if at_index < 0 or at_index + len(signal) > len(data):
        raise IndexError(f"signal of {len(signal)} samples does not fit at index {at_index}")
    out = data.samples.copy()
    out[at_index:at_index + len(signal)] += scale * signal.samples
    return TimeSeries(out, data.sample_rate, data.epoch)
