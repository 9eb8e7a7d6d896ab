"""Domain types and the exact classical pieces of the hybrid matched filter.

The hybrid estimator only ever samples products of *shifted, normalised*
values; everything needed to turn those samples back into signal-to-noise
ratios lives here: the time-domain correlation oracle, the positivity
shift, the offset correction and the shot-noise precision model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Rows per block when the oracle materialises sliding windows.
_ORACLE_BLOCK = 1 << 20


class ZeroNormError(ValueError):
    """Shifted values sum to zero, so they cannot form a distribution."""


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def next_pow2(n: int) -> int:
    """Smallest power of two that is >= n (and >= 2)."""
    return max(2, 1 << (int(n) - 1).bit_length())


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real series."""

    samples: np.ndarray
    sample_rate: float = 1.0
    epoch: float = 0.0

    def __post_init__(self):
        arr = _frozen(self.samples)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("time series needs at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError("time series contains non-finite samples")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.epoch + np.arange(len(self)) / self.sample_rate


@dataclass(frozen=True)
class EncodedSegment:
    """A shifted, normalised and power-of-two padded probability vector.

    ``probs[i] = (raw[i] + offset) / norm`` for the real samples and exactly
    zero on the padding.
    """

    raw: np.ndarray
    offset: float
    norm: float
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "raw", _frozen(self.raw))
        object.__setattr__(self, "probs", _frozen(self.probs))
        if not self.norm > 0:
            raise ZeroNormError("zero norm")
        if self.probs.size != next_pow2(self.raw.size):
            raise ValueError("probs must be padded to the next power of two")
        if np.any(self.probs < 0) or abs(math.fsum(self.probs) - 1) > 1e-12:
            raise ValueError("probs must be a nonnegative distribution summing to 1")
        if np.any(self.probs[self.raw.size:] != 0):
            raise ValueError("padding must carry zero probability")

    @property
    def padded_len(self) -> int:
        return self.probs.size

    @property
    def num_bits(self) -> int:
        return self.padded_len.bit_length() - 1


@dataclass(frozen=True)
class SnrEstimate:
    lag: int
    value: float
    sigma: float | None = None
    # True when sigma is the absolute binomial spread at a zero true SNR.
    sigma_absolute_only: bool = False


@dataclass(frozen=True)
class SnrSeries:
    """Per-lag SNR values with provenance.

    ``meta`` carries at least ``provenance`` (oracle, hybrid-ideal,
    hybrid-sim or hybrid-noisy) and, for sampled runs, ``shots`` and ``seed``.
    """

    estimates: tuple[SnrEstimate, ...]
    meta: dict = field(default_factory=dict)
    sample_rate: float = 1.0
    epoch: float = 0.0

    def __post_init__(self):
        ests = tuple(self.estimates)
        for k, est in enumerate(ests):
            if est.lag != k:
                raise ValueError("lags must be contiguous from 0")
        object.__setattr__(self, "estimates", ests)

    def __len__(self) -> int:
        return len(self.estimates)

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([np.nan if e.sigma is None else e.sigma for e in self.estimates])

    @property
    def times(self) -> np.ndarray:
        return self.epoch + np.arange(len(self)) / self.sample_rate

    @property
    def provenance(self) -> str:
        return self.meta.get("provenance", "unknown")

    @classmethod
    def from_arrays(cls, values, sigmas=None, *, meta=None, sample_rate=1.0, epoch=0.0,
                    absolute_only=None) -> "SnrSeries":
        values = np.asarray(values, dtype=float)
        if sigmas is None:
            sigmas = [None] * values.size
        if absolute_only is None:
            absolute_only = [False] * values.size
        ests = tuple(
            SnrEstimate(j, float(v), None if s is None or np.isnan(s) else float(s), bool(a))
            for j, (v, s, a) in enumerate(zip(values, sigmas, absolute_only))
        )
        return cls(ests, dict(meta or {}), float(sample_rate), float(epoch))


def _as_array(x) -> np.ndarray:
    if isinstance(x, TimeSeries):
        return x.samples
    return np.asarray(x, dtype=float)


def correlate_valid(template, data) -> np.ndarray:
    """``out[j] = sum_i data[j + i] * template[i]`` for every full overlap.

    Products are formed explicitly and reduced along the contiguous axis so
    numpy's pairwise summation applies, instead of a BLAS dot.
    """
    x = _as_array(template)
    y = _as_array(data)
    n, length = x.size, y.size
    if n > length:
        raise ValueError(f"template length {n} exceeds data length {length}")
    windows = np.lib.stride_tricks.sliding_window_view(y, n)
    out = np.empty(length - n + 1)
    step = max(1, _ORACLE_BLOCK // n)
    for start in range(0, out.size, step):
        block = windows[start:start + step] * x
        out[start:start + step] = block.sum(axis=1)
    return out


def oracle_snr(template: TimeSeries, data: TimeSeries) -> SnrSeries:
    """Classical time-domain matched filter, lag 0 aligns both starts."""
    if len(template) > len(data):
        raise ValueError(f"template length {len(template)} exceeds data length {len(data)}")
    if not math.isclose(template.sample_rate, data.sample_rate):
        raise ValueError("template and data sample rates differ")
    rho = correlate_valid(template.samples, data.samples)
    return SnrSeries.from_arrays(rho, meta={"provenance": "oracle"},
                                 sample_rate=data.sample_rate, epoch=data.epoch)


def oracle_snr_fft(template: TimeSeries, data: TimeSeries) -> np.ndarray:
    """FFT cross-check of :func:`oracle_snr`; not used on any estimation path."""
    from scipy.signal import fftconvolve

    return fftconvolve(data.samples, template.samples[::-1], mode="valid")


def preprocess(values: Sequence[float], margin: float = 0.0) -> EncodedSegment:
    """Shift ``values`` to be nonnegative and normalise them to a distribution.

    The shift is ``-min(values) + margin``. The result is padded with zero
    probability up to the next power of two.

    Raises:
        ZeroNormError: if every shifted value is zero (constant input, margin 0).
        ValueError: on non-finite input or a negative margin.
    """
    raw = np.asarray(values, dtype=float)
    if raw.ndim != 1 or raw.size < 1:
        raise ValueError("need at least one value")
    if not np.all(np.isfinite(raw)):
        raise ValueError("non-finite input")
    if margin < 0 or not math.isfinite(margin):
        raise ValueError(f"margin must be a finite value >= 0, got {margin}")
    offset = -float(raw.min()) + float(margin)
    shifted = raw + offset
    # the minimum maps to exactly margin; guard rounding below zero
    shifted[shifted < 0] = 0.0
    norm = math.fsum(shifted)
    if not norm > 0:
        raise ZeroNormError("zero norm")
    probs = np.zeros(next_pow2(raw.size))
    probs[:raw.size] = shifted / norm
    return EncodedSegment(raw=raw, offset=offset, norm=norm, probs=probs)


def offset_correction(template, data, template_offset: float, data_offset: float,
                      lag: int) -> float:
    """Sum over the template of ``dy*x_i + dx*y_{i+lag} + dy*dx``."""
    x = _as_array(template)
    y = _as_array(data)
    n = x.size
    if lag < 0 or lag + n > y.size:
        raise IndexError(f"lag {lag} out of range for lengths {n}, {y.size}")
    window = y[lag:lag + n]
    terms = data_offset * x + template_offset * window + data_offset * template_offset
    return math.fsum(terms)


def corrected_snr(joint_prob_sum: float, template_seg: EncodedSegment,
                  data_seg: EncodedSegment, lag: int) -> float:
    """Turn a relocated outcome probability into an SNR value at ``lag``."""
    if not -1e-12 <= joint_prob_sum <= 1 + 1e-12:
        raise ValueError(f"joint probability {joint_prob_sum} outside [0, 1]")
    corr = offset_correction(template_seg.raw, data_seg.raw,
                             template_seg.offset, data_seg.offset, lag)
    return data_seg.norm * template_seg.norm * joint_prob_sum - corr


def exact_joint_prob_sums(template_seg: EncodedSegment, data_seg: EncodedSegment) -> np.ndarray:
    """Exact ``sum_i P(x=i) P(y=i+j)`` for every lag of the raw segments."""
    n = template_seg.raw.size
    px = template_seg.probs[:n]
    py = data_seg.probs[:data_seg.raw.size]
    return correlate_valid(px, py)


def predict_precision(snr, shots_per_lag: float, corrections, total=None):
    """Predicted standard error of each corrected SNR estimate.

    The relative precision is
    ``sqrt(others_j / (shifted_j * s * L)) * (1 + corrections_j / snr_j)``
    where ``shifted = snr + corrections`` are the uncorrected SNRs the
    shots actually sample and ``others_j`` is the shifted mass of every
    other outcome: ``total - shifted_j`` when the full outcome mass
    ``total`` (norm product) is known, else the sum over the other lags.

    The absolute value ``sqrt(shifted_j * others_j / (s * L))`` is returned.
    It stays finite where ``snr_j == 0``; those lags are flagged in the
    second return value since their relative precision is undefined.

    Returns:
        (sigma, absolute_only) arrays.
    """
    if not shots_per_lag > 0:
        raise ValueError(f"shot count must be positive, got {shots_per_lag}")
    rho = np.asarray(snr, dtype=float)
    shifted = rho + np.asarray(corrections, dtype=float)
    n_lags = rho.size
    if total is None:
        others = math.fsum(shifted) - shifted
    else:
        others = float(total) - shifted
    var = np.clip(shifted, 0, None) * np.clip(others, 0, None) / (shots_per_lag * n_lags)
    return np.sqrt(var), rho == 0


def relative_precision(snr, shots_per_lag: float, corrections, total=None) -> np.ndarray:
    sigma, zero = predict_precision(snr, shots_per_lag, corrections, total)
    rho = np.asarray(snr, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = sigma / np.abs(rho)
    rel[zero] = np.inf
    return rel
