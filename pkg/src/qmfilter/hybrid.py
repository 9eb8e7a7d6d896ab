"""Segmented hybrid matched filter.

The template is cut into non-overlapping chunks of ``k_t`` samples and the
data into overlapping segments of ``k_d`` samples. Every (segment, chunk)
pair is one sampling run: both are shifted and normalised, joint outcomes
``(b, d)`` are drawn, each kept outcome is relocated to lag ``d - b`` and
the offset correction turns the relocated frequencies into partial SNRs.
Partial SNRs of the chunks are summed at their template offsets.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import (
    EncodedSegment,
    SnrSeries,
    TimeSeries,
    ZeroNormError,
    corrected_snr,
    exact_joint_prob_sums,
    next_pow2,
    offset_correction,
    predict_precision,
    preprocess,
)
from .encoding import joint_circuit
from .simulator import (
    NoiseModel,
    ShotHistogram,
    apply_noise,
    make_rng,
    sample,
    sample_ideal,
    simulate,
)

BACKENDS = ("exact", "ideal", "statevector", "noisy")
_PROVENANCE = {"exact": "hybrid-exact", "ideal": "hybrid-ideal",
               "statevector": "hybrid-sim", "noisy": "hybrid-noisy"}
# used when a constant segment cannot be shifted into a distribution at margin 0
_FALLBACK_MARGIN = 1.0


def segment_cost(k, N: int):
    """Amortised cost ``k (ln k)^2 / (k - N)`` of one data segment of length k."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        cost = k * np.log(k) ** 2 / (k - N)
    return np.where(k > N, cost, np.inf)


def optimal_segment_length(N: int) -> tuple[float, int]:
    """Continuous stationary point and integer minimiser of :func:`segment_cost`.

    The stationary point solves ``N = 2k / (ln k + 2)``.
    """
    if N < 1:
        raise ValueError("template length must be >= 1")
    f = lambda k: 2 * k - N * (math.log(k) + 2)
    if N == 1:
        k_star = 1.0
    else:
        hi = 2.0 * N
        while f(hi) <= 0:
            hi *= 2
        k_star = brentq(f, float(N), hi, xtol=1e-12)
    grid = np.arange(N + 1, int(4 * k_star) + N + 8)
    k_opt = int(grid[np.argmin(segment_cost(grid, N))])
    return k_star, k_opt


@dataclass(frozen=True)
class SegmentPlan:
    """How data and template are cut into sampling runs.

    Chunk-lags ``t`` index the correlation of one template chunk against
    the (zero-extended) data; segment ``s`` starts at ``data_starts[s]`` and
    owns chunk-lags ``first_lags[s]`` up to the next segment's first lag.
    """

    L: int
    N: int
    k_d: int
    k_t: int
    data_starts: tuple[int, ...]
    first_lags: tuple[int, ...]
    shots_per_segment: int
    k_star: float | None = None
    k_opt: int | None = None

    @property
    def lags_per_segment(self) -> int:
        return self.k_d - self.k_t + 1

    @property
    def n_segments(self) -> int:
        return len(self.data_starts)

    @property
    def n_chunks(self) -> int:
        return -(-self.N // self.k_t)

    @property
    def chunk_offsets(self) -> tuple[int, ...]:
        return tuple(m * self.k_t for m in range(self.n_chunks))

    @property
    def padded_N(self) -> int:
        return self.n_chunks * self.k_t

    @property
    def padded_L(self) -> int:
        return self.L + self.padded_N - self.N

    @property
    def n_lags(self) -> int:
        return self.L - self.N + 1

    @property
    def n_chunk_lags(self) -> int:
        return self.padded_L - self.k_t + 1

    def owned_lags(self, s: int) -> range:
        stop = self.first_lags[s + 1] if s + 1 < self.n_segments else self.n_chunk_lags
        return range(self.first_lags[s], stop)

    def coverage(self) -> np.ndarray:
        """How often each chunk-lag is produced (must be all ones)."""
        cov = np.zeros(self.n_chunk_lags, dtype=int)
        for s in range(self.n_segments):
            cov[list(self.owned_lags(s))] += 1
        return cov


def plan_segments(L: int, N: int, k_d: int | str = "auto", k_t: int = 2,
                  shots: int = 10_000) -> SegmentPlan:
    """Cut a length-L data stream for a length-N template.

    With ``k_d="auto"`` the segment length minimises the amortised cost for
    a ``k_t``-sample template chunk, rounded up to a power of two.
    """
    if L < 1:
        raise ValueError("empty data")
    if N < 1 or N > L:
        raise ValueError(f"template length {N} must lie in 1..{L}")
    if k_t < 1:
        raise ValueError("k_t must be >= 1")
    if shots <= 0:
        raise ValueError("shots must be positive")
    k_star = k_opt = None
    n_chunks = -(-N // k_t)
    padded_L = L + n_chunks * k_t - N
    if k_d == "auto":
        k_star, k_opt = optimal_segment_length(k_t)
        k_d = min(next_pow2(k_opt), padded_L)
    k_d = int(k_d)
    if k_d < k_t:
        raise ValueError(f"infeasible plan: k_d={k_d} < k_t={k_t}")
    if k_d > padded_L:
        raise ValueError(f"infeasible plan: k_d={k_d} exceeds data length {padded_L}")
    stride = k_d - k_t + 1
    n_chunk_lags = padded_L - k_t + 1
    first = tuple(range(0, n_chunk_lags, stride))
    starts = tuple(min(s, padded_L - k_d) for s in first)
    return SegmentPlan(L, N, k_d, k_t, starts, first, int(shots), k_star, k_opt)


@dataclass(frozen=True)
class RelocationRule:
    """Maps a joint outcome (template index b, data index d) to lag d - b."""

    k_d: int
    k_t: int

    @property
    def template_bits(self) -> int:
        return next_pow2(self.k_t).bit_length() - 1

    @property
    def data_bits(self) -> int:
        return next_pow2(self.k_d).bit_length() - 1

    @property
    def n_lags(self) -> int:
        return self.k_d - self.k_t + 1

    def lag(self, b: int, d: int) -> int | None:
        j = d - b
        if b < self.k_t and d < self.k_d and 0 <= j <= self.k_d - self.k_t:
            return j
        return None

    def decode(self, bitstring: str) -> tuple[int, int]:
        if len(bitstring) != self.template_bits + self.data_bits:
            raise ValueError(f"bitstring {bitstring!r} does not match the "
                             f"{self.template_bits}+{self.data_bits} bit layout")
        return int(bitstring[:self.template_bits] or "0", 2), int(bitstring[self.template_bits:], 2)

    def table(self) -> np.ndarray:
        """Lag per outcome index (template-major), -1 for discards."""
        pt, pd = next_pow2(self.k_t), next_pow2(self.k_d)
        out = np.full(pt * pd, -1, dtype=int)
        for b in range(pt):
            for d in range(pd):
                j = self.lag(b, d)
                if j is not None:
                    out[b * pd + d] = j
        return out


@dataclass(frozen=True)
class Relocation:
    counts: np.ndarray
    kept: int
    discarded: int

    @property
    def total(self) -> int:
        return self.kept + self.discarded

    @property
    def joint_prob_sums(self) -> np.ndarray:
        # discards stay in the denominator
        return self.counts / self.total


def relocate(hist: ShotHistogram, rule: RelocationRule) -> Relocation:
    counts = np.zeros(rule.n_lags, dtype=np.int64)
    discarded = 0
    for bits, c in hist.counts.items():
        j = rule.lag(*rule.decode(bits))
        if j is None:
            discarded += c
        else:
            counts[j] += c
    return Relocation(counts, int(counts.sum()), discarded)


def _encode(values: np.ndarray, margin: float) -> EncodedSegment:
    try:
        return preprocess(values, margin)
    except ZeroNormError:
        return preprocess(values, max(margin, _FALLBACK_MARGIN))


def _backend_name(backend) -> str:
    if isinstance(backend, NoiseModel):
        return "noisy"
    if backend not in BACKENDS or backend == "noisy":
        raise ValueError(f"unknown backend {backend!r}; use one of {BACKENDS[:3]} or a NoiseModel")
    return backend


def _run_once(tseg: EncodedSegment, dseg: EncodedSegment, rule: RelocationRule, backend,
              shots: int, rng) -> np.ndarray:
    name = _backend_name(backend)
    if name == "exact":
        return exact_joint_prob_sums(tseg, dseg)
    if name == "ideal":
        hist = sample_ideal(tseg, dseg, shots, rng)
    else:
        circ = joint_circuit(tseg, dseg)
        if name == "statevector":
            hist = sample(simulate(circ), shots, rng, circ.output_register)
        else:
            hist = apply_noise(circ, backend, shots, rng, circ.output_register)
    return relocate(hist, rule).joint_prob_sums


@dataclass(frozen=True)
class _RunResult:
    values: np.ndarray
    variances: np.ndarray


def _split(template: TimeSeries, data: TimeSeries, plan: SegmentPlan):
    if len(template) != plan.N or len(data) != plan.L:
        raise ValueError(f"plan expects N={plan.N}, L={plan.L}; got {len(template)}, {len(data)}")
    if not math.isclose(template.sample_rate, data.sample_rate):
        raise ValueError("template and data sample rates differ")
    x = np.zeros(plan.padded_N)
    x[:plan.N] = template.samples
    y = np.zeros(plan.padded_L)
    y[:plan.L] = data.samples
    chunks = [x[o:o + plan.k_t] for o in plan.chunk_offsets]
    segs = [y[s:s + plan.k_d] for s in plan.data_starts]
    return chunks, segs


def _allocate(plan: SegmentPlan, tsegs, dsegs, mode: str) -> np.ndarray:
    n_runs = plan.n_segments * plan.n_chunks
    if mode == "uniform":
        return np.full((plan.n_segments, plan.n_chunks), plan.shots_per_segment, dtype=np.int64)
    if mode != "precision":
        raise ValueError(f"unknown shot allocation {mode!r}")
    # Neyman-style: the spread of each run's estimates scales with its norm product
    w = np.array([[d.norm * t.norm for t in tsegs] for d in dsegs])
    budget = plan.shots_per_segment * n_runs
    shots = np.maximum(1, np.floor(budget * w / w.sum())).astype(np.int64)
    return shots


def estimate_snr(template: TimeSeries, data: TimeSeries, plan: SegmentPlan,
                 backend="ideal", margin: float = 0.0, seed: int = 0,
                 workers: int = 1, shot_allocation: str = "uniform",
                 stream: tuple[int, ...] = ()) -> SnrSeries:
    """Hybrid SNR series for every lag ``0..L-N``.

    Args:
        backend: ``"exact"`` (infinite-shot limit), ``"ideal"`` (sample the
            product distribution), ``"statevector"`` (simulate the loader
            circuits) or a :class:`NoiseModel` for noisy trajectories.
        margin: extra shift above ``-min`` used when encoding.
        seed: master seed; run ``(s, m)`` uses stream ``(seed, *stream, s, m)``.
        workers: thread pool size; output does not depend on it.
    """
    name = _backend_name(backend)
    rule = RelocationRule(plan.k_d, plan.k_t)
    chunks, segs = _split(template, data, plan)
    tsegs = [_encode(c, margin) for c in chunks]
    dsegs = [_encode(s, margin) for s in segs]
    shots = _allocate(plan, tsegs, dsegs, shot_allocation)

    def run(sm):
        s, m = sm
        tseg, dseg = tsegs[m], dsegs[s]
        n_shots = int(shots[s, m])
        probs = _run_once(tseg, dseg, rule, backend, n_shots, make_rng(seed, *stream, s, m))
        corr = np.array([offset_correction(tseg.raw, dseg.raw, tseg.offset, dseg.offset, j)
                         for j in range(rule.n_lags)])
        vals = np.array([corrected_snr(min(p, 1.0), tseg, dseg, j) for j, p in enumerate(probs)])
        if name == "exact":
            var = np.zeros_like(vals)
        else:
            sig, _ = predict_precision(vals, n_shots / rule.n_lags, corr, total=tseg.norm * dseg.norm)
            var = sig ** 2
        return _RunResult(vals, var)

    keys = [(s, m) for s in range(plan.n_segments) for m in range(plan.n_chunks)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(keys, pool.map(run, keys)))
    else:
        results = {k: run(k) for k in keys}

    partial = np.zeros((plan.n_chunks, plan.n_chunk_lags))
    partial_var = np.zeros_like(partial)
    for (s, m), res in results.items():
        start = plan.data_starts[s]
        for t in plan.owned_lags(s):
            partial[m, t] = res.values[t - start]
            partial_var[m, t] = res.variances[t - start]

    rho = np.zeros(plan.n_lags)
    var = np.zeros(plan.n_lags)
    lags = np.arange(plan.n_lags)
    for m, o in enumerate(plan.chunk_offsets):
        rho += partial[m, lags + o]
        var += partial_var[m, lags + o]
    sigma = None if name == "exact" else np.sqrt(var)
    meta = {"provenance": _PROVENANCE[name], "shots": int(plan.shots_per_segment), "seed": seed,
            "margin": margin, "k_d": plan.k_d, "k_t": plan.k_t,
            "runs": len(keys), "total_shots": int(shots.sum())}
    return SnrSeries.from_arrays(rho, sigma, meta=meta, sample_rate=data.sample_rate,
                                 epoch=data.epoch, absolute_only=(rho == 0))


def predicted_sigmas(template: TimeSeries, data: TimeSeries, plan: SegmentPlan,
                     margin: float = 0.0) -> np.ndarray:
    """Shot-noise standard errors evaluated at the true (exact) partial SNRs."""
    rule = RelocationRule(plan.k_d, plan.k_t)
    chunks, segs = _split(template, data, plan)
    tsegs = [_encode(c, margin) for c in chunks]
    dsegs = [_encode(s, margin) for s in segs]
    partial_var = np.zeros((plan.n_chunks, plan.n_chunk_lags))
    for s, dseg in enumerate(dsegs):
        start = plan.data_starts[s]
        for m, tseg in enumerate(tsegs):
            probs = exact_joint_prob_sums(tseg, dseg)
            corr = np.array([offset_correction(tseg.raw, dseg.raw, tseg.offset, dseg.offset, j)
                             for j in range(rule.n_lags)])
            vals = np.array([corrected_snr(p, tseg, dseg, j) for j, p in enumerate(probs)])
            sig, _ = predict_precision(vals, plan.shots_per_segment / rule.n_lags, corr,
                                       total=tseg.norm * dseg.norm)
            for t in plan.owned_lags(s):
                partial_var[m, t] = sig[t - start] ** 2
    lags = np.arange(plan.n_lags)
    var = sum(partial_var[m, lags + o] for m, o in enumerate(plan.chunk_offsets))
    return np.sqrt(var)


@dataclass(frozen=True)
class ComparisonReport:
    correlation: float
    error_correlation: float
    error_correlation_defined: bool
    max_abs_error: float
    rms_error: float
    peak_lag_truth: int
    peak_lag_estimate: int
    peak_truth: float
    peak_estimate: float
    truth: np.ndarray = field(repr=False)
    estimate: np.ndarray = field(repr=False)
    z_scores: np.ndarray | None = field(default=None, repr=False)

    @property
    def errors(self) -> np.ndarray:
        return self.estimate - self.truth

    @property
    def peak_attenuated(self) -> bool:
        """Estimated magnitude at the true peak is below the true peak magnitude."""
        return abs(self.peak_estimate) < abs(self.peak_truth)

    def summary(self) -> str:
        ec = f"{self.error_correlation:.3f}" if self.error_correlation_defined else "undefined(0)"
        return (f"n={self.truth.size} corr={self.correlation:.4f} err_corr={ec} "
                f"max_abs_err={self.max_abs_error:.4g} rms_err={self.rms_error:.4g} "
                f"peak_lag={self.peak_lag_truth}/{self.peak_lag_estimate} "
                f"peak={self.peak_truth:.4g}/{self.peak_estimate:.4g}")


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0:
        return None
    return float(a @ b) / den


def compare_values(estimate, truth, sigma=None) -> ComparisonReport:
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.size} vs {tru.size}")
    err = est - tru
    corr = _pearson(est, tru)
    if corr is None:
        corr = 1.0 if np.array_equal(est, tru) else 0.0
    ecorr = _pearson(err, tru)
    z = None
    if sigma is not None:
        sig = np.asarray(sigma, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sig > 0, err / sig, np.nan)
    peak = int(np.argmax(np.abs(tru)))
    return ComparisonReport(
        correlation=float(corr),
        error_correlation=0.0 if ecorr is None else ecorr,
        error_correlation_defined=ecorr is not None,
        max_abs_error=float(np.max(np.abs(err))),
        rms_error=float(np.sqrt(np.mean(err ** 2))),
        peak_lag_truth=peak,
        peak_lag_estimate=int(np.argmax(np.abs(est))),
        peak_truth=float(tru[peak]),
        peak_estimate=float(est[peak]),
        truth=tru, estimate=est, z_scores=z,
    )


def compare_runs(estimates: SnrSeries, truth: SnrSeries) -> ComparisonReport:
    """Correlation, error-truth correlation, max error and z-scores of two series."""
    if len(estimates) != len(truth):
        raise ValueError(f"length mismatch: {len(estimates)} vs {len(truth)}")
    sig = estimates.sigmas
    return compare_values(estimates.values, truth.values,
                          None if np.all(np.isnan(sig)) else sig)
