"""Desk-scale experiment runners used by the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SnrSeries, TimeSeries, oracle_snr, preprocess
from .encoding import joint_circuit
from .hybrid import ComparisonReport, compare_values, estimate_snr, plan_segments
from .sigproc import (
    ChirpSpec,
    colored_psd,
    inject,
    lowpass_downsample,
    synth_chirp,
    synth_noise,
    welch_psd,
    whiten,
)
from .simulator import NoiseModel, make_rng

RANDOM_DATA_TEMPLATE = (2.0, -1.0)
# Circuit-level error totals of the small-device random-data study.
RANDOM_DATA_GATE_TOTAL = 0.07
RANDOM_DATA_READOUT_TOTAL = 0.07


def random_data_noise_model(gate_total: float = RANDOM_DATA_GATE_TOTAL,
                            readout_total: float = RANDOM_DATA_READOUT_TOTAL,
                            k_t: int = 2, k_d: int = 4) -> NoiseModel:
    """Noise model whose totals over one joint (k_t, k_d) circuit match the given values.

    These defaults are tuned by hand to the reported device totals; they are
    not a calibrated device model.
    """
    circ = joint_circuit(preprocess(np.arange(k_t), 1.0), preprocess(np.arange(k_d), 1.0))
    return NoiseModel.from_totals(circ, gate_total, readout_total)


@dataclass
class RandomDataResult:
    truth: np.ndarray
    estimates: dict[str, np.ndarray]
    sigmas: dict[str, np.ndarray]
    reports: dict[str, ComparisonReport] = field(default_factory=dict)


def run_random_data(seed: int, n_datasets: int = 100, data_len: int = 4,
                    template=RANDOM_DATA_TEMPLATE, shots: int = 20_000, margin: float = 0.1,
                    k_d: int = 4, k_t: int = 2, backends=None) -> RandomDataResult:
    """Estimate every lag of many short standard-normal data sets.

    Each data set is drawn from stream ``(seed, 0, d)`` and estimated with
    stream ``(seed, 1, d)``, so backends see identical data.
    """
    if backends is None:
        backends = {"ideal": "ideal",
                    "noisy": random_data_noise_model(k_t=k_t, k_d=k_d)}
    x = TimeSeries(template)
    plan = plan_segments(data_len, len(x), k_d, k_t, shots)
    truth = []
    est = {name: [] for name in backends}
    sig = {name: [] for name in backends}
    for d in range(n_datasets):
        y = TimeSeries(make_rng(seed, 0, d).standard_normal(data_len))
        truth.append(oracle_snr(x, y).values)
        for name, backend in backends.items():
            s = estimate_snr(x, y, plan, backend, margin=margin, seed=seed, stream=(1, d))
            est[name].append(s.values)
            sig[name].append(s.sigmas)
    truth = np.concatenate(truth)
    result = RandomDataResult(truth, {k: np.concatenate(v) for k, v in est.items()},
                              {k: np.concatenate(v) for k, v in sig.items()})
    for name in backends:
        result.reports[name] = compare_values(result.estimates[name], truth, result.sigmas[name])
    return result


@dataclass(frozen=True)
class PipelineConfig:
    raw_rate: float = 4000.0
    out_rate: float = 200.0
    cutoff_hz: float = 99.98
    duration: float = 16.0
    psd_segment: int = 512
    noise_knee_hz: float = 4.0
    noise_floor: float = 1e-4
    chirp: ChirpSpec = ChirpSpec(f_start=20.0, f_end=60.0, duration=0.2, amplitude=1.0)
    inject_time: float = 8.0
    inject_scale: float = 0.4
    window: float = 1.0
    k_d: int = 4
    k_t: int = 2
    shots: int = 10_000
    margin: float = 0.0


@dataclass
class PipelineResult:
    config: PipelineConfig
    data: TimeSeries
    template: TimeSeries
    classical: SnrSeries
    hybrid: SnrSeries
    report: ComparisonReport
    inject_lag: int


def _whiten_template(template: TimeSeries, psd, length: int) -> TimeSeries:
    # centre in a zero buffer of the data length so the weights use the same grid
    buf = np.zeros(max(length, len(template)))
    start = (buf.size - len(template)) // 2
    buf[start:start + len(template)] = template.samples
    white = whiten(TimeSeries(buf, template.sample_rate), psd, taper=0.0)
    return TimeSeries(white.samples[start:start + len(template)], template.sample_rate)


def condition(raw: TimeSeries, cfg: PipelineConfig):
    """Low-pass, downsample and whiten; the PSD comes from the raw series."""
    psd = welch_psd(raw, cfg.psd_segment)
    low = lowpass_downsample(raw, cfg.cutoff_hz, cfg.out_rate)
    return whiten(low, psd), psd


def run_pipeline(seed: int, cfg: PipelineConfig = PipelineConfig(), backend="ideal",
                 workers: int = 1) -> PipelineResult:
    """Colored noise + injected chirp through conditioning, classical and hybrid filters."""
    n_raw = int(round(cfg.duration * cfg.raw_rate))
    noise = synth_noise(n_raw, cfg.raw_rate, make_rng(seed, 0),
                        colored_psd(cfg.noise_knee_hz, cfg.noise_floor))
    scale = cfg.inject_scale * float(np.std(noise.samples))
    raw_chirp = synth_chirp(cfg.chirp, cfg.raw_rate)
    i_raw = int(round(cfg.inject_time * cfg.raw_rate))
    raw = inject(noise, raw_chirp, i_raw, scale)

    white, psd = condition(raw, cfg)
    template = _whiten_template(synth_chirp(cfg.chirp, cfg.out_rate), psd, len(white))

    ratio = int(round(cfg.raw_rate / cfg.out_rate))
    n_win = int(round(cfg.window * cfg.out_rate))
    i_out = i_raw // ratio
    start = i_out - n_win // 2
    data = TimeSeries(white.samples[start:start + n_win], cfg.out_rate, start / cfg.out_rate)

    classical = oracle_snr(template, data)
    plan = plan_segments(len(data), len(template), cfg.k_d, cfg.k_t, cfg.shots)
    hybrid = estimate_snr(template, data, plan, backend, margin=cfg.margin, seed=seed,
                          stream=(1,), workers=workers)
    report = compare_values(hybrid.values, classical.values, hybrid.sigmas)
    return PipelineResult(cfg, data, template, classical, hybrid, report, i_out - start)
