import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import hilbert

from qmfilter.core import TimeSeries, oracle_snr
from qmfilter.sigproc import (
    ChirpSpec,
    PsdEstimate,
    colored_psd,
    inject,
    lowpass_downsample,
    synth_chirp,
    synth_noise,
    welch_psd,
    whiten,
)


def octave_means(psd: PsdEstimate, f_lo: float, f_hi: float) -> list[float]:
    out, f = [], f_lo
    while 2 * f <= f_hi:
        band = (psd.frequencies >= f) & (psd.frequencies < 2 * f)
        out.append(float(psd.power[band].mean()))
        f *= 2
    return out


# --- Welch --------------------------------------------------------------------------

def test_white_noise_psd_level():
    ts = synth_noise(200 * 512, 200.0, seed=1)
    psd = welch_psd(ts, 512)
    # one-sided density 2 sigma^2 / fs
    assert psd.power[1:-1].mean() == pytest.approx(0.01, rel=0.10)
    assert np.all(psd.power >= 0)
    df = np.diff(psd.frequencies)
    np.testing.assert_allclose(df, 200.0 / 512)
    assert psd.frequencies[0] == 0 and psd.frequencies[-1] == pytest.approx(100.0)


def test_sine_at_bin_centre_concentrates_power():
    fs, n = 200.0, 512
    k = 40
    t = np.arange(16 * n) / fs
    psd = welch_psd(TimeSeries(np.sin(2 * np.pi * (k * fs / n) * t), fs), n, window="boxcar")
    assert psd.power.max() / psd.power.sum() >= 0.95
    assert int(np.argmax(psd.power)) == k


def test_zero_input_zero_psd():
    psd = welch_psd(TimeSeries(np.zeros(2048), 100.0), 512)
    assert np.all(psd.power == 0)


def test_welch_rejects_short_input():
    with pytest.raises(ValueError):
        welch_psd(TimeSeries(np.ones(100)), 512)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_parseval(seed, sigma):
    ts = synth_noise(64 * 512, 400.0, seed, sigma=sigma)
    psd = welch_psd(ts, 512)
    total = np.sum(psd.power) * (psd.frequencies[1] - psd.frequencies[0])
    assert total == pytest.approx(np.var(ts.samples), rel=0.10)


def test_psd_estimate_interpolates_and_validates():
    psd = PsdEstimate(np.array([0.0, 1.0, 2.0]), np.array([1.0, 3.0, 5.0]), 4)
    np.testing.assert_allclose(psd([0.5, 1.5]), [2.0, 4.0])
    with pytest.raises(ValueError):
        PsdEstimate(np.array([0.0, 1.0]), np.array([1.0, -1.0]), 4)


# --- low-pass and downsampling ------------------------------------------------------------

def test_lowpass_preserves_passband_sine():
    fs = 4000.0
    t = np.arange(int(4 * fs)) / fs
    out = lowpass_downsample(TimeSeries(np.sin(2 * np.pi * 50 * t), fs), 99.98, 200.0)
    assert out.sample_rate == 200.0 and len(out) == 800
    amp = np.sqrt(2) * np.std(out.samples)
    assert amp == pytest.approx(1.0, rel=0.01)


def test_band_limited_input_matches_direct_decimation():
    fs = 4000.0
    t = np.arange(8000) / fs
    # integer cycles in the window, all below cutoff
    x = np.sin(2 * np.pi * 10 * t) + 0.5 * np.cos(2 * np.pi * 37.5 * t)
    out = lowpass_downsample(TimeSeries(x, fs), 99.98, 200.0)
    np.testing.assert_allclose(out.samples, x[::20], atol=1e-9)


def test_lowpass_zero_signal():
    out = lowpass_downsample(TimeSeries(np.zeros(4000), 4000.0), 99.98, 200.0)
    assert np.all(out.samples == 0)


def test_lowpass_leaves_no_power_above_cutoff():
    fs = 4000.0
    ts = synth_noise(40_000, fs, seed=3)
    n = len(ts)
    spec = np.fft.rfft(ts.samples)
    spec[np.fft.rfftfreq(n, 1 / fs) > 99.98] = 0
    filtered = np.fft.irfft(spec, n)
    after = np.abs(np.fft.rfft(filtered)) ** 2
    freqs = np.fft.rfftfreq(n, 1 / fs)
    floor = after[freqs > 100.5].max() / after.max()
    assert 10 * np.log10(floor + 1e-300) < -200
    out = lowpass_downsample(ts, 99.98, 200.0)
    np.testing.assert_allclose(out.samples, filtered[::20], atol=1e-12)


def test_lowpass_rejects_bad_rates():
    ts = TimeSeries(np.zeros(4000), 4000.0)
    with pytest.raises(ValueError):
        lowpass_downsample(ts, 99.98, 300.0)
    with pytest.raises(ValueError):
        lowpass_downsample(ts, 150.0, 200.0)
    with pytest.raises(ValueError):
        lowpass_downsample(ts, 2500.0, 4000.0)


# --- whitening --------------------------------------------------------------------------

def test_whiten_white_input_gives_unit_variance():
    fs = 200.0
    ts = synth_noise(200 * 512, fs, seed=4, sigma=3.0)
    flat = PsdEstimate(np.fft.rfftfreq(512, 1 / fs), np.full(257, 2 * 9.0 / fs), 512)
    out = whiten(ts, flat, taper=0.0)
    assert np.var(out.samples) == pytest.approx(1.0, rel=0.10)


def test_whiten_flat_unit_psd_is_constant_scaling(rng):
    fs = 2.0
    x = rng.standard_normal(256)
    flat = PsdEstimate(np.fft.rfftfreq(16, 1 / fs), np.ones(9), 16)
    out = whiten(TimeSeries(x, fs), flat, taper=0.0)
    np.testing.assert_allclose(out.samples, x, atol=1e-12)


def test_colored_noise_round_trip_is_flat():
    fs = 200.0
    ts = synth_noise(400 * 512, fs, seed=5, psd=colored_psd(2.0, 1e-4))
    psd = welch_psd(ts, 512)
    white = whiten(ts, psd)
    out = welch_psd(white, 512)
    means = octave_means(out, 1.0, 90.0)
    ref = out.power[(out.frequencies > 1) & (out.frequencies < 90)].mean()
    assert all(abs(m / ref - 1) <= 0.25 for m in means)


def test_synth_noise_follows_psd():
    fs = 200.0
    model = colored_psd(4.0, 0.0)
    psd = welch_psd(synth_noise(400 * 512, fs, seed=6, psd=model), 512)
    band = (psd.frequencies > 2) & (psd.frequencies < 90)
    ratio = psd.power[band] / model(psd.frequencies[band])
    assert np.median(ratio) == pytest.approx(1.0, rel=0.10)


def test_whiten_rejects_bad_psd():
    ts = TimeSeries(np.ones(64), 10.0)
    zero = PsdEstimate(np.linspace(0, 5, 9), np.zeros(9), 16)
    with pytest.raises(ValueError):
        whiten(ts, zero)
    short = PsdEstimate(np.linspace(0, 2, 9), np.ones(9), 16)
    with pytest.raises(ValueError):
        whiten(ts, short)


def test_whiten_clamps_dc_and_nyquist(rng):
    fs = 100.0
    freqs = np.fft.rfftfreq(32, 1 / fs)
    power = np.ones(freqs.size)
    power[0] = power[-1] = 1e-30
    psd = PsdEstimate(freqs, power, 32)
    x = rng.standard_normal(32)
    out = whiten(TimeSeries(x, fs), psd, taper=0.0)
    ref = whiten(TimeSeries(x, fs), PsdEstimate(freqs, np.ones(freqs.size), 32), taper=0.0)
    np.testing.assert_allclose(out.samples, ref.samples, atol=1e-12)


# --- synthesis -------------------------------------------------------------------------

def test_zero_amplitude_chirp():
    ts = synth_chirp(ChirpSpec(20, 60, 0.5, amplitude=0.0), 200.0)
    assert len(ts) == 100 and np.all(ts.samples == 0)


def test_chirp_spec_validation():
    with pytest.raises(ValueError):
        synth_chirp(ChirpSpec(20, 120, 0.5), 200.0)
    with pytest.raises(ValueError):
        synth_chirp(ChirpSpec(60, 20, 0.5), 200.0)
    with pytest.raises(ValueError):
        synth_chirp(ChirpSpec(0, 20, 0.5), 200.0)


def test_chirp_sweeps_between_band_edges():
    ts = synth_chirp(ChirpSpec(20, 60, 2.0, taper=0.0), 400.0)
    phase = np.unwrap(np.angle(hilbert(ts.samples)))
    inst = np.diff(phase) * 400.0 / (2 * np.pi)
    mid = inst[100:-100]
    assert mid[0] == pytest.approx(25, abs=2) and mid[-1] == pytest.approx(55, abs=2)


def test_injection_localised_by_oracle():
    fs = 200.0
    noise = synth_noise(2000, fs, seed=7)
    chirp = synth_chirp(ChirpSpec(20, 60, 0.5), fs)
    data = inject(noise, chirp, 733, scale=20.0)
    rho = oracle_snr(chirp, data).values
    assert int(np.argmax(rho)) == 733


def test_inject_bounds():
    with pytest.raises(IndexError):
        inject(TimeSeries(np.zeros(10)), TimeSeries(np.ones(4)), 8)
    with pytest.raises(ValueError):
        inject(TimeSeries(np.zeros(10), 2.0), TimeSeries(np.ones(4)), 0)


def test_synth_noise_determinism():
    a = synth_noise(1000, 100.0, seed=42, psd=colored_psd())
    b = synth_noise(1000, 100.0, seed=42, psd=colored_psd())
    c = synth_noise(1000, 100.0, seed=43, psd=colored_psd())
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
