import math
from dataclasses import replace

import numpy as np
import pytest

from mrrpairs.analysis import timebin_background_per_window
from mrrpairs.correlate import autocorrelate_split, cross_correlate, timebin_peaks
from mrrpairs.device import ChannelPair
from mrrpairs.emitter import (
    DetectorConfig,
    SourceConfig,
    TimeBinConfig,
    _dead_time_kernel,
    saturated_rate,
    simulate_cw,
    simulate_timebin,
)
from mrrpairs.errors import ConfigError, SizeError
from mrrpairs.fitting import fit_g2

IDEAL = DetectorConfig(efficiency=1.0, dark_rate=0.0, dead_time_ns=0.0, jitter_sigma_ps=0.0)
LOSSLESS = ChannelPair(23, 27, 1, transmission_signal=1.0, transmission_idler=1.0)


def test_zero_power_zero_dark_is_empty():
    src = SourceConfig(pump_power_mw=0.0, pair_rate_coefficient=1e5, duration_s=1.0, rng_seed=3)
    stream = simulate_cw(src, IDEAL, IDEAL, LOSSLESS)
    assert len(stream) == 0


def test_reproducible_streams():
    src = SourceConfig(pump_power_mw=1.0, pair_rate_coefficient=5e4,
                       linear_noise_signal=2e3, linear_noise_idler=2e3,
                       duration_s=2.0, rng_seed=77)
    det = DetectorConfig(efficiency=0.8, dark_rate=40.0, dead_time_ns=50.0, jitter_sigma_ps=20.0)
    pair = ChannelPair(23, 27, 1, transmission_signal=0.3, transmission_idler=0.25)
    a = simulate_cw(src, det, det, pair)
    b = simulate_cw(src, det, det, pair)
    assert np.array_equal(a.timestamps_ps, b.timestamps_ps)
    assert np.array_equal(a.channels, b.channels)
    c = simulate_cw(replace(src, rng_seed=78), det, det, pair)
    assert not np.array_equal(a.timestamps_ps, c.timestamps_ps)


def test_singles_match_thinning_expectation():
    # mu = 1e6/s generated, both transmissions 5 %, ideal detectors:
    # per-arm singles must be 50e3/s within 3 sigma Poisson.
    src = SourceConfig(pump_power_mw=1.0, pair_rate_coefficient=1e6, duration_s=4.0, rng_seed=5)
    pair = ChannelPair(23, 27, 1, transmission_signal=0.05, transmission_idler=0.05)
    stream = simulate_cw(src, IDEAL, IDEAL, pair, intensity_cap=34.0)
    for ch in (0, 1):
        counts = stream.channel_times(ch).size
        expect = 1e6 * 0.05 * 4.0
        assert abs(counts - expect) < 3.0 * math.sqrt(expect) + 3.0 * math.sqrt(expect * 0.05)


def test_memory_budget_enforced():
    src = SourceConfig(pump_power_mw=1.0, pair_rate_coefficient=1e6, duration_s=100.0, rng_seed=5)
    with pytest.raises(SizeError):
        simulate_cw(src, IDEAL, IDEAL, LOSSLESS, max_tags=1e6)


def test_thermal_autocorrelation_law():
    # g2(0) = 1 + 1/n for n equal-weight modes, within 3 sigma.
    for n, seed in ((1, 61), (2, 62), (5, 63)):
        src = SourceConfig(pump_power_mw=1.0, pair_rate_coefficient=4e5, schmidt_modes=n,
                           coherence_time_ps=10_000.0, duration_s=4.0, rng_seed=seed)
        stream = simulate_cw(src, IDEAL, IDEAL, LOSSLESS)
        hist = autocorrelate_split(stream, 0, 999, 1000, (-150_000, 150_000))
        fit = fit_g2(hist, "double_exponential")
        expected = 1.0 + 1.0 / n
        sigma = max(fit.error("g2_zero"), 1e-3)
        assert abs(fit["g2_zero"] - expected) < 3.0 * sigma, (n, fit["g2_zero"], sigma)


def test_cross_correlation_decay_matches_coherence_time():
    src = SourceConfig(pump_power_mw=1.0, pair_rate_coefficient=2e5,
                       linear_noise_signal=1e4, linear_noise_idler=1e4,
                       coherence_time_ps=760.0, duration_s=8.0, rng_seed=64)
    pair = ChannelPair(23, 27, 1, transmission_signal=0.5, transmission_idler=0.5)
    stream = simulate_cw(src, IDEAL, IDEAL, pair)
    hist = cross_correlate(stream, 0, 1, 100, (-50_000, 50_000))
    fit = fit_g2(hist, "double_exponential")
    assert fit["width_ps"] == pytest.approx(760.0, rel=0.05)


def test_accidentals_flat_when_pairs_disabled():
    # Pure noise: coincidences are S_s * S_i * window within 3 sigma.
    src = SourceConfig(pump_power_mw=1.0, pair_rate_coefficient=0.0,
                       linear_noise_signal=2e4, linear_noise_idler=2e4,
                       duration_s=20.0, rng_seed=65)
    stream = simulate_cw(src, IDEAL, IDEAL, LOSSLESS)
    s_s = stream.singles_rate(0)
    s_i = stream.singles_rate(1)
    window = 2000
    hist = cross_correlate(stream, 0, 1, 100, (-100_000, 100_000))
    observed = hist.counts[hist.n_bins // 2 - 10 : hist.n_bins // 2 + 10].sum()
    expected = s_s * s_i * window * 1e-12 * 20.0
    assert abs(observed - expected) < 3.0 * math.sqrt(expected)


def test_dead_time_kernel_monotone_and_exact():
    times = np.array([0.0, 50.0, 120.0, 121.0, 260.0])
    keep = _dead_time_kernel(times, 100.0)
    assert keep.tolist() == [True, False, True, False, True]


def test_saturated_rate_model():
    assert saturated_rate(12345.0, 0.0) == 12345.0
    tau_ns = 100.0
    r = 1.0 / (tau_ns * 1e-9)
    assert saturated_rate(r, tau_ns) == pytest.approx(r / 2.0)
    rates = [1e4, 1e5, 1e6, 1e7]
    sats = [saturated_rate(x, tau_ns) for x in rates]
    assert all(b > a for a, b in zip(sats, sats[1:]))
    assert sats[-1] < 1.0 / (tau_ns * 1e-9)


def test_saturated_rate_matches_monte_carlo():
    # Poisson stream at 1e6/s through a 100 ns nonparalyzable filter.
    rng = np.random.default_rng(2024)
    duration = 5.0
    gaps = rng.exponential(1e6, size=int(1.2e6 * duration))  # ps at 1e6/s
    times = np.cumsum(gaps)
    times = times[times < duration * 1e12]
    kept = _dead_time_kernel(times, 100.0 * 1e3).sum()
    predicted = saturated_rate(times.size / duration, 100.0) * duration
    assert abs(kept - predicted) / predicted < 0.01


def timebin_setup(**overrides):
    tb = TimeBinConfig(
        clock_rate_mhz=750.0,
        bin_separation_ns=4.0 / 3.0,
        pulse_width_ps=80.0,
        interferometer_excess_loss_db=3.0,
        splitter_loss_db=3.0,
        intrinsic_visibility=1.0,
    )
    src = SourceConfig(pump_power_mw=10.0, pair_rate_coefficient=5e3,
                       linear_noise_signal=1.9e4, linear_noise_idler=1.9e4,
                       coherence_time_ps=180.0, duration_s=3.0, rng_seed=400)
    det = DetectorConfig(efficiency=0.8, dark_rate=40.0, dead_time_ns=140.0, jitter_sigma_ps=15.0)
    return replace(tb, **overrides), src, det


def test_timebin_requires_short_coherence():
    tb, src, det = timebin_setup()
    bad = replace(src, coherence_time_ps=600.0)
    with pytest.raises(ConfigError):
        simulate_timebin(bad, tb, det, det)


def test_timebin_clock_consistency_enforced():
    with pytest.raises(ConfigError):
        TimeBinConfig(clock_rate_mhz=750.0, bin_separation_ns=2.0)


def test_timebin_singles_phase_independent():
    tb, src, det = timebin_setup()
    rates = []
    for phase in (0.0, math.pi / 4, math.pi / 2):
        stream = simulate_timebin(
            src, replace(tb, interferometer_phase_rad=phase), det, det, resolution_ps=1
        )
        rates.append(stream.singles_rate(0))
    mean = np.mean(rates)
    for r in rates:
        assert abs(r - mean) < 4.0 * math.sqrt(mean / src.duration_s)


def test_timebin_central_peak_modulates_and_sides_do_not():
    tb, src, det = timebin_setup()
    dt = tb.bin_separation_ps
    span = int(math.ceil(8.5 * dt / 10)) * 10
    peaks = {}
    for phase in (0.0, math.pi / 2):
        stream = simulate_timebin(
            src, replace(tb, interferometer_phase_rad=phase), det, det, resolution_ps=1
        )
        hist = cross_correlate(stream, 0, 1, 10, (-span, span))
        peaks[phase] = (timebin_peaks(hist, dt), timebin_background_per_window(hist, dt))
    (l0, c0, r0), bg0 = peaks[0.0]
    (l1, c1, r1), bg1 = peaks[math.pi / 2]
    assert c1 - bg1 < 0.02 * (c0 - bg0)  # destructive phase kills the central peak
    for a, b in ((l0, l1), (r0, r1)):
        assert abs(a - b) < 4.0 * math.sqrt(0.5 * (a + b))


def test_timebin_flat_when_visibility_zero():
    tb, src, det = timebin_setup(intrinsic_visibility=0.0)
    dt = tb.bin_separation_ps
    span = int(math.ceil(8.5 * dt / 10)) * 10
    centrals = []
    for phase in (0.0, 1.0, 2.0):
        stream = simulate_timebin(
            replace(src, duration_s=1.5), replace(tb, interferometer_phase_rad=phase),
            det, det, resolution_ps=1,
        )
        hist = cross_correlate(stream, 0, 1, 10, (-span, span))
        centrals.append(timebin_peaks(hist, dt)[1])
    mean = np.mean(centrals)
    for c in centrals:
        assert abs(c - mean) < 4.0 * math.sqrt(mean)
