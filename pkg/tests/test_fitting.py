import math

import numpy as np
import pytest

from mrrpairs.correlate import Histogram
from mrrpairs.errors import FitError
from mrrpairs.fitting import fit_g2, fit_power_law, fit_visibility


def test_power_law_pure_linear():
    powers = np.linspace(0.2, 5.0, 12)
    pts = np.column_stack([powers, 2.5e3 * powers])
    fit = fit_power_law(pts)
    assert fit["a"] == pytest.approx(2.5e3, rel=1e-9)
    assert abs(fit["b"]) < 1e-6


def test_power_law_exact_quadratic():
    powers = np.linspace(0.2, 5.0, 12)
    pts = np.column_stack([powers, 26e3 * powers + 59e3 * powers**2])
    fit = fit_power_law(pts)
    assert fit["a"] == pytest.approx(26e3, rel=1e-9)
    assert fit["b"] == pytest.approx(59e3, rel=1e-9)


def test_power_law_noisy_recovery(rng):
    # Poisson counts over 1 s bins at 10 powers; 5 % recovery in >=95 % of
    # trials (checked in aggregate over 40 trials).
    powers = np.linspace(0.5, 5.0, 10)
    truth = 26e3 * powers + 59e3 * powers**2
    hits = 0
    trials = 40
    for _ in range(trials):
        rates = rng.poisson(truth).astype(float)
        fit = fit_power_law(np.column_stack([powers, rates]))
        if abs(fit["a"] / 26e3 - 1) < 0.05 and abs(fit["b"] / 59e3 - 1) < 0.05:
            hits += 1
    assert hits >= int(0.9 * trials)


def test_power_law_scale_equivariance():
    powers = np.linspace(0.5, 4.0, 9)
    rates = 1.2e4 * powers + 3.1e4 * powers**2
    base = fit_power_law(np.column_stack([powers, rates]), weights="uniform")
    scaled_rates = fit_power_law(np.column_stack([powers, 7.0 * rates]), weights="uniform")
    assert scaled_rates["a"] == pytest.approx(7.0 * base["a"], rel=1e-9)
    assert scaled_rates["b"] == pytest.approx(7.0 * base["b"], rel=1e-9)
    scaled_powers = fit_power_law(np.column_stack([3.0 * powers, rates]), weights="uniform")
    assert scaled_powers["a"] == pytest.approx(base["a"] / 3.0, rel=1e-9)
    assert scaled_powers["b"] == pytest.approx(base["b"] / 9.0, rel=1e-9)


def test_power_law_clips_negative():
    powers = np.linspace(0.5, 4.0, 8)
    rates = 5e3 * powers - 30.0 * powers**2  # slight negative curvature
    fit = fit_power_law(np.column_stack([powers, rates]), weights="uniform")
    assert fit["b"] == 0.0
    assert fit.flags.get("clipped") == "b"
    assert fit["a"] > 0


def test_power_law_rejects_degenerate():
    with pytest.raises(FitError):
        fit_power_law([(1.0, 10.0), (1.0, 11.0), (1.0, 12.0)])
    with pytest.raises(FitError):
        fit_power_law([(1.0, 10.0), (2.0, 20.0)])


def synthetic_g2_hist(g2_zero, width, shape, baseline=1000.0, bin_width=100):
    edges = np.arange(-50_000, 50_000 + bin_width, bin_width)
    centers = 0.5 * (edges[:-1] + edges[1:])
    if shape == "lorentzian":
        s = 1.0 / (1.0 + (centers / width) ** 2)
    else:
        s = np.exp(-np.abs(centers) / width)
    counts = np.rint(baseline * (1.0 + (g2_zero - 1.0) * s)).astype(np.int64)
    return Histogram(bin_width_ps=bin_width, delay_min_ps=-50_000, delay_max_ps=50_000,
                     counts=counts, acquisition_time_s=1.0)


@pytest.mark.parametrize("shape", ["lorentzian", "double_exponential"])
def test_g2_recovers_noiseless(shape):
    hist = synthetic_g2_hist(2.0, 760.0, shape, baseline=100_000.0, bin_width=20)
    fit = fit_g2(hist, shape)
    assert fit["g2_zero"] == pytest.approx(2.0, abs=2e-5)
    assert fit["width_ps"] == pytest.approx(760.0, rel=1e-3)
    assert fit.parameters["schmidt_number"] == pytest.approx(1.0, abs=1e-4)


def test_g2_flat_flags_unbounded_schmidt(rng):
    counts = rng.poisson(800.0, size=1000)
    hist = Histogram(bin_width_ps=100, delay_min_ps=-50_000, delay_max_ps=50_000,
                     counts=counts, acquisition_time_s=1.0)
    fit = fit_g2(hist)
    assert fit["g2_zero"] == pytest.approx(1.0, abs=0.02)
    if fit["g2_zero"] <= 1.0:
        assert fit.flags.get("schmidt_unbounded")
        assert math.isinf(fit.parameters["schmidt_number"])
    else:
        assert fit.parameters["schmidt_number"] > 50


def test_visibility_noiseless_full_contrast():
    x = np.linspace(0.0, 2.0 * math.pi, 24, endpoint=False)
    y = 500.0 * (1.0 + 1.0 * np.cos(2.0 * x + 0.4))
    fit = fit_visibility(np.column_stack([x, y]))
    assert fit["raw_visibility"] == pytest.approx(1.0, abs=1e-6)
    assert fit.parameters["net_visibility"] == pytest.approx(1.0, abs=1e-6)
    assert fit.parameters["period"] == pytest.approx(math.pi, rel=1e-6)


def test_visibility_noisy_recovery(rng):
    x = np.linspace(0.0, 4.0, 20)
    truth = 100.0 * (1.0 + 0.5 * np.cos(2.0 * math.pi * x / 1.7 + 1.0))
    y = rng.poisson(truth * 30.0) / 30.0
    fit = fit_visibility(np.column_stack([x, y]))
    sigma = max(fit.error("raw_visibility"), 1e-3)
    assert abs(fit["raw_visibility"] - 0.5) < 3.0 * sigma


def test_visibility_fixed_period_mode():
    x = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
    y = 300.0 * (1.0 + 0.8 * np.cos(x - 0.7))
    fit = fit_visibility(np.column_stack([x, y]), period=2.0 * math.pi)
    assert fit["raw_visibility"] == pytest.approx(0.8, abs=1e-6)
    assert fit.parameters["period"] == pytest.approx(2.0 * math.pi)


def test_visibility_net_subtracts_background():
    x = np.linspace(0.0, 2.0 * math.pi, 24, endpoint=False)
    background = 60.0
    y = 200.0 * (1.0 + 1.0 * np.cos(2.0 * x)) + background
    fit = fit_visibility(np.column_stack([x, y]), accidental_level=background)
    assert fit["raw_visibility"] == pytest.approx(200.0 / 260.0, rel=1e-6)
    assert fit.parameters["net_visibility"] == pytest.approx(1.0, abs=1e-9)


def test_visibility_background_lowers_v_not_phase(rng):
    x = np.linspace(0.0, 2.0 * math.pi, 30, endpoint=False)
    clean = 400.0 * (1.0 + 0.9 * np.cos(2.0 * x + 0.5))
    noisy = rng.poisson(clean).astype(float)
    fit0 = fit_visibility(np.column_stack([x, noisy]))
    fit1 = fit_visibility(np.column_stack([x, noisy + 150.0]))
    assert fit1["raw_visibility"] < fit0["raw_visibility"]
    dphi = abs(fit1["phase_offset"] - fit0["phase_offset"])
    tol = 4.0 * math.hypot(fit0.error("phase_offset"), fit1.error("phase_offset")) + 1e-3
    assert min(dphi, abs(dphi - 2 * math.pi)) < tol


def test_visibility_rejects_degenerate_sweep():
    with pytest.raises(FitError):
        fit_visibility([(0.0, 1.0)] * 6)
    with pytest.raises(FitError):
        fit_visibility([(0.0, 1.0), (0.1, 2.0), (0.2, 3.0)])
