"""Derived-quantity estimators and single-run analysis helpers.

The coincidence-peak quantities reported here follow one bookkeeping
convention: the sideband accidental level is subtracted from the windowed
peak and the remainder is corrected for the finite window capture of the
fitted double-exponential peak shape, so ``pair_rate`` estimates the full
coincidence rate independently of the analysis window.  That makes
``pair_generation_rate`` and ``arm_transmission`` unbiased under symmetric
loss, which is what the singles/coincidence bookkeeping relies on.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .correlate import (
    Histogram,
    autocorrelate_split,
    coincidence_summary,
    cross_correlate,
    window_slice,
)
from .device import linear_to_db
from .emitter import IDLER_CHANNEL, SIGNAL_CHANNEL, TagStream, saturated_rate
from .errors import ConfigError, FitError, NumericError, StatisticsError
from .fitting import FitResult, fit_g2, fit_power_law


@dataclass(frozen=True)
class AnalysisConfig:
    """Histogram and coincidence-window defaults for the analysis chain."""

    bin_width_ps: int = 100
    delay_range_ps: int = 100_000  # histogram spans +- this value
    window_ps: int = 2_000
    resolution_ps: int = 81
    splitter_seed: int = 1234
    max_tags: float = 2.5e8

    def __post_init__(self) -> None:
        if self.bin_width_ps <= 0 or self.window_ps <= 0 or self.delay_range_ps <= 0:
            raise ConfigError("analysis bin width, window and delay range must be > 0")
        if (2 * self.delay_range_ps) % self.bin_width_ps != 0:
            raise ConfigError("analysis delay range must be divisible by the bin width")
        if self.window_ps % self.bin_width_ps != 0:
            raise ConfigError("analysis window must be a multiple of the bin width")

    @property
    def delay_range(self) -> tuple[int, int]:
        return (-self.delay_range_ps, self.delay_range_ps)


def pair_generation_rate(singles_signal: float, singles_idler: float, coincidence_rate: float):
    """In-fiber pair generation rate S_s * S_i / R_c.

    With quadratic (pair-photon) singles only, the per-arm losses cancel and
    the estimate is independent of symmetric loss.
    """
    if coincidence_rate <= 0:
        raise NumericError("pair generation rate is undefined for R_c <= 0")
    return singles_signal * singles_idler / coincidence_rate


def arm_transmission(singles_opposite: float, coincidence_rate: float) -> tuple[float, float]:
    """Arm efficiency from the opposite arm's (pair-photon) singles: R_c / S_opp.

    Returns (efficiency, dB).  The efficiency includes every loss between the
    source and the click, detector efficiency included.
    """
    if singles_opposite <= 0:
        raise NumericError("arm transmission is undefined for zero opposite singles")
    eta = coincidence_rate / singles_opposite
    return eta, linear_to_db(eta)


def brightness(pgr_coefficient: float, bandwidth_mhz: float) -> float:
    """Source brightness: pair rate coefficient per unit photon bandwidth."""
    if bandwidth_mhz <= 0:
        raise NumericError("brightness is undefined for zero bandwidth")
    return pgr_coefficient / bandwidth_mhz


def window_capture(window_ps: float, coherence_time_ps: float) -> float:
    """Fraction of a double-sided exponential peak inside a centered window."""
    return 1.0 - math.exp(-window_ps / (2.0 * coherence_time_ps))


def predict_car(
    a_signal: float,
    a_idler: float,
    b_signal: float,
    b_idler: float,
    dark_signal: float,
    dark_idler: float,
    r_c_coefficient: float,
    window_ps: float,
    power_mw: float,
    dead_time_ns: float = 0.0,
    g2_excess: float = 0.0,
    coherence_time_ps: float = None,
) -> float:
    """Closed-form CAR prediction at one pump power.

    Singles per arm are ``a P + b P^2 + dark`` saturated by the nonparalyzable
    dead time; accidentals in the window are the product of saturated singles
    times the window; true in-window coincidences are
    ``r_c_coefficient * P^2`` (an in-window coefficient) scaled by both arms'
    saturation factors.  When ``g2_excess`` (= g2(0) - 1 of the thermal
    emission) and the coherence time are given, the intensity-correlated
    enhancement of accidentals near zero delay is added; without it the
    prediction underestimates the near-peak background of a thermal source.
    CAR is peak over accidentals, so the floor is 1.
    """
    if window_ps <= 0:
        raise NumericError("predict_car needs a positive coincidence window")
    w_s = window_ps * 1e-12
    true_s = a_signal * power_mw + b_signal * power_mw**2 + dark_signal
    true_i = a_idler * power_mw + b_idler * power_mw**2 + dark_idler
    sat_s = saturated_rate(true_s, dead_time_ns)
    sat_i = saturated_rate(true_i, dead_time_ns)
    f_s = sat_s / true_s if true_s > 0 else 1.0
    f_i = sat_i / true_i if true_i > 0 else 1.0
    accidental = sat_s * sat_i * w_s
    if accidental <= 0:
        return math.inf
    true_pairs = r_c_coefficient * power_mw**2 * f_s * f_i
    bunch = 0.0
    if g2_excess > 0 and coherence_time_ps:
        bunch = (
            sat_s
            * sat_i
            * g2_excess
            * 2.0
            * coherence_time_ps
            * 1e-12
            * window_capture(window_ps, coherence_time_ps)
        )
    return 1.0 + (true_pairs + bunch) / accidental


@dataclass
class CwRunResult:
    """Everything extracted from one CW acquisition."""

    power_mw: float
    duration_s: float
    singles_signal: float
    singles_idler: float
    histogram: Histogram
    summary: object
    decay_fit: FitResult | None
    decay_ps: float
    pair_rate: float  # background-subtracted, capture-corrected coincidences/s

    @property
    def bandwidth_mhz(self) -> float:
        return 1e6 / (2.0 * math.pi * self.decay_ps)


def analyze_cw_run(
    stream: TagStream,
    analysis: AnalysisConfig,
    decay_prior_ps: float | None = None,
) -> CwRunResult:
    """Histogram a CW run and extract singles, CAR and the corrected pair rate."""
    hist = cross_correlate(
        stream, SIGNAL_CHANNEL, IDLER_CHANNEL, analysis.bin_width_ps, analysis.delay_range
    )
    summary = coincidence_summary(hist, analysis.window_ps)
    decay_fit = None
    decay_ps = decay_prior_ps or 760.0
    try:
        decay_fit = fit_g2(hist, "double_exponential")
        fitted = abs(decay_fit["width_ps"])
        err = decay_fit.error("width_ps")
        well_determined = math.isfinite(fitted) and fitted > 0 and err < 0.05 * fitted
        if well_determined or decay_prior_ps is None:
            decay_ps = fitted
    except (FitError, StatisticsError, np.linalg.LinAlgError):
        pass  # sparse histogram: keep the prior decay constant
    capture = window_capture(analysis.window_ps, decay_ps)
    n_window_bins = analysis.window_ps // analysis.bin_width_ps
    net_peak = summary.peak_counts - summary.accidental_counts_per_bin * n_window_bins
    pair_rate = max(net_peak, 0.0) / capture / stream.duration_s
    power = stream.origin.get("pump_power_mw", float("nan"))
    return CwRunResult(
        power_mw=power,
        duration_s=stream.duration_s,
        singles_signal=stream.singles_rate(SIGNAL_CHANNEL),
        singles_idler=stream.singles_rate(IDLER_CHANNEL),
        histogram=hist,
        summary=summary,
        decay_fit=decay_fit,
        decay_ps=decay_ps,
        pair_rate=pair_rate,
    )


def desaturate(measured_rate: float, dead_time_ns: float) -> tuple[float, float]:
    """Invert the nonparalyzable saturation: returns (true rate, live fraction).

    For a nonparalyzable counter the live fraction is exactly
    ``1 - measured * dead_time``.
    """
    live = 1.0 - measured_rate * dead_time_ns * 1e-9
    if live <= 0:
        raise NumericError("measured rate exceeds the dead-time ceiling; cannot desaturate")
    return measured_rate / live, live


@dataclass
class PowerSweep:
    """Measured singles/coincidence rates versus pump power."""

    powers_mw: np.ndarray
    singles_signal: np.ndarray
    singles_idler: np.ndarray
    coincidence_rate: np.ndarray  # corrected pair rate per power
    car: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.powers_mw = np.asarray(self.powers_mw, dtype=np.float64)
        if np.any(np.diff(self.powers_mw) <= 0):
            raise ConfigError("power sweep powers must be strictly increasing")
        for name in ("singles_signal", "singles_idler", "coincidence_rate", "car"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if arr.shape != self.powers_mw.shape:
                raise ConfigError(f"power sweep column {name} has mismatched length")
            if name != "car" and np.any(arr < 0):
                raise ConfigError(f"power sweep column {name} must be >= 0")

    def rows(self):
        for i in range(self.powers_mw.size):
            yield (
                self.powers_mw[i],
                self.singles_signal[i],
                self.singles_idler[i],
                self.coincidence_rate[i],
                self.car[i],
            )


@dataclass
class SweepCharacterization:
    """Noise decomposition and pair bookkeeping fitted from a power sweep."""

    sweep: PowerSweep
    fit_signal: FitResult
    fit_idler: FitResult
    r_c_coefficient: float  # full pair coincidence rate / mW^2
    r_c_coefficient_err: float
    decay_ps: float
    pgr_coefficient: float
    transmission_signal_db: float
    transmission_idler_db: float
    efficiency_signal: float
    efficiency_idler: float
    brightness: float
    bandwidth_mhz: float


def quadratic_coefficient(powers, rates, acquisition_s=1.0) -> tuple[float, float]:
    """Weighted LS coefficient of rate = c * P^2 through the origin."""
    p2 = np.asarray(powers, dtype=np.float64) ** 2
    y = np.asarray(rates, dtype=np.float64)
    w = np.asarray(acquisition_s, dtype=np.float64) / np.maximum(y, 1e-9)
    w = np.broadcast_to(w, y.shape)
    denom = float(np.sum(w * p2 * p2))
    if denom <= 0:
        raise FitError("cannot fit a quadratic coefficient on this sweep")
    coeff = float(np.sum(w * p2 * y) / denom)
    return coeff, math.sqrt(1.0 / denom)


def characterize_sweep(
    results: list[CwRunResult],
    dark_signal: float,
    dark_idler: float,
    dead_time_signal_ns: float = 0.0,
    dead_time_idler_ns: float = 0.0,
    weights: str = "poisson",
) -> SweepCharacterization:
    """Fit noise decomposition, pair rate, losses and brightness from CW runs.

    Measured singles are first de-saturated with the known dead time, then fit
    with ``a P + b P^2`` (dark counts subtracted); the corrected pair rate is
    de-saturated with both arms' live fractions and fit with a pure quadratic.
    """
    results = sorted(results, key=lambda r: r.power_mw)
    powers = np.array([r.power_mw for r in results])
    acq = np.array([r.duration_s for r in results])
    s_sig = np.empty(powers.size)
    s_idl = np.empty(powers.size)
    pairs = np.empty(powers.size)
    cars = np.array([r.summary.car for r in results])
    for i, r in enumerate(results):
        true_s, live_s = desaturate(r.singles_signal, dead_time_signal_ns)
        true_i, live_i = desaturate(r.singles_idler, dead_time_idler_ns)
        s_sig[i] = true_s
        s_idl[i] = true_i
        pairs[i] = r.pair_rate / (live_s * live_i)

    fit_s = fit_power_law(
        np.column_stack([powers, np.maximum(s_sig - dark_signal, 0.0)]),
        weights=weights,
        acquisition_s=acq,
    )
    fit_i = fit_power_law(
        np.column_stack([powers, np.maximum(s_idl - dark_idler, 0.0)]),
        weights=weights,
        acquisition_s=acq,
    )
    r_c_coeff, r_c_err = quadratic_coefficient(powers, pairs, acq)
    decay_ps = float(np.median([r.decay_ps for r in results]))

    b_s, b_i = fit_s["b"], fit_i["b"]
    pgr = pair_generation_rate(b_s, b_i, r_c_coeff)
    eta_s, eta_s_db = arm_transmission(b_i, r_c_coeff)
    eta_i, eta_i_db = arm_transmission(b_s, r_c_coeff)
    bandwidth_mhz = 1e6 / (2.0 * math.pi * decay_ps)

    sweep = PowerSweep(
        powers_mw=powers,
        singles_signal=np.array([r.singles_signal for r in results]),
        singles_idler=np.array([r.singles_idler for r in results]),
        coincidence_rate=np.array([r.pair_rate for r in results]),
        car=cars,
        meta={
            "durations_s": acq.tolist(),
            "dead_time_ns": (dead_time_signal_ns, dead_time_idler_ns),
        },
    )
    return SweepCharacterization(
        sweep=sweep,
        fit_signal=fit_s,
        fit_idler=fit_i,
        r_c_coefficient=r_c_coeff,
        r_c_coefficient_err=r_c_err,
        decay_ps=decay_ps,
        pgr_coefficient=pgr,
        transmission_signal_db=eta_s_db,
        transmission_idler_db=eta_i_db,
        efficiency_signal=eta_s,
        efficiency_idler=eta_i,
        brightness=brightness(pgr, bandwidth_mhz),
        bandwidth_mhz=bandwidth_mhz,
    )


@dataclass
class PurityResult:
    histogram: Histogram
    fit: FitResult

    @property
    def g2_zero(self) -> float:
        return self.fit["g2_zero"]

    @property
    def schmidt_number(self) -> float:
        return self.fit.parameters["schmidt_number"]


def analyze_purity(
    stream: TagStream,
    analysis: AnalysisConfig,
    channel: int = SIGNAL_CHANNEL,
    shape: str = "double_exponential",
    bin_width_ps: int | None = None,
    delay_range_ps: int | None = None,
) -> PurityResult:
    """Split-detector autocorrelation and g2(0) fit on one arm."""
    bw = bin_width_ps or analysis.bin_width_ps
    rng_ps = delay_range_ps or analysis.delay_range_ps
    hist = autocorrelate_split(stream, channel, analysis.splitter_seed, bw, (-rng_ps, rng_ps))
    return PurityResult(histogram=hist, fit=fit_g2(hist, shape))


@dataclass
class TimebinSweepResult:
    phases: np.ndarray
    central: np.ndarray
    left: np.ndarray
    right: np.ndarray
    background_per_window: np.ndarray  # per-tooth accidental estimate per phase
    visibility_fit: FitResult
    side_slopes: dict  # side -> (slope, sigma)


def timebin_background_per_window(
    hist: Histogram,
    bin_separation_ps: float,
    window_fraction: float = 1.0 / 3.0,
) -> float:
    """Estimated background counts inside the central peak window.

    With a pulsed pump every background contribution is pinned to multiples
    of the bin separation, so the between-peak floor underestimates the
    accidentals under the three peaks; the uncorrelated comb teeth at
    |k| >= 2 carry the same composition and are the right estimator.  The
    central window additionally receives the exponential tails of both side
    peaks (one bin separation away), which the |k| = 2 teeth see exactly once
    (from the adjacent side peak) and the far teeth essentially never, hence

        bg(central) = 2 * bg(|k| = 2) - bg(|k| >= 3)
    """
    window = window_fraction * bin_separation_ps
    half = window / 2.0

    def tooth(k: int) -> float | None:
        target = k * bin_separation_ps
        if target - half < hist.delay_min_ps or target + half > hist.delay_max_ps:
            return None
        return float(hist.counts[window_slice(hist, target, window)].sum())

    near = [v for k in (-2, 2) if (v := tooth(k)) is not None]
    far = [v for k in (-8, -7, -6, -5, -4, -3, 3, 4, 5, 6, 7, 8) if (v := tooth(k)) is not None]
    if not near or not far:
        raise ConfigError("delay range covers too few background teeth; widen it")
    return 2.0 * float(np.mean(near)) - float(np.mean(far))


def _line_fit(x: np.ndarray, y: np.ndarray, sigma: np.ndarray) -> tuple[float, float]:
    """Weighted straight-line fit; returns (slope, slope standard error)."""
    w = 1.0 / np.maximum(sigma, 1e-12) ** 2
    sw, swx = w.sum(), (w * x).sum()
    swxx, swy, swxy = (w * x * x).sum(), (w * y).sum(), (w * x * y).sum()
    denom = sw * swxx - swx * swx
    if denom <= 0:
        raise FitError("degenerate abscissa for the slope fit")
    slope = (sw * swxy - swx * swy) / denom
    return slope, math.sqrt(sw / denom)
