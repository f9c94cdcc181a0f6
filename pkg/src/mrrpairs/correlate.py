"""High-throughput tag correlation: histograms, coincidences, peak statistics.

The cross-correlator is a single forward pass over the start channel using
binary searches into the stop channel, so the cost is O(N log N + P) for N
tags and P in-window pairs.  It is exact: on small inputs it reproduces the
all-pairs oracle bin for bin.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .emitter import TagStream
from .errors import ConfigError, StatisticsError

_BLOCK = 1 << 20  # start tags per correlation block, bounds peak memory


@dataclass
class Histogram:
    """Binned coincidence counts versus relative delay (stop minus start)."""

    bin_width_ps: int
    delay_min_ps: int
    delay_max_ps: int
    counts: np.ndarray
    total_starts: int = 0
    total_stops: int = 0
    acquisition_time_s: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.bin_width_ps <= 0:
            raise ConfigError("histogram bin width must be > 0")
        span = self.delay_max_ps - self.delay_min_ps
        if span <= 0 or span % self.bin_width_ps != 0:
            raise ConfigError(
                f"delay range ({self.delay_min_ps}, {self.delay_max_ps}) is not a "
                f"positive multiple of the bin width {self.bin_width_ps}"
            )
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.size != span // self.bin_width_ps:
            raise ConfigError("histogram count array does not match the delay range")
        if np.any(self.counts < 0):
            raise ConfigError("histogram counts must be >= 0")

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return (
            self.delay_min_ps
            + self.bin_width_ps * np.arange(self.n_bins, dtype=np.float64)
            + self.bin_width_ps / 2.0
        )


@dataclass
class CoincidenceSummary:
    peak_counts: int
    accidental_counts_per_bin: float
    window_ps: int
    coincidence_rate: float  # peak counts / acquisition time
    car: float
    peak_delay_ps: float = 0.0
    sideband_bins: int = 0
    sideband_counts: int = 0

    @property
    def car_sigma(self) -> float:
        """Counting-statistics standard error of the CAR estimate."""
        if self.peak_counts <= 0 or self.sideband_counts <= 0:
            return math.inf
        return self.car * math.sqrt(1.0 / self.peak_counts + 1.0 / self.sideband_counts)


def _sorted_channel(stream: TagStream, channel: int) -> np.ndarray:
    times = stream.channel_times(channel)
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise ConfigError("tag stream is not sorted; re-sort before correlating")
    return times


def _delay_counts(a: np.ndarray, b: np.ndarray, lo: int, hi: int, bin_width: int) -> np.ndarray:
    """Histogram of b - a delays in [lo, hi), half-open bins of bin_width."""
    n_bins = (hi - lo) // bin_width
    hist = np.zeros(n_bins, dtype=np.int64)
    for i0 in range(0, a.size, _BLOCK):
        blk = a[i0 : i0 + _BLOCK]
        left = np.searchsorted(b, blk + lo, side="left")
        right = np.searchsorted(b, blk + hi, side="left")
        per = right - left
        total = int(per.sum())
        if total == 0:
            continue
        offsets = np.zeros(blk.size, dtype=np.int64)
        np.cumsum(per[:-1], out=offsets[1:])
        flat = np.arange(total, dtype=np.int64) - np.repeat(offsets, per) + np.repeat(left, per)
        delays = b[flat] - np.repeat(blk, per)
        hist += np.bincount((delays - lo) // bin_width, minlength=n_bins)
    return hist


def cross_correlate(
    stream: TagStream,
    ch_a: int,
    ch_b: int,
    bin_width_ps: int,
    delay_range_ps: tuple[int, int],
) -> Histogram:
    """Cross-correlation histogram of delays ``t_b - t_a`` over the given range."""
    lo, hi = int(delay_range_ps[0]), int(delay_range_ps[1])
    a = _sorted_channel(stream, ch_a)
    b = _sorted_channel(stream, ch_b)
    counts = _delay_counts(a, b, lo, hi, int(bin_width_ps))
    return Histogram(
        bin_width_ps=int(bin_width_ps),
        delay_min_ps=lo,
        delay_max_ps=hi,
        counts=counts,
        total_starts=a.size,
        total_stops=b.size,
        acquisition_time_s=stream.duration_s,
        meta={"channels": (ch_a, ch_b), "kind": "cross"},
    )


def cross_correlate_oracle(
    stream: TagStream,
    ch_a: int,
    ch_b: int,
    bin_width_ps: int,
    delay_range_ps: tuple[int, int],
) -> Histogram:
    """All-pairs O(N^2) reference implementation, for verification only."""
    lo, hi = int(delay_range_ps[0]), int(delay_range_ps[1])
    a = _sorted_channel(stream, ch_a)
    b = _sorted_channel(stream, ch_b)
    n_bins = (hi - lo) // int(bin_width_ps)
    counts = np.zeros(n_bins, dtype=np.int64)
    for t in a:
        d = b - t
        d = d[(d >= lo) & (d < hi)]
        counts += np.bincount((d - lo) // int(bin_width_ps), minlength=n_bins)
    return Histogram(
        bin_width_ps=int(bin_width_ps),
        delay_min_ps=lo,
        delay_max_ps=hi,
        counts=counts,
        total_starts=a.size,
        total_stops=b.size,
        acquisition_time_s=stream.duration_s,
        meta={"channels": (ch_a, ch_b), "kind": "cross-oracle"},
    )


def autocorrelate_split(
    stream: TagStream,
    channel: int,
    splitter_seed: int,
    bin_width_ps: int,
    delay_range_ps: tuple[int, int],
) -> Histogram:
    """Hanbury Brown-Twiss style autocorrelation via a virtual 50:50 splitter.

    Every tag on ``channel`` is routed to one of two virtual sub-channels with
    independent probability 1/2 (seeded), and the sub-channels are
    cross-correlated.  In distribution this equals a physical splitter feeding
    two ideal detectors.
    """
    times = _sorted_channel(stream, channel)
    mask = np.random.default_rng(splitter_seed).random(times.size) < 0.5
    a, b = times[mask], times[~mask]
    lo, hi = int(delay_range_ps[0]), int(delay_range_ps[1])
    counts = _delay_counts(a, b, lo, hi, int(bin_width_ps))
    return Histogram(
        bin_width_ps=int(bin_width_ps),
        delay_min_ps=lo,
        delay_max_ps=hi,
        counts=counts,
        total_starts=a.size,
        total_stops=b.size,
        acquisition_time_s=stream.duration_s,
        meta={"channels": (channel,), "kind": "auto-split", "splitter_seed": splitter_seed},
    )


def _peak_location(hist: Histogram, window_ps: float, search_ps: float = 5000.0) -> float:
    """Maximum bin near zero delay, refined by a centroid over +-window."""
    centers = hist.bin_centers_ps
    near = np.abs(centers) <= search_ps
    if not near.any():
        near = np.ones_like(centers, bool)
    idx = np.flatnonzero(near)[np.argmax(hist.counts[near])]
    coarse = centers[idx]
    sel = np.abs(centers - coarse) <= window_ps
    weights = hist.counts[sel].astype(np.float64)
    if weights.sum() <= 0:
        return float(coarse)
    return float(np.sum(weights * centers[sel]) / weights.sum())


def coincidence_summary(
    hist: Histogram,
    window_ps: int,
    exclusions_ps: tuple = (),
    peak_search_ps: float = 5000.0,
) -> CoincidenceSummary:
    """Peak coincidences, sideband accidental level and their ratio (CAR).

    ``peak_counts`` integrates the bins within +-window/2 of the located peak.
    The accidental level is the mean count per bin over sideband bins further
    than 3 windows from the peak and outside any ``exclusions_ps`` intervals.
    CAR is peak counts over expected accidentals in the window, so a flat
    histogram gives CAR = 1.
    """
    window_ps = int(window_ps)
    span = hist.delay_max_ps - hist.delay_min_ps
    if window_ps <= 0 or window_ps > span:
        raise ConfigError("coincidence window must be positive and fit in the delay range")
    if window_ps % hist.bin_width_ps != 0:
        raise ConfigError(
            f"window {window_ps} ps is not a multiple of the bin width {hist.bin_width_ps} ps"
        )
    center = _peak_location(hist, window_ps, peak_search_ps)
    centers = hist.bin_centers_ps
    n_window_bins = window_ps // hist.bin_width_ps
    start = int(round((center - window_ps / 2.0 - hist.delay_min_ps) / hist.bin_width_ps))
    start = min(max(start, 0), hist.n_bins - n_window_bins)
    peak_counts = int(hist.counts[start : start + n_window_bins].sum())

    sideband = np.abs(centers - center) > 3.0 * window_ps
    for lo, hi in exclusions_ps:
        sideband &= ~((centers >= lo) & (centers <= hi))
    if not sideband.any():
        raise StatisticsError("no sideband bins left to estimate the accidental level")
    acc_per_bin = float(hist.counts[sideband].mean())

    expected_acc = acc_per_bin * n_window_bins
    car = peak_counts / expected_acc if expected_acc > 0 else math.inf
    rate = peak_counts / hist.acquisition_time_s if hist.acquisition_time_s > 0 else math.nan
    return CoincidenceSummary(
        peak_counts=peak_counts,
        accidental_counts_per_bin=acc_per_bin,
        window_ps=window_ps,
        coincidence_rate=rate,
        car=car,
        peak_delay_ps=center,
        sideband_bins=int(sideband.sum()),
        sideband_counts=int(hist.counts[sideband].sum()),
    )


def window_slice(hist: Histogram, target_ps: float, window_ps: float) -> slice:
    """Bin slice of fixed width ``window_ps`` centered as well as possible on
    ``target_ps``.

    Every window spans the same number of bins regardless of how the target
    aligns with the bin lattice, so integrals at different delays stay
    directly comparable.
    """
    n_win = max(1, round(window_ps / hist.bin_width_ps))
    start = round((target_ps - window_ps / 2.0 - hist.delay_min_ps) / hist.bin_width_ps)
    start = min(max(start, 0), hist.n_bins - n_win)
    return slice(start, start + n_win)


def timebin_peaks(
    hist: Histogram,
    bin_separation_ps: float,
    window_fraction: float = 1.0 / 3.0,
) -> tuple[int, int, int]:
    """Integrated counts of the left, central and right time-bin peaks.

    Windows of ``window_fraction * bin_separation`` are centered at delays
    -dt, 0 and +dt.
    """
    need = 1.5 * bin_separation_ps
    if hist.delay_min_ps > -need or hist.delay_max_ps < need:
        raise ConfigError(
            "delay range too narrow for time-bin peaks; needs +-1.5 bin separations"
        )
    window = window_fraction * bin_separation_ps
    out = []
    for target in (-bin_separation_ps, 0.0, bin_separation_ps):
        out.append(int(hist.counts[window_slice(hist, target, window)].sum()))
    return tuple(out)
