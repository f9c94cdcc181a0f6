"""Synthetic detector time-tag generation for CW and pulsed time-bin runs.

The CW pair source is a doubly stochastic Poisson process: pair emission at
mean rate ``pair_rate_coefficient * P^2`` is modulated by a unit-mean
intensity built from a small number of independent complex Ornstein-Uhlenbeck
fields (one per spectral mode), which yields thermal counting statistics with

    g2(0) = 1 + sum(w_j^2)   (equal weights: 1 + 1/n)

and an intensity correlation decaying as ``exp(-|tau| / coherence_time)``.
Each emitted pair carries a signal-idler relative delay drawn from a
double-sided exponential with the same decay constant; the delay rides on the
idler so the signal-arm autocorrelation stays exactly thermal.

Detector effects are applied in order: per-arm survival (transmission times
efficiency, pair photons only; linear noise and dark counts are already
referred to the detector), Gaussian timing jitter, nonparalyzable dead time,
and TDC quantization.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .device import ChannelPair, db_to_linear
from .errors import ConfigError, SizeError

SIGNAL_CHANNEL = 0
IDLER_CHANNEL = 1

# Candidate-array budget per generation chunk (divided by the mode count).
_CHUNK_CANDIDATE_BUDGET = 4_194_304


@dataclass(frozen=True)
class SourceConfig:
    """Pair source and photonic-noise parameters for one run."""

    pump_power_mw: float
    pair_rate_coefficient: float  # generated pairs / s / mW^2, before any loss
    linear_noise_signal: float = 0.0  # counts / s / mW, referred to detector
    linear_noise_idler: float = 0.0
    schmidt_modes: int = 1
    mode_weights: tuple = ()  # optional unequal weights, overrides schmidt_modes
    coherence_time_ps: float = 760.0
    duration_s: float = 1.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.pump_power_mw < 0:
            raise ConfigError("source.pump_power_mw must be >= 0")
        if self.pair_rate_coefficient < 0:
            raise ConfigError("source.pair_rate_coefficient must be >= 0")
        if self.linear_noise_signal < 0 or self.linear_noise_idler < 0:
            raise ConfigError("source linear noise coefficients must be >= 0")
        if self.schmidt_modes < 1:
            raise ConfigError("source.schmidt_modes must be >= 1")
        if self.coherence_time_ps <= 0:
            raise ConfigError("source.coherence_time_ps must be > 0")
        if self.duration_s <= 0:
            raise ConfigError("source.duration_s must be > 0")
        if self.mode_weights and any(w <= 0 for w in self.mode_weights):
            raise ConfigError("source.mode_weights must all be > 0")

    def normalized_weights(self) -> np.ndarray:
        if self.mode_weights:
            w = np.asarray(self.mode_weights, dtype=np.float64)
        else:
            w = np.full(self.schmidt_modes, 1.0 / self.schmidt_modes)
        return w / w.sum()

    @property
    def schmidt_number(self) -> float:
        """Effective mode number 1 / sum(w^2); equals schmidt_modes for equal weights."""
        w = self.normalized_weights()
        return 1.0 / float(np.sum(w * w))


@dataclass(frozen=True)
class DetectorConfig:
    """Single-photon detector model parameters."""

    efficiency: float = 0.8
    dark_rate: float = 40.0  # counts / s
    dead_time_ns: float = 0.0
    jitter_sigma_ps: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.efficiency <= 1.0:
            raise ConfigError(f"detector.efficiency must be in (0, 1], got {self.efficiency}")
        if self.dark_rate < 0:
            raise ConfigError("detector.dark_rate must be >= 0")
        if self.dead_time_ns < 0:
            raise ConfigError("detector.dead_time_ns must be >= 0")
        if self.jitter_sigma_ps < 0:
            raise ConfigError("detector.jitter_sigma_ps must be >= 0")


@dataclass(frozen=True)
class TimeBinConfig:
    """Pulsed sequential time-bin mode with an analysis interferometer.

    The pump is carved into pulses at ``clock_rate_mhz``; consecutive pulses
    ``i`` and ``i+1`` define the two bins, separated by ``bin_separation_ns``.
    Both photons of a pair traverse the same imbalanced interferometer whose
    long arm adds one bin separation.  Upstream linear loss is absorbed into
    the source pair-rate coefficient; interferometer excess and splitter
    losses apply per photon.
    """

    clock_rate_mhz: float = 750.0
    bin_separation_ns: float = 4.0 / 3.0
    pulse_width_ps: float = 80.0  # FWHM of the carved pulse
    interferometer_phase_rad: float = 0.0
    pump_phase_rad: float = 0.0
    interferometer_excess_loss_db: float = 3.0
    splitter_loss_db: float = 3.0
    intrinsic_visibility: float = 1.0

    def __post_init__(self) -> None:
        if self.clock_rate_mhz <= 0:
            raise ConfigError("timebin.clock_rate_mhz must be > 0")
        product = self.bin_separation_ns * self.clock_rate_mhz
        if abs(product - 1000.0) > 1e-6 * 1000.0:
            raise ConfigError(
                "timebin bin separation and clock rate are inconsistent: "
                f"dt * clock = {product:.6f}, expected 1000 (ns * MHz)"
            )
        if self.pulse_width_ps < 0:
            raise ConfigError("timebin.pulse_width_ps must be >= 0")
        if not 0.0 <= self.intrinsic_visibility <= 1.0:
            raise ConfigError("timebin.intrinsic_visibility must be in [0, 1]")
        if self.interferometer_excess_loss_db < 0 or self.splitter_loss_db < 0:
            raise ConfigError("timebin losses are given as positive dB figures")

    @property
    def bin_separation_ps(self) -> float:
        return self.bin_separation_ns * 1e3

    @property
    def excess_survival(self) -> float:
        """Per-photon transmission of the interferometer excess loss alone.

        The splitter loss is not a survival factor: it is realized by the
        50:50 output-port statistics of the interferometer (the nominal
        ``splitter_loss_db`` of ~3 dB is bookkeeping for that port split).
        """
        return db_to_linear(-self.interferometer_excess_loss_db)


@dataclass
class TagStream:
    """Time-ordered detection records with picosecond-tick resolution."""

    timestamps_ps: np.ndarray  # int64, multiples of resolution_ps, nondecreasing
    channels: np.ndarray  # uint8
    resolution_ps: int
    duration_s: float
    channel_ids: tuple = (SIGNAL_CHANNEL, IDLER_CHANNEL)
    origin: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.timestamps_ps = np.asarray(self.timestamps_ps, dtype=np.int64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.resolution_ps <= 0:
            raise ConfigError("TagStream resolution must be > 0")
        if self.timestamps_ps.shape != self.channels.shape:
            raise ConfigError("TagStream timestamp/channel arrays must have equal length")
        if self.timestamps_ps.size and np.any(np.diff(self.timestamps_ps) < 0):
            raise ConfigError("TagStream timestamps must be nondecreasing")
        if self.channels.size:
            allowed = np.zeros(256, dtype=bool)
            allowed[[int(c) for c in self.channel_ids]] = True
            if not allowed[self.channels].all():
                bad = sorted(set(np.unique(self.channels)) - set(self.channel_ids))
                raise ConfigError(f"TagStream contains undeclared channel ids {bad}")

    def __len__(self) -> int:
        return int(self.timestamps_ps.size)

    def channel_times(self, channel: int) -> np.ndarray:
        if int(channel) not in set(int(c) for c in self.channel_ids):
            raise ConfigError(f"unknown channel id {channel}")
        return self.timestamps_ps[self.channels == channel]

    def singles_rate(self, channel: int) -> float:
        return self.channel_times(channel).size / self.duration_s


def saturated_rate(true_rate: float, dead_time_ns: float) -> float:
    """Detected rate of a nonparalyzable counter: r / (1 + r * dead_time)."""
    if true_rate < 0 or dead_time_ns < 0:
        raise ConfigError("saturated_rate inputs must be >= 0")
    return true_rate / (1.0 + true_rate * dead_time_ns * 1e-9)


@njit(cache=False)
def _ou_thin_kernel(gaps_ps, uniforms, normals, weights, tau_field_ps, cap, state):
    """Thin candidate times by the instantaneous modal intensity.

    ``state`` holds the (re, im) field amplitude per mode and is updated in
    place so the process is continuous across chunk boundaries.  Each field is
    a unit-variance complex OU process sampled exactly at the candidate times.
    """
    n = gaps_ps.shape[0]
    m = weights.shape[0]
    keep = np.empty(n, np.bool_)
    for i in range(n):
        rho = math.exp(-gaps_ps[i] / tau_field_ps)
        q = math.sqrt((1.0 - rho * rho) * 0.5)
        intensity = 0.0
        for j in range(m):
            re = rho * state[j, 0] + q * normals[i, 2 * j]
            im = rho * state[j, 1] + q * normals[i, 2 * j + 1]
            state[j, 0] = re
            state[j, 1] = im
            intensity += weights[j] * (re * re + im * im)
        keep[i] = uniforms[i] * cap < intensity
    return keep


@njit(cache=False)
def _dead_time_kernel(times_ps, dead_ps):
    """Nonparalyzable dead-time filter on a sorted time array."""
    n = times_ps.shape[0]
    keep = np.empty(n, np.bool_)
    last = -1e30
    for i in range(n):
        if times_ps[i] - last >= dead_ps:
            keep[i] = True
            last = times_ps[i]
        else:
            keep[i] = False
    return keep


def _intensity_cap(weights: np.ndarray, log_tail: float = -27.0) -> float:
    """Upper intensity cap with Chernoff tail probability below exp(log_tail)."""
    lam_max = float(np.max(weights))
    s = np.linspace(0.5, 0.9999, 256) / lam_max
    log_mgf = -np.sum(np.log1p(-np.outer(s, weights)), axis=1)

    def bound(c):
        return float(np.min(-s * c + log_mgf))

    lo, hi = 1.0, 4000.0 * lam_max + 10.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if bound(mid) <= log_tail:
            hi = mid
        else:
            lo = mid
    return hi


def _stationary_state(rng: np.random.Generator, n_modes: int) -> np.ndarray:
    return rng.standard_normal((n_modes, 2)) * math.sqrt(0.5)


def _laplace_ps(rng: np.random.Generator, scale_ps: float, n: int) -> np.ndarray:
    return rng.laplace(0.0, scale_ps, n)


def _finalize_arm(times_ps, jitter_sigma_ps, dead_time_ns, duration_ps, rng):
    """Jitter, clip to the run window, sort, dead-time filter."""
    if times_ps.size and jitter_sigma_ps > 0:
        times_ps = times_ps + rng.normal(0.0, jitter_sigma_ps, times_ps.size)
    times_ps = times_ps[(times_ps >= 0.0) & (times_ps < duration_ps)]
    times_ps = np.sort(times_ps)
    if dead_time_ns > 0 and times_ps.size:
        times_ps = times_ps[_dead_time_kernel(times_ps, dead_time_ns * 1e3)]
    return times_ps


def _assemble_stream(signal_ps, idler_ps, resolution_ps, duration_s, origin) -> TagStream:
    ticks_s = np.floor(signal_ps / resolution_ps + 0.5).astype(np.int64) * resolution_ps
    ticks_i = np.floor(idler_ps / resolution_ps + 0.5).astype(np.int64) * resolution_ps
    times = np.concatenate([ticks_s, ticks_i])
    channels = np.concatenate(
        [
            np.full(ticks_s.size, SIGNAL_CHANNEL, np.uint8),
            np.full(ticks_i.size, IDLER_CHANNEL, np.uint8),
        ]
    )
    order = np.lexsort((channels, times))
    return TagStream(
        timestamps_ps=times[order],
        channels=channels[order],
        resolution_ps=resolution_ps,
        duration_s=duration_s,
        origin=origin,
    )


def simulate_cw(
    source: SourceConfig,
    det_signal: DetectorConfig,
    det_idler: DetectorConfig,
    pair: ChannelPair,
    resolution_ps: int = 81,
    max_tags: float = 2.5e8,
    intensity_cap: float | None = None,
) -> TagStream:
    """Simulate a CW two-channel run and return the merged tag stream.

    Deterministic for a fixed ``source.rng_seed``.  Raises :class:`SizeError`
    when the expected tag count exceeds ``max_tags``.

    ``intensity_cap`` bounds the thermal intensity used for candidate
    thinning.  The default (None) picks a bound with negligible truncation;
    rate-focused runs that do not analyze bunching can pass a small cap
    (e.g. 6) to trade a ~exp(-cap) relative rate bias for speed.
    """
    power = source.pump_power_mw
    duration = source.duration_s
    duration_ps = duration * 1e12
    mu = source.pair_rate_coefficient * power * power  # generated pairs / s

    eta_s = pair.transmission_signal * det_signal.efficiency
    eta_i = pair.transmission_idler * det_idler.efficiency
    noise_s = source.linear_noise_signal * power
    noise_i = source.linear_noise_idler * power

    expected = duration * (
        mu * (eta_s + eta_i)
        + noise_s
        + noise_i
        + det_signal.dark_rate
        + det_idler.dark_rate
    )
    if expected > max_tags:
        raise SizeError(
            f"run would produce ~{expected:.3g} tags, over the {max_tags:.3g} budget; "
            "shorten the duration or lower the rates"
        )

    # Pair survival classes: both photons, signal only, idler only.
    p_bb = eta_s * eta_i
    p_s0 = eta_s * (1.0 - eta_i)
    p_i0 = (1.0 - eta_s) * eta_i
    p_kept = p_bb + p_s0 + p_i0
    kept_rate = mu * p_kept

    weights = source.normalized_weights()
    n_modes = weights.size
    cap = intensity_cap if intensity_cap is not None else _intensity_cap(weights)
    tau_c = source.coherence_time_ps
    tau_field = 2.0 * tau_c  # field correlation; intensity then decays with tau_c

    candidate_rate = kept_rate * cap
    if candidate_rate > 0:
        chunk_s = min(duration, max(_CHUNK_CANDIDATE_BUDGET / n_modes / candidate_rate, 1e-3))
    else:
        chunk_s = duration
    n_chunks = max(1, math.ceil(duration / chunk_s))
    edges = np.linspace(0.0, duration, n_chunks + 1)

    root = np.random.SeedSequence(source.rng_seed)
    chunk_seeds = root.spawn(n_chunks)

    signal_parts = []
    idler_parts = []
    state = None
    for ci in range(n_chunks):
        streams = chunk_seeds[ci].spawn(8)
        t0_ps, t1_ps = edges[ci] * 1e12, edges[ci + 1] * 1e12
        span_ps = t1_ps - t0_ps

        sig_chunk = []
        idl_chunk = []
        if kept_rate > 0:
            rng_cand = np.random.default_rng(streams[0])
            n_cand = rng_cand.poisson(candidate_rate * span_ps * 1e-12)
            times = np.sort(rng_cand.uniform(t0_ps, t1_ps, n_cand))
            rng_ou = np.random.default_rng(streams[1])
            if state is None:
                state = _stationary_state(rng_ou, n_modes)
                prev_t = t0_ps
            gaps = np.diff(times, prepend=prev_t)
            # float32 draws: the OU innovations and the thinning uniforms do
            # not need double precision, and they dominate the RNG cost.
            normals = rng_ou.standard_normal((n_cand, 2 * n_modes), dtype=np.float32)
            uniforms = np.random.default_rng(streams[2]).random(n_cand, dtype=np.float32)
            keep = _ou_thin_kernel(gaps, uniforms, normals, weights, tau_field, cap, state)
            if n_cand:
                prev_t = times[-1]
            pair_times = times[keep]

            u_class = np.random.default_rng(streams[3]).random(pair_times.size)
            is_bb = u_class < p_bb / p_kept
            is_s0 = (~is_bb) & (u_class < (p_bb + p_s0) / p_kept)
            is_i0 = ~(is_bb | is_s0)
            rng_delay = np.random.default_rng(streams[4])
            bb_t = pair_times[is_bb]
            sig_chunk.append(bb_t)
            idl_chunk.append(bb_t + _laplace_ps(rng_delay, tau_c, bb_t.size))
            sig_chunk.append(pair_times[is_s0])
            i0_t = pair_times[is_i0]
            idl_chunk.append(i0_t + _laplace_ps(rng_delay, tau_c, i0_t.size))

        for rates, sink, seed in (
            ((noise_s, det_signal.dark_rate), sig_chunk, streams[5]),
            ((noise_i, det_idler.dark_rate), idl_chunk, streams[6]),
        ):
            rng_bg = np.random.default_rng(seed)
            total = sum(rates)
            if total > 0:
                n_bg = rng_bg.poisson(total * span_ps * 1e-12)
                sink.append(rng_bg.uniform(t0_ps, t1_ps, n_bg))

        rng_jitter = np.random.default_rng(streams[7])
        for parts, chunk, det in (
            (signal_parts, sig_chunk, det_signal),
            (idler_parts, idl_chunk, det_idler),
        ):
            arr = np.concatenate(chunk) if chunk else np.empty(0)
            if arr.size and det.jitter_sigma_ps > 0:
                arr = arr + rng_jitter.normal(0.0, det.jitter_sigma_ps, arr.size)
            parts.append(arr)

    origin = {
        "mode": "cw",
        "seed": source.rng_seed,
        "pump_power_mw": power,
        "duration_s": duration,
        "signal_channel": pair.signal_channel,
        "idler_channel": pair.idler_channel,
    }
    signal_ps = np.sort(np.concatenate(signal_parts)) if signal_parts else np.empty(0)
    idler_ps = np.sort(np.concatenate(idler_parts)) if idler_parts else np.empty(0)
    signal_ps = _finalize_arm(signal_ps, 0.0, det_signal.dead_time_ns, duration_ps, None)
    idler_ps = _finalize_arm(idler_ps, 0.0, det_idler.dead_time_ns, duration_ps, None)
    return _assemble_stream(signal_ps, idler_ps, resolution_ps, duration, origin)


def simulate_timebin(
    source: SourceConfig,
    tb: TimeBinConfig,
    det_signal: DetectorConfig,
    det_idler: DetectorConfig,
    resolution_ps: int = 81,
    max_tags: float = 2.5e8,
) -> TagStream:
    """Simulate a pulsed sequential time-bin run through the interferometer.

    Pairs are pinned to pump pulse slots.  Each photon takes the short or the
    long interferometer arm with amplitude weight 1/2, giving relative-delay
    classes {-dt: 1/4, 0: 1/2, +dt: 1/4} before interference.  For the
    zero-delay class the two indistinguishable paths interfere in the joint
    output-port statistics of the splitter: with theta = 2 phi + phi_pump and
    V the intrinsic visibility, the pair lands on (detector, detector) with
    probability (1 + V cos theta) / 4, on each mixed (detector, unmonitored)
    sector with probability (1 - V cos theta) / 4, and on (unmonitored,
    unmonitored) otherwise.  Side-class photons draw their ports
    independently.  Single-photon rates are therefore phase independent, side
    peaks carry no phase dependence, and V = 0 reproduces the bare 1:2:1
    class weights at the monitored detectors.
    """
    dt_ps = tb.bin_separation_ps
    tau_c = source.coherence_time_ps
    if not tau_c < dt_ps / 3.0:
        raise ConfigError(
            f"time-bin mode requires coherence_time < bin_separation/3 "
            f"({tau_c:.0f} ps >= {dt_ps / 3.0:.0f} ps)"
        )

    power = source.pump_power_mw
    duration = source.duration_s
    duration_ps = duration * 1e12
    mu = source.pair_rate_coefficient * power * power
    # Per-photon survival after the port draw: excess loss and detector only.
    eta_s = det_signal.efficiency * tb.excess_survival
    eta_i = det_idler.efficiency * tb.excess_survival
    noise_s = source.linear_noise_signal * power
    noise_i = source.linear_noise_idler * power

    expected = duration * (
        mu * 0.5 * (eta_s + eta_i)
        + noise_s
        + noise_i
        + det_signal.dark_rate
        + det_idler.dark_rate
    )
    if expected > max_tags:
        raise SizeError(
            f"run would produce ~{expected:.3g} tags, over the {max_tags:.3g} budget"
        )

    n_slots = int(duration_ps // dt_ps)
    sigma_pulse = tb.pulse_width_ps / (2.0 * math.sqrt(2.0 * math.log(2.0)))  # FWHM -> sigma
    theta = 2.0 * tb.interferometer_phase_rad + tb.pump_phase_rad
    fringe = tb.intrinsic_visibility * math.cos(theta)

    root = np.random.SeedSequence(source.rng_seed)
    s_pairs, s_noise_s, s_noise_i, s_jitter = root.spawn(4)
    rng = np.random.default_rng(s_pairs)

    n_pairs = rng.poisson(mu * duration)
    slots = rng.integers(0, n_slots, n_pairs)
    t0 = slots.astype(np.float64) * dt_ps
    if sigma_pulse > 0:
        t0 = t0 + rng.normal(0.0, sigma_pulse, n_pairs)
    delta = _laplace_ps(rng, tau_c, n_pairs)

    u_class = rng.random(n_pairs)
    cls_minus = u_class < 0.25  # signal long, idler short
    cls_plus = u_class >= 0.75  # signal short, idler long
    cls_zero = ~(cls_minus | cls_plus)
    both_long = cls_zero & (rng.random(n_pairs) < 0.5)

    # Output-port draw.  Central class: joint sectors DD/DX/XD/XX; sides:
    # independent 50:50 ports per photon.
    u_port = rng.random(n_pairs)
    u_side_i = rng.random(n_pairs)
    p_dd = (1.0 + fringe) / 4.0
    p_dx = (1.0 - fringe) / 4.0
    port_s = np.where(
        cls_zero,
        u_port < p_dd + p_dx,  # DD or DX
        u_port < 0.5,
    )
    port_i = np.where(
        cls_zero,
        (u_port < p_dd) | ((u_port >= p_dd + p_dx) & (u_port < p_dd + p_dx + p_dx)),  # DD or XD
        u_side_i < 0.5,
    )

    shift_s = np.where(cls_minus | both_long, dt_ps, 0.0)
    shift_i = np.where(cls_plus | both_long, dt_ps, 0.0)
    t_signal = t0 + shift_s
    t_idler = t0 + delta + shift_i

    det_s = port_s & (rng.random(n_pairs) < eta_s)
    det_i = port_i & (rng.random(n_pairs) < eta_i)
    signal_parts = [t_signal[det_s]]
    idler_parts = [t_idler[det_i]]

    # Linear noise rides on the pulsed pump: slot-pinned, with a random
    # interferometer arm per photon.  Dark counts are uniform in time.
    for rate, dark, det, sink, seed in (
        (noise_s, det_signal.dark_rate, det_signal, signal_parts, s_noise_s),
        (noise_i, det_idler.dark_rate, det_idler, idler_parts, s_noise_i),
    ):
        rng_bg = np.random.default_rng(seed)
        n_noise = rng_bg.poisson(rate * duration)
        t = rng_bg.integers(0, n_slots, n_noise).astype(np.float64) * dt_ps
        if sigma_pulse > 0:
            t = t + rng_bg.normal(0.0, sigma_pulse, n_noise)
        t = t + np.where(rng_bg.random(n_noise) < 0.5, dt_ps, 0.0)
        sink.append(t)
        n_dark = rng_bg.poisson(dark * duration)
        sink.append(rng_bg.uniform(0.0, duration_ps, n_dark))

    rng_jit = np.random.default_rng(s_jitter)
    origin = {
        "mode": "timebin",
        "seed": source.rng_seed,
        "pump_power_mw": power,
        "duration_s": duration,
        "interferometer_phase_rad": tb.interferometer_phase_rad,
    }
    signal_ps = _finalize_arm(
        np.concatenate(signal_parts),
        det_signal.jitter_sigma_ps,
        det_signal.dead_time_ns,
        duration_ps,
        rng_jit,
    )
    idler_ps = _finalize_arm(
        np.concatenate(idler_parts),
        det_idler.jitter_sigma_ps,
        det_idler.dead_time_ns,
        duration_ps,
        rng_jit,
    )
    return _assemble_stream(signal_ps, idler_ps, resolution_ps, duration, origin)
