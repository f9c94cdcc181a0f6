"""Microring device model and DWDM grid arithmetic.

The ring is described by its loaded quality factor, free spectral range and
pump frequency.  Comb lines sit at ``f_pump + k * FSR`` and shift rigidly with
chip temperature.  Pair photons emitted through a loaded resonance of
intensity FWHM ``f/Q`` carry half that bandwidth (the pair correlation samples
the field response of the cavity, not the intensity response), so

    photon_bandwidth = f / (2 Q)        coherence_time = 1 / (2 pi bandwidth)

which pairs a ~210 MHz photon with a ~760 ps correlation decay for the
Q = 4.6e5 device used in the bundled baseline configuration.

The DWDM grid follows the standard ITU convention: index ``n`` sits at
``anchor + n * spacing / 2`` (100 GHz index pitch for a 200 GHz channel
spacing) and the usable 200 GHz-wide passbands occupy the odd indices.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ConfigError

C_VACUUM_M_PER_S = 299_792_458.0


def thz_to_nm(frequency_thz: float) -> float:
    """Vacuum wavelength in nm for an optical frequency in THz."""
    return C_VACUUM_M_PER_S / (frequency_thz * 1e12) * 1e9


def nm_to_thz(wavelength_nm: float) -> float:
    """Optical frequency in THz for a vacuum wavelength in nm."""
    return C_VACUUM_M_PER_S / (wavelength_nm * 1e-9) * 1e-12


def db_to_linear(loss_db: float) -> float:
    """Transmission factor for a (negative or positive) dB figure."""
    return 10.0 ** (loss_db / 10.0)


def linear_to_db(transmission: float) -> float:
    if transmission <= 0:
        raise ConfigError(f"transmission must be > 0 to express in dB, got {transmission}")
    return 10.0 * math.log10(transmission)


@dataclass(frozen=True)
class RingDevice:
    """Loaded microring resonator.

    Attributes
    ----------
    q_factor : loaded quality factor (dimensionless).
    fsr_ghz : free spectral range in GHz.
    pump_frequency_thz : pump resonance frequency in THz.
    thermal_tuning_ghz_per_k : rigid comb shift per kelvin (GHz/K).
    reference_temperature_k : temperature at which the comb sits at its
        nominal (untuned) position.
    """

    q_factor: float
    fsr_ghz: float
    pump_frequency_thz: float
    thermal_tuning_ghz_per_k: float = -2.75
    reference_temperature_k: float = 300.0

    def __post_init__(self) -> None:
        if self.q_factor <= 0:
            raise ConfigError(f"device.q_factor must be > 0, got {self.q_factor}")
        if self.fsr_ghz <= 0:
            raise ConfigError(f"device.fsr_ghz must be > 0, got {self.fsr_ghz}")
        if self.pump_frequency_thz <= 0:
            raise ConfigError(
                f"device.pump_frequency_thz must be > 0, got {self.pump_frequency_thz}"
            )
        if not math.isfinite(self.thermal_tuning_ghz_per_k):
            raise ConfigError("device.thermal_tuning_ghz_per_k must be finite")

    @property
    def linewidth_ghz(self) -> float:
        """Loaded resonance intensity FWHM, f/Q, in GHz."""
        return self.pump_frequency_thz * 1e3 / self.q_factor

    @property
    def photon_bandwidth_mhz(self) -> float:
        """Emitted pair-photon bandwidth (FWHM), half the resonance width."""
        return self.linewidth_ghz * 1e3 / 2.0

    @property
    def coherence_time_ps(self) -> float:
        """Pair correlation decay constant, 1/(2 pi photon_bandwidth)."""
        return 1e6 / (2.0 * math.pi * self.photon_bandwidth_mhz)

    @property
    def pump_wavelength_nm(self) -> float:
        return thz_to_nm(self.pump_frequency_thz)


@dataclass(frozen=True)
class DwdmGrid:
    """ITU-style channel grid with 200 GHz passbands on odd indices."""

    anchor_frequency_thz: float = 190.0
    channel_spacing_ghz: float = 200.0
    passband_ghz: float = 200.0

    def __post_init__(self) -> None:
        if self.channel_spacing_ghz <= 0:
            raise ConfigError("grid.channel_spacing_ghz must be > 0")
        if self.passband_ghz <= 0:
            raise ConfigError("grid.passband_ghz must be > 0")

    @property
    def index_pitch_ghz(self) -> float:
        """Frequency step per channel index (half the usable spacing)."""
        return self.channel_spacing_ghz / 2.0

    def channel_frequency_thz(self, channel: int) -> float:
        return self.anchor_frequency_thz + channel * self.index_pitch_ghz * 1e-3

    def channel_wavelength_nm(self, channel: int) -> float:
        return thz_to_nm(self.channel_frequency_thz(channel))

    def nearest_channel(self, frequency_thz: float) -> int:
        """Nearest usable (odd-index) channel to the given frequency."""
        pitch_thz = self.index_pitch_ghz * 1e-3
        # Odd channels sit at anchor + (2m+1)*pitch; round m.
        m = round((frequency_thz - self.anchor_frequency_thz - pitch_thz) / (2.0 * pitch_thz))
        return 2 * int(m) + 1

    def detuning_ghz(self, frequency_thz: float, channel: int) -> float:
        return (frequency_thz - self.channel_frequency_thz(channel)) * 1e3


@dataclass(frozen=True)
class ChannelPair:
    """Symmetric signal/idler channel pair with per-channel calibration.

    ``a_*`` are detected linear-noise coefficients (counts/s/mW, referred to
    the detector), ``b_*`` detected quadratic singles coefficients
    (counts/s/mW^2), ``transmission_*`` the source-to-detector optical
    transmission of each arm (detector efficiency excluded).
    """

    signal_channel: int
    idler_channel: int
    comb_order: int
    a_signal: float = 0.0
    a_idler: float = 0.0
    b_signal: float = 0.0
    b_idler: float = 0.0
    transmission_signal: float = 1.0
    transmission_idler: float = 1.0

    def __post_init__(self) -> None:
        for name in ("a_signal", "a_idler", "b_signal", "b_idler"):
            if getattr(self, name) < 0:
                raise ConfigError(f"pair.{name} must be >= 0")
        for name in ("transmission_signal", "transmission_idler"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(f"pair.{name} must be in (0, 1], got {value}")

    def validate_energy_conservation(self, device: RingDevice, grid: DwdmGrid) -> None:
        """Signal and idler channel centers must straddle the pump symmetrically.

        Comb orders -k/+k give channels whose mean equals the pump exactly
        (up to the pump's own off-grid detuning, at most half an index
        pitch), so the slack is one linewidth or half a pitch, whichever is
        larger; a lopsided channel selection is off by a full pitch or more.
        """
        mean_thz = 0.5 * (
            grid.channel_frequency_thz(self.signal_channel)
            + grid.channel_frequency_thz(self.idler_channel)
        )
        slack_ghz = max(device.linewidth_ghz, grid.index_pitch_ghz / 2.0)
        offset_ghz = abs(mean_thz - device.pump_frequency_thz) * 1e3
        if offset_ghz > slack_ghz:
            raise ConfigError(
                "pair violates energy conservation: mean of signal/idler channel "
                f"centers is {offset_ghz:.2f} GHz from the pump (allowed {slack_ghz:.2f})"
            )


class ChannelMatch(NamedTuple):
    comb_order: int
    channel: int
    detuning_ghz: float


def comb_line_frequency(device: RingDevice, k: int, temperature_k: float | None = None) -> float:
    """Frequency (THz) of comb line ``k`` relative to the pump, with thermal shift.

    ``k`` may be negative (red side).  At the reference temperature the line
    sits exactly at ``pump + k * FSR``.
    """
    if temperature_k is None:
        temperature_k = device.reference_temperature_k
    shift_ghz = device.thermal_tuning_ghz_per_k * (temperature_k - device.reference_temperature_k)
    return device.pump_frequency_thz + (k * device.fsr_ghz + shift_ghz) * 1e-3


def match_comb_to_grid(
    device: RingDevice,
    grid: DwdmGrid,
    k_range,
    temperature_k: float | None = None,
) -> list[ChannelMatch]:
    """Map each comb order in ``k_range`` to its nearest grid channel.

    Returns (k, channel index, signed detuning in GHz) triples; detuning
    magnitude never exceeds half the channel spacing.
    """
    orders = list(k_range)
    if not orders:
        raise ConfigError("k_range must be nonempty")
    matches = []
    for k in orders:
        f = comb_line_frequency(device, k, temperature_k)
        ch = grid.nearest_channel(f)
        matches.append(ChannelMatch(k, ch, grid.detuning_ghz(f, ch)))
    return matches


def required_temperature_shift(device: RingDevice, target_detuning_ghz: float) -> float:
    """Temperature change (K) that shifts the comb by ``target_detuning_ghz``."""
    if device.thermal_tuning_ghz_per_k == 0:
        raise ConfigError("device has zero thermal tuning coefficient; cannot tune")
    return target_detuning_ghz / device.thermal_tuning_ghz_per_k


def channel_pair_for_order(
    device: RingDevice,
    grid: DwdmGrid,
    k: int,
    temperature_k: float | None = None,
    **calibration,
) -> ChannelPair:
    """Build the signal/idler pair for comb orders -k/+k (signal on the red side)."""
    if k == 0:
        raise ConfigError("comb order for a channel pair must be nonzero")
    k = abs(k)
    red = match_comb_to_grid(device, grid, [-k], temperature_k)[0]
    blue = match_comb_to_grid(device, grid, [+k], temperature_k)[0]
    pair = ChannelPair(
        signal_channel=red.channel, idler_channel=blue.channel, comb_order=k, **calibration
    )
    pair.validate_energy_conservation(device, grid)
    return pair
