import math

import pytest

from mrrpairs.device import (
    ChannelPair,
    DwdmGrid,
    RingDevice,
    channel_pair_for_order,
    comb_line_frequency,
    match_comb_to_grid,
    nm_to_thz,
    required_temperature_shift,
    thz_to_nm,
)
from mrrpairs.errors import ConfigError


@pytest.fixture()
def device():
    return RingDevice(
        q_factor=4.6e5,
        fsr_ghz=192.37,
        pump_frequency_thz=192.5,
        thermal_tuning_ghz_per_k=-2.75,
        reference_temperature_k=300.0,
    )


@pytest.fixture()
def grid():
    return DwdmGrid()


def test_wavelength_roundtrip():
    assert nm_to_thz(thz_to_nm(192.5)) == pytest.approx(192.5, rel=1e-12)


def test_validation_rejects_bad_device():
    with pytest.raises(ConfigError):
        RingDevice(q_factor=-1, fsr_ghz=192.37, pump_frequency_thz=192.5)
    with pytest.raises(ConfigError):
        RingDevice(q_factor=4.6e5, fsr_ghz=0, pump_frequency_thz=192.5)


def test_linewidth_and_coherence(device):
    # f/Q resonance width; photon bandwidth is half of it.
    assert device.linewidth_ghz == pytest.approx(192.5e3 / 4.6e5)
    assert device.photon_bandwidth_mhz == pytest.approx(210.0, rel=0.05)
    assert device.coherence_time_ps == pytest.approx(760.0, rel=0.05)
    # Consistency: tau_c = 1 / (2 pi bandwidth)
    assert device.coherence_time_ps == pytest.approx(
        1e6 / (2 * math.pi * device.photon_bandwidth_mhz)
    )


def test_channel25_wavelength(grid):
    # Standard 100 GHz-index grid puts channel 25 at 192.5 THz.  The quoted
    # pump wavelength of the reference experiment (1557.43 nm) sits ~8 GHz
    # off the channel center because the laser parks on the ring resonance,
    # so agreement is to 0.1 nm, not exact.
    assert grid.channel_frequency_thz(25) == pytest.approx(192.5)
    assert grid.channel_wavelength_nm(25) == pytest.approx(1557.36, abs=0.01)
    assert abs(grid.channel_wavelength_nm(25) - 1557.43) < 0.1


def test_comb_line_frequency_identity(device):
    assert comb_line_frequency(device, 0) == pytest.approx(192.5)
    # one kelvin of heating moves every line by the tuning coefficient
    assert comb_line_frequency(device, 0, 301.0) == pytest.approx(192.5 - 2.75e-3)
    assert comb_line_frequency(device, 1) == pytest.approx(192.5 + 192.37e-3)
    assert comb_line_frequency(device, -3) == pytest.approx(192.5 - 3 * 192.37e-3)


def test_match_comb_to_grid(device, grid):
    matches = {m.comb_order: m for m in match_comb_to_grid(device, grid, [-2, -1, 0, 1, 2])}
    assert matches[0].channel == 25
    assert matches[0].detuning_ghz == pytest.approx(0.0, abs=1e-9)
    assert matches[-1].channel == 23
    assert matches[1].channel == 27
    assert matches[-1].detuning_ghz == pytest.approx(+7.63, abs=1e-6)
    assert matches[1].detuning_ghz == pytest.approx(-7.63, abs=1e-6)
    assert matches[-2].channel == 21
    assert matches[2].channel == 29
    assert matches[2].detuning_ghz == pytest.approx(-15.26, abs=1e-6)


def test_match_detuning_antisymmetric(device, grid):
    for k in range(1, 12):
        plus, minus = match_comb_to_grid(device, grid, [k, -k])
        assert plus.detuning_ghz == pytest.approx(-minus.detuning_ghz, abs=1e-9)
        assert abs(plus.detuning_ghz) <= grid.channel_spacing_ghz / 2


def test_match_requires_orders(device, grid):
    with pytest.raises(ConfigError):
        match_comb_to_grid(device, grid, [])


def test_required_temperature_shift(device):
    assert required_temperature_shift(device, 0.0) == 0.0
    assert required_temperature_shift(device, -2.75) == 1.0
    assert required_temperature_shift(device, -7.63) == pytest.approx(2.7745, abs=1e-3)
    flat = RingDevice(q_factor=1e5, fsr_ghz=200.0, pump_frequency_thz=192.5,
                      thermal_tuning_ghz_per_k=0.0)
    with pytest.raises(ConfigError):
        required_temperature_shift(flat, 1.0)


def test_channel_pair_symmetric(device, grid):
    pair = channel_pair_for_order(device, grid, 1)
    assert (pair.signal_channel, pair.idler_channel) == (23, 27)
    mean = 0.5 * (
        grid.channel_frequency_thz(pair.signal_channel)
        + grid.channel_frequency_thz(pair.idler_channel)
    )
    assert mean == pytest.approx(device.pump_frequency_thz, abs=1e-12)


def test_channel_pair_energy_conservation_enforced(device, grid):
    lopsided = ChannelPair(signal_channel=23, idler_channel=29, comb_order=1)
    with pytest.raises(ConfigError):
        lopsided.validate_energy_conservation(device, grid)


def test_channel_pair_field_validation():
    with pytest.raises(ConfigError):
        ChannelPair(23, 27, 1, a_signal=-1.0)
    with pytest.raises(ConfigError):
        ChannelPair(23, 27, 1, transmission_signal=0.0)
    with pytest.raises(ConfigError):
        ChannelPair(23, 27, 1, transmission_idler=1.2)
