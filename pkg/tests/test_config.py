import json

import pytest

from mrrpairs.config import baseline_config_path, load_baseline, load_config, parse_config
from mrrpairs.errors import ConfigError


def test_baseline_loads(baseline):
    assert baseline.device.q_factor == 4.6e5
    assert baseline.device.fsr_ghz == 192.37
    assert baseline.pair.signal_channel == 23
    assert baseline.pair.idler_channel == 27
    assert baseline.det_signal.efficiency == 0.8
    assert baseline.det_signal.dark_rate == 40.0
    assert baseline.source.pair_rate_coefficient == 5.2e5
    # coherence time defaults to the device-derived value
    assert baseline.source.coherence_time_ps == pytest.approx(
        baseline.device.coherence_time_ps
    )
    # derived quadratic singles coefficients
    assert baseline.pair.b_signal == pytest.approx(5.2e5 * 10 ** -1.305, rel=1e-3)
    assert baseline.pair.b_idler == pytest.approx(5.2e5 * 10 ** -1.384, rel=1e-3)
    assert baseline.source.schmidt_number == pytest.approx(1.16, abs=1e-3)


def test_config_hash_stable(baseline):
    again = load_baseline()
    assert baseline.config_hash == again.config_hash
    assert len(baseline.config_hash) == 16


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.toml"
    path.write_text("")
    with pytest.raises(ConfigError, match="empty"):
        load_config(path)


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.toml")


def test_parse_error_reported(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[device\nq_factor = 1")
    with pytest.raises(ConfigError, match="parse error"):
        load_config(path)


def test_unknown_key_rejected(tmp_path):
    text = baseline_config_path().read_text() + "\n[device2]\nq = 1\n"
    path = tmp_path / "unknown.toml"
    path.write_text(text)
    with pytest.raises(ConfigError, match="unknown config section"):
        load_config(path)
    path.write_text(baseline_config_path().read_text().replace("q_factor", "q_facter"))
    with pytest.raises(ConfigError, match="q_facter"):
        load_config(path)


def test_invariant_violation_names_field(tmp_path):
    text = baseline_config_path().read_text().replace("efficiency = 0.8", "efficiency = 1.3", 1)
    path = tmp_path / "bad.toml"
    path.write_text(text)
    with pytest.raises(ConfigError, match="efficiency"):
        load_config(path)


def test_even_channel_rejected(tmp_path):
    text = baseline_config_path().read_text().replace("signal_channel = 23", "signal_channel = 24")
    path = tmp_path / "even.toml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_json_config_accepted(tmp_path, baseline):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(baseline.raw))
    cfg = load_config(path)
    assert cfg.device.q_factor == baseline.device.q_factor
    assert cfg.config_hash == baseline.config_hash


def test_roundtrip_idempotent(tmp_path, baseline):
    path = tmp_path / "dump.json"
    baseline.save(path)
    back = load_config(path)
    assert back.to_dict() == baseline.to_dict()
    assert back.config_hash == baseline.config_hash


def test_parse_config_requires_content():
    with pytest.raises(ConfigError):
        parse_config({})
