"""Experiment configuration: TOML/JSON loading, validation, serialization.

Unknown keys are rejected (no silently ignored typos) and every module-level
invariant is enforced at load time with the offending field named.  The
loaded configuration carries a content hash that all outputs embed for
provenance.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .analysis import AnalysisConfig
from .device import ChannelPair, DwdmGrid, RingDevice
from .emitter import DetectorConfig, SourceConfig, TimeBinConfig
from .errors import ConfigError

_SCHEMA = {
    "device": {
        "q_factor",
        "fsr_ghz",
        "pump_frequency_thz",
        "thermal_tuning_ghz_per_k",
        "reference_temperature_k",
    },
    "grid": {"anchor_frequency_thz", "channel_spacing_ghz", "passband_ghz"},
    "pair": {
        "signal_channel",
        "idler_channel",
        "comb_order",
        "a_signal",
        "a_idler",
        "b_signal",
        "b_idler",
        "transmission_signal",
        "transmission_idler",
    },
    "source": {
        "pump_power_mw",
        "pair_rate_coefficient",
        "linear_noise_signal",
        "linear_noise_idler",
        "schmidt_modes",
        "mode_weights",
        "coherence_time_ps",
        "duration_s",
        "rng_seed",
    },
    "detector": {"signal", "idler"},
    "detector.signal": {"efficiency", "dark_rate", "dead_time_ns", "jitter_sigma_ps"},
    "detector.idler": {"efficiency", "dark_rate", "dead_time_ns", "jitter_sigma_ps"},
    "timebin": {
        "clock_rate_mhz",
        "bin_separation_ns",
        "pulse_width_ps",
        "interferometer_phase_rad",
        "pump_phase_rad",
        "interferometer_excess_loss_db",
        "splitter_loss_db",
        "intrinsic_visibility",
        "pair_rate_coefficient",
        "pump_power_mw",
        "linear_noise",
        "coherence_time_ps",
        "duration_s",
        "rng_seed",
    },
    "analysis": {
        "bin_width_ps",
        "delay_range_ps",
        "window_ps",
        "resolution_ps",
        "splitter_seed",
        "max_tags",
    },
    "purity": {
        "pair_rate",
        "coherence_time_ps",
        "duration_s",
        "bin_width_ps",
        "delay_range_ps",
        "rng_seed",
    },
    "report": {
        "sweep_powers_mw",
        "sweep_duration_s",
        "car_powers_mw",
        "car_durations_s",
        "timebin_phase_points",
        "timebin_phase_duration_s",
    },
    "output": {"directory"},
}


@dataclass
class ReportConfig:
    sweep_powers_mw: tuple = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)
    sweep_duration_s: float = 10.0
    car_powers_mw: tuple = (0.16, 0.5, 2.0, 5.0, 13.5)
    car_durations_s: tuple = (300.0, 100.0, 15.0, 4.0, 1.5)
    timebin_phase_points: int = 16
    timebin_phase_duration_s: float = 8.0

    def __post_init__(self) -> None:
        if len(self.car_powers_mw) != len(self.car_durations_s):
            raise ConfigError("report.car_powers_mw and car_durations_s differ in length")
        if self.timebin_phase_points < 5:
            raise ConfigError("report.timebin_phase_points must be >= 5")


@dataclass
class PurityConfig:
    pair_rate: float = 8.0e5  # generated pairs/s for the purity acquisition
    coherence_time_ps: float = 10_000.0
    duration_s: float = 8.5
    bin_width_ps: int = 1000
    delay_range_ps: int = 200_000
    rng_seed: int = 7070

    def __post_init__(self) -> None:
        if self.pair_rate <= 0 or self.duration_s <= 0:
            raise ConfigError("purity.pair_rate and duration_s must be > 0")


@dataclass
class ExperimentConfig:
    device: RingDevice
    grid: DwdmGrid
    pair: ChannelPair
    source: SourceConfig
    det_signal: DetectorConfig
    det_idler: DetectorConfig
    timebin: TimeBinConfig
    timebin_source: SourceConfig
    analysis: AnalysisConfig
    purity: PurityConfig
    report: ReportConfig
    output_directory: str = "out"
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.raw, indent=2, sort_keys=True) + "\n")


def _check_unknown_keys(data: dict, prefix: str = "") -> None:
    allowed_sections = {k for k in _SCHEMA if "." not in k}
    for section, content in data.items():
        if section not in allowed_sections:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"config section [{section}] must be a table")
        if section == "detector":
            for sub, subcontent in content.items():
                if sub not in _SCHEMA["detector"]:
                    raise ConfigError(f"unknown config section [detector.{sub}]")
                for key in subcontent:
                    if key not in _SCHEMA[f"detector.{sub}"]:
                        raise ConfigError(f"unknown config key detector.{sub}.{key}")
        else:
            for key in content:
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if name == "detector":
        return sec
    return dict(sec)


def parse_config(data: dict) -> ExperimentConfig:
    """Build a validated :class:`ExperimentConfig` from a plain mapping."""
    if not isinstance(data, dict) or not data:
        raise ConfigError("empty configuration")
    _check_unknown_keys(data)

    try:
        device = RingDevice(**_section(data, "device"))
    except TypeError as exc:
        raise ConfigError(f"bad [device] section: {exc}") from None
    grid = DwdmGrid(**_section(data, "grid"))

    det = data.get("detector", {})
    det_signal = DetectorConfig(**det.get("signal", {}))
    det_idler = DetectorConfig(**det.get("idler", {}))

    pair_raw = _section(data, "pair")
    src = _section(data, "source")
    src.setdefault("coherence_time_ps", device.coherence_time_ps)
    # The per-channel linear noise calibration drives the simulated noise.
    src.setdefault("linear_noise_signal", pair_raw.get("a_signal", 0.0))
    src.setdefault("linear_noise_idler", pair_raw.get("a_idler", 0.0))
    if "mode_weights" in src:
        src["mode_weights"] = tuple(src["mode_weights"])
    source = SourceConfig(**src)

    eta_s = pair_raw.get("transmission_signal", 1.0) * det_signal.efficiency
    eta_i = pair_raw.get("transmission_idler", 1.0) * det_idler.efficiency
    pair_raw.setdefault("b_signal", source.pair_rate_coefficient * eta_s)
    pair_raw.setdefault("b_idler", source.pair_rate_coefficient * eta_i)
    pair = ChannelPair(**pair_raw)
    pair.validate_energy_conservation(device, grid)
    for name, channel in (("signal", pair.signal_channel), ("idler", pair.idler_channel)):
        if channel % 2 == 0:
            raise ConfigError(
                f"pair.{name}_channel {channel} is not a usable (odd-index) grid channel"
            )

    tb_raw = _section(data, "timebin")
    tb_noise = tb_raw.pop("linear_noise", 0.0)
    tb_source = SourceConfig(
        pump_power_mw=tb_raw.pop("pump_power_mw", 10.0),
        pair_rate_coefficient=tb_raw.pop("pair_rate_coefficient", 5.0e3),
        linear_noise_signal=tb_noise,
        linear_noise_idler=tb_noise,
        coherence_time_ps=tb_raw.pop("coherence_time_ps", 180.0),
        duration_s=tb_raw.pop("duration_s", 8.0),
        rng_seed=tb_raw.pop("rng_seed", source.rng_seed + 1),
    )
    if "bin_separation_ns" not in tb_raw and "clock_rate_mhz" in tb_raw:
        tb_raw["bin_separation_ns"] = 1000.0 / tb_raw["clock_rate_mhz"]
    timebin = TimeBinConfig(**tb_raw)
    if not tb_source.coherence_time_ps < timebin.bin_separation_ps / 3.0:
        # Loadable, but the simulator will refuse; surface it early.
        import warnings

        warnings.warn(
            "timebin coherence time is not well below the bin separation "
            f"({tb_source.coherence_time_ps:.0f} ps vs dt/3 = "
            f"{timebin.bin_separation_ps / 3.0:.0f} ps)",
            stacklevel=2,
        )

    analysis = AnalysisConfig(**_section(data, "analysis"))
    purity = PurityConfig(**_section(data, "purity"))
    report_raw = _section(data, "report")
    for key in ("sweep_powers_mw", "car_powers_mw", "car_durations_s"):
        if key in report_raw:
            report_raw[key] = tuple(report_raw[key])
    report = ReportConfig(**report_raw)
    output = _section(data, "output").get("directory", "out")

    return ExperimentConfig(
        device=device,
        grid=grid,
        pair=pair,
        source=source,
        det_signal=det_signal,
        det_idler=det_idler,
        timebin=timebin,
        timebin_source=tb_source,
        analysis=analysis,
        purity=purity,
        report=report,
        output_directory=output,
        raw=json.loads(json.dumps(data)),
    )


def load_config(path) -> ExperimentConfig:
    """Load a TOML (or JSON) experiment configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if not text.strip():
        raise ConfigError(f"config file is empty: {path}")
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"JSON parse error in {path}: {exc}") from None
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"TOML parse error in {path}: {exc}") from None
    try:
        return parse_config(data)
    except TypeError as exc:
        raise ConfigError(f"bad config value in {path}: {exc}") from None


def baseline_config_path() -> Path:
    """Path of the bundled baseline configuration."""
    return Path(__file__).parent / "data" / "baseline.toml"


def load_baseline() -> ExperimentConfig:
    return load_config(baseline_config_path())
