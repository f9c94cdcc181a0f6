"""Stochastic simulator and analysis toolkit for a microring photon-pair source."""

from .analysis import (
    AnalysisConfig,
    PowerSweep,
    analyze_cw_run,
    analyze_purity,
    arm_transmission,
    brightness,
    characterize_sweep,
    pair_generation_rate,
    predict_car,
    window_capture,
)
from .config import ExperimentConfig, load_baseline, load_config, parse_config
from .correlate import (
    CoincidenceSummary,
    Histogram,
    autocorrelate_split,
    coincidence_summary,
    cross_correlate,
    timebin_peaks,
)
from .device import (
    ChannelPair,
    DwdmGrid,
    RingDevice,
    channel_pair_for_order,
    comb_line_frequency,
    match_comb_to_grid,
    required_temperature_shift,
)
from .emitter import (
    DetectorConfig,
    SourceConfig,
    TagStream,
    TimeBinConfig,
    saturated_rate,
    simulate_cw,
    simulate_timebin,
)
from .errors import (
    ConfigError,
    FitError,
    MrrPairsError,
    NumericError,
    SizeError,
    StatisticsError,
    TagIoError,
)
from .fitting import FitResult, fit_g2, fit_power_law, fit_visibility

__version__ = "0.1.0"
