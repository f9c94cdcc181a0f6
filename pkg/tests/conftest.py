import numpy as np
import pytest

from mrrpairs import load_baseline
from mrrpairs.device import ChannelPair
from mrrpairs.emitter import DetectorConfig, SourceConfig, simulate_cw


@pytest.fixture(scope="session")
def baseline():
    return load_baseline()


@pytest.fixture(scope="session", autouse=True)
def warm_numba():
    # First simulate_cw call compiles the numba kernels; keep that cost out
    # of individual test timings.
    src = SourceConfig(pump_power_mw=0.1, pair_rate_coefficient=1e3, duration_s=0.01, rng_seed=1)
    det = DetectorConfig(efficiency=1.0, dark_rate=100.0, dead_time_ns=10.0, jitter_sigma_ps=5.0)
    simulate_cw(src, det, det, ChannelPair(23, 27, 1))


@pytest.fixture()
def rng():
    return np.random.default_rng(123456)
