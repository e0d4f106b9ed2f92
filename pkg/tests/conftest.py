import numpy as np
import pytest

from failcast.telemetry import (DriftSchedule, FleetConfig, GpuStream, Regime,
                                TICK_MINUTES, generate_fleet)


def make_stream(statuses, serial="GPU-TEST", start=0, drop=(), features=None):
    """Build a GpuStream from a failure-status list; timestamps are 10 minutes
    apart except that indices in `drop` are removed (creating gaps)."""
    statuses = np.asarray(statuses, dtype=np.int8)
    n = len(statuses)
    keep = np.array([i for i in range(n) if i not in set(drop)])
    ts = (start + TICK_MINUTES * np.arange(n, dtype=np.int64))[keep]
    feats = features or {}

    def column(name, default):
        values = np.asarray(feats.get(name, np.full(n, default)))
        return values[keep]

    return GpuStream(
        serial=serial,
        timestamp=ts,
        temperature=column("temperature", 45).astype(np.int16),
        power=column("power", 150).astype(np.int16),
        sm_util=column("sm_util", 40).astype(np.int16),
        mem_util=column("mem_util", 50).astype(np.int16),
        uptime=column("uptime", 1000).astype(np.int64),
        failure_status=statuses[keep],
    )


@pytest.fixture(scope="session")
def small_fleet():
    """24 GPUs, 10 days, elevated hazard so both classes are populated."""
    config = FleetConfig(
        n_gpus=24, horizon_days=10, seed=101,
        drift=DriftSchedule(regimes=((0, Regime(name="A", base_hazard_per_day=0.08)),)))
    return config, generate_fleet(config)
