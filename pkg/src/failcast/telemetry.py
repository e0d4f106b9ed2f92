"""Synthetic per-GPU telemetry streams with configurable, time-varying failure signatures.

Stands in for a production fleet: every GPU emits one record per 10-minute
tick. Failures arise from a per-tick hazard that depends on the active drift
regime and the GPU's recent feature trajectory; a deterministic pre-failure
signature is injected before each sampled failure so the positive class is
learnable. Ground-truth failure causes go to a side channel that is never
exposed to models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timezone

import numpy as np

from .util import derive_rng

TICK_MINUTES = 10
TICKS_PER_DAY = 24 * 60 // TICK_MINUTES  # 144

# 2021-03-01T00:00Z in epoch minutes; streams start at a UTC midnight so that
# day boundaries line up with calendar days.
DEFAULT_START_MINUTES = int(datetime(2021, 3, 1, tzinfo=timezone.utc).timestamp()) // 60

GPU_TYPES = ("V100", "T4", "P4")
DRIVER_VERSIONS = ("418", "450")

#: Dynamic features a regime signature or benign transient can touch.
SIGNATURE_FEATURES = ("temperature", "power", "sm_util", "mem_util")


@dataclass(frozen=True)
class StaticConfig:
    """Per-GPU inventory row, keyed by serial."""

    serial: str
    datacenter: str
    gpu_type: str
    driver_version: str
    expiration_date: date
    rack: str
    position: int
    ip: str


@dataclass(frozen=True)
class TelemetryRecord:
    """One 10-minute sample of one GPU's dynamic attributes."""

    serial: str
    timestamp: int  # epoch minutes, multiple of 10
    temperature: int  # °C, open interval (20, 90)
    power: int  # W, [0, 400)
    sm_util: int  # percent
    mem_util: int  # percent
    uptime: int  # seconds since machine boot
    failure_status: int  # 0 healthy, 1 failed

    FIELDS = ("serial", "timestamp", "temperature", "power", "sm_util",
              "mem_util", "uptime", "failure_status")


@dataclass(frozen=True)
class Regime:
    """Failure-generating pattern active over a span of days.

    ``signature`` maps dynamic feature names to the peak additive magnitude
    of the injected pre-failure ramp. ``hazard_weights`` couple the hazard to
    the rolling mean of (normalized) dynamic features, so the per-tick
    failure probability is logistic in the GPU's recent trajectory.
    """

    name: str
    base_hazard_per_day: float = 0.02
    signature: dict[str, float] = field(default_factory=lambda: {"temperature": 30.0})
    hazard_weights: dict[str, float] = field(default_factory=dict)
    signature_len_ticks: int = 160
    weak_fraction: float = 0.15  # failures with a faint, hard-to-spot signature
    benign_rate_per_day: float = 0.02  # single-feature transients per GPU-day

    def __post_init__(self):
        for name in list(self.signature) + list(self.hazard_weights):
            if name not in SIGNATURE_FEATURES:
                raise ValueError(f"unknown dynamic feature {name!r}")


@dataclass(frozen=True)
class DriftSchedule:
    """Ordered (start_day, Regime) pairs; exactly one regime active at a time."""

    regimes: tuple[tuple[float, Regime], ...]

    def __post_init__(self):
        if not self.regimes:
            raise ValueError("schedule must contain at least one regime")
        starts = [s for s, _ in self.regimes]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("regime start days must be strictly increasing")


def regime_at(day: float, schedule: DriftSchedule) -> Regime:
    """Regime with the largest start_day <= day; a boundary day belongs to the new regime."""
    active = None
    for start, regime in schedule.regimes:
        if start <= day:
            active = regime
        else:
            break
    if active is None:
        raise ValueError(f"day {day} precedes the first regime start "
                         f"({schedule.regimes[0][0]})")
    return active


@dataclass(frozen=True)
class RepairDelay:
    """Uniform repair delay, in hours, applied after each failure onset."""

    min_hours: float = 6.0
    max_hours: float = 48.0

    def __post_init__(self):
        if not 0 < self.min_hours <= self.max_hours:
            raise ValueError("repair delay bounds must satisfy 0 < min <= max")


@dataclass(frozen=True)
class FleetConfig:
    n_gpus: int
    horizon_days: int
    seed: int
    drift: DriftSchedule
    repair_delay: RepairDelay = RepairDelay()
    start_minutes: int = DEFAULT_START_MINUTES
    datacenters: tuple[str, ...] = ("AP1", "AP2", "AP3", "AP4")

    def __post_init__(self):
        if self.n_gpus < 1:
            raise ValueError(f"n_gpus must be >= 1, got {self.n_gpus}")
        if self.horizon_days < 1:
            raise ValueError(f"horizon_days must be >= 1, got {self.horizon_days}")


@dataclass(frozen=True)
class FailureEvent:
    """Ground-truth record of one sampled failure (side channel, not model input)."""

    serial: str
    onset_timestamp: int
    repair_timestamp: int
    regime: str
    magnitude: float


@dataclass
class GpuStream:
    """Columnar telemetry for a single GPU, time-sorted, one row per tick."""

    serial: str
    timestamp: np.ndarray  # int64, epoch minutes
    temperature: np.ndarray  # int16
    power: np.ndarray  # int16
    sm_util: np.ndarray  # int16
    mem_util: np.ndarray  # int16
    uptime: np.ndarray  # int64, seconds
    failure_status: np.ndarray  # int8

    def __len__(self) -> int:
        return len(self.timestamp)

    def record(self, i: int) -> TelemetryRecord:
        return TelemetryRecord(
            serial=self.serial,
            timestamp=int(self.timestamp[i]),
            temperature=int(self.temperature[i]),
            power=int(self.power[i]),
            sm_util=int(self.sm_util[i]),
            mem_util=int(self.mem_util[i]),
            uptime=int(self.uptime[i]),
            failure_status=int(self.failure_status[i]),
        )

    def records(self):
        for i in range(len(self)):
            yield self.record(i)

    def slice_minutes(self, start: int, stop: int) -> "GpuStream":
        """Rows with start <= timestamp < stop."""
        lo = int(np.searchsorted(self.timestamp, start, side="left"))
        hi = int(np.searchsorted(self.timestamp, stop, side="left"))
        return GpuStream(
            serial=self.serial,
            timestamp=self.timestamp[lo:hi],
            temperature=self.temperature[lo:hi],
            power=self.power[lo:hi],
            sm_util=self.sm_util[lo:hi],
            mem_util=self.mem_util[lo:hi],
            uptime=self.uptime[lo:hi],
            failure_status=self.failure_status[lo:hi],
        )


@dataclass
class FleetData:
    inventory: list[StaticConfig]
    streams: dict[str, GpuStream]
    events: list[FailureEvent]


# Per-entity generators are hash-derived from (seed, tag) so parallel and
# serial generation agree exactly.
_sub_seed = derive_rng


def build_inventory(config: FleetConfig) -> list[StaticConfig]:
    rng = _sub_seed(config.seed, "inventory")
    inventory = []
    n_machines = (config.n_gpus + 7) // 8
    horizon_end = config.start_minutes + config.horizon_days * TICKS_PER_DAY * TICK_MINUTES
    for machine in range(n_machines):
        dc = config.datacenters[int(rng.integers(len(config.datacenters)))]
        rack = f"{dc}-R{machine:04d}"
        ip = f"10.{machine // 250}.{machine % 250}.{int(rng.integers(2, 250))}"
        for position in range(8):
            idx = machine * 8 + position
            if idx >= config.n_gpus:
                break
            # Expiration 0.5 to 3 years past the stream end; encoded downstream
            # as days-until-expiration, so spread matters more than realism.
            expire_minutes = horizon_end + int(rng.integers(180, 1096)) * 1440
            expiration = datetime.fromtimestamp(expire_minutes * 60, tz=timezone.utc).date()
            inventory.append(StaticConfig(
                serial=f"GPU-{idx:06d}",
                datacenter=dc,
                gpu_type=GPU_TYPES[int(rng.integers(len(GPU_TYPES)))],
                driver_version=DRIVER_VERSIONS[int(rng.integers(len(DRIVER_VERSIONS)))],
                expiration_date=expiration,
                rack=rack,
                position=position,
                ip=ip,
            ))
    return inventory


def _smooth_noise(rng: np.random.Generator, n: int, sigma: float, span: int = 12) -> np.ndarray:
    """Low-frequency noise: white noise smoothed over `span` ticks."""
    white = rng.normal(0.0, sigma, n + span)
    kernel = np.ones(span) / span
    return np.convolve(white, kernel, mode="valid")[:n] * np.sqrt(span)


def _rolling_mean(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to `window` previous ticks (inclusive)."""
    c = np.concatenate([[0.0], np.cumsum(x, dtype=np.float64)])
    n = len(x)
    idx = np.arange(1, n + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


# Rough fleet-wide center/scale used to normalize features inside the hazard.
_FEATURE_NORM = {
    "temperature": (48.0, 15.0),
    "power": (170.0, 80.0),
    "sm_util": (45.0, 25.0),
    "mem_util": (50.0, 25.0),
}

_SIGNATURE_SHAPE_POWER = 1.5  # ramp profile (tau/len)**power


def _regime_segments(config: FleetConfig) -> list[tuple[int, int, Regime]]:
    """(start_tick, end_tick, regime) covering the horizon."""
    n_ticks = config.horizon_days * TICKS_PER_DAY
    starts = [s for s, _ in config.drift.regimes]
    if starts[0] > 0:
        raise ValueError("drift schedule must cover day 0")
    bounds = [int(round(s * TICKS_PER_DAY)) for s in starts] + [n_ticks]
    out = []
    for (tick0, tick1), (_, regime) in zip(zip(bounds, bounds[1:]), config.drift.regimes):
        if tick0 < n_ticks and tick1 > tick0:
            out.append((tick0, min(tick1, n_ticks), regime))
    return out


def _generate_gpu(static: StaticConfig, config: FleetConfig,
                  ) -> tuple[GpuStream, list[FailureEvent]]:
    rng = _sub_seed(config.seed, f"gpu:{static.serial}")
    n = config.horizon_days * TICKS_PER_DAY
    ts = config.start_minutes + TICK_MINUTES * np.arange(n, dtype=np.int64)
    segments = _regime_segments(config)

    # Healthy baseline: diurnal load with per-GPU phase, correlated features.
    phase = rng.uniform(0.0, 2 * np.pi)
    level = rng.uniform(30.0, 50.0)
    tod = np.arange(n) * (2 * np.pi / TICKS_PER_DAY)
    load = level + 20.0 * np.sin(tod + phase) + _smooth_noise(rng, n, 5.0)
    sm = load + rng.normal(0.0, 4.0, n)
    mem = 12.0 + 0.8 * load + rng.normal(0.0, 5.0, n)
    temp = 29.0 + 0.40 * load + _smooth_noise(rng, n, 2.0) + rng.normal(0.0, 1.5, n)
    power = 50.0 + 2.6 * load + rng.normal(0.0, 12.0, n)

    feats = {"temperature": temp, "power": power, "sm_util": sm, "mem_util": mem}

    # Benign transients: occasional single-feature elevation with no failure,
    # so no one feature is a perfect failure indicator.
    for tick0, tick1, regime in segments:
        span_days = (tick1 - tick0) / TICKS_PER_DAY
        for _ in range(rng.poisson(regime.benign_rate_per_day * span_days)):
            feat = SIGNATURE_FEATURES[int(rng.integers(len(SIGNATURE_FEATURES)))]
            start = int(rng.integers(tick0, tick1))
            length = int(rng.integers(40, 160))
            stop = min(start + length, n)
            magnitude = rng.uniform(0.6, 1.1) * _default_magnitude(feat)
            profile = (np.arange(stop - start) / max(length, 1)) ** _SIGNATURE_SHAPE_POWER
            feats[feat][start:stop] += magnitude * profile

    # Per-tick hazard: logistic in the base rate and the rolling trajectory.
    hazard = np.empty(n)
    for tick0, tick1, regime in segments:
        base = regime.base_hazard_per_day / TICKS_PER_DAY
        z = np.full(tick1 - tick0, np.log(base / (1.0 - base)))
        for feat, w in regime.hazard_weights.items():
            center, scale = _FEATURE_NORM[feat]
            rolled = _rolling_mean(feats[feat], 18)[tick0:tick1]
            z += w * (rolled - center) / scale
        hazard[tick0:tick1] = 1.0 / (1.0 + np.exp(-z))

    u = rng.random(n)
    candidates = np.flatnonzero(u < hazard)

    # Resolve candidate onsets sequentially: a failure blocks new onsets until
    # the repair completes and a full clean signature window has elapsed.
    events: list[FailureEvent] = []
    status = np.zeros(n, dtype=np.int8)
    resets = [0]  # machine boots (tick indices); uptime restarts at each
    delay_lo = int(round(config.repair_delay.min_hours * 60 / TICK_MINUTES))
    delay_hi = int(round(config.repair_delay.max_hours * 60 / TICK_MINUTES))
    blocked_until = 0
    for onset in candidates:
        onset = int(onset)
        regime = None
        for tick0, tick1, reg in segments:
            if tick0 <= onset < tick1:
                regime = reg
                break
        sig_len = regime.signature_len_ticks
        if onset < blocked_until + sig_len:
            continue
        repair = onset + int(rng.integers(delay_lo, delay_hi + 1))
        magnitude = rng.uniform(0.8, 1.2)
        if rng.random() < regime.weak_fraction:
            magnitude = rng.uniform(0.05, 0.25)
        # Inject the pre-failure signature over the preceding window.
        lo = max(0, onset - sig_len)
        profile = ((np.arange(lo, onset) - (onset - sig_len)) / sig_len)
        profile = np.clip(profile, 0.0, None) ** _SIGNATURE_SHAPE_POWER
        for feat, peak in regime.signature.items():
            feats[feat][lo:onset] += magnitude * peak * profile
        # Failed span: card idles until repair.
        hi = min(repair, n)
        status[onset:hi] = 1
        span = hi - onset
        feats["sm_util"][onset:hi] = rng.uniform(0.0, 3.0, span)
        feats["mem_util"][onset:hi] = rng.uniform(0.0, 2.0, span)
        feats["power"][onset:hi] = rng.uniform(25.0, 40.0, span)
        feats["temperature"][onset:hi] = rng.uniform(30.0, 34.0, span)
        if hi < n:
            resets.append(hi)
        events.append(FailureEvent(
            serial=static.serial,
            onset_timestamp=int(ts[onset]),
            repair_timestamp=int(config.start_minutes + TICK_MINUTES * repair),
            regime=regime.name,
            magnitude=float(magnitude),
        ))
        blocked_until = hi

    # Uptime: seconds since the last machine boot; GPU was already up at start.
    uptime = np.zeros(n, dtype=np.int64)
    initial = int(rng.integers(1, 45)) * 86400
    reset_arr = np.asarray(resets)
    last_reset = reset_arr[np.searchsorted(reset_arr, np.arange(n), side="right") - 1]
    uptime = (np.arange(n) - last_reset) * (TICK_MINUTES * 60)
    uptime[last_reset == 0] += initial

    return GpuStream(
        serial=static.serial,
        timestamp=ts,
        temperature=np.clip(np.rint(feats["temperature"]), 21, 89).astype(np.int16),
        power=np.clip(np.rint(feats["power"]), 0, 399).astype(np.int16),
        sm_util=np.clip(np.rint(feats["sm_util"]), 0, 100).astype(np.int16),
        mem_util=np.clip(np.rint(feats["mem_util"]), 0, 100).astype(np.int16),
        uptime=uptime,
        failure_status=status,
    ), events


def _default_magnitude(feat: str) -> float:
    return {"temperature": 28.0, "power": 150.0, "sm_util": 45.0, "mem_util": 45.0}[feat]


def generate_fleet(config: FleetConfig) -> FleetData:
    """Generate the whole fleet. Deterministic for a fixed config.

    Per-GPU sub-seeds are derived from (seed, serial), so the per-GPU streams
    are independent of generation order.
    """
    inventory = build_inventory(config)
    streams: dict[str, GpuStream] = {}
    events: list[FailureEvent] = []
    for static in inventory:
        stream, gpu_events = _generate_gpu(static, config)
        streams[static.serial] = stream
        events.extend(gpu_events)
    events.sort(key=lambda e: (e.onset_timestamp, e.serial))
    return FleetData(inventory=inventory, streams=streams, events=events)
