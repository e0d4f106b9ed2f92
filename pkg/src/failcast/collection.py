"""Simulated data-collection pipeline: policy-driven agents, a collector that
joins dynamic and static data by serial number, and an append-only raw store.

Agents, controller, and collector are in-process actors exchanging messages
through queues, not networked services. For fleet-scale work there is also a
vectorized join that skips the actor machinery but produces identical rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from datetime import date
from pathlib import Path
from queue import SimpleQueue

import numpy as np

from .telemetry import (GpuStream, StaticConfig, TelemetryRecord, TICK_MINUTES)

DYNAMIC_FIELDS = ("temperature", "power", "sm_util", "mem_util", "uptime",
                  "failure_status")
STATIC_FIELDS = ("datacenter", "gpu_type", "driver_version", "expiration_date",
                 "rack", "position", "ip")
#: Field order of one raw-store row.
GPU_RECORD_FIELDS = ("serial", "timestamp") + DYNAMIC_FIELDS + STATIC_FIELDS

RAW_FORMAT_VERSION = 1


class JoinError(ValueError):
    """Dynamic record whose serial has no static inventory row."""


class RawStoreError(ValueError):
    """Malformed raw-store file; carries the offending line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass(frozen=True)
class CollectingPolicy:
    """What the agents collect and how often."""

    attributes_to_collect: frozenset[str] = frozenset(DYNAMIC_FIELDS)
    period_minutes: int = TICK_MINUTES

    def __post_init__(self):
        unknown = set(self.attributes_to_collect) - set(DYNAMIC_FIELDS)
        if unknown:
            raise ValueError(f"unknown attributes in policy: {sorted(unknown)}")
        if not self.attributes_to_collect:
            raise ValueError("policy must collect at least one attribute")
        if self.period_minutes <= 0 or (24 * 60) % self.period_minutes != 0:
            raise ValueError(f"period must be positive and divide 24h, "
                             f"got {self.period_minutes}")


@dataclass(frozen=True)
class FailureReport:
    serial: str
    timestamp: int
    context: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GpuRecord:
    """A TelemetryRecord joined with its static configuration.

    ``None`` in a dynamic field marks an attribute absent from the active
    collecting policy.
    """

    serial: str
    timestamp: int
    temperature: int | None
    power: int | None
    sm_util: int | None
    mem_util: int | None
    uptime: int | None
    failure_status: int | None
    datacenter: str
    gpu_type: str
    driver_version: str
    expiration_date: date
    rack: str
    position: int
    ip: str


class Agent:
    """Collects telemetry for the GPUs of one machine (at most 8 cards).

    Emits one record per owned GPU per policy period and a FailureReport at
    each 0->1 failure-status transition.
    """

    def __init__(self, streams: list[GpuStream]):
        if len(streams) > 8:
            raise ValueError("an agent owns at most 8 GPUs (8-card machines)")
        self.streams = streams
        self.policy = CollectingPolicy()
        self._last_status = {s.serial: 0 for s in streams}

    def apply_policy(self, policy: CollectingPolicy) -> str:
        self.policy = policy
        return "ack"

    def tick(self, tick_index: int) -> tuple[list[TelemetryRecord], list[FailureReport]]:
        records: list[TelemetryRecord] = []
        reports: list[FailureReport] = []
        stride = self.policy.period_minutes // TICK_MINUTES
        for stream in self.streams:
            if tick_index >= len(stream):
                continue
            status = int(stream.failure_status[tick_index])
            if status == 1 and self._last_status[stream.serial] == 0:
                reports.append(FailureReport(
                    serial=stream.serial,
                    timestamp=int(stream.timestamp[tick_index]),
                    context={"detected_by": "agent"},
                ))
            self._last_status[stream.serial] = status
            if tick_index % stride == 0:
                full = stream.record(tick_index)
                masked = {f: (getattr(full, f) if f in self.policy.attributes_to_collect
                              else None)
                          for f in DYNAMIC_FIELDS}
                records.append(TelemetryRecord(serial=full.serial,
                                               timestamp=full.timestamp, **masked))
        return records, reports


class Controller:
    """Holds the active policy and broadcasts it to agents."""

    def __init__(self, agents: list[Agent]):
        self.agents = agents

    def broadcast_policy(self, policy: CollectingPolicy) -> dict[int, str]:
        return {i: agent.apply_policy(policy) for i, agent in enumerate(self.agents)}


def join_record(record: TelemetryRecord, static: StaticConfig) -> GpuRecord:
    if record.serial != static.serial:
        raise JoinError(f"serial mismatch: {record.serial} vs {static.serial}")
    return GpuRecord(
        serial=record.serial,
        timestamp=record.timestamp,
        temperature=record.temperature,
        power=record.power,
        sm_util=record.sm_util,
        mem_util=record.mem_util,
        uptime=record.uptime,
        failure_status=record.failure_status,
        datacenter=static.datacenter,
        gpu_type=static.gpu_type,
        driver_version=static.driver_version,
        expiration_date=static.expiration_date,
        rack=static.rack,
        position=static.position,
        ip=static.ip,
    )


def join_records(dynamic: list[TelemetryRecord],
                 inventory: list[StaticConfig]) -> list[GpuRecord]:
    """Join dynamic records with inventory by serial; preserves input order."""
    by_serial = {s.serial: s for s in inventory}
    out = []
    for record in dynamic:
        static = by_serial.get(record.serial)
        if static is None:
            raise JoinError(f"no inventory row for serial {record.serial!r}")
        out.append(join_record(record, static))
    return out


class Collector:
    """Receives agent emissions from a queue and accumulates joined records.

    Appends are keyed by (serial, timestamp) and deduplicated, so the final
    content is independent of agent interleaving.
    """

    def __init__(self, inventory: list[StaticConfig]):
        self._static = {s.serial: s for s in inventory}
        self._rows: dict[tuple[str, int], GpuRecord] = {}
        self.reports: list[FailureReport] = []
        self.queue: SimpleQueue = SimpleQueue()

    def drain(self) -> None:
        while not self.queue.empty():
            item = self.queue.get()
            if isinstance(item, FailureReport):
                self.reports.append(item)
            else:
                static = self._static.get(item.serial)
                if static is None:
                    raise JoinError(f"no inventory row for serial {item.serial!r}")
                self._rows[(item.serial, item.timestamp)] = join_record(item, static)

    def snapshot(self) -> list[GpuRecord]:
        self.drain()
        return [self._rows[k] for k in sorted(self._rows)]


def run_collection(streams: dict[str, GpuStream], inventory: list[StaticConfig],
                   policy: CollectingPolicy, n_ticks: int,
                   ) -> tuple[list[GpuRecord], list[FailureReport]]:
    """Drive the full actor pipeline for n_ticks and return the store content."""
    by_machine: dict[str, list[GpuStream]] = {}
    for static in inventory:
        by_machine.setdefault(static.rack, []).append(streams[static.serial])
    agents = [Agent(group) for _, group in sorted(by_machine.items())]
    Controller(agents).broadcast_policy(policy)
    collector = Collector(inventory)
    for tick in range(n_ticks):
        for agent in agents:
            records, reports = agent.tick(tick)
            for r in records:
                collector.queue.put(r)
            for r in reports:
                collector.queue.put(r)
        collector.drain()
    return collector.snapshot(), collector.reports


def _row_to_json(row: GpuRecord) -> str:
    obj = {}
    for name in GPU_RECORD_FIELDS:
        value = getattr(row, name)
        if isinstance(value, date):
            value = value.isoformat()
        obj[name] = value
    return json.dumps(obj, separators=(",", ":"))


def _row_from_json(obj: dict) -> GpuRecord:
    kwargs = dict(obj)
    kwargs["expiration_date"] = date.fromisoformat(kwargs["expiration_date"])
    return GpuRecord(**kwargs)


def write_raw(path: str | Path, rows: list[GpuRecord], append: bool = False) -> None:
    """Write (or append to) a raw-store file: schema header, one row per line."""
    path = Path(path)
    exists = append and path.exists()
    with open(path, "a" if exists else "w") as fh:
        if not exists:
            header = {"format": "failcast-raw", "version": RAW_FORMAT_VERSION,
                      "fields": list(GPU_RECORD_FIELDS)}
            fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for row in rows:
            fh.write(_row_to_json(row) + "\n")


def read_raw(path: str | Path) -> list[GpuRecord]:
    rows = []
    with open(path) as fh:
        for number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RawStoreError(f"invalid JSON: {exc.msg}", number) from exc
            if number == 1:
                if obj.get("format") != "failcast-raw":
                    raise RawStoreError("missing raw-store header", 1)
                if obj.get("fields") != list(GPU_RECORD_FIELDS):
                    raise RawStoreError("unexpected field list in header", 1)
                continue
            try:
                rows.append(_row_from_json(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise RawStoreError(f"bad record: {exc}", number) from exc
    return rows


def streams_from_records(rows: list[GpuRecord]) -> dict[str, GpuStream]:
    """Rebuild per-GPU columnar streams from joined rows (sorted by time)."""
    by_serial: dict[str, list[GpuRecord]] = {}
    for row in rows:
        by_serial.setdefault(row.serial, []).append(row)
    streams = {}
    for serial, group in by_serial.items():
        group.sort(key=lambda r: r.timestamp)
        streams[serial] = GpuStream(
            serial=serial,
            timestamp=np.array([r.timestamp for r in group], dtype=np.int64),
            temperature=np.array([r.temperature for r in group], dtype=np.int16),
            power=np.array([r.power for r in group], dtype=np.int16),
            sm_util=np.array([r.sm_util for r in group], dtype=np.int16),
            mem_util=np.array([r.mem_util for r in group], dtype=np.int16),
            uptime=np.array([r.uptime for r in group], dtype=np.int64),
            failure_status=np.array([r.failure_status for r in group], dtype=np.int8),
        )
    return streams


def static_by_serial(inventory: list[StaticConfig]) -> dict[str, StaticConfig]:
    out = {}
    for static in inventory:
        if static.serial in out:
            raise ValueError(f"duplicate serial in inventory: {static.serial}")
        out[static.serial] = static
    return out


def join_fleet(streams: dict[str, GpuStream], inventory: list[StaticConfig],
               ) -> list[GpuRecord]:
    """Vectorized equivalent of running the actor pipeline with the default
    policy: all attributes, every tick."""
    statics = static_by_serial(inventory)
    rows: list[GpuRecord] = []
    for serial in sorted(streams):
        stream = streams[serial]
        if serial not in statics:
            raise JoinError(f"no inventory row for serial {serial!r}")
        static = statics[serial]
        for i in range(len(stream)):
            rows.append(join_record(stream.record(i), static))
    return rows


def write_inventory(path: str | Path, inventory: list[StaticConfig]) -> None:
    with open(path, "w") as fh:
        for static in inventory:
            obj = {f.name: getattr(static, f.name) for f in fields(static)}
            obj["expiration_date"] = obj["expiration_date"].isoformat()
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_inventory(path: str | Path) -> list[StaticConfig]:
    inventory = []
    with open(path) as fh:
        for number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                obj["expiration_date"] = date.fromisoformat(obj["expiration_date"])
                inventory.append(StaticConfig(**obj))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise RawStoreError(f"bad inventory row: {exc}", number) from exc
    return inventory
