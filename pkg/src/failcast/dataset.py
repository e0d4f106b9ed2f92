"""Labeled time-series instance generation from per-GPU raw streams.

An instance is a window of l consecutive healthy entries; its label says
whether the GPU fails within the next p entries. Two generation modes:

- segmented: non-overlapping windows that jump past each prediction window;
- sliding: overlapping windows advancing slide_step entries, so one failure
  event yields multiple positive instances.

Windows must be strictly 10-minute-consecutive (they never span machine
downtime gaps or collapsed failure spans); the label lookahead is counted in
entries of the collapsed series.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .telemetry import GpuStream, TICK_MINUTES

#: Dynamic columns carried through to feature encoding, in file order.
WINDOW_COLUMNS = ("timestamp", "temperature", "power", "sm_util", "mem_util",
                  "uptime")


class UnsortedSeriesError(ValueError):
    pass


class InsufficientLookaheadError(ValueError):
    pass


@dataclass(frozen=True)
class WindowingParams:
    l: int = 18
    p: int = 144
    slide_step: int = 10

    def __post_init__(self):
        if self.l < 1:
            raise ValueError(f"l must be >= 1, got {self.l}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not 1 <= self.slide_step < self.l:
            raise ValueError(f"slide_step must satisfy 1 <= slide_step < l, "
                             f"got {self.slide_step} (l={self.l})")


@dataclass(frozen=True)
class RawInstance:
    """One un-encoded instance: l stream rows plus the lookahead label."""

    serial: str
    rows: GpuStream  # exactly l consecutive healthy entries
    label: int
    end_timestamp: int

    @property
    def instance_id(self) -> str:
        return f"{self.serial}@{self.end_timestamp}"


def _check_sorted(timestamp: np.ndarray) -> None:
    if len(timestamp) > 1 and np.any(np.diff(timestamp) <= 0):
        raise UnsortedSeriesError("series timestamps must be strictly increasing")


def collapse_failures(stream: GpuStream) -> GpuStream:
    """Keep only the first entry of each maximal run of failure_status=1."""
    _check_sorted(stream.timestamp)
    status = stream.failure_status
    if len(status) == 0:
        return stream
    prev = np.concatenate([[0], status[:-1]])
    keep = ~((status == 1) & (prev == 1))
    idx = np.flatnonzero(keep)
    return GpuStream(
        serial=stream.serial,
        timestamp=stream.timestamp[idx],
        temperature=stream.temperature[idx],
        power=stream.power[idx],
        sm_util=stream.sm_util[idx],
        mem_util=stream.mem_util[idx],
        uptime=stream.uptime[idx],
        failure_status=status[idx],
    )


def label_window(status: np.ndarray, end_index: int, p: int) -> int:
    """1 iff any entry in (end_index, end_index + p] has failure_status=1."""
    if end_index + p > len(status) - 1:
        raise InsufficientLookaheadError(
            f"need {p} entries after index {end_index}, have {len(status) - 1 - end_index}")
    return int(np.any(status[end_index + 1:end_index + p + 1] == 1))


def window_positions(status: np.ndarray, timestamp: np.ndarray,
                     params: WindowingParams, mode: str = "slide",
                     ) -> list[tuple[int, int, int]]:
    """(start, end, label) triples over a collapsed single-GPU series.

    A placement ending at index t is clean when the window holds no failure
    entry and its rows are exactly 10 minutes apart. In slide mode the next
    candidate end is t + slide_step; in segmented mode the window jumps past
    the prediction window. Unclean placements advance one entry at a time
    until the first clean placement. Windows whose prediction horizon extends
    past the last entry are not emitted.
    """
    if mode not in ("slide", "segment"):
        raise ValueError(f"mode must be 'slide' or 'segment', got {mode!r}")
    _check_sorted(timestamp)
    l, p = params.l, params.p
    n = len(status)
    span = (l - 1) * TICK_MINUTES
    out: list[tuple[int, int, int]] = []
    t = l - 1
    while t <= n - 1:
        s = t - l + 1
        clean = (not np.any(status[s:t + 1] == 1)
                 and timestamp[t] - timestamp[s] == span)
        if not clean:
            t += 1
            continue
        if t + p > n - 1:
            break
        label = int(np.any(status[t + 1:t + p + 1] == 1))
        out.append((s, t, label))
        t = t + p + l if mode == "segment" else t + params.slide_step
    return out


def segment_instances(stream: GpuStream, params: WindowingParams) -> list[RawInstance]:
    """Non-overlapping instances over a collapsed single-GPU series."""
    return _materialize(stream, window_positions(
        stream.failure_status, stream.timestamp, params, mode="segment"), params)


def slide_instances(stream: GpuStream, params: WindowingParams) -> list[RawInstance]:
    """Overlapping instances advancing slide_step entries per emission."""
    return _materialize(stream, window_positions(
        stream.failure_status, stream.timestamp, params, mode="slide"), params)


def _materialize(stream: GpuStream, positions: list[tuple[int, int, int]],
                 params: WindowingParams) -> list[RawInstance]:
    out = []
    for s, t, label in positions:
        rows = GpuStream(
            serial=stream.serial,
            timestamp=stream.timestamp[s:t + 1],
            temperature=stream.temperature[s:t + 1],
            power=stream.power[s:t + 1],
            sm_util=stream.sm_util[s:t + 1],
            mem_util=stream.mem_util[s:t + 1],
            uptime=stream.uptime[s:t + 1],
            failure_status=stream.failure_status[s:t + 1],
        )
        out.append(RawInstance(serial=stream.serial, rows=rows, label=label,
                               end_timestamp=int(stream.timestamp[t])))
    return out


@dataclass
class InstanceSet:
    """Columnar dataset of raw instances; rows aligned across all arrays."""

    l: int
    serials: np.ndarray  # (N,) object
    end_timestamp: np.ndarray  # (N,) int64
    label: np.ndarray  # (N,) int8
    windows: dict[str, np.ndarray]  # column -> (N, l)

    def __len__(self) -> int:
        return len(self.label)

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.label == 1))

    @property
    def n_negative(self) -> int:
        return int(np.sum(self.label == 0))

    def instance_ids(self) -> list[str]:
        return [f"{s}@{t}" for s, t in zip(self.serials, self.end_timestamp)]

    def subset(self, idx: np.ndarray) -> "InstanceSet":
        return InstanceSet(
            l=self.l,
            serials=self.serials[idx],
            end_timestamp=self.end_timestamp[idx],
            label=self.label[idx],
            windows={k: v[idx] for k, v in self.windows.items()},
        )

    @staticmethod
    def empty(l: int) -> "InstanceSet":
        return InstanceSet(
            l=l,
            serials=np.empty(0, dtype=object),
            end_timestamp=np.empty(0, dtype=np.int64),
            label=np.empty(0, dtype=np.int8),
            windows={c: np.empty((0, l), dtype=np.int64) for c in WINDOW_COLUMNS},
        )


def build_dataset(streams: dict[str, GpuStream], params: WindowingParams,
                  time_range: tuple[int, int], mode: str = "slide") -> InstanceSet:
    """Per-GPU collapse -> window -> concatenate, restricted to a time range.

    ``time_range`` is a half-open [start, stop) interval in epoch minutes;
    only records inside it participate, so instance end_timestamps (and their
    label lookahead) stay inside the split. Output is canonicalized by
    (serial, end_timestamp), independent of processing order.
    """
    start, stop = time_range
    if stop <= start:
        raise ValueError(f"empty time range [{start}, {stop})")
    per_serial: list[tuple[str, GpuStream, list[tuple[int, int, int]]]] = []
    for serial in sorted(streams):
        sliced = streams[serial].slice_minutes(start, stop)
        if len(sliced) < params.l + params.p:
            continue
        collapsed = collapse_failures(sliced)
        positions = window_positions(collapsed.failure_status, collapsed.timestamp,
                                     params, mode=mode)
        if positions:
            per_serial.append((serial, collapsed, positions))
    total = sum(len(p) for _, _, p in per_serial)
    out = InstanceSet.empty(params.l)
    if total == 0:
        return out
    serials = np.empty(total, dtype=object)
    end_ts = np.empty(total, dtype=np.int64)
    label = np.empty(total, dtype=np.int8)
    windows = {c: np.empty((total, params.l), dtype=np.int64) for c in WINDOW_COLUMNS}
    row = 0
    for serial, collapsed, positions in per_serial:
        starts = np.array([s for s, _, _ in positions])
        gather = starts[:, None] + np.arange(params.l)[None, :]
        k = len(positions)
        serials[row:row + k] = serial
        end_ts[row:row + k] = collapsed.timestamp[[t for _, t, _ in positions]]
        label[row:row + k] = [y for _, _, y in positions]
        for column in WINDOW_COLUMNS:
            windows[column][row:row + k] = getattr(collapsed, column)[gather]
        row += k
    return InstanceSet(l=params.l, serials=serials, end_timestamp=end_ts,
                       label=label, windows=windows)


def write_instances(path: str | Path, instances: InstanceSet) -> None:
    """One instance per line: serial, end_timestamp, label, l x raw-field matrix."""
    with open(path, "w") as fh:
        header = {"format": "failcast-instances", "version": 1, "l": instances.l,
                  "columns": list(WINDOW_COLUMNS)}
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for i in range(len(instances)):
            obj = {
                "serial": str(instances.serials[i]),
                "end_timestamp": int(instances.end_timestamp[i]),
                "label": int(instances.label[i]),
                "rows": [[int(instances.windows[c][i, j]) for c in WINDOW_COLUMNS]
                         for j in range(instances.l)],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_instances(path: str | Path) -> InstanceSet:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "failcast-instances":
            raise ValueError("not an instance file")
        l = header["l"]
        columns = header["columns"]
        serials, end_ts, labels, rows_acc = [], [], [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            serials.append(obj["serial"])
            end_ts.append(obj["end_timestamp"])
            labels.append(obj["label"])
            rows_acc.append(obj["rows"])
    out = InstanceSet.empty(l)
    if not serials:
        return out
    matrix = np.asarray(rows_acc, dtype=np.int64)  # (N, l, n_columns)
    return InstanceSet(
        l=l,
        serials=np.asarray(serials, dtype=object),
        end_timestamp=np.asarray(end_ts, dtype=np.int64),
        label=np.asarray(labels, dtype=np.int8),
        windows={c: matrix[:, :, k] for k, c in enumerate(columns)},
    )
