import numpy as np
import pytest

from failcast.dataset import (InsufficientLookaheadError, InstanceSet,
                              UnsortedSeriesError, WindowingParams,
                              build_dataset, collapse_failures, label_window,
                              read_instances, segment_instances,
                              slide_instances, window_positions,
                              write_instances)

from conftest import make_stream
from oracle import brute_force_collapse, brute_force_windows


def test_params_validation():
    with pytest.raises(ValueError):
        WindowingParams(l=0)
    with pytest.raises(ValueError):
        WindowingParams(p=0)
    with pytest.raises(ValueError):
        WindowingParams(l=5, slide_step=5)  # slide_step must be < l
    with pytest.raises(ValueError):
        WindowingParams(l=5, slide_step=0)
    WindowingParams(l=5, slide_step=4)


def test_collapse_keeps_first_failure_entry():
    stream = make_stream([0, 1, 1, 1, 0, 0, 1, 1, 0])
    collapsed = collapse_failures(stream)
    np.testing.assert_array_equal(collapsed.failure_status, [0, 1, 0, 0, 1, 0])
    np.testing.assert_array_equal(collapsed.timestamp, [0, 10, 40, 50, 60, 80])


def test_collapse_matches_oracle_randomized():
    rng = np.random.default_rng(42)
    for _ in range(200):
        statuses = rng.integers(0, 2, size=rng.integers(1, 60)).tolist()
        kept = brute_force_collapse(statuses)
        collapsed = collapse_failures(make_stream(statuses))
        np.testing.assert_array_equal(collapsed.timestamp, 10 * np.asarray(kept))


def test_collapse_requires_sorted_series():
    stream = make_stream([0, 0, 0])
    stream.timestamp = stream.timestamp[::-1].copy()
    with pytest.raises(UnsortedSeriesError):
        collapse_failures(stream)


def test_label_window():
    status = np.array([0, 0, 0, 1, 0, 0])
    assert label_window(status, end_index=1, p=2) == 1  # failure at index 3
    assert label_window(status, end_index=0, p=2) == 0
    assert label_window(status, end_index=3, p=2) == 0
    with pytest.raises(InsufficientLookaheadError):
        label_window(status, end_index=4, p=2)


def test_spec_sliding_example():
    """statuses length 8 with a failure at index 6, l=2, p=2, slide_step=1
    must yield window ends 1..5 with labels [0, 0, 0, 1, 1]."""
    statuses = np.array([0, 0, 0, 0, 0, 0, 1, 0])
    ts = 10 * np.arange(8)
    params = WindowingParams(l=2, p=2, slide_step=1)
    positions = window_positions(statuses, ts, params, mode="slide")
    assert [(s, t) for s, t, _ in positions] == [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]
    assert [label for _, _, label in positions] == [0, 0, 0, 1, 1]


def test_segment_jumps_past_prediction_window():
    statuses = np.zeros(60, dtype=np.int8)
    params = WindowingParams(l=3, p=5, slide_step=2)
    positions = window_positions(statuses, 10 * np.arange(60), params, mode="segment")
    ends = [t for _, t, _ in positions]
    assert ends[0] == 2
    assert all(b - a == params.p + params.l for a, b in zip(ends, ends[1:]))


def test_gap_blocks_window():
    # Drop one entry: windows spanning the gap are not 10-minute contiguous.
    stream = make_stream([0] * 30, drop=(10,))
    params = WindowingParams(l=4, p=3, slide_step=2)
    instances = slide_instances(collapse_failures(stream), params)
    for instance in instances:
        assert np.all(np.diff(instance.rows.timestamp) == 10)


def test_windows_match_oracle_randomized():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(5, 120))
        statuses = (rng.random(n) < 0.1).astype(np.int8)
        drop = set(rng.choice(n, size=int(rng.integers(0, n // 10 + 1)),
                              replace=False).tolist())
        stream = make_stream(statuses, drop=drop)
        collapsed = collapse_failures(stream)
        l = int(rng.integers(2, 8))
        p = int(rng.integers(1, 15))
        step = int(rng.integers(1, l))
        params = WindowingParams(l=l, p=p, slide_step=step)
        for mode in ("slide", "segment"):
            expected = brute_force_windows(
                collapsed.failure_status.tolist(), collapsed.timestamp.tolist(),
                l, p, step, mode)
            actual = window_positions(collapsed.failure_status,
                                      collapsed.timestamp, params, mode=mode)
            assert actual == expected


def test_positive_augmentation_count():
    """An isolated failure with room before it yields floor((p-1)/step)+1
    positives when window placements align with the failure."""
    params = WindowingParams()  # l=18, p=144, slide_step=10
    n = 600
    statuses = np.zeros(n, dtype=np.int8)
    fail_at = 400
    statuses[fail_at] = 1
    instances = slide_instances(make_stream(statuses), params)
    positives = [i for i in instances if i.label == 1]
    assert len(positives) == (params.p - 1) // params.slide_step + 1 == 15


def test_instances_never_contain_failure_entries(small_fleet):
    _, fleet = small_fleet
    params = WindowingParams(l=6, p=20, slide_step=3)
    for stream in list(fleet.streams.values())[:6]:
        for instance in slide_instances(collapse_failures(stream), params):
            assert np.all(instance.rows.failure_status == 0)
            assert len(instance.rows) == params.l


def test_build_dataset_time_range(small_fleet):
    _, fleet = small_fleet
    params = WindowingParams(l=6, p=20, slide_step=3)
    start = int(min(s.timestamp[0] for s in fleet.streams.values()))
    stop = start + 3 * 1440
    data = build_dataset(fleet.streams, params, (start, stop))
    assert len(data) > 0
    assert np.all(data.end_timestamp < stop)
    assert np.all(data.end_timestamp >= start)
    ids = data.instance_ids()
    assert len(set(ids)) == len(ids)
    assert ids == sorted(ids)  # canonical (serial, end_timestamp) order
    with pytest.raises(ValueError):
        build_dataset(fleet.streams, params, (stop, start))


def test_build_dataset_equals_per_stream_windowing(small_fleet):
    _, fleet = small_fleet
    params = WindowingParams(l=6, p=20, slide_step=3)
    start = int(min(s.timestamp[0] for s in fleet.streams.values()))
    stop = start + 4 * 1440
    data = build_dataset(fleet.streams, params, (start, stop))
    expected = []
    for serial in sorted(fleet.streams):
        sliced = fleet.streams[serial].slice_minutes(start, stop)
        if len(sliced) < params.l + params.p:
            continue
        expected.extend(slide_instances(collapse_failures(sliced), params))
    assert len(data) == len(expected)
    for i, instance in enumerate(expected):
        assert data.serials[i] == instance.serial
        assert data.end_timestamp[i] == instance.end_timestamp
        assert data.label[i] == instance.label
        np.testing.assert_array_equal(data.windows["power"][i],
                                      instance.rows.power)


def test_instance_file_roundtrip(tmp_path, small_fleet):
    _, fleet = small_fleet
    params = WindowingParams(l=6, p=20, slide_step=3)
    start = int(min(s.timestamp[0] for s in fleet.streams.values()))
    data = build_dataset(fleet.streams, params, (start, start + 2 * 1440))
    path = tmp_path / "instances.jsonl"
    write_instances(path, data)
    loaded = read_instances(path)
    assert len(loaded) == len(data)
    np.testing.assert_array_equal(loaded.label, data.label)
    np.testing.assert_array_equal(loaded.end_timestamp, data.end_timestamp)
    for column in data.windows:
        np.testing.assert_array_equal(loaded.windows[column], data.windows[column])


def test_empty_instance_set():
    empty = InstanceSet.empty(l=5)
    assert len(empty) == 0 and empty.n_positive == 0 and empty.n_negative == 0
