import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrnvo.codebooks import CartesianGrid
from hrnvo.errors import DatasetNotFound, FormatError, InvalidArgument
from hrnvo.eventio import (
    EventArray,
    GroundTruth,
    ImuData,
    RawEvent,
    downsample_coords,
    euler_to_quat,
    interpolate_at,
    load_dataset,
    load_events,
    load_groundtruth,
    load_imu,
    parse_event_line,
    preprocess,
    quat_to_euler,
    quats_to_euler,
    write_events,
    write_groundtruth,
    write_imu,
)


def events(n, w=640, h=480, seed=0):
    r = np.random.default_rng(seed)
    return EventArray(np.sort(r.random(n)), r.integers(0, w, n), r.integers(0, h, n), r.integers(0, 2, n).astype(np.int8))


def test_parse_event_line():
    assert parse_event_line("1.5 10 20 1") == RawEvent(1.5, 10, 20, 1)
    for bad in ("1.5 10 20", "1.5 10 20 2", "a b c d", "1.5 10.5 20 1"):
        with pytest.raises(FormatError):
            parse_event_line(bad)


def test_load_events_skips_malformed(tmp_path):
    lines = [f"{i * 0.001:.3f} {i % 100} {i % 50} {i % 2}" for i in range(300)]
    lines[10] = "# a comment"
    lines[20] = "0.020 700 10 1"  # x out of range
    lines[30] = "garbage"
    p = tmp_path / "events.txt"
    p.write_text("\r\n".join(lines) + "\r\n")
    ev, skipped = load_events(p, sensor_dims=(640, 480))
    assert skipped == 2
    assert len(ev) == 297
    assert ev[0] == RawEvent(0.0, 0, 0, 0)


def test_load_events_too_many_malformed(tmp_path):
    p = tmp_path / "events.txt"
    p.write_text("\n".join(["0.1 1 1 1"] * 50 + ["bad"] * 2))
    with pytest.raises(FormatError):
        load_events(p)


def test_load_events_missing(tmp_path):
    with pytest.raises(DatasetNotFound):
        load_events(tmp_path / "nope.txt")
    with pytest.raises(DatasetNotFound):
        load_dataset(tmp_path)


def test_load_events_decreasing_time(tmp_path):
    p = tmp_path / "events.txt"
    p.write_text("0.2 1 1 1\n0.1 1 1 1\n")
    with pytest.raises(FormatError):
        load_events(p)


def test_optional_files(tmp_path):
    (tmp_path / "imu.txt").write_text("")
    imu, skipped = load_imu(tmp_path / "imu.txt")
    assert len(imu) == 0 and skipped == 0
    gt, _ = load_groundtruth(tmp_path / "groundtruth.txt")
    assert len(gt) == 0


def test_roundtrip_files(tmp_path):
    ev = events(500)
    imu = ImuData(np.arange(5) / 100, np.ones((5, 3)), np.arange(15).reshape(5, 3) * 0.01)
    q = np.array([euler_to_quat(r, 1.0, -2.0) for r in range(5)])
    gt = GroundTruth(np.arange(5) / 10, np.arange(15).reshape(5, 3) * 0.1, q)
    write_events(tmp_path / "events.txt", ev)
    write_imu(tmp_path / "imu.txt", imu)
    write_groundtruth(tmp_path / "groundtruth.txt", gt)
    ds = load_dataset(tmp_path, sensor_dims=(640, 480))
    assert ds.skipped == {"events": 0, "imu": 0, "groundtruth": 0}
    np.testing.assert_allclose(ds.events.t, ev.t, atol=1e-9)
    np.testing.assert_array_equal(ds.events.x, ev.x)
    np.testing.assert_array_equal(ds.events.p, ev.p)
    np.testing.assert_allclose(ds.imu.angular_velocity, imu.angular_velocity)
    np.testing.assert_allclose(ds.groundtruth.orientation, q, atol=1e-11)
    with pytest.raises(InvalidArgument):
        load_dataset(tmp_path, fmt="aedat")


def test_groundtruth_bad_quaternion_skipped(tmp_path):
    rows = ["0.0 0 0 0 0 0 0 1"] * 200 + ["0.5 0 0 0 0 0 0 2"]
    (tmp_path / "groundtruth.txt").write_text("\n".join(rows))
    gt, skipped = load_groundtruth(tmp_path / "groundtruth.txt")
    assert skipped == 1 and len(gt) == 200
    np.testing.assert_allclose(gt.orientation[0], [1, 0, 0, 0])


def test_downsample_examples():
    g = CartesianGrid(64, 48)
    x, y = downsample_coords([639, 5, 15, 25], [479, 5, 15, 25], (640, 480), g)
    # half-to-even: 0.5 -> 0, 1.5 -> 2, 2.5 -> 2; 63.9 -> 64 -> clamp 63
    np.testing.assert_array_equal(x, [63, 0, 2, 2])
    np.testing.assert_array_equal(y, [47, 0, 2, 2])
    x, _ = downsample_coords([239], [0], (240, 180), CartesianGrid(96, 72))
    assert x[0] == 95


def test_preprocess_packaging():
    g = CartesianGrid(64, 48)
    ev = events(10_500)
    frames = list(preprocess(ev, (640, 480), g, 2000))
    assert len(frames) == 5
    for i, f in enumerate(frames):
        assert f.bits.shape == (48, 64) and set(np.unique(f.bits)) <= {0, 1}
        assert f.t_mid == pytest.approx(0.5 * (ev.t[2000 * i] + ev.t[2000 * i + 1999]))
    assert np.all(np.diff([f.t_mid for f in frames]) > 0)
    with pytest.raises(InvalidArgument):
        list(preprocess(ev, (640, 480), g, 0))


def test_preprocess_threshold():
    g = CartesianGrid(4, 4)
    ev = EventArray(np.arange(6.0), np.array([0, 0, 0, 1, 1, 2]), np.zeros(6, int), np.ones(6, np.int8))
    f0 = next(preprocess(ev, (4, 4), g, 6, 0)).bits
    f1 = next(preprocess(ev, (4, 4), g, 6, 1)).bits
    f2 = next(preprocess(ev, (4, 4), g, 6, 2)).bits
    np.testing.assert_array_equal(f0[0], [1, 1, 1, 0])
    np.testing.assert_array_equal(f1[0], [1, 1, 0, 0])
    np.testing.assert_array_equal(f2[0], [1, 0, 0, 0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 3), st.integers(1, 3))
def test_preprocess_monotone_and_deterministic(seed, th, dth):
    g = CartesianGrid(16, 12)
    ev = events(700, 160, 120, seed)
    lo = [f.bits for f in preprocess(ev, (160, 120), g, 100, th)]
    hi = [f.bits for f in preprocess(ev, (160, 120), g, 100, th + dth)]
    again = [f.bits for f in preprocess(ev, (160, 120), g, 100, th)]
    assert len(lo) == 7
    for a, b, c in zip(lo, hi, again):
        assert np.all(b <= a)
        np.testing.assert_array_equal(a, c)


def test_euler_examples():
    assert np.allclose(quat_to_euler([1, 0, 0, 0]), (0, 0, 0))
    s = np.sqrt(0.5)
    roll, pan, tilt = quat_to_euler([s, 0, 0, s])  # 90 deg about z
    assert abs(roll - 90) < 1e-9 and abs(pan) < 1e-9 and abs(tilt) < 1e-9
    with pytest.raises(InvalidArgument):
        quat_to_euler([0, 0, 0, 0])
    # unnormalized input is renormalized
    assert np.allclose(quat_to_euler([2, 0, 0, 0]), (0, 0, 0))


@settings(max_examples=50, deadline=None)
@given(st.floats(-179, 179), st.floats(-80, 80), st.floats(-179, 179))
def test_euler_roundtrip(r, p, t):
    got = quat_to_euler(euler_to_quat(r, p, t))
    np.testing.assert_allclose(got, (r, p, t), atol=1e-9)


def test_quats_to_euler_unwraps_roll():
    qs = np.array([euler_to_quat(r, 0, 0) for r in np.arange(0, 720, 10)])
    np.testing.assert_allclose(quats_to_euler(qs)[:, 0], np.arange(0, 720, 10), atol=1e-9)


def test_interpolate_at():
    t = np.array([0.0, 1.0, 2.0])
    v = np.array([[0, 0, 0], [2, 4, 6], [4, 8, 12]], dtype=float)
    np.testing.assert_array_equal(interpolate_at(t, v, 1.0), v[1])
    np.testing.assert_allclose(interpolate_at(t, v, 0.5), [1, 2, 3])
    np.testing.assert_array_equal(interpolate_at(t, v, -3.0), v[0])
    assert interpolate_at(t, v[:, 0], 1.5) == 3.0
    with pytest.raises(InvalidArgument):
        interpolate_at([], [], 0.0)
