import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrnvo import synth
from hrnvo.codebooks import CartesianGrid
from hrnvo.errors import DegenerateInput, InvalidArgument
from hrnvo.eventio import BinaryFrame, ImuData
from hrnvo.pipeline import (
    RunConfig,
    dead_reckon,
    gyro_rates,
    make_codebooks,
    relative_truth,
    run_events,
    track,
)
from hrnvo.resonator import ResonatorConfig


@pytest.mark.parametrize("kw", [dict(grid_width=1), dict(package_size=0), dict(codebook_kind="sparse"),
                                dict(codebook_n=-1), dict(angle_bins=1), dict(sensor_width=-2)])
def test_run_config_validation(kw):
    with pytest.raises(InvalidArgument):
        RunConfig(**kw).validate()


def test_run_config_grids():
    cfg = RunConfig()
    assert cfg.grid == CartesianGrid(64, 48)
    assert cfg.polar.max_radius == 24 and cfg.polar.angle_bins == 360 and cfg.polar.radius_bins == 32
    assert RunConfig(max_radius=40, radius_bins=48).polar.max_radius == 40
    flat = RunConfig().flat()
    assert flat["run"]["package_size"] == 2000 and flat["resonator"]["gamma"] == 0.2
    with pytest.raises(InvalidArgument):
        make_codebooks(RunConfig(codebook_n=100))


def test_gyro_rates_mapping():
    t = np.linspace(0, 1, 101)
    w = np.tile(np.radians([2.0, 3.0, 10.0]), (101, 1))  # gx tilt, gy pan, gz roll
    imu = ImuData(t, np.zeros((101, 3)), w)
    cfg = ResonatorConfig(pan_scale=0.5, tilt_scale=-2.0, roll_scale=1.0)
    np.testing.assert_allclose(gyro_rates(imu, 0.2, 0.4, cfg), [10.0, 1.5, -4.0])
    np.testing.assert_allclose(gyro_rates(imu, 0.2051, 0.2059, cfg), [10.0, 1.5, -4.0])  # no sample inside
    assert gyro_rates(None, 0, 1, cfg) is None


def test_dead_reckon_constant_rates():
    t = np.linspace(0, 2, 201)
    imu = ImuData(t, np.zeros((201, 3)), np.tile(np.radians([1.0, 2.0, 30.0]), (201, 1)))
    cfg = ResonatorConfig(pan_scale=2.0, tilt_scale=3.0)
    out = dead_reckon(imu, [0.0, 1.0, 2.0], cfg, start=(1.0, 0.0, 5.0))
    np.testing.assert_allclose(out, [[1, 0, 5], [5, 3, 35], [9, 6, 65]], atol=1e-9)
    with pytest.raises(InvalidArgument):
        dead_reckon(ImuData(t[:1], np.zeros((1, 3)), np.zeros((1, 3))), [0.0], cfg)


def test_relative_truth_reference_is_zero():
    t = np.linspace(0, 1, 11)
    poses = np.column_stack([t * 3, -t, 40 * t])
    np.testing.assert_allclose(relative_truth(t, poses, [0.5], 0.5), [[0, 0, 0]], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(-60, 60),
       st.floats(-20, 20), st.floats(-20, 20), st.floats(-60, 60))
def test_relative_truth_generates_view(x0, y0, r0, x1, y1, r1):
    # the view at pose 1 is rotate(translate(view at pose 0, (h, v)), r)
    pts = np.random.default_rng(0).uniform(0, 100, (20, 2))
    window, center = (128, 96), (50.0, 50.0)
    p0 = synth.camera_points(pts, (x0, y0, r0), window, center)
    p1 = synth.camera_points(pts, (x1, y1, r1), window, center)
    h, v, r = relative_truth([0.0, 1.0], np.array([[x0, y0, r0], [x1, y1, r1]]), [1.0], 0.0)[0]
    c = np.array([64.0, 48.0])
    th = math.radians(r)
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    q = (p0 + [h, v] - c) @ rot.T + c
    np.testing.assert_allclose(q, p1, atol=1e-8)


def _frames(imgs, dt=0.01):
    g = CartesianGrid(64, 48)
    return [BinaryFrame(g, im, (i + 1) * dt) for i, im in enumerate(imgs)]


def test_track_rows_and_empty_frames():
    cfg = RunConfig()
    cb = make_codebooks(cfg)
    scene = synth.make_scene(synth.SceneSpec(canvas_width=64, canvas_height=48, shape_count=4, min_size=5, max_size=12))
    img = synth.render(scene, (0, 0, 0), (64, 48))
    empty = np.zeros_like(img)
    res = track(_frames([empty, img, img, empty, img]), cb, ResonatorConfig(init="identity"), save_profiles=True)
    assert res.values.shape == (5, 3) and len(res.t) == 5
    assert res.profiles["h"].shape == (5, 64) and res.profiles["r"].shape == (5, 360)
    np.testing.assert_allclose(res.values[1:], 0, atol=0.5)
    with pytest.raises(DegenerateInput):
        track(_frames([empty, empty]), cb, ResonatorConfig())


def _small_dataset():
    spec = synth.TrajectorySpec(duration=0.6, window_width=128, window_height=96, amp_roll=10, freq_roll=0.8)
    return synth.generate_dataset(synth.SceneSpec(seed=1), spec)


def test_run_events_row_count_and_determinism():
    ds = _small_dataset()
    cfg = RunConfig(package_size=700, grid_width=32, grid_height=24)
    a = run_events(ds.events, ds.window, cfg)
    b = run_events(ds.events, ds.window, cfg)
    assert len(a.t) == len(ds.events) // 700
    np.testing.assert_array_equal(a.values, b.values)
    assert np.all(np.diff(a.t) > 0)


def test_run_events_fusion_uses_imu():
    ds = _small_dataset()
    base = RunConfig(package_size=700, grid_width=32, grid_height=24)
    off = run_events(ds.events, ds.window, base, ds.imu)
    fused = RunConfig(package_size=700, grid_width=32, grid_height=24,
                      resonator=ResonatorConfig(fusion_enabled=True))
    on = run_events(ds.events, ds.window, fused, ds.imu)
    assert not np.array_equal(off.values, on.values)
    # fusion flag without IMU data falls back to vision only
    np.testing.assert_array_equal(run_events(ds.events, ds.window, fused, None).values, off.values)
