"""Synthetic planar scenes, event streams with exact ground truth, and an
exhaustive registration oracle.

A camera pose is ``(x, y, roll)``: the image-space translation (pixels) and
rotation about the image center (degrees) that carry the reference view onto
the current view, i.e. ``view = rotate(translate(reference))``. Rotation is
measured by ``atan2(dy, dx)`` on image coordinates (y pointing down).
"""
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal, sparse

from .errors import DegenerateInput, InvalidArgument
from .eventio import (
    EVENTS_FILE,
    GROUNDTRUTH_FILE,
    IMU_FILE,
    EventArray,
    GroundTruth,
    ImuData,
    euler_to_quat,
    write_events,
    write_groundtruth,
    write_imu,
)

MANIFEST_FILE = "manifest.json"

SHAPE_KINDS = ("rectangle", "triangle", "circle")


@dataclass
class SceneSpec:
    canvas_width: int = 160
    canvas_height: int = 120
    shape_count: int = 6
    kinds: tuple = SHAPE_KINDS
    seed: int = 0
    min_size: float = 8.0
    max_size: float = 22.0


@dataclass
class TrajectorySpec:
    duration: float = 10.0
    rate: float = 1000.0
    motion: str = "sinusoid"  # or "random-walk"
    amp_x: float = 6.0
    amp_y: float = 4.0
    amp_roll: float = 30.0
    freq_x: float = 0.23
    freq_y: float = 0.31
    freq_roll: float = 1.6
    const_roll_rate: float = 0.0
    seed: int = 0
    # camera window in sensor pixels and its zoom onto the canvas
    window_width: int = 128
    window_height: int = 96
    scale: float = 1.6
    # IMU model
    focal_px: float = 200.0  # pixels per radian of pan/tilt
    imu_rate: float = 1000.0
    gyro_noise_dps: float = 0.5
    gyro_bias_dps: float = 0.0

    def peak_roll_rate(self):
        return self.const_roll_rate + 2 * math.pi * self.freq_roll * self.amp_roll


@dataclass
class Shape:
    kind: str
    cx: float
    cy: float
    size: float
    angle: float

    def outline(self, spacing=0.25):
        """Dense (x, y) points along the outline in canvas coordinates."""
        if self.kind == "circle":
            n = max(16, int(2 * math.pi * self.size / spacing))
            t = np.linspace(0, 2 * np.pi, n, endpoint=False)
            return np.stack([self.cx + self.size * np.cos(t), self.cy + self.size * np.sin(t)], 1)
        if self.kind == "rectangle":
            s = self.size
            corners = np.array([[-s, -0.6 * s], [s, -0.6 * s], [s, 0.6 * s], [-s, 0.6 * s]])
        elif self.kind == "triangle":
            t = np.array([90.0, 210.0, 330.0]) * math.pi / 180
            corners = self.size * np.stack([np.cos(t), np.sin(t)], 1)
        else:
            raise InvalidArgument(f"unknown shape kind {self.kind!r}")
        c, s_ = math.cos(self.angle), math.sin(self.angle)
        corners = corners @ np.array([[c, s_], [-s_, c]]) + [self.cx, self.cy]
        pts = []
        for a, b in zip(corners, np.roll(corners, -1, axis=0)):
            n = max(2, int(np.linalg.norm(b - a) / spacing))
            f = np.linspace(0, 1, n, endpoint=False)[:, None]
            pts.append(a + f * (b - a))
        return np.concatenate(pts)

    def contains_radius(self):
        return self.size


@dataclass
class Scene:
    width: int
    height: int
    shapes: list = field(default_factory=list)

    @property
    def center(self):
        return (self.width / 2.0, self.height / 2.0)


def make_scene(spec):
    """Random non-degenerate arrangement of shape outlines."""
    rng = np.random.default_rng(spec.seed)
    if spec.shape_count < 1:
        raise InvalidArgument("shape_count must be >= 1")
    shapes = []
    for i in range(spec.shape_count):
        kind = spec.kinds[i % len(spec.kinds)]
        size = rng.uniform(spec.min_size, spec.max_size)
        margin = size + 1
        if 2 * margin >= min(spec.canvas_width, spec.canvas_height):
            raise InvalidArgument("shapes do not fit the canvas")
        shapes.append(Shape(
            kind,
            rng.uniform(margin, spec.canvas_width - margin),
            rng.uniform(margin, spec.canvas_height - margin),
            size,
            rng.uniform(0, 2 * np.pi),
        ))
    return Scene(spec.canvas_width, spec.canvas_height, shapes)


def camera_points(points, pose, window, canvas_center, scale=1.0):
    """Canvas points -> window pixel coordinates for a camera pose.

    ``window`` is ``(width, height)`` in output pixels; ``scale`` is output
    pixels per canvas unit. Translation is expressed in output pixels.
    """
    x, y, roll = pose
    th = math.radians(roll)
    c, s = math.cos(th), math.sin(th)
    q = (np.asarray(points) - canvas_center) * scale + [x, y]
    p = q @ np.array([[c, s], [-s, c]])
    return p + [window[0] / 2.0, window[1] / 2.0]


def render(scene, pose, window, scale=1.0, skip=()):
    """Binary image of the scene outlines seen from ``pose``."""
    w, h = window
    img = np.zeros((h, w), dtype=np.uint8)
    for i, shape in enumerate(scene.shapes):
        if i in skip:
            continue
        p = camera_points(shape.outline(0.25 / scale), pose, window, scene.center, scale)
        xi = np.rint(p[:, 0]).astype(int)
        yi = np.rint(p[:, 1]).astype(int)
        ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        img[yi[ok], xi[ok]] = 1
    return img


def warp_operator(shape, dx, dy, dtheta):
    """Sparse bilinear operator for ``rotate(translate(., (dx, dy)), dtheta)``.

    Rotation is about ``(W/2, H/2)``; samples outside the image read zero.
    ``warp_image(img) == (op @ img.ravel()).reshape(shape)``.
    """
    h, w = shape
    cx, cy = w / 2.0, h / 2.0
    th = math.radians(dtheta)
    cs, sn = math.cos(th), math.sin(th)
    ys, xs = np.mgrid[0:h, 0:w]
    # out(p) = in(R(-th)(p - c) + c - t)
    px = xs - cx
    py = ys - cy
    X = cs * px + sn * py + cx - dx
    Y = -sn * px + cs * py + cy - dy
    x0 = np.floor(X).astype(int)
    y0 = np.floor(Y).astype(int)
    fx = X - x0
    fy = Y - y0
    out_idx = ys * w + xs
    rows, cols, vals = [], [], []
    for ox, oy, wt in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)),
                       (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        xx = x0 + ox
        yy = y0 + oy
        ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h) & (wt > 1e-12)
        rows.append(out_idx[ok])
        cols.append((yy * w + xx)[ok])
        vals.append(wt[ok])
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(h * w, h * w)
    )


def warp_image(image, dx, dy, dtheta):
    """``rotate(translate(image, (dx, dy)), dtheta)``: bilinear, zero fill."""
    image = np.asarray(image, dtype=float)
    return (warp_operator(image.shape, dx, dy, dtheta) @ image.ravel()).reshape(image.shape)


def overlap_score(frame, map_image, dx, dy, dtheta):
    return float(np.sum(np.asarray(frame, dtype=float) * warp_image(map_image, dx, dy, dtheta)))


def brute_force_register(frame, map_image, shift_range=10, angle_range=45.0, angle_step=1.0):
    """Exhaustive search for the transform carrying ``map_image`` onto ``frame``.

    Every candidate ``dx, dy`` in ``[-shift_range, shift_range]`` (integer
    pixels) and ``dtheta`` on the ``angle_step`` grid in
    ``[-angle_range, angle_range]`` is scored by
    ``sum(frame * warp_image(map_image, dx, dy, dtheta))``. Integer shifts are
    exact, so the score for all shifts at one angle comes from the adjoint
    of the rotation operator applied to the frame. Ties resolve to the
    smallest ``(|dx|, |dy|, |dtheta|)``.

    Returns ``(dx, dy, dtheta, score)``.
    """
    frame = np.asarray(frame, dtype=float)
    map_image = np.asarray(map_image, dtype=float)
    if not frame.any():
        raise DegenerateInput("empty frame")
    if frame.shape != map_image.shape:
        raise InvalidArgument("frame and map shapes differ")
    # pad so translating before rotating truncates nothing: the padded
    # composite then equals the direct warp used by overlap_score
    h, w = frame.shape
    pad = int(shift_range + math.ceil(math.hypot(w, h) / 2 - min(w, h) / 2) + 2)
    frame = np.pad(frame, pad)
    map_image = np.pad(map_image, pad)
    shape = frame.shape
    n_ang = int(round(angle_range / angle_step))
    best_key, best = None, None
    for i in range(-n_ang, n_ang + 1):
        th = i * angle_step
        back = (warp_operator(shape, 0, 0, th).T @ frame.ravel()).reshape(shape)
        scores = _shift_correlation(back, map_image, shift_range)
        top = scores.max()
        for dyi, dxi in np.argwhere(scores >= top - 1e-6):
            dx, dy = int(dxi) - shift_range, int(dyi) - shift_range
            key = (-round(float(scores[dyi, dxi]), 6), abs(dx), abs(dy), abs(th))
            if best_key is None or key < best_key:
                best_key, best = key, (dx, dy, th, float(scores[dyi, dxi]))
    return best


def _shift_correlation(a, b, r):
    """``out[dy + r, dx + r] = sum(a * translate(b, (dx, dy)))`` with zero fill."""
    h, w = b.shape
    full = signal.correlate(a, b, mode="full", method="fft")
    return full[h - 1 - r: h + r, w - 1 - r: w + r]


# --- trajectories and datasets ---------------------------------------------

def trajectory(spec, t):
    """Pose samples ``(x px, y px, roll deg)`` at times ``t``."""
    t = np.asarray(t, dtype=float)
    if spec.motion == "sinusoid":
        x = spec.amp_x * np.sin(2 * np.pi * spec.freq_x * t)
        y = spec.amp_y * np.sin(2 * np.pi * spec.freq_y * t)
        roll = spec.amp_roll * np.sin(2 * np.pi * spec.freq_roll * t)
    elif spec.motion == "random-walk":
        # sum of random-phase harmonics up to the base frequency: smooth,
        # bounded by the amplitude, zero at t = 0
        rng = np.random.default_rng(spec.seed)
        out = []
        for amp, f in ((spec.amp_x, spec.freq_x), (spec.amp_y, spec.freq_y), (spec.amp_roll, spec.freq_roll)):
            fr = f * rng.uniform(0.3, 1.0, 4)
            w = rng.dirichlet(np.ones(4))
            ph = rng.uniform(0, 2 * np.pi, 4)
            out.append(amp * (w[None] * (np.sin(2 * np.pi * fr[None] * t[:, None] + ph) - np.sin(ph))).sum(1) / 2)
        x, y, roll = out
    else:
        raise InvalidArgument(f"unknown motion {spec.motion!r}")
    roll = roll + spec.const_roll_rate * t
    return np.stack([x, y, roll], axis=1)


def trajectory_rates(spec, t, eps=1e-5):
    """Analytic-quality time derivative (central difference at ``eps``)."""
    return (trajectory(spec, np.asarray(t) + eps) - trajectory(spec, np.asarray(t) - eps)) / (2 * eps)


def _check_window(scene, spec, poses):
    """The viewed canvas region must stay inside the canvas."""
    w, h = spec.window_width, spec.window_height
    corners = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=float) - [w / 2.0, h / 2.0]
    c0 = np.array(scene.center)
    for x, y, roll in poses[:: max(1, len(poses) // 2000)].tolist() + [poses[-1].tolist()]:
        th = math.radians(roll)
        c, s = math.cos(th), math.sin(th)
        # inverse of camera_points
        q = (corners @ np.array([[c, -s], [s, c]]) - [x, y]) / spec.scale + c0
        if q.min() < 0 or np.any(q[:, 0] > scene.width) or np.any(q[:, 1] > scene.height):
            raise InvalidArgument("camera window leaves the canvas")


@dataclass
class SynthDataset:
    events: EventArray
    groundtruth: GroundTruth
    imu: ImuData
    window: tuple
    poses: np.ndarray  # (n, 3) x, y, roll at groundtruth.t
    manifest: dict


def _render_points(outlines, pose, window, center, scale):
    w, h = window
    img = np.zeros((h, w), dtype=np.uint8)
    p = camera_points(outlines, pose, window, center, scale)
    xi = np.rint(p[:, 0]).astype(int)
    yi = np.rint(p[:, 1]).astype(int)
    ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    img[yi[ok], xi[ok]] = 1
    return img


def generate_dataset(scene_spec, traj_spec, event_noise=0.0, out_dir=None, visible=None):
    """Render the camera window along a trajectory and emit events.

    Pixels whose binary value changes between consecutive renders fire
    (polarity 1 on 0->1). Their timestamps are spread evenly over the
    interval in random order. ``event_noise`` is the mean number of uniform
    noise events per rendered interval. ``visible = (shape_index, t_on, t_off)``
    shows that one shape only for ``t_on <= t < t_off`` (scene changes).
    When ``out_dir`` is given the three text files and a manifest are written.
    """
    if traj_spec.duration <= 0 or traj_spec.rate <= 0:
        raise InvalidArgument("duration and rate must be positive")
    if event_noise < 0:
        raise InvalidArgument("event_noise must be >= 0")
    scene = make_scene(scene_spec)
    rng = np.random.default_rng(traj_spec.seed)
    n = int(round(traj_spec.duration * traj_spec.rate)) + 1
    t = np.arange(n) / traj_spec.rate
    poses = trajectory(traj_spec, t)
    _check_window(scene, traj_spec, poses)

    window = (traj_spec.window_width, traj_spec.window_height)
    w, h = window
    spacing = 0.25 / traj_spec.scale
    outlines = [s.outline(spacing) for s in scene.shapes]
    full = np.concatenate(outlines)
    kept = full
    if visible is not None:
        idx, t_on, t_off = visible
        if not 0 <= idx < len(outlines):
            raise InvalidArgument(f"shape index {idx} out of range")
        kept = np.concatenate([o for i, o in enumerate(outlines) if i != idx])
    shown = lambda tk: visible is None or visible[1] <= tk < visible[2]
    ts, xs, ys, ps = [], [], [], []
    prev = _render_points(full if shown(t[0]) else kept, poses[0], window, scene.center, traj_spec.scale)
    dt = 1.0 / traj_spec.rate
    for k in range(1, n):
        pts = full if shown(t[k]) else kept
        cur = _render_points(pts, poses[k], window, scene.center, traj_spec.scale)
        yy, xx = np.nonzero(cur != prev)
        pol = cur[yy, xx].astype(np.int8)
        if event_noise:
            m = rng.poisson(event_noise)
            xx = np.concatenate([xx, rng.integers(0, w, m)])
            yy = np.concatenate([yy, rng.integers(0, h, m)])
            pol = np.concatenate([pol, rng.integers(0, 2, m).astype(np.int8)])
        m = xx.shape[0]
        if m:
            order = rng.permutation(m)
            ts.append(t[k - 1] + dt * np.arange(1, m + 1) / (m + 1))
            xs.append(xx[order])
            ys.append(yy[order])
            ps.append(pol[order])
        prev = cur
    cat = (lambda a, dtype: np.concatenate(a).astype(dtype) if a else np.zeros(0, dtype))
    events = EventArray(cat(ts, float), cat(xs, np.int64), cat(ys, np.int64), cat(ps, np.int8))

    f = traj_spec.focal_px
    pan = np.degrees(poses[:, 0] / f)
    tilt = np.degrees(poses[:, 1] / f)
    quats = np.array([euler_to_quat(r, p, q) for r, p, q in zip(poses[:, 2], pan, tilt)])
    position = np.column_stack([poses[:, 0], poses[:, 1], np.zeros(n)])
    gt = GroundTruth(t, position, quats)

    n_imu = int(round(traj_spec.duration * traj_spec.imu_rate)) + 1
    t_imu = np.arange(n_imu) / traj_spec.imu_rate
    rates = trajectory_rates(traj_spec, t_imu)
    gyro_dps = np.column_stack([rates[:, 1] / f * 180 / np.pi, rates[:, 0] / f * 180 / np.pi, rates[:, 2]])
    gyro_dps = gyro_dps + traj_spec.gyro_bias_dps + rng.normal(0, traj_spec.gyro_noise_dps, gyro_dps.shape)
    acc = np.tile([0.0, 0.0, 9.81], (n_imu, 1))
    imu = ImuData(t_imu, acc, np.radians(gyro_dps))

    manifest = {
        "scene": asdict(scene_spec),
        "trajectory": asdict(traj_spec),
        "event_noise": event_noise,
        "visible": list(visible) if visible is not None else None,
        "sensor_dims": [w, h],
        "event_count": len(events),
        "files": [EVENTS_FILE, IMU_FILE, GROUNDTRUTH_FILE],
    }
    manifest["scene"]["kinds"] = list(scene_spec.kinds)
    ds = SynthDataset(events, gt, imu, window, poses, manifest)
    if out_dir is not None:
        write_dataset(ds, out_dir)
    return ds


def write_dataset(ds, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_events(os.path.join(out_dir, EVENTS_FILE), ds.events)
    write_imu(os.path.join(out_dir, IMU_FILE), ds.imu)
    write_groundtruth(os.path.join(out_dir, GROUNDTRUTH_FILE), ds.groundtruth)
    path = os.path.join(out_dir, MANIFEST_FILE)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(ds.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
