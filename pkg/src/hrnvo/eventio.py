"""Event-camera dataset files: parsing, writing, downsampling, packaging and
binarization.

Text formats (UTF-8, whitespace separated, ``#`` comments, LF or CRLF)::

    events.txt       t x y p
    imu.txt          t ax ay az gx gy gz        (gyro in rad/s)
    groundtruth.txt  t px py pz qx qy qz qw
"""
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .codebooks import CartesianGrid
from .errors import DatasetNotFound, FormatError, InvalidArgument

log = logging.getLogger(__name__)

EVENTS_FILE = "events.txt"
IMU_FILE = "imu.txt"
GROUNDTRUTH_FILE = "groundtruth.txt"
MAX_MALFORMED_FRACTION = 0.01


@dataclass(frozen=True)
class RawEvent:
    t: float
    x: int
    y: int
    polarity: int


@dataclass
class EventArray:
    """Column-wise event storage."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    def __len__(self):
        return self.t.shape[0]

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return RawEvent(float(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))
        return EventArray(self.t[i], self.x[i], self.y[i], self.p[i])

    @classmethod
    def from_events(cls, events):
        events = list(events)
        return cls(
            np.array([e.t for e in events], dtype=float),
            np.array([e.x for e in events], dtype=np.int64),
            np.array([e.y for e in events], dtype=np.int64),
            np.array([e.polarity for e in events], dtype=np.int8),
        )


@dataclass
class GroundTruth:
    t: np.ndarray
    position: np.ndarray  # (n, 3) meters
    orientation: np.ndarray  # (n, 4) unit quaternions, (w, x, y, z)

    def __len__(self):
        return self.t.shape[0]


@dataclass
class ImuData:
    t: np.ndarray
    linear_acceleration: np.ndarray  # (n, 3) m/s^2
    angular_velocity: np.ndarray  # (n, 3) rad/s

    def __len__(self):
        return self.t.shape[0]


@dataclass
class Dataset:
    events: EventArray
    imu: ImuData
    groundtruth: GroundTruth
    skipped: dict = field(default_factory=dict)


@dataclass
class BinaryFrame:
    grid: CartesianGrid
    bits: np.ndarray
    t_mid: float
    t_first: float = float("nan")
    t_last: float = float("nan")


# --- parsing -------------------------------------------------------------

def parse_event_line(line):
    """Parse one ``t x y p`` line; raises FormatError if malformed."""
    parts = line.split()
    if len(parts) != 4:
        raise FormatError(f"expected 4 fields, got {len(parts)}: {line!r}")
    try:
        t = float(parts[0])
        x, y, p = int(parts[1]), int(parts[2]), int(parts[3])
    except ValueError as exc:
        raise FormatError(f"malformed event line {line!r}") from exc
    if p not in (0, 1) or not np.isfinite(t):
        raise FormatError(f"malformed event line {line!r}")
    return RawEvent(t, x, y, p)


def _read_table(path, ncols):
    """Numeric table with exactly ``ncols`` columns; returns (rows, skipped, total)."""
    with open(path, encoding="utf-8", newline=None) as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln and not ln.startswith("#")]
    if not lines:
        return np.zeros((0, ncols)), 0, 0
    try:
        arr = np.loadtxt(lines, ndmin=2)
        if arr.shape[1] == ncols and np.all(np.isfinite(arr)):
            return arr, 0, len(lines)
    except ValueError:
        pass
    rows = []
    skipped = 0
    for ln in lines:
        parts = ln.split()
        if len(parts) != ncols:
            skipped += 1
            continue
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            skipped += 1
            continue
        if not all(np.isfinite(vals)):
            skipped += 1
            continue
        rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, ncols), skipped, len(lines)


def _check_malformed(name, skipped, total):
    if total and skipped / total > MAX_MALFORMED_FRACTION:
        raise FormatError(f"{name}: {skipped} of {total} lines malformed")
    if skipped:
        log.warning("%s: skipped %d of %d lines", name, skipped, total)


def load_events(path, sensor_dims=None):
    """Parse an events file; returns ``(EventArray, skipped_count)``."""
    if not os.path.exists(path):
        raise DatasetNotFound(path)
    arr, skipped, total = _read_table(path, 4)
    t, xf, yf, pf = arr.T if arr.size else (np.zeros(0),) * 4
    ok = (xf == np.round(xf)) & (yf == np.round(yf)) & np.isin(pf, (0, 1)) & (xf >= 0) & (yf >= 0)
    if sensor_dims is not None:
        ok &= (xf < sensor_dims[0]) & (yf < sensor_dims[1])
    skipped += int(np.count_nonzero(~ok))
    _check_malformed(path, skipped, total)
    ev = EventArray(t[ok], xf[ok].astype(np.int64), yf[ok].astype(np.int64), pf[ok].astype(np.int8))
    if np.any(np.diff(ev.t) < 0):
        raise FormatError(f"{path}: timestamps decrease")
    return ev, skipped


def load_imu(path):
    if not os.path.exists(path):
        return ImuData(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3))), 0
    arr, skipped, total = _read_table(path, 7)
    _check_malformed(path, skipped, total)
    return ImuData(arr[:, 0], arr[:, 1:4], arr[:, 4:7]), skipped


def load_groundtruth(path):
    if not os.path.exists(path):
        return GroundTruth(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 4))), 0
    arr, skipped, total = _read_table(path, 8)
    q = arr[:, [7, 4, 5, 6]]  # file order qx qy qz qw -> (w, x, y, z)
    norms = np.linalg.norm(q, axis=1)
    ok = np.abs(norms - 1) <= 1e-3
    skipped += int(np.count_nonzero(~ok))
    _check_malformed(path, skipped, total)
    q = q[ok] / norms[ok, None]
    return GroundTruth(arr[ok, 0], arr[ok, 1:4], q), skipped


def load_dataset(directory, fmt="text-v1", sensor_dims=None):
    """Load events (required), IMU and ground truth (optional) from a directory."""
    if fmt != "text-v1":
        raise InvalidArgument(f"unsupported dataset format {fmt!r}")
    events, s_ev = load_events(os.path.join(directory, EVENTS_FILE), sensor_dims)
    imu, s_imu = load_imu(os.path.join(directory, IMU_FILE))
    gt, s_gt = load_groundtruth(os.path.join(directory, GROUNDTRUTH_FILE))
    return Dataset(events, imu, gt, {"events": s_ev, "imu": s_imu, "groundtruth": s_gt})


# --- writing -------------------------------------------------------------

def write_events(path, events):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, x, y, p in zip(events.t, events.x, events.y, events.p):
            fh.write(f"{t:.9f} {int(x)} {int(y)} {int(p)}\n")


def write_imu(path, imu):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, a, g in zip(imu.t, imu.linear_acceleration, imu.angular_velocity):
            fh.write(f"{t:.9f} {a[0]:.9g} {a[1]:.9g} {a[2]:.9g} {g[0]:.9g} {g[1]:.9g} {g[2]:.9g}\n")


def write_groundtruth(path, gt):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t, p, q in zip(gt.t, gt.position, gt.orientation):
            w, x, y, z = q
            fh.write(f"{t:.9f} {p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {x:.12g} {y:.12g} {z:.12g} {w:.12g}\n")


# --- preprocessing -------------------------------------------------------

def downsample_coords(x, y, sensor_dims, grid):
    """Divide by the per-axis factor, round half to even, clamp into the grid."""
    fx = sensor_dims[0] / grid.width
    fy = sensor_dims[1] / grid.height
    xs = np.clip(np.rint(np.asarray(x) / fx), 0, grid.width - 1).astype(np.int64)
    ys = np.clip(np.rint(np.asarray(y) / fy), 0, grid.height - 1).astype(np.int64)
    return xs, ys


def preprocess(events, sensor_dims, grid, package_size=2000, binarize_threshold=0):
    """Yield one BinaryFrame per full package of ``package_size`` events.

    Polarity is dropped. A pixel is set when its event count in the package
    exceeds ``binarize_threshold``. A trailing partial package is dropped.
    """
    if package_size <= 0:
        raise InvalidArgument("package_size must be positive")
    xs, ys = downsample_coords(events.x, events.y, sensor_dims, grid)
    flat = ys * grid.width + xs
    n_frames = len(events) // package_size
    for i in range(n_frames):
        lo, hi = i * package_size, (i + 1) * package_size
        counts = np.bincount(flat[lo:hi], minlength=grid.size)
        bits = (counts > binarize_threshold).astype(np.uint8).reshape(grid.shape)
        t0, t1 = float(events.t[lo]), float(events.t[hi - 1])
        yield BinaryFrame(grid, bits, 0.5 * (t0 + t1), t0, t1)


# --- orientation helpers -------------------------------------------------

def quat_to_euler(q):
    """Unit quaternion ``(w, x, y, z)`` -> ``(roll, pan, tilt)`` in degrees.

    Intrinsic Z-Y-X: roll about the optical (z) axis, then pan about y, then
    tilt about x.
    """
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q)
    if norm < 1e-12:
        raise InvalidArgument("zero quaternion")
    w, x, y, z = q / norm
    roll, pan, tilt = Rotation.from_quat([x, y, z, w]).as_euler("ZYX", degrees=True)
    return float(roll), float(pan), float(tilt)


def euler_to_quat(roll, pan, tilt):
    x, y, z, w = Rotation.from_euler("ZYX", [roll, pan, tilt], degrees=True).as_quat()
    return np.array([w, x, y, z])


def quats_to_euler(qs):
    """Vectorized :func:`quat_to_euler` with roll unwrapped over the sequence."""
    qs = np.asarray(qs, dtype=float)
    norms = np.linalg.norm(qs, axis=1)
    if np.any(norms < 1e-12):
        raise InvalidArgument("zero quaternion")
    qs = qs / norms[:, None]
    eul = Rotation.from_quat(qs[:, [1, 2, 3, 0]]).as_euler("ZYX", degrees=True)
    eul[:, 0] = np.unwrap(eul[:, 0], period=360.0)
    return eul


def interpolate_at(times, values, t):
    """Linear interpolation of a sampled sequence; clamps outside the range."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape[0] == 0:
        raise InvalidArgument("empty sequence")
    if values.ndim == 1:
        return float(np.interp(t, times, values))
    return np.array([np.interp(t, times, values[:, j]) for j in range(values.shape[1])])
