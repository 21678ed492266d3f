"""Trajectory post-processing: resampling, lag estimation, Umeyama
calibration and error metrics."""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateInput, InvalidArgument

log = logging.getLogger(__name__)

DEFAULT_RATE = 400.0
MAX_LAG = 1.0


@dataclass
class Trajectory:
    """Timestamped ``(a, b, c)`` samples.

    Network output: ``(h px, v px, r deg)``. Ground truth: ``(pan, tilt, roll)``
    degrees or ``(x, y, roll)``; ``c`` is always the roll channel.
    """

    t: np.ndarray
    values: np.ndarray
    frame: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float).reshape(-1, 3)
        if self.t.shape[0] != self.values.shape[0]:
            raise InvalidArgument("timestamps and values differ in length")
        if np.any(np.diff(self.t) <= 0):
            raise InvalidArgument("timestamps must be strictly increasing")

    def __len__(self):
        return self.t.shape[0]

    def window(self, t0, t1):
        keep = (self.t >= t0) & (self.t <= t1)
        return Trajectory(self.t[keep], self.values[keep], self.frame)

    def at(self, times):
        times = np.asarray(times, dtype=float)
        return np.stack([np.interp(times, self.t, self.values[:, j]) for j in range(3)], axis=1)


@dataclass
class CalibrationParams:
    lag: float
    scale: float
    rotation: np.ndarray
    translation: np.ndarray
    roll_offset: float
    roll_sign: float = 1.0
    window: tuple = (float("nan"), float("nan"))

    def apply(self, traj):
        """Map a network trajectory into ground-truth coordinates."""
        xy = self.scale * traj.values[:, :2] @ self.rotation.T + self.translation
        roll = self.roll_sign * traj.values[:, 2] + self.roll_offset
        return Trajectory(traj.t + self.lag, np.column_stack([xy, roll]), "calibrated")


@dataclass
class ErrorReport:
    median_angle_error: float
    median_position_error: float
    t: np.ndarray = field(repr=False)
    angle_errors: np.ndarray = field(repr=False)
    position_errors: np.ndarray = field(repr=False)
    calibration: CalibrationParams = None
    mode: str = "rot3"

    def to_text(self):
        c = self.calibration
        lines = [
            f"mode: {self.mode}",
            f"median_angle_error_deg: {self.median_angle_error:.6f}",
        ]
        if self.mode == "planar":
            lines.append(f"median_position_error: {self.median_position_error:.6f}")
        lines.append(f"samples: {self.t.shape[0]}")
        if c is not None:
            lines += [
                f"lag_s: {c.lag:.6f}",
                f"scale: {c.scale:.9g}",
                f"rotation: {c.rotation[0, 0]:.9g} {c.rotation[0, 1]:.9g} {c.rotation[1, 0]:.9g} {c.rotation[1, 1]:.9g}",
                f"translation: {c.translation[0]:.9g} {c.translation[1]:.9g}",
                f"roll_offset_deg: {c.roll_offset:.9g}",
                f"roll_sign: {c.roll_sign:+.0f}",
                f"calibration_window: {c.window[0]:.6f} {c.window[1]:.6f}",
            ]
        return "\n".join(lines) + "\n"

    def to_csv(self):
        out = ["t,angle_error_deg" + (",pos_error" if self.mode == "planar" else "")]
        for i, t in enumerate(self.t):
            row = f"{t:.6f},{self.angle_errors[i]:.6f}"
            if self.mode == "planar":
                row += f",{self.position_errors[i]:.6f}"
            out.append(row)
        return "\n".join(out) + "\n"


def unwrap_degrees(x):
    return np.unwrap(np.asarray(x, dtype=float), period=360.0)


def resample(traj, rate=DEFAULT_RATE, t0=None, t1=None):
    """Linear interpolation onto a uniform grid at ``rate`` Hz.

    The grid spans ``[t0, t1]`` (default: the trajectory's own range).
    The roll channel is unwrapped first so the seam at +-180 deg does not
    produce spurious interpolated values.
    """
    if len(traj) < 2:
        raise InvalidArgument("need at least two samples to resample")
    t0 = traj.t[0] if t0 is None else max(t0, traj.t[0])
    t1 = traj.t[-1] if t1 is None else min(t1, traj.t[-1])
    if t1 < t0:
        raise InvalidArgument("empty resampling range")
    n = int(np.floor((t1 - t0) * rate + 1e-9)) + 1
    grid = t0 + np.arange(n) / rate
    vals = traj.values.copy()
    vals[:, 2] = unwrap_degrees(vals[:, 2])
    out = np.stack([np.interp(grid, traj.t, vals[:, j]) for j in range(3)], axis=1)
    return Trajectory(grid, out, traj.frame)


def resample_common(a, b, rate=DEFAULT_RATE):
    """Resample two trajectories onto one grid over their overlap."""
    t0 = max(a.t[0], b.t[0])
    t1 = min(a.t[-1], b.t[-1])
    if t1 <= t0:
        raise InvalidArgument("trajectories do not overlap in time")
    return resample(a, rate, t0, t1), resample(b, rate, t0, t1)


@dataclass
class LagResult:
    lag: float
    correlation: float
    anticorrelated: bool


def estimate_lag(a, b, rate=DEFAULT_RATE, max_lag=MAX_LAG):
    """Lag (s) such that ``b`` shifted by it best matches ``a``.

    Both trajectories must share one uniform time grid (see
    :func:`resample_common`). The peak of ``|normalized cross-correlation|``
    of the mean-removed roll channels within ``+-max_lag`` wins; a negative
    peak is reported through ``anticorrelated``.
    """
    ra = unwrap_degrees(a.values[:, 2])
    rb = unwrap_degrees(b.values[:, 2])
    if ra.shape != rb.shape:
        raise InvalidArgument("trajectories must be sampled on the same grid")
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    if ra.std() < 1e-12 or rb.std() < 1e-12:
        raise DegenerateInput("roll trace has zero variance")
    n = ra.shape[0]
    max_shift = min(int(round(max_lag * rate)), n - 2)
    best = None
    for k in range(-max_shift, max_shift + 1):
        # b(t) aligned with a(t + k/rate)
        if k >= 0:
            x, y = ra[k:], rb[: n - k]
        else:
            x, y = ra[: n + k], rb[-k:]
        denom = np.sqrt(np.dot(x - x.mean(), x - x.mean()) * np.dot(y - y.mean(), y - y.mean()))
        if denom < 1e-12:
            continue
        c = float(np.dot(x - x.mean(), y - y.mean()) / denom)
        if best is None or abs(c) > abs(best[1]) + 1e-12:
            best = (k, c)
    if best is None:
        raise DegenerateInput("no valid lag")
    k, c = best
    return LagResult(k / rate, c, c < 0)


def umeyama(src, dst):
    """Least-squares similarity transform with ``dst ~ s * R @ src + t``.

    Returns ``(scale, rotation, translation)``; ``det(rotation) = +1``.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[0] < 2:
        raise InvalidArgument("need two equal-sized point sets with at least 2 points")
    n, d = src.shape
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    var_s = (xs ** 2).sum() / n
    if var_s < 1e-15:
        raise DegenerateInput("source points are all identical (rank deficient)")
    cov = xd.T @ xs / n
    u, sv, vt = np.linalg.svd(cov)
    corr = np.eye(d)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        corr[-1, -1] = -1
    rot = u @ corr @ vt
    scale = float(np.trace(np.diag(sv) @ corr) / var_s)
    trans = mu_d - scale * rot @ mu_s
    return scale, rot, trans


def calibration_window(gt, mode, train_fraction=0.7, last_seconds=10.0, explicit=None):
    """Time window used for calibration.

    ``last-10s``: the final ``last_seconds`` of the first ``train_fraction``
    of the recording; ``split-70-30``: the whole training part;
    ``explicit``: the given ``(t0, t1)``.
    """
    t0, t1 = gt.t[0], gt.t[-1]
    t_split = t0 + train_fraction * (t1 - t0)
    if mode in ("last-10s", "last-10s-of-train"):
        return (max(t0, t_split - last_seconds), t_split)
    if mode in ("split-70-30", "split"):
        return (t0, t_split)
    if mode == "explicit":
        if explicit is None:
            raise InvalidArgument("explicit window needs (t0, t1)")
        return tuple(float(x) for x in explicit)
    raise InvalidArgument(f"unknown calibration window {mode!r}")


def parse_window(spec):
    """``last-10s`` | ``split-70-30`` | ``T0:T1`` -> (mode, explicit)."""
    if ":" in spec:
        a, b = spec.split(":", 1)
        return "explicit", (float(a), float(b))
    return spec, None


def calibrate(net, gt, window="last-10s", explicit=None, rate=DEFAULT_RATE, estimate_lag_=True):
    """Fit lag, Umeyama (h, v) -> (a, b), roll sign and offset on a window.

    The window is chosen from ``gt``; evaluation should use the complement.
    """
    w0, w1 = calibration_window(gt, window, explicit=explicit)
    a, b = resample_common(gt, net, rate)
    if estimate_lag_:
        lag_res = estimate_lag(a, b, rate)
        lag, roll_sign = lag_res.lag, (-1.0 if lag_res.anticorrelated else 1.0)
    else:
        lag, roll_sign = 0.0, 1.0
    shifted = Trajectory(net.t + lag, net.values, net.frame)
    t0 = max(w0, shifted.t[0], gt.t[0])
    t1 = min(w1, shifted.t[-1], gt.t[-1])
    if t1 <= t0:
        raise InvalidArgument("calibration window does not overlap both trajectories")
    n = int(np.floor((t1 - t0) * rate)) + 1
    grid = t0 + np.arange(n) / rate
    net_vals = shifted.at(grid)
    gt_vals = gt.at(grid)
    scale, rot, trans = umeyama(net_vals[:, :2], gt_vals[:, :2])
    net_roll = unwrap_degrees(shifted.values[:, 2])
    gt_roll = unwrap_degrees(gt.values[:, 2])
    roll_start_net = roll_sign * np.interp(t0, shifted.t, net_roll)
    roll_start_gt = np.interp(t0, gt.t, gt_roll)
    offset = float(roll_start_gt - roll_start_net)
    return CalibrationParams(lag, scale, rot, trans, offset, roll_sign, (float(t0), float(t1)))


def _rotation_from(pan, tilt, roll):
    return Rotation.from_euler("ZYX", np.column_stack([roll, pan, tilt]), degrees=True)


def compute_error(net, gt, mode="rot3", calibration=None, per_axis=False, exclude=None):
    """Per-sample errors on the common time grid of two trajectories.

    ``rot3``: geodesic angle between orientations built from
    ``(pan, tilt, roll)``, or the largest per-axis difference when
    ``per_axis``. ``planar``: Euclidean distance of ``(a, b)`` plus the
    absolute roll difference (reported as the angle error).
    ``exclude`` is an optional ``(t0, t1)`` range left out of the report.
    """
    if mode not in ("rot3", "planar"):
        raise InvalidArgument(f"unknown mode {mode!r}")
    try:
        a, b = resample_common(net, gt)
    except InvalidArgument as exc:
        raise InvalidArgument(f"no overlapping samples: {exc}") from exc
    keep = np.ones(len(a), dtype=bool)
    if exclude is not None:
        keep &= ~((a.t >= exclude[0]) & (a.t <= exclude[1]))
    if not keep.any():
        raise InvalidArgument("no samples left outside the calibration window")
    t = a.t[keep]
    va = a.values[keep]
    vb = b.values[keep]
    droll = np.abs((va[:, 2] - vb[:, 2] + 180.0) % 360.0 - 180.0)
    if mode == "rot3":
        if per_axis:
            dpan = np.abs(va[:, 0] - vb[:, 0])
            dtilt = np.abs(va[:, 1] - vb[:, 1])
            ang = np.max(np.column_stack([dpan, dtilt, droll]), axis=1)
        else:
            ra = _rotation_from(va[:, 0], va[:, 1], va[:, 2])
            rb = _rotation_from(vb[:, 0], vb[:, 1], vb[:, 2])
            ang = np.degrees((ra.inv() * rb).magnitude())
        pos = np.full(t.shape, np.nan)
        med_pos = float("nan")
    else:
        ang = droll
        pos = np.hypot(va[:, 0] - vb[:, 0], va[:, 1] - vb[:, 1])
        med_pos = float(np.median(pos))
    return ErrorReport(float(np.median(ang)), med_pos, t, ang, pos, calibration, mode)


def evaluate(net, gt, mode="rot3", window="last-10s", explicit=None):
    """Calibrate on the window, report errors on the rest."""
    cal = calibrate(net, gt, window, explicit)
    calibrated = cal.apply(net)
    return compute_error(calibrated, gt, mode, cal, exclude=cal.window)
