"""Frame stream -> resonator -> trajectory, with optional gyro fusion."""
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .codebooks import CartesianGrid, PolarGrid
from .errors import DegenerateInput, InvalidArgument
from .eventio import preprocess
from .resonator import Resonator, ResonatorConfig, build_codebook_set

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    dataset: str = ""
    dataset_format: str = "text-v1"
    sensor_width: int = 0  # 0: take from the dataset manifest or the events
    sensor_height: int = 0
    grid_width: int = 64
    grid_height: int = 48
    angle_bins: int = 360
    radius_bins: int = 32
    max_radius: float = 0.0  # 0: half the smaller grid side
    codebook_kind: str = "dft"
    codebook_n: int = 0  # 0: grid size for dft, 3072 for random
    codebook_n_polar: int = 0
    package_size: int = 2000
    binarize_threshold: int = 0
    window: str = "last-10s"
    out: str = "out"
    seed: int = 0
    save_profiles: bool = False
    resonator: ResonatorConfig = field(default_factory=ResonatorConfig)

    def validate(self):
        if self.grid_width < 2 or self.grid_height < 2:
            raise InvalidArgument("grid dimensions must be >= 2")
        if self.package_size <= 0:
            raise InvalidArgument("package_size must be positive")
        if self.codebook_kind not in ("dft", "random"):
            raise InvalidArgument(f"unknown codebook kind {self.codebook_kind!r}")
        if self.codebook_n < 0 or self.codebook_n_polar < 0:
            raise InvalidArgument("codebook dimensions must be >= 0")
        if self.angle_bins < 2 or self.radius_bins < 2:
            raise InvalidArgument("polar grid dimensions must be >= 2")
        if self.sensor_width < 0 or self.sensor_height < 0:
            raise InvalidArgument("sensor dimensions must be >= 0")
        self.resonator.validate()
        return self

    def flat(self):
        """Flat ``section -> {key: value}`` view, used for manifests."""
        top = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "resonator"}
        return {"run": top, "resonator": asdict(self.resonator)}

    @property
    def grid(self):
        return CartesianGrid(self.grid_width, self.grid_height)

    @property
    def polar(self):
        if self.max_radius > 0:
            return PolarGrid(self.angle_bins, self.radius_bins, self.max_radius)
        return PolarGrid.for_image(self.grid, self.angle_bins, self.radius_bins)


def make_codebooks(cfg):
    grid = cfg.grid
    rng = np.random.default_rng(cfg.seed)
    n = cfg.codebook_n or (grid.size if cfg.codebook_kind == "dft" else 3072)
    n_polar = cfg.codebook_n_polar or (None if cfg.codebook_kind == "dft" else n)
    if cfg.codebook_kind == "dft" and n != grid.size:
        raise InvalidArgument("dft codebooks need codebook_n equal to the grid size")
    return build_codebook_set(grid, cfg.polar, cfg.codebook_kind, n, n_polar, rng)


def gyro_rates(imu, t0, t1, config):
    """Mean gyro reading over ``[t0, t1]`` as ``(roll deg/s, pan px/s, tilt px/s)``.

    Gyro axes: x tilt, y pan, z roll (rad/s). Pan and tilt are mapped to pixel
    rates with the configured scales.
    """
    if imu is None or len(imu) == 0:
        return None
    keep = (imu.t >= t0) & (imu.t <= t1)
    if keep.any():
        w = imu.angular_velocity[keep].mean(axis=0)
    else:
        mid = 0.5 * (t0 + t1)
        w = np.array([np.interp(mid, imu.t, imu.angular_velocity[:, j]) for j in range(3)])
    wd = np.degrees(w)
    return np.array([config.roll_scale * wd[2], config.pan_scale * wd[1], config.tilt_scale * wd[0]])


@dataclass
class TrackResult:
    t: np.ndarray
    values: np.ndarray  # (n, 3) h px, v px, r deg
    degenerate: np.ndarray
    profiles: dict = None
    state: object = None


def track(frames, codebooks, config, imu=None, rng=None, save_profiles=False, on_step=None):
    """Run one resonator iteration per frame.

    The first non-empty frame becomes the anchor map. Rows are emitted for
    every frame, including empty ones (prediction only).
    """
    res = Resonator(codebooks, config)
    rng = rng if rng is not None else np.random.default_rng(0)
    frames = list(frames)
    first = next((f for f in frames if f.bits.any()), None)
    if first is None:
        raise DegenerateInput("all frames are empty")
    state = res.init_state(first.bits, rng)
    ts, vals, degen = [], [], []
    prof = {"h": [], "v": [], "r": []}
    t_prev = None
    for f in frames:
        s_cart, s_polar = codebooks.encode_frame(f.bits)
        rates = dt = None
        if config.fusion_enabled and t_prev is not None and f.t_mid > t_prev:
            dt = f.t_mid - t_prev
            rates = gyro_rates(imu, t_prev, f.t_mid, config)
        est = res.step(state, s_cart, s_polar, rates, dt, f.t_mid)
        t_prev = f.t_mid
        ts.append(f.t_mid)
        vals.append((est.h_out, est.v_out, est.r_out))
        degen.append(est.degenerate)
        if save_profiles:
            prof["h"].append(est.h_profile)
            prof["v"].append(est.v_profile)
            prof["r"].append(est.r_profile)
        if on_step is not None:
            on_step(state, est)
    out = TrackResult(np.array(ts), np.array(vals).reshape(-1, 3), np.array(degen), None, state)
    if save_profiles:
        out.profiles = {k: np.array(v) for k, v in prof.items()}
    return out


def run_events(events, sensor_dims, cfg, imu=None, on_step=None):
    """Events -> packages -> trajectory."""
    cfg.validate()
    cb = make_codebooks(cfg)
    frames = preprocess(events, sensor_dims, cfg.grid, cfg.package_size, cfg.binarize_threshold)
    return track(frames, cb, cfg.resonator, imu, np.random.default_rng(cfg.seed), cfg.save_profiles, on_step)


def dead_reckon(imu, t, config, start=(0.0, 0.0, 0.0)):
    """Integrate gyro rates (trapezoid) and sample at times ``t``.

    Returns ``(n, 3)`` in the network's units: h px, v px, r deg.
    """
    if imu is None or len(imu) < 2:
        raise InvalidArgument("need at least two IMU samples")
    wd = np.degrees(imu.angular_velocity)
    rates = np.column_stack([config.pan_scale * wd[:, 1], config.tilt_scale * wd[:, 0], config.roll_scale * wd[:, 2]])
    dt = np.diff(imu.t)[:, None]
    cum = np.vstack([np.zeros((1, 3)), np.cumsum(0.5 * (rates[1:] + rates[:-1]) * dt, axis=0)])
    t = np.asarray(t, dtype=float)
    out = np.column_stack([np.interp(t, imu.t, cum[:, j]) for j in range(3)])
    out -= np.column_stack([np.interp(t[:1], imu.t, cum[:, j]) for j in range(3)])
    return out + np.asarray(start, dtype=float)


def relative_truth(poses_t, poses, t, t_ref, downsample=1.0):
    """Ground-truth ``(h, v, r)`` relative to the pose at ``t_ref``.

    For synthetic poses ``(x, y, roll)``: if ``view = R(th) (q + t)`` then the
    view at ``t`` equals the view at ``t_ref`` translated by
    ``R(th_ref) (t - t_ref)`` and rotated by ``th - th_ref``.
    """
    ref = np.array([np.interp(t_ref, poses_t, poses[:, j]) for j in range(3)])
    cur = np.column_stack([np.interp(t, poses_t, poses[:, j]) for j in range(3)])
    th = math.radians(ref[2])
    c, s = math.cos(th), math.sin(th)
    d = cur[:, :2] - ref[:2]
    h = (c * d[:, 0] - s * d[:, 1]) / downsample
    v = (s * d[:, 0] + c * d[:, 1]) / downsample
    return np.column_stack([h, v, cur[:, 2] - ref[2]])
