"""Hierarchical resonator network for event-based visual odometry.

One call to :meth:`Resonator.step` is one iteration: the three factor
states (horizontal shift h, vertical shift v, roll r) are cleaned up against
their codebooks, read out as population vectors, and, once the map is
unblocked, the input is mapped back into the map frame and mixed into the
anchored map.

Generative convention: ``input = rotate(translate(map))`` with rotation about
the image center, so ``unrotate(input) ~ map (*) h (*) v``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import hdcore
from .codebooks import (
    CartesianGrid,
    PolarGrid,
    build_cartesian_codebooks,
    build_frame_transform,
    build_polar_codebooks,
)
from .errors import DegenerateInput, InvalidArgument


@dataclass
class ResonatorConfig:
    gamma: float = 0.2
    sharpen_k: float = hdcore.DEFAULT_SHARPEN_K
    map_block_iterations: int = 100
    mu1: float = 0.9
    mu2: float = 0.02
    readout_window: int = 5
    fusion_enabled: bool = False
    # "random" | "uniform" (normalized sum of all codevectors) |
    # "identity" (zero transform, the true value for the first frame)
    init: str = "random"
    # gyro (deg/s) -> shift rate (px/s); sign encodes axis orientation
    pan_scale: float = 1.0
    tilt_scale: float = 1.0
    roll_scale: float = 1.0

    def validate(self):
        if not 0 < self.gamma <= 1:
            raise InvalidArgument("gamma must be in (0, 1]")
        if not 1 <= self.sharpen_k <= 20:
            raise InvalidArgument("sharpen_k must be in [1, 20]")
        if self.mu1 < 0 or self.mu2 < 0 or self.mu1 + self.mu2 >= 1:
            raise InvalidArgument("need mu1, mu2 >= 0 and mu1 + mu2 < 1")
        if self.readout_window < 0:
            raise InvalidArgument("readout_window must be >= 0")
        if self.init not in ("random", "uniform", "identity"):
            raise InvalidArgument(f"unknown init {self.init!r}")
        if self.map_block_iterations < 0:
            raise InvalidArgument("map_block_iterations must be >= 0")
        return self


@dataclass(frozen=True, eq=False)
class CodebookSet:
    grid: CartesianGrid
    polar: PolarGrid
    h: object
    v: object
    phi: object
    r: object
    rho: object
    polar_phi: object
    transform: object
    kind: str

    def encode_frame(self, bits):
        """Cartesian and polar encodings of one binary frame."""
        s_cart = self.phi.encode(np.asarray(bits, dtype=float))
        return s_cart, self.transform.to_polar(s_cart)


def build_codebook_set(grid, polar=None, kind="dft", n=None, n_polar=None, rng=None):
    polar = polar or PolarGrid.for_image(grid)
    h, v, phi = build_cartesian_codebooks(grid, n, kind, rng)
    r, rho, polar_phi = build_polar_codebooks(polar, n_polar if kind == "random" else None, kind, rng)
    transform = build_frame_transform(grid, polar, phi, polar_phi)
    return CodebookSet(grid, polar, h, v, phi, r, rho, polar_phi, transform, kind)


@dataclass
class ResonatorState:
    h_hat: np.ndarray
    v_hat: np.ndarray
    r_hat: np.ndarray
    map_hat: np.ndarray
    anchor_map: np.ndarray
    iteration: int = 0


@dataclass
class Estimate:
    h_out: float
    v_out: float
    r_out: float
    t_mid: float
    h_profile: np.ndarray = field(repr=False)
    v_profile: np.ndarray = field(repr=False)
    r_profile: np.ndarray = field(repr=False)
    degenerate: bool = False


def population_readout(profile, window, periodic):
    """Similarity-weighted mean index around the profile peak.

    Returns ``(index, degenerate)``. Negative values inside the window count
    as zero; ``np.argmax`` resolves ties to the lowest index. Periodic
    indices are wrapped into ``[0, len(profile))``.
    """
    profile = np.asarray(profile, dtype=float)
    m = profile.shape[0]
    peak = int(np.argmax(profile))
    if not np.any(profile > 0):
        return 0.0, True
    offsets = np.arange(-window, window + 1)
    idx = peak + offsets
    if periodic:
        w = np.clip(profile[np.mod(idx, m)], 0.0, None)
    else:
        ok = (idx >= 0) & (idx < m)
        idx = idx[ok]
        w = np.clip(profile[idx], 0.0, None)
    out = float(np.dot(idx, w) / w.sum())
    if periodic:
        out = out % m
        if out >= m:  # tiny negative values round up to m
            out -= m
    return out, False


def readout(state_vector, codebook, window=5, periodic=None):
    """Decode a state against its codebook and apply the population readout.

    Returns ``(index, profile)``; raises :class:`DegenerateInput` when the
    profile has no positive entry.
    """
    if periodic is None:
        periodic = codebook.periodic
    profile = codebook.decode(state_vector)
    out, degenerate = population_readout(profile, window, periodic)
    if degenerate:
        raise DegenerateInput("all-zero similarity profile")
    return out, profile


def _cleanup(codebook, y, k):
    return hdcore.normalize_phasor(codebook.encode(hdcore.sharpen(codebook.decode(y), k)))


def _leaky(old, new, gamma):
    return hdcore.normalize_phasor((1 - gamma) * old + gamma * new)


class Resonator:
    """Stateless engine; the recursion lives in :class:`ResonatorState`."""

    def __init__(self, codebooks, config=None):
        self.cb = codebooks
        self.config = (config or ResonatorConfig()).validate()

    # -- initialization ---------------------------------------------------

    def init_state(self, first_frame, rng):
        bits = np.asarray(first_frame, dtype=float)
        if bits.shape != self.cb.grid.shape:
            raise InvalidArgument(f"frame shape {bits.shape} does not match grid {self.cb.grid.shape}")
        if not bits.any():
            raise DegenerateInput("first frame is empty")
        m0 = scale_normalize(self.cb.phi.encode(bits))
        if self.config.init == "uniform":
            start = lambda cb: hdcore.normalize_phasor(cb.encode(np.ones(cb.size)))
        elif self.config.init == "identity":
            start = lambda cb: cb.power(0.0)
        else:
            start = lambda cb: cb.random_state(rng)
        return ResonatorState(
            h_hat=start(self.cb.h),
            v_hat=start(self.cb.v),
            r_hat=start(self.cb.r),
            map_hat=m0,
            anchor_map=m0.copy(),
        )

    # -- pieces of one iteration -----------------------------------------

    def predict_with_imu(self, state, rates, dt):
        """Advance the states by ``rate * dt`` along each axis.

        ``rates`` is ``(roll deg/s, pan px/s, tilt px/s)``.
        """
        rates = np.asarray(rates, dtype=float)
        if rates.shape != (3,) or not np.all(np.isfinite(rates)):
            raise InvalidArgument("rates must be three finite numbers")
        if not dt > 0:
            raise InvalidArgument("dt must be positive")
        roll, pan, tilt = rates * dt
        bins = roll / self.cb.polar.degrees_per_bin
        if roll:
            state.r_hat = state.r_hat * self.cb.r.power(bins)
        if pan:
            state.h_hat = state.h_hat * self.cb.h.power(pan)
        if tilt:
            state.v_hat = state.v_hat * self.cb.v.power(tilt)
        return state

    def transform_to_map_frame(self, s_polar, estimate):
        """Un-rotate (polar frame), convert to Cartesian, un-translate."""
        bins = estimate.r_out / self.cb.polar.degrees_per_bin
        unrotated = s_polar * self.cb.r.power(-bins)
        cart = self.cb.transform.to_cartesian(unrotated)
        return cart * self.cb.h.power(-estimate.h_out) * self.cb.v.power(-estimate.v_out)

    def update_map(self, state, m_est):
        c = self.config
        state.map_hat = c.mu1 * state.map_hat + c.mu2 * state.anchor_map + (1 - c.mu1 - c.mu2) * m_est
        return state

    def readout_state(self, state, t_mid=float("nan")):
        w = self.config.readout_window
        h_idx, hp = readout(state.h_hat, self.cb.h, w)
        v_idx, vp = readout(state.v_hat, self.cb.v, w)
        r_idx, rp = readout(state.r_hat, self.cb.r, w, periodic=True)
        h_out = self.cb.h.index_to_value(h_idx)
        v_out = self.cb.v.index_to_value(v_idx)
        if self.cb.h.periodic:
            h_out = _wrap_signed(h_out, self.cb.grid.width)
        if self.cb.v.periodic:
            v_out = _wrap_signed(v_out, self.cb.grid.height)
        r_out = (r_idx * self.cb.polar.degrees_per_bin) % 360.0
        return Estimate(h_out, v_out, r_out, t_mid, hp, vp, rp)

    # -- full iteration ---------------------------------------------------

    def step(self, state, s_cart, s_polar, imu_rates=None, dt=None, t_mid=float("nan")):
        cb, c = self.cb, self.config
        if s_cart.shape != (cb.h.n,) or s_polar.shape != (cb.r.n,):
            raise InvalidArgument("input vectors do not match the codebook dimensions")
        if c.fusion_enabled and imu_rates is not None:
            self.predict_with_imu(state, imu_rates, dt)

        has_input = bool(np.any(np.abs(s_cart) > hdcore.EPS))
        if has_input:
            h, v, r, m = state.h_hat, state.v_hat, state.r_hat, state.map_hat
            p_hat = cb.transform.to_cartesian(s_polar * np.conj(r))
            pm = p_hat * np.conj(m)
            # sequential: v sees the new h, r sees both
            h = _leaky(h, _cleanup(cb.h, pm * np.conj(v), c.sharpen_k), c.gamma)
            v = _leaky(v, _cleanup(cb.v, pm * np.conj(h), c.sharpen_k), c.gamma)
            l_hat = cb.transform.to_polar(m * h * v)
            r = _leaky(r, _cleanup(cb.r, s_polar * np.conj(l_hat), c.sharpen_k), c.gamma)
            state.h_hat, state.v_hat, state.r_hat = h, v, r

        try:
            est = self.readout_state(state, t_mid)
        except DegenerateInput:
            n = cb.polar
            est = Estimate(0.0, 0.0, 0.0, t_mid, np.zeros(cb.h.size), np.zeros(cb.v.size),
                           np.zeros(n.angle_bins), degenerate=True)

        if has_input and not est.degenerate and state.iteration >= c.map_block_iterations:
            m_est = self.transform_to_map_frame(s_polar, est)
            self.update_map(state, scale_normalize(m_est))
        state.iteration += 1
        return est


def scale_normalize(v):
    """Scale to unit RMS magnitude; relative magnitudes are kept."""
    rms = np.sqrt(np.mean(np.abs(v) ** 2))
    return v / rms if rms > hdcore.EPS else v


def _wrap_signed(x, period):
    return (x + period / 2.0) % period - period / 2.0


def map_decay_updates(mu1, fraction):
    """Updates needed for content missing from the input to fall below ``fraction``."""
    return math.ceil(math.log(fraction) / math.log(mu1))
