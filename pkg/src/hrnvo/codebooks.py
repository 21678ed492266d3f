"""Codebooks for image and transform axes, image encoding, and the
Cartesian <-> polar frame transform.

Conventions
-----------
Images are 2-D arrays indexed ``[row, col]``. For a Cartesian grid that is
``[y, x]``; for a polar grid it is ``[radius_bin, angle_bin]``. A pixel codebook
column for pixel ``(x, y)`` is ``bind(h0**x, v0**y)``.

For ``kind="dft"`` the seed phases are the regularly spaced frequency grid,
so encoding is a 2-D inverse FFT (times N) and decoding a forward FFT (over N).
The frequencies are centered (``np.fft.fftfreq``) so fractional powers
interpolate smoothly between pixels.
"""
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import FormatError, InvalidArgument
from .hdcore import frac_pow_phases

KINDS = ("dft", "random")


@dataclass(frozen=True)
class CartesianGrid:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 2 or self.height < 2:
            raise InvalidArgument("grid dimensions must be >= 2")

    @property
    def size(self):
        return self.width * self.height

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def center(self):
        return (self.width / 2.0, self.height / 2.0)


@dataclass(frozen=True)
class PolarGrid:
    angle_bins: int = 360
    radius_bins: int = 32
    max_radius: float = 24.0
    log_radius: bool = False

    def __post_init__(self):
        if self.angle_bins < 2 or self.radius_bins < 2:
            raise InvalidArgument("polar grid dimensions must be >= 2")
        if not self.max_radius > 0:
            raise InvalidArgument("max_radius must be positive")

    @classmethod
    def for_image(cls, grid, angle_bins=360, radius_bins=32, log_radius=False):
        return cls(angle_bins, radius_bins, min(grid.width, grid.height) / 2.0, log_radius)

    @property
    def size(self):
        return self.angle_bins * self.radius_bins

    @property
    def shape(self):
        return (self.radius_bins, self.angle_bins)

    @property
    def degrees_per_bin(self):
        return 360.0 / self.angle_bins

    def radii(self):
        """Radius (pixels) of the center of every radius bin."""
        b = np.arange(self.radius_bins)
        if self.log_radius:
            return np.exp(np.log(self.max_radius) * (b + 0.5) / self.radius_bins)
        return (b + 0.5) * self.max_radius / self.radius_bins

    def radius_coord(self, rho):
        """Continuous radius-bin coordinate of a radius (inverse of radii)."""
        rho = np.asarray(rho, dtype=float)
        if self.log_radius:
            with np.errstate(divide="ignore"):
                return np.log(np.maximum(rho, 1e-9)) * self.radius_bins / np.log(self.max_radius) - 0.5
        return rho * self.radius_bins / self.max_radius - 0.5


@dataclass(frozen=True, eq=False)
class Codebook:
    """One transform axis: column j is the seed raised to ``exponents[j]``."""

    axis_name: str
    phases: np.ndarray
    exponents: np.ndarray
    kind: str
    periodic: bool = False

    @property
    def n(self):
        return self.phases.shape[0]

    @property
    def size(self):
        return self.exponents.shape[0]

    @property
    def seed(self):
        return np.exp(1j * self.phases)

    def power(self, exponent):
        return frac_pow_phases(self.phases, exponent)

    @cached_property
    def matrix(self):
        return np.exp(1j * np.outer(self.phases, self.exponents))

    @cached_property
    def _grouped(self):
        # dft and periodic seeds repeat a few phase values many times;
        # then C^H v only needs the per-phase sums of v
        uniq, inverse = np.unique(self.phases, return_inverse=True)
        if uniq.size * 4 > self.n:
            return None
        return inverse, np.exp(1j * np.outer(uniq, self.exponents))

    def decode(self, v):
        """Similarity profile ``Re(C^H v) / N``."""
        v = np.asarray(v)
        if v.shape != (self.n,):
            raise InvalidArgument(f"vector length {v.shape} does not match codebook n={self.n}")
        if self._grouped is not None:
            inverse, small = self._grouped
            sums = np.bincount(inverse, weights=v.real) + 1j * np.bincount(inverse, weights=v.imag)
            return np.real(small.conj().T @ sums) / self.n
        return np.real(self.matrix.conj().T @ v) / self.n

    def encode(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if self._grouped is not None:
            inverse, small = self._grouped
            return (small @ coeffs)[inverse]
        return self.matrix @ coeffs

    def random_state(self, rng):
        """Random unit phasor inside the codebook's span.

        Entries sharing a seed phase share a random phase, so nothing of
        the vector lies outside what the codebook can express.
        """
        if self._grouped is None:
            return np.exp(1j * rng.uniform(-np.pi, np.pi, self.n))
        inverse, small = self._grouped
        return np.exp(1j * rng.uniform(-np.pi, np.pi, small.shape[0]))[inverse]

    def index_to_value(self, index):
        """Map a fractional column index onto the exponent axis."""
        step = self.exponents[1] - self.exponents[0]
        return self.exponents[0] + index * step


@dataclass(frozen=True, eq=False)
class PixelCodebook:
    """Codebook over a 2-D pixel grid, columns ``bind(x_seed**x, y_seed**y)``."""

    x_phases: np.ndarray
    y_phases: np.ndarray
    width: int
    height: int
    kind: str

    @property
    def n(self):
        return self.x_phases.shape[0]

    @property
    def shape(self):
        return (self.height, self.width)

    @cached_property
    def _x_table(self):
        return np.exp(1j * np.outer(self.x_phases, np.arange(self.width)))

    @cached_property
    def _y_table(self):
        return np.exp(1j * np.outer(self.y_phases, np.arange(self.height)))

    def column(self, x, y):
        return frac_pow_phases(self.x_phases, x) * frac_pow_phases(self.y_phases, y)

    @cached_property
    def matrix(self):
        """Dense N x (W*H) matrix; pixel (x, y) is column ``y*W + x``."""
        cols = self._y_table[:, :, None] * self._x_table[:, None, :]
        return cols.reshape(self.n, self.height * self.width)

    def encode(self, image):
        image = np.asarray(image)
        if image.shape != self.shape:
            raise InvalidArgument(f"image shape {image.shape} does not match grid {self.shape}")
        if self.kind == "dft":
            return np.fft.ifft2(image).ravel() * self.n
        return ((self._y_table @ image) * self._x_table).sum(axis=1)

    def decode_complex(self, v):
        """``Phi^H v / N`` reshaped to the grid, before taking the real part."""
        v = np.asarray(v)
        if v.shape != (self.n,):
            raise InvalidArgument(f"vector length {v.shape} does not match codebook n={self.n}")
        if self.kind == "dft":
            return np.fft.fft2(v.reshape(self.shape)) / self.n
        return (self._y_table.conj().T * v) @ self._x_table.conj() / self.n

    def decode(self, v):
        return np.real(self.decode_complex(v))


def _dft_phases(width, height):
    """Seed phases of the 2-D DFT, entry j = ky*width + kx."""
    fx = np.fft.fftfreq(width) * 2 * np.pi
    fy = np.fft.fftfreq(height) * 2 * np.pi
    x_phases = np.tile(fx, height)
    y_phases = np.repeat(fy, width)
    return x_phases, y_phases


def _check_kind(kind):
    if kind not in KINDS:
        raise InvalidArgument(f"unknown codebook kind {kind!r}")


def _centered(m):
    return np.arange(m, dtype=float) - m // 2


def build_cartesian_codebooks(grid, n=None, kind="dft", rng=None):
    """Return ``(H, V, Phi)`` for a Cartesian grid.

    H and V span signed shifts ``-W//2 .. W - W//2 - 1`` (likewise for
    height); they are periodic for ``dft`` codebooks.
    """
    _check_kind(kind)
    if kind == "dft":
        if n is not None and n != grid.size:
            raise InvalidArgument(f"dft codebooks need n = width*height = {grid.size}, got {n}")
        n = grid.size
        x_phases, y_phases = _dft_phases(grid.width, grid.height)
    else:
        if n is None or n < 1:
            raise InvalidArgument("random codebooks need a positive dimension n")
        if rng is None:
            raise InvalidArgument("random codebooks need an rng")
        x_phases = rng.uniform(-np.pi, np.pi, size=n)
        y_phases = rng.uniform(-np.pi, np.pi, size=n)
    periodic = kind == "dft"
    h = Codebook("h", x_phases, _centered(grid.width), kind, periodic)
    v = Codebook("v", y_phases, _centered(grid.height), kind, periodic)
    phi = PixelCodebook(x_phases, y_phases, grid.width, grid.height, kind)
    return h, v, phi


def build_polar_codebooks(polar, n=None, kind="dft", rng=None):
    """Return ``(A, B, Phi_polar)``: angle axis, radius axis, polar pixel codebook.

    The angle seed is periodic with period ``angle_bins``.
    """
    _check_kind(kind)
    if kind == "dft":
        if n is not None and n != polar.size:
            raise InvalidArgument(f"dft polar codebooks need n = {polar.size}, got {n}")
        n = polar.size
        a_phases, b_phases = _dft_phases(polar.angle_bins, polar.radius_bins)
    else:
        if n is None or n < 1:
            raise InvalidArgument("random codebooks need a positive dimension n")
        if rng is None:
            raise InvalidArgument("random codebooks need an rng")
        k = rng.integers(0, polar.angle_bins, size=n)
        a_phases = 2 * np.pi * k / polar.angle_bins
        b_phases = rng.uniform(-np.pi, np.pi, size=n)
    a = Codebook("r", a_phases, np.arange(polar.angle_bins, dtype=float), kind, periodic=True)
    b = Codebook("rho", b_phases, np.arange(polar.radius_bins, dtype=float), kind, periodic=False)
    phi = PixelCodebook(a_phases, b_phases, polar.angle_bins, polar.radius_bins, kind)
    return a, b, phi


def encode_image(phi, image):
    return phi.encode(image)


def decode_image(phi, v):
    return phi.decode(v)


# --- resampling ----------------------------------------------------------

def cartesian_to_polar_weights(grid, polar):
    """Sparse bilinear weights mapping a Cartesian image to polar bins.

    Polar bin ``(a, b)`` samples the image at
    ``center + rho_b * (cos theta_a, sin theta_a)``; samples that fall
    outside the image read zero.
    """
    cx, cy = grid.center
    theta = 2 * np.pi * np.arange(polar.angle_bins) / polar.angle_bins
    rho = polar.radii()
    X = cx + rho[:, None] * np.cos(theta)[None, :]
    Y = cy + rho[:, None] * np.sin(theta)[None, :]
    rows = np.arange(polar.size).reshape(polar.shape)
    x0 = np.floor(X).astype(int)
    y0 = np.floor(Y).astype(int)
    fx = X - x0
    fy = Y - y0
    r_idx, c_idx, w = [], [], []
    for ox, oy, wt in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)),
                       (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        xx = x0 + ox
        yy = y0 + oy
        ok = (xx >= 0) & (xx < grid.width) & (yy >= 0) & (yy < grid.height) & (wt > 0)
        r_idx.append(rows[ok])
        c_idx.append((yy * grid.width + xx)[ok])
        w.append(wt[ok])
    return sparse.csr_matrix(
        (np.concatenate(w), (np.concatenate(r_idx), np.concatenate(c_idx))),
        shape=(polar.size, grid.size),
    )


def polar_to_cartesian_weights(grid, polar):
    """Sparse bilinear weights mapping polar bins back onto Cartesian pixels.

    Pixels farther than ``max_radius`` from the center receive nothing; the
    angle axis wraps.
    """
    cx, cy = grid.center
    ys, xs = np.mgrid[0:grid.height, 0:grid.width]
    dx = xs - cx
    dy = ys - cy
    rho = np.hypot(dx, dy)
    theta = np.mod(np.arctan2(dy, dx), 2 * np.pi)
    a = theta * polar.angle_bins / (2 * np.pi)
    b = np.clip(polar.radius_coord(rho), 0.0, polar.radius_bins - 1)
    inside = rho <= polar.max_radius
    a0 = np.floor(a).astype(int)
    b0 = np.minimum(np.floor(b).astype(int), polar.radius_bins - 2)
    fa = a - a0
    fb = b - b0
    pix = ys * grid.width + xs
    r_idx, c_idx, w = [], [], []
    for oa, ob, wt in ((0, 0, (1 - fa) * (1 - fb)), (1, 0, fa * (1 - fb)),
                       (0, 1, (1 - fa) * fb), (1, 1, fa * fb)):
        aa = np.mod(a0 + oa, polar.angle_bins)
        bb = b0 + ob
        ok = inside & (wt > 0)
        r_idx.append(pix[ok])
        c_idx.append((bb * polar.angle_bins + aa)[ok])
        w.append(wt[ok])
    return sparse.csr_matrix(
        (np.concatenate(w), (np.concatenate(r_idx), np.concatenate(c_idx))),
        shape=(grid.size, polar.size),
    )


def to_polar_image(image, grid, polar):
    return (cartesian_to_polar_weights(grid, polar) @ np.ravel(image)).reshape(polar.shape)


def to_cartesian_image(pimage, grid, polar):
    return (polar_to_cartesian_weights(grid, polar) @ np.ravel(pimage)).reshape(grid.shape)


@dataclass(frozen=True, eq=False)
class FrameTransform:
    """Linear map between Cartesian and polar VSA frames.

    Realized as decode -> bilinear resample -> encode. ``to_polar_matrix``
    and ``to_cartesian_matrix`` materialize the same operator densely.
    """

    grid: CartesianGrid
    polar: PolarGrid
    cart_phi: PixelCodebook
    polar_phi: PixelCodebook
    resample_to_polar: sparse.csr_matrix
    resample_to_cartesian: sparse.csr_matrix

    def to_polar(self, v):
        img = self.cart_phi.decode_complex(v).ravel()
        return self.polar_phi.encode((self.resample_to_polar @ img).reshape(self.polar.shape))

    def to_cartesian(self, v):
        img = self.polar_phi.decode_complex(v).ravel()
        return self.cart_phi.encode((self.resample_to_cartesian @ img).reshape(self.grid.shape))

    @cached_property
    def to_polar_matrix(self):
        return (self.polar_phi.matrix @ (self.resample_to_polar @ self.cart_phi.matrix.conj().T)) / self.cart_phi.n

    @cached_property
    def to_cartesian_matrix(self):
        return (self.cart_phi.matrix @ (self.resample_to_cartesian @ self.polar_phi.matrix.conj().T)) / self.polar_phi.n


def build_frame_transform(grid, polar, cart_phi, polar_phi):
    half_diag = 0.5 * np.hypot(grid.width, grid.height)
    if polar.max_radius > half_diag:
        raise InvalidArgument(f"max_radius {polar.max_radius} exceeds half the image diagonal {half_diag:.2f}")
    if cart_phi.shape != grid.shape or polar_phi.shape != polar.shape:
        raise InvalidArgument("codebooks do not match the grids")
    return FrameTransform(
        grid, polar, cart_phi, polar_phi,
        cartesian_to_polar_weights(grid, polar),
        polar_to_cartesian_weights(grid, polar),
    )


def convert_frame(transform, v, direction):
    if direction == "to_polar":
        return transform.to_polar(v)
    if direction == "to_cartesian":
        return transform.to_cartesian(v)
    raise InvalidArgument(f"unknown direction {direction!r}")


# --- on-disk matrix cache ------------------------------------------------

MAGIC = b"HRNVO1"
_HEADER = struct.Struct("<IIIBqQQ")


def save_matrix(path, matrix, dims, n, kind, seed):
    """Write a complex matrix with the cache header.

    Layout: magic, then ``width height n kind seed rows cols`` (little
    endian), then float64 ``re, im`` pairs in column-major order.
    """
    matrix = np.asarray(matrix, dtype=np.complex128)
    _check_kind(kind)
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(dims[0], dims[1], n, KINDS.index(kind), int(seed), rows, cols))
        data = np.asfortranarray(matrix).ravel(order="F").astype("<c16")
        fh.write(data.tobytes())


def load_matrix(path):
    """Return ``(matrix, header_dict)`` from a cache file."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise FormatError(f"{path}: bad magic")
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        w, h, n, kind, seed, rows, cols = _HEADER.unpack(raw)
        body = fh.read()
    if len(body) != rows * cols * 16:
        raise FormatError(f"{path}: expected {rows * cols} entries, found {len(body) / 16:g}")
    data = np.frombuffer(body, dtype="<c16")
    header = {"dims": (w, h), "n": n, "kind": KINDS[kind], "seed": seed}
    return data.reshape((rows, cols), order="F").astype(np.complex128), header
