"""Phasor hypervector algebra (FHRR).

Vectors are plain 1-D complex numpy arrays. All functions are pure.
"""
import math

import numpy as np

from .errors import InvalidArgument

EPS = 1e-12
DEFAULT_SHARPEN_K = 8.0


def _check_pair(a, b):
    if a.shape != b.shape:
        raise InvalidArgument(f"length mismatch: {a.shape} vs {b.shape}")


def random_seed(n, rng):
    """Random phasor vector with phases uniform on [0, 2pi)."""
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    phases = rng.uniform(0.0, 2 * np.pi, size=n)
    return np.exp(1j * phases)


def periodic_seed(n, period, rng):
    """Random phasor vector whose phases are multiples of 2pi/period.

    Raising it to the power ``period`` gives the all-ones vector, so the
    axis it spans wraps around after ``period`` steps.
    """
    if period < 2:
        raise InvalidArgument("period must be >= 2")
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    k = rng.integers(0, period, size=n)
    return np.exp(2j * np.pi * k / period)


def frac_pow(seed, exponent):
    if not np.all(np.isfinite(exponent)):
        raise InvalidArgument("exponent must be finite")
    return np.exp(1j * exponent * np.angle(seed))


def frac_pow_phases(phases, exponent):
    """Like :func:`frac_pow` but from explicit seed phases.

    Codebooks keep the unwrapped phases so fractional exponents are not
    affected by the branch cut of ``np.angle``.
    """
    if not np.all(np.isfinite(exponent)):
        raise InvalidArgument("exponent must be finite")
    return np.exp(1j * exponent * phases)


def bind(a, *others):
    out = np.asarray(a)
    for b in others:
        _check_pair(out, b)
        out = out * b
    return out


def unbind(a, b):
    _check_pair(a, b)
    return a * np.conj(b)


def bundle(vs, weights=None):
    vs = [np.asarray(v) for v in vs]
    if not vs:
        raise InvalidArgument("cannot bundle an empty sequence")
    if weights is not None and len(weights) != len(vs):
        raise InvalidArgument("weights must match the number of vectors")
    for v in vs[1:]:
        _check_pair(vs[0], v)
    stack = np.stack(vs)
    if weights is None:
        return stack.sum(axis=0)
    return np.tensordot(np.asarray(weights, dtype=float), stack, axes=1)


def similarity(a, b):
    """Real part of the normalized inner product, ``Re(a . conj(b)) / N``."""
    _check_pair(a, b)
    return float(np.real(np.vdot(b, a)) / a.shape[0])


def cosine_similarity(a, b):
    """Magnitude-invariant similarity for vectors that are not unit phasors."""
    _check_pair(a, b)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < EPS or nb < EPS:
        return 0.0
    return float(np.real(np.vdot(b, a)) / (na * nb))


def normalize_phasor(v, eps=EPS):
    """Project every entry onto the unit circle; near-zero entries become 0."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    out = np.zeros_like(v)
    keep = mag >= eps
    out[keep] = v[keep] / mag[keep]
    return out


def sharpen(c, k=DEFAULT_SHARPEN_K):
    """Clamp negatives, raise to the k-th power, L2 normalize."""
    if not math.isfinite(k):
        raise InvalidArgument("k must be finite")
    if k < 1:
        raise InvalidArgument("k must be >= 1")
    x = np.clip(np.asarray(c, dtype=float), 0.0, None)
    peak = x.max(initial=0.0)
    if peak <= 0.0:
        return np.zeros_like(x)
    # scale first so large k cannot overflow; the ratio is unaffected
    xk = (x / peak) ** k
    return xk / np.linalg.norm(xk)


def ones(n):
    return np.ones(n, dtype=complex)
