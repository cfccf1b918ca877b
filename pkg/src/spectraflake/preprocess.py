"""Per-pixel spectral transforms applied along the channel axis.

All transforms are pure functions of the individual pixel spectrum, so they
commute with any spatial cropping or tiling. Derivative transforms shrink the
channel axis instead of padding; the channel accounting lives in
:func:`output_channels` so models can size their first layer at build time.

Intensity behaviour (asserted by the test-suite):

* ``d1``/``d2`` are offset-invariant but scale with the signal.
* ``logd`` and ``snorm`` are scale-invariant but not offset-invariant.
* ``hyperhue`` is invariant under both positive scaling and gray offsets.
"""

from __future__ import annotations

import enum
import functools
import logging

import numpy as np

from .cube import HSCube

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-8


class Preproc(str, enum.Enum):
    """Transform selector; values double as the CLI spelling."""

    NONE = "none"
    FIRST_DERIV = "d1"
    SECOND_DERIV = "d2"
    LOG_DERIV = "logd"
    SPECTRAL_NORM = "snorm"
    HYPER_HUE = "hyperhue"
    HYPER_HSV = "hyperhsv"


def output_channels(kind: Preproc, channels: int) -> int:
    """Channel count produced by ``kind`` on a ``channels``-deep spectrum."""
    kind = Preproc(kind)
    if kind in (Preproc.NONE, Preproc.SPECTRAL_NORM, Preproc.HYPER_HSV):
        return channels
    if kind in (Preproc.FIRST_DERIV, Preproc.LOG_DERIV):
        return channels - 1
    return channels - 2  # SECOND_DERIV, HYPER_HUE


def _min_channels(kind: Preproc) -> int:
    if kind in (Preproc.FIRST_DERIV, Preproc.LOG_DERIV):
        return 2
    if kind in (Preproc.SECOND_DERIV, Preproc.HYPER_HUE, Preproc.HYPER_HSV):
        return 3
    return 1


# --------------------------------------------------------------------------
# Array-level transforms: input (..., C), float output (..., C')
# --------------------------------------------------------------------------

def first_derivative_data(data: np.ndarray) -> np.ndarray:
    if data.shape[-1] < 2:
        raise ValueError(f"first derivative needs >= 2 channels; got {data.shape[-1]}")
    x = data.astype(np.float64)
    return (x[..., 1:] - x[..., :-1]).astype(np.float32)


def second_derivative_data(data: np.ndarray) -> np.ndarray:
    if data.shape[-1] < 3:
        raise ValueError(f"second derivative needs >= 3 channels; got {data.shape[-1]}")
    x = data.astype(np.float64)
    d1 = x[..., 1:] - x[..., :-1]
    return (d1[..., 1:] - d1[..., :-1]).astype(np.float32)


def log_derivative_data(data: np.ndarray, eps: float = DEFAULT_EPS) -> tuple[np.ndarray, int]:
    """Relative band-to-band change ``v[i] / v[i-1] - 1``.

    Divisions where ``|v[i-1]| < eps`` are clamped (keeping the sign of the
    denominator); the clamp count is returned so callers can report it.
    """
    if data.shape[-1] < 2:
        raise ValueError(f"log derivative needs >= 2 channels; got {data.shape[-1]}")
    x = data.astype(np.float64)
    prev = x[..., :-1]
    guarded = int(np.count_nonzero(np.abs(prev) < eps))
    denom = np.where(prev >= 0.0, 1.0, -1.0) * np.maximum(np.abs(prev), eps)
    out = x[..., 1:] / denom - 1.0
    return out.astype(np.float32), guarded


def spectral_norm_data(data: np.ndarray) -> np.ndarray:
    """Scale each pixel spectrum to unit Euclidean length (zero stays zero).

    The spectrum is divided by its max-magnitude component before the norm is
    taken. Mathematically a no-op, this makes the result exactly identical
    for any two inputs that are exact floating-point multiples of each other
    (and avoids overflow for extreme values).
    """
    x = data.astype(np.float64)
    peak = np.max(np.abs(x), axis=-1, keepdims=True)
    safe = np.where(peak > 0.0, peak, 1.0)
    u = x / safe
    norm = np.sqrt(np.sum(u * u, axis=-1, keepdims=True))
    out = u / np.where(norm > 0.0, norm, 1.0)
    return out.astype(np.float32)


@functools.lru_cache(maxsize=16)
def helmert_basis(channels: int) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to the gray diagonal.

    Returns a read-only ``(channels - 1, channels)`` float64 matrix ``U`` with
    ``U @ U.T = I`` and ``U @ ones = 0``.
    """
    if channels < 2:
        raise ValueError(f"Helmert basis needs >= 2 channels; got {channels}")
    u = np.zeros((channels - 1, channels), dtype=np.float64)
    for j in range(1, channels):
        scale = 1.0 / np.sqrt(j * (j + 1.0))
        u[j - 1, :j] = scale
        u[j - 1, j] = -j * scale
    u.setflags(write=False)
    return u


def _spherical_angles(w: np.ndarray) -> np.ndarray:
    # w: (..., m) -> (..., m - 1) angles. First m-2 angles lie in [0, pi],
    # the last covers the full circle via atan2.
    m = w.shape[-1]
    sq = w[..., ::-1] ** 2
    tail = np.sqrt(np.cumsum(sq, axis=-1))[..., ::-1]  # tail[k] = |w[k:]|
    angles = np.empty(w.shape[:-1] + (m - 1,), dtype=np.float64)
    for k in range(m - 2):
        angles[..., k] = np.arctan2(tail[..., k + 1], w[..., k])
    angles[..., m - 2] = np.arctan2(w[..., m - 1], w[..., m - 2])
    return angles


def _spherical_point(angles: np.ndarray) -> np.ndarray:
    # Inverse of _spherical_angles for unit vectors: (..., m - 1) -> (..., m).
    m = angles.shape[-1] + 1
    w = np.empty(angles.shape[:-1] + (m,), dtype=np.float64)
    running = np.ones(angles.shape[:-1], dtype=np.float64)
    for k in range(m - 1):
        w[..., k] = running * np.cos(angles[..., k])
        running = running * np.sin(angles[..., k])
    w[..., m - 1] = running
    return w


def _hyper_decompose(data: np.ndarray, eps: float):
    x = data.astype(np.float64)
    value = x.mean(axis=-1)
    perp = x - value[..., None]
    sat = np.sqrt(np.sum(perp * perp, axis=-1))
    w = perp @ helmert_basis(data.shape[-1]).T
    angles = _spherical_angles(w)
    angles[sat <= eps] = 0.0
    return angles, sat, value


def hyper_hsv_data(data: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Polar hue decomposition of each spectrum: ``[C-2 hue angles, S, V]``.

    ``V`` is the mean intensity (the coordinate along the gray diagonal up to
    scale), ``S`` the Euclidean length of the component perpendicular to the
    diagonal, and the hue angles are the generalized spherical coordinates of
    that perpendicular direction expressed in the Helmert basis. Pixels with
    ``S <= eps`` get all-zero hue angles.
    """
    if data.shape[-1] < 3:
        raise ValueError(f"hyper HSV needs >= 3 channels; got {data.shape[-1]}")
    angles, sat, value = _hyper_decompose(data, eps)
    out = np.concatenate([angles, sat[..., None], value[..., None]], axis=-1)
    return out.astype(np.float32)


def hyper_hue_data(data: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Hue angles only: ``C - 2`` channels, invariant to gain and gray offset."""
    if data.shape[-1] < 3:
        raise ValueError(f"hyper hue needs >= 3 channels; got {data.shape[-1]}")
    angles, _, _ = _hyper_decompose(data, eps)
    return angles.astype(np.float32)


def hyper_hsv_inverse_data(data: np.ndarray) -> np.ndarray:
    """Reconstruct spectra from ``[angles, S, V]`` rows (inverse of
    :func:`hyper_hsv_data`)."""
    c = data.shape[-1]
    if c < 3:
        raise ValueError(f"hyper HSV inverse needs >= 3 channels; got {c}")
    x = data.astype(np.float64)
    angles, sat, value = x[..., : c - 2], x[..., c - 2], x[..., c - 1]
    w = _spherical_point(angles)
    perp = sat[..., None] * (w @ helmert_basis(c))
    return (value[..., None] + perp).astype(np.float32)


# --------------------------------------------------------------------------
# Cube-level API
# --------------------------------------------------------------------------

def transform_pixels(kind: Preproc, data: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Apply ``kind`` to an ``(..., C)`` array of spectra."""
    kind = Preproc(kind)
    if kind is Preproc.NONE:
        return data
    if kind is Preproc.FIRST_DERIV:
        return first_derivative_data(data)
    if kind is Preproc.SECOND_DERIV:
        return second_derivative_data(data)
    if kind is Preproc.LOG_DERIV:
        out, guarded = log_derivative_data(data, eps)
        if guarded:
            logger.warning("log derivative clamped %d near-zero denominator(s)", guarded)
        return out
    if kind is Preproc.SPECTRAL_NORM:
        return spectral_norm_data(data)
    if kind is Preproc.HYPER_HUE:
        return hyper_hue_data(data, eps)
    return hyper_hsv_data(data, eps)


def _output_wavelengths(kind: Preproc, cube: HSCube):
    if cube.wavelengths is None:
        return None
    if kind is Preproc.SPECTRAL_NORM:
        return cube.wavelengths
    if kind in (Preproc.FIRST_DERIV, Preproc.LOG_DERIV):
        return cube.wavelengths[1:]
    if kind is Preproc.SECOND_DERIV:
        return cube.wavelengths[2:]
    return None  # hue angles are not wavelength-indexed


def first_derivative(cube: HSCube) -> HSCube:
    return apply(Preproc.FIRST_DERIV, cube)


def second_derivative(cube: HSCube) -> HSCube:
    return apply(Preproc.SECOND_DERIV, cube)


def log_derivative(cube: HSCube, eps: float = DEFAULT_EPS) -> HSCube:
    return apply(Preproc.LOG_DERIV, cube, eps)


def spectral_norm(cube: HSCube) -> HSCube:
    return apply(Preproc.SPECTRAL_NORM, cube)


def hyper_hue(cube: HSCube, eps: float = DEFAULT_EPS) -> HSCube:
    return apply(Preproc.HYPER_HUE, cube, eps)


def hyper_hsv(cube: HSCube, eps: float = DEFAULT_EPS) -> HSCube:
    return apply(Preproc.HYPER_HSV, cube, eps)


def hyper_hsv_inverse(cube: HSCube) -> HSCube:
    """Spectra reconstructed from a :func:`hyper_hsv` cube."""
    return HSCube(hyper_hsv_inverse_data(cube.data))


def apply(kind: Preproc, cube: HSCube, eps: float = DEFAULT_EPS) -> HSCube:
    """Dispatch a transform over a cube; ``Preproc.NONE`` is the identity."""
    kind = Preproc(kind)
    if eps <= 0:
        raise ValueError(f"eps must be positive; got {eps}")
    if kind is Preproc.NONE:
        return cube
    if cube.channels < _min_channels(kind):
        raise ValueError(
            f"{kind.value} needs >= {_min_channels(kind)} channels; cube has {cube.channels}"
        )
    return HSCube(transform_pixels(kind, cube.data, eps), _output_wavelengths(kind, cube))
