"""Deterministic synthetic flake scenes for end-to-end testing.

A scene is a dark flat background plus convex polygon "flakes", one smooth
positive signature spectrum per class, per-flake brightness multipliers,
optional saturated specular patches, i.i.d. spectral noise and a global
exposure factor applied last.

Exposure is modeled as pure multiplication of the finished reflectance
values. To make that multiplication exact in float32 even for a factor of
1/3, every value is first snapped to the grid ``3 * k * 2**-22`` (step
~7.2e-7, far below the noise floor): a scene rendered at exposure 1/3 is
then bitwise equal to one third of the exposure-1.0 scene, and any
scale-invariant transform of the two is bitwise identical. Real sensors add
signal-independent noise after the exposure change; this generator trades
that fidelity for an exactly testable invariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cube import DEFAULT_CLASS_NAMES, HSCube, LabelMask
from .models import ReferenceSpectra

_QUANTUM = 3.0 * 2.0 ** -22
_OCCUPANCY_CAP = 0.6


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for one generated scene; (seed, config) fixes every value."""

    seed: int = 0
    height: int = 128
    width: int = 128
    channels: int = 32
    n_classes: int = 5
    flakes_per_class: int = 3
    flake_size: tuple[float, float] = (14.0, 34.0)
    noise_sigma: float = 0.01
    specular_prob: float = 0.15
    exposure: float = 1.0

    def __post_init__(self):
        if self.exposure <= 0:
            raise ValueError(f"exposure factor must be positive; got {self.exposure}")
        if self.n_classes < 2:
            raise ValueError(f"need >= 2 classes (background + flakes); got {self.n_classes}")
        if self.height < 4 or self.width < 4 or self.channels < 1:
            raise ValueError(f"scene dimensions too small: "
                             f"{self.height}x{self.width}x{self.channels}")
        lo, hi = self.flake_size
        if not (0 < lo <= hi):
            raise ValueError(f"flake size range must satisfy 0 < lo <= hi; got {self.flake_size}")
        if hi + 3 > min(self.height, self.width):
            raise ValueError(
                f"largest flake ({hi}px) does not fit a {self.height}x{self.width} scene"
            )
        if self.noise_sigma < 0:
            raise ValueError(f"noise sigma must be >= 0; got {self.noise_sigma}")
        if not 0 <= self.specular_prob <= 1:
            raise ValueError(f"specular probability must be in [0, 1]; got {self.specular_prob}")
        if self.flakes_per_class < 0:
            raise ValueError(f"flakes per class must be >= 0; got {self.flakes_per_class}")


@dataclass(frozen=True)
class FlakeRecord:
    class_index: int
    vertices: tuple[tuple[float, float], ...]  # (y, x) corners, convex order
    pixels: int
    specular: bool


@dataclass(frozen=True)
class SceneRecord:
    """What was actually placed: per-flake polygons and the drop count."""

    flakes: tuple[FlakeRecord, ...]
    dropped: int

    def to_dict(self) -> dict:
        return {
            "dropped": self.dropped,
            "flakes": [
                {
                    "class_index": f.class_index,
                    "vertices": [[float(y), float(x)] for y, x in f.vertices],
                    "pixels": f.pixels,
                    "specular": f.specular,
                }
                for f in self.flakes
            ],
        }


def signature_library(seed: int, n_classes: int, channels: int) -> ReferenceSpectra:
    """Smooth positive per-class spectra with guaranteed mutual separation.

    Each flake class (indices 1 .. n_classes-1) gets a 0.6 baseline with 3-6
    Gaussian absorption dips; libraries whose closest pair of signatures
    falls under 0.05 rad of spectral angle are re-drawn (up to 100 times).
    """
    if n_classes < 2:
        raise ValueError(f"need >= 2 classes; got {n_classes}")
    if channels < 2:
        raise ValueError(f"need >= 2 channels; got {channels}")
    rng = np.random.default_rng(seed)
    n_flakes = n_classes - 1
    grid = np.arange(channels, dtype=np.float64)
    for _ in range(100):
        spectra = np.empty((n_flakes, channels), dtype=np.float64)
        for row in range(n_flakes):
            dipsum = np.zeros(channels)
            for _ in range(int(rng.integers(3, 7))):
                center = rng.uniform(0, channels - 1)
                width = rng.uniform(max(1.0, channels / 24), channels / 8)
                depth = rng.uniform(0.12, 0.4)
                dipsum += depth * np.exp(-0.5 * ((grid - center) / width) ** 2)
            peak = dipsum.max()
            if peak > 0.55:
                dipsum *= 0.55 / peak
            spectra[row] = 0.6 - dipsum
        units = spectra / np.linalg.norm(spectra, axis=1, keepdims=True)
        cos = np.clip(units @ units.T, -1.0, 1.0)
        angles = np.arccos(cos)
        worst = angles[~np.eye(n_flakes, dtype=bool)].min() if n_flakes > 1 else np.inf
        if worst >= 0.05:
            if n_classes == 5:
                names = DEFAULT_CLASS_NAMES[1:]
            else:
                names = tuple(f"C{k}" for k in range(1, n_classes))
            return ReferenceSpectra(
                tuple(range(1, n_classes)), names, spectra.astype(np.float32)
            )
    raise RuntimeError(
        f"could not draw {n_flakes} signatures with >= 0.05 rad separation "
        f"in 100 attempts (channels={channels})"
    )


def _convex_flake(rng: np.random.Generator, height: int, width: int,
                  size_range: tuple[float, float]) -> np.ndarray:
    """Vertices (nv, 2) of a random convex polygon fully inside the scene."""
    diameter = rng.uniform(*size_range)
    a = diameter / 2.0
    b = a * rng.uniform(0.55, 1.0)
    tilt = rng.uniform(0, np.pi)
    margin = a + 1.0
    cy = rng.uniform(margin, height - margin)
    cx = rng.uniform(margin, width - margin)
    nv = int(rng.integers(6, 13))
    t = np.sort(rng.uniform(0, 2 * np.pi, nv))
    ey, ex = a * np.sin(t), b * np.cos(t)
    ys = cy + ey * np.cos(tilt) + ex * np.sin(tilt)
    xs = cx - ey * np.sin(tilt) + ex * np.cos(tilt)
    return np.stack([ys, xs], axis=1)


def _rasterize_convex(vertices: np.ndarray, height: int, width: int) -> np.ndarray:
    """Boolean (H, W) mask of pixels whose centers fall inside the polygon."""
    ys, xs = vertices[:, 0], vertices[:, 1]
    # Normalize orientation so all interior cross products share one sign.
    area2 = np.sum(xs * np.roll(ys, -1) - np.roll(xs, -1) * ys)
    if area2 < 0:
        vertices = vertices[::-1]
        ys, xs = vertices[:, 0], vertices[:, 1]
    y0 = max(int(np.floor(ys.min())), 0)
    y1 = min(int(np.ceil(ys.max())) + 1, height)
    x0 = max(int(np.floor(xs.min())), 0)
    x1 = min(int(np.ceil(xs.max())) + 1, width)
    mask = np.zeros((height, width), dtype=bool)
    if y0 >= y1 or x0 >= x1:
        return mask
    py, px = np.meshgrid(
        np.arange(y0, y1) + 0.5, np.arange(x0, x1) + 0.5, indexing="ij"
    )
    inside = np.ones(py.shape, dtype=bool)
    for i in range(len(vertices)):
        ay, ax = vertices[i]
        by, bx = vertices[(i + 1) % len(vertices)]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        inside &= cross >= 0
    mask[y0:y1, x0:x1] = inside
    return mask


def generate_scene(
    config: SynthConfig, signatures: ReferenceSpectra
) -> tuple[HSCube, LabelMask, SceneRecord]:
    """Render one scene and its exact mask.

    Flakes are placed class by class in index order; a flake that would push
    total coverage past 60% of the scene is dropped (the count lands in the
    returned record). Later flakes overwrite earlier ones, labels included,
    so mask and cube always agree pixel for pixel.
    """
    n_flake_classes = config.n_classes - 1
    if signatures.class_indices != tuple(range(1, config.n_classes)):
        raise ValueError(
            f"signatures must cover classes 1..{n_flake_classes}; "
            f"got indices {signatures.class_indices}"
        )
    if signatures.channels != config.channels:
        raise ValueError(
            f"signatures have {signatures.channels} channels; scene wants {config.channels}"
        )
    rng = np.random.default_rng(config.seed)
    h, w, c = config.height, config.width, config.channels

    base = np.full((h, w, c), 0.05, dtype=np.float64)
    labels = np.zeros((h, w), dtype=np.uint8)
    specular_spectrum = 1.15 + 0.02 * np.linspace(-1.0, 1.0, c)

    flakes: list[FlakeRecord] = []
    dropped = 0
    occupied = 0
    cap = _OCCUPANCY_CAP * h * w
    for cls in range(1, config.n_classes):
        spectrum = signatures.spectra[cls - 1].astype(np.float64)
        for _ in range(config.flakes_per_class):
            # Every flake consumes the same number of random draws no matter
            # what gets rendered, so geometry is identical across configs
            # that differ only in exposure or specular settings.
            vertices = _convex_flake(rng, h, w, config.flake_size)
            poly = _rasterize_convex(vertices, h, w)
            multiplier = rng.uniform(0.7, 1.3)
            wants_specular = rng.random() < config.specular_prob
            patch_pick = rng.random()
            newly = int(np.count_nonzero(poly & (labels == 0)))
            if occupied + newly > cap:
                dropped += 1
                continue
            occupied += newly
            base[poly] = spectrum * multiplier
            labels[poly] = cls
            is_specular = False
            if wants_specular and poly.any():
                fy, fx = np.nonzero(poly)
                pick = min(int(patch_pick * len(fy)), len(fy) - 1)
                radius = np.sqrt(0.15 * len(fy) / np.pi)
                patch = poly & (
                    (np.arange(h)[:, None] - fy[pick]) ** 2
                    + (np.arange(w)[None, :] - fx[pick]) ** 2
                    <= radius**2
                )
                base[patch] = specular_spectrum
                is_specular = True
            flakes.append(
                FlakeRecord(
                    class_index=cls,
                    vertices=tuple((float(y), float(x)) for y, x in vertices),
                    pixels=int(poly.sum()),
                    specular=is_specular,
                )
            )
    if config.noise_sigma > 0:
        base += rng.normal(0.0, config.noise_sigma, size=(h, w, c))

    # Snap to the exposure-exact grid, then scale (see module docstring).
    quantized = np.rint(base / _QUANTUM) * _QUANTUM
    data = (quantized * config.exposure).astype(np.float32)
    wavelengths = np.linspace(900.0, 1700.0, c) if c > 1 else None
    cube = HSCube(data, wavelengths)
    return cube, LabelMask(labels), SceneRecord(tuple(flakes), dropped)
