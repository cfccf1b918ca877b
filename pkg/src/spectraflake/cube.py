"""Hyper-spectral cube container, ENVI-style file I/O, PGM mask I/O and
bright/dark reflectance correction.

The canonical in-memory layout is ``(y, x, c)`` row-major so that the
spectral vector of a pixel is contiguous; all file interleaves are converted
on read. Scalars are stored as 32-bit floats; means and other accumulations
run in 64-bit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_CLASS_NAMES = ("BG", "PE", "PP", "PS", "PET")

#: ENVI numeric type codes accepted on read (uint8, float32, uint16).
_ENVI_DTYPES = {1: np.dtype("u1"), 4: np.dtype("<f4"), 12: np.dtype("<u2")}
_INTERLEAVES = ("bil", "bip", "bsq")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HSCube:
    """A hyper-spectral cube: reflectance (or raw DN) values on a
    ``(height, width, channels)`` grid, plus optional per-channel
    wavelengths in nm.

    Values are float32, finite, and immutable after construction.
    """

    data: np.ndarray
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"cube data must be 3-D (y, x, c); got shape {data.shape}")
        if data.size and not np.isfinite(data).all():
            raise ValueError("cube data contains non-finite values")
        object.__setattr__(self, "data", _freeze(data))
        if self.wavelengths is not None:
            wl = np.ascontiguousarray(self.wavelengths, dtype=np.float64)
            if wl.ndim != 1 or wl.size != data.shape[2]:
                raise ValueError(
                    f"wavelength list must have one entry per channel "
                    f"({data.shape[2]}); got {wl.shape}"
                )
            if wl.size > 1 and not np.all(np.diff(wl) > 0):
                raise ValueError("wavelengths must be strictly increasing")
            object.__setattr__(self, "wavelengths", _freeze(wl))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel class indices (0 = background) on a ``(height, width)`` grid."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if labels.ndim != 2:
            raise ValueError(f"mask must be 2-D; got shape {labels.shape}")
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered class names; index 0 is always the background class."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        if not names:
            raise ValueError("catalog needs at least one class")
        if len(set(names)) != len(names):
            raise ValueError(f"class names must be unique: {names}")
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return len(self.names)


def default_catalog() -> ClassCatalog:
    """BG plus the four polymer classes PE, PP, PS, PET."""
    return ClassCatalog(DEFAULT_CLASS_NAMES)


@dataclass(frozen=True)
class ReferenceProfile:
    """Column-averaged bright and dark reference frames, ``(width, channels)``
    each, used to map raw DN to reflectance."""

    bright: np.ndarray
    dark: np.ndarray

    def __post_init__(self):
        bright = np.ascontiguousarray(self.bright, dtype=np.float64)
        dark = np.ascontiguousarray(self.dark, dtype=np.float64)
        if bright.ndim != 2 or bright.shape != dark.shape:
            raise ValueError(
                f"bright and dark profiles must share a (width, channels) shape; "
                f"got {bright.shape} vs {dark.shape}"
            )
        object.__setattr__(self, "bright", _freeze(bright))
        object.__setattr__(self, "dark", _freeze(dark))

    @property
    def width(self) -> int:
        return self.bright.shape[0]

    @property
    def channels(self) -> int:
        return self.bright.shape[1]

    @classmethod
    def from_cubes(cls, bright_raw: HSCube, dark_raw: HSCube) -> "ReferenceProfile":
        return cls(column_mean(bright_raw), column_mean(dark_raw))


def column_mean(reference_raw: HSCube) -> np.ndarray:
    """Average a reference cube over its scan (y) axis.

    Line-scan cameras see each spatial column with its own optics and sensor
    row, so references are reduced per column: the result is a
    ``(width, channels)`` float64 grid where ``out[x, c]`` is the mean of
    ``raw[:, x, c]``.
    """
    if reference_raw.height < 1:
        raise ValueError("reference cube must have height >= 1 to average columns")
    return reference_raw.data.mean(axis=0, dtype=np.float64)


def reflectance_correct(
    raw: HSCube, refs: ReferenceProfile, eps: float = 1e-6
) -> tuple[HSCube, int]:
    """Convert a raw DN cube to reflectance using bright/dark references.

    ``out[y, x, c] = (raw[y, x, c] - dark[x, c]) / max(bright[x, c] - dark[x, c], eps)``

    The ``eps`` clamp keeps the output finite where the bright reference does
    not exceed the dark one (dead or saturated sensor columns). Returns the
    corrected cube and the number of clamped ``(x, c)`` positions; a count of
    zero means the correction ran warning-free.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive; got {eps}")
    if raw.width != refs.width or raw.channels != refs.channels:
        raise ValueError(
            f"cube ({raw.width} cols x {raw.channels} ch) does not match reference "
            f"profile ({refs.width} cols x {refs.channels} ch)"
        )
    span = refs.bright - refs.dark
    clamped = int(np.count_nonzero(span < eps))
    denom = np.maximum(span, eps)
    out = (raw.data.astype(np.float64) - refs.dark[None, :, :]) / denom[None, :, :]
    return HSCube(out.astype(np.float32), raw.wavelengths), clamped


# --------------------------------------------------------------------------
# ENVI-style header + raw binary I/O
# --------------------------------------------------------------------------

def _parse_header_text(text: str, path: Path) -> dict[str, str]:
    # 'key = value' lines; a '{ ... }' value may span lines.
    body = re.sub(r"^\s*ENVI\s*", "", text, count=1)
    fields: dict[str, str] = {}
    pattern = re.compile(r"^([a-zA-Z][a-zA-Z0-9 _]*?)\s*=\s*(\{[^}]*\}|[^\n]*)$", re.M | re.S)
    for match in pattern.finditer(body):
        key = " ".join(match.group(1).lower().split())
        fields[key] = match.group(2).strip()
    if not fields:
        raise ValueError(f"{path}: no 'key = value' fields found in header")
    return fields


def _header_int(fields: dict[str, str], key: str, path: Path) -> int:
    if key not in fields:
        raise ValueError(f"{path}: header missing required field '{key}'")
    try:
        return int(fields[key])
    except ValueError:
        raise ValueError(
            f"{path}: header field '{key}' is not an integer: {fields[key]!r}"
        ) from None


def _find_raw_file(header_path: Path) -> Path:
    base = str(header_path)
    if base.endswith(".hdr"):
        base = base[: -len(".hdr")]
    for candidate in (base, base + ".raw", base + ".img", base + ".dat"):
        path = Path(candidate)
        if path.exists() and path != header_path:
            return path
    raise FileNotFoundError(f"no raw companion file found for header {header_path}")


def read_envi(header_path) -> HSCube:
    """Read an ENVI-style header/raw pair into a canonical ``(y, x, c)`` cube.

    Required header fields: ``samples``, ``lines``, ``bands``, ``data type``
    (1 = uint8, 12 = uint16, 4 = float32) and ``interleave`` (bil/bip/bsq).
    Integer DN values are converted to float32 without rescaling.
    """
    header_path = Path(header_path)
    if not header_path.exists():
        raise FileNotFoundError(f"header file not found: {header_path}")
    fields = _parse_header_text(header_path.read_text(), header_path)

    width = _header_int(fields, "samples", header_path)
    height = _header_int(fields, "lines", header_path)
    channels = _header_int(fields, "bands", header_path)
    type_code = _header_int(fields, "data type", header_path)
    if type_code not in _ENVI_DTYPES:
        raise ValueError(
            f"{header_path}: header field 'data type' has unsupported code {type_code} "
            f"(supported: {sorted(_ENVI_DTYPES)})"
        )
    dtype = _ENVI_DTYPES[type_code]
    if "interleave" not in fields:
        raise ValueError(f"{header_path}: header missing required field 'interleave'")
    interleave = fields["interleave"].lower()
    if interleave not in _INTERLEAVES:
        raise ValueError(
            f"{header_path}: header field 'interleave' must be one of "
            f"{_INTERLEAVES}; got {interleave!r}"
        )
    if "byte order" in fields and _header_int(fields, "byte order", header_path) == 1:
        dtype = dtype.newbyteorder(">")

    wavelengths = None
    if "wavelength" in fields:
        raw_list = fields["wavelength"].strip()
        if not (raw_list.startswith("{") and raw_list.endswith("}")):
            raise ValueError(
                f"{header_path}: header field 'wavelength' must be a {{...}} list"
            )
        try:
            wavelengths = np.array(
                [float(tok) for tok in raw_list[1:-1].split(",") if tok.strip()],
                dtype=np.float64,
            )
        except ValueError:
            raise ValueError(
                f"{header_path}: header field 'wavelength' contains a non-numeric entry"
            ) from None

    raw_path = _find_raw_file(header_path)
    expected_bytes = height * width * channels * dtype.itemsize
    actual_bytes = raw_path.stat().st_size
    if actual_bytes != expected_bytes:
        raise ValueError(
            f"{raw_path}: raw file size mismatch: expected {expected_bytes} bytes "
            f"({height}x{width}x{channels} x {dtype.itemsize}B), found {actual_bytes}"
        )
    flat = np.fromfile(raw_path, dtype=dtype)

    if interleave == "bsq":
        data = flat.reshape(channels, height, width).transpose(1, 2, 0)
    elif interleave == "bil":
        data = flat.reshape(height, channels, width).transpose(0, 2, 1)
    else:  # bip
        data = flat.reshape(height, width, channels)
    return HSCube(data.astype(np.float32), wavelengths)


def write_envi(cube: HSCube, base_path, interleave: str = "bil") -> None:
    """Write ``base_path + '.hdr'`` / ``base_path + '.raw'`` (float32 LE)."""
    if interleave not in _INTERLEAVES:
        raise ValueError(f"interleave must be one of {_INTERLEAVES}; got {interleave!r}")
    if cube.height == 0 or cube.width == 0 or cube.channels == 0:
        raise ValueError(f"refusing to write cube with an empty dimension: "
                         f"{cube.data.shape}")
    base = str(base_path)
    lines = [
        "ENVI",
        f"samples = {cube.width}",
        f"lines = {cube.height}",
        f"bands = {cube.channels}",
        "header offset = 0",
        "data type = 4",
        f"interleave = {interleave}",
        "byte order = 0",
    ]
    if cube.wavelengths is not None:
        values = ", ".join(repr(float(w)) for w in cube.wavelengths)
        lines.append(f"wavelength = {{ {values} }}")
    Path(base + ".hdr").write_text("\n".join(lines) + "\n")

    if interleave == "bsq":
        ordered = cube.data.transpose(2, 0, 1)
    elif interleave == "bil":
        ordered = cube.data.transpose(0, 2, 1)
    else:
        ordered = cube.data
    np.ascontiguousarray(ordered, dtype="<f4").tofile(base + ".raw")


# --------------------------------------------------------------------------
# PGM (P5) mask I/O
# --------------------------------------------------------------------------

def read_mask(path, n_classes: int | None = None) -> LabelMask:
    """Read a binary PGM (P5) mask whose pixel values are class indices.

    When ``n_classes`` is given, any pixel value >= ``n_classes`` is an error.
    """
    blob = Path(path).read_bytes()
    if not blob.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM file (magic is not 'P5')")
    # Tokenize the header: magic, width, height, maxval; '#' starts a comment.
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ValueError(f"{path}: non-numeric PGM header fields {tokens[1:]}") from None
    if maxval > 255:
        raise ValueError(f"{path}: PGM maxval {maxval} exceeds the 1-byte limit (255)")
    raster = blob[pos:pos + width * height]
    if len(raster) != width * height:
        raise ValueError(
            f"{path}: PGM raster size mismatch: expected {width * height} bytes, "
            f"found {len(raster)}"
        )
    labels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    if n_classes is not None and labels.size and int(labels.max()) >= n_classes:
        raise ValueError(
            f"{path}: mask contains class index {int(labels.max())} but only "
            f"{n_classes} classes are defined"
        )
    return LabelMask(labels)


def write_mask(mask: LabelMask, path) -> None:
    """Write a binary PGM (P5, maxval 255) mask; round-trips exactly."""
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + mask.labels.tobytes())
