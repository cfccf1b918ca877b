"""Segmentation model constructors, the classic spectral-angle oracle,
complexity accounting and weight-file serialization.

Five model kinds are provided:

* ``samnet`` / ``samnet3``: a single convolution whose filters are unit-norm
  class reference spectra; inference takes the cosine score of the
  spectrally normalized input and picks the best class. Weights are frozen
  by default (they are statistics, not learned parameters).
* ``mlpnet``: three 1x1 convolutions (a per-pixel MLP) with TanH hidden
  activations and a softmax head.
* ``plasticnet`` / ``plasticnetxl``: three spatial convolutions with growing
  footprint and halving channel counts, ReLU activations, then a 1x1
  classifier and softmax head. The XL variant roughly doubles the footprint.

Channel pyramids are derived from the actual input width, so models stack
directly on any pre-processing transform's output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cube import ClassCatalog, HSCube, LabelMask
from .nn import ConvLayer, activation_forward, conv2d_forward, glorot_uniform, softmax
from .preprocess import spectral_norm_data

MODEL_KINDS = ("samnet", "samnet3", "mlpnet", "plasticnet", "plasticnetxl")

_KIND_CODES = {kind: i + 1 for i, kind in enumerate(MODEL_KINDS)}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}
_ACT_CODES = {"linear": 0, "relu": 1, "tanh": 2}
_CODE_ACTS = {code: act for act, code in _ACT_CODES.items()}

_MAGIC = b"SFW1"


@dataclass(frozen=True)
class ReferenceSpectra:
    """Per-class mean spectra, ordered by ascending class index."""

    class_indices: tuple[int, ...]
    names: tuple[str, ...]
    spectra: np.ndarray  # (n_refs, channels) float32

    def __post_init__(self):
        spectra = np.ascontiguousarray(self.spectra, dtype=np.float32)
        if spectra.ndim != 2 or spectra.shape[0] != len(self.class_indices):
            raise ValueError(
                f"spectra must be (n_refs, channels) with one row per class; "
                f"got {spectra.shape} for {len(self.class_indices)} classes"
            )
        if len(self.names) != len(self.class_indices):
            raise ValueError("one name per class index is required")
        if list(self.class_indices) != sorted(set(self.class_indices)):
            raise ValueError(f"class indices must be unique and ascending: {self.class_indices}")
        if not np.isfinite(spectra).all():
            raise ValueError("reference spectra contain non-finite values")
        spectra.setflags(write=False)
        object.__setattr__(self, "spectra", spectra)
        object.__setattr__(self, "class_indices", tuple(int(i) for i in self.class_indices))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def channels(self) -> int:
        return self.spectra.shape[1]

    def __len__(self) -> int:
        return self.spectra.shape[0]


def compute_reference_spectra(
    scenes: Sequence[tuple[HSCube, LabelMask]],
    catalog: ClassCatalog,
    include_background: bool = True,
) -> ReferenceSpectra:
    """Average the spectra of labeled pixels, per class, over a training set."""
    if not scenes:
        raise ValueError("need at least one (cube, mask) pair")
    channels = scenes[0][0].channels
    n = catalog.n
    sums = np.zeros((n, channels), dtype=np.float64)
    counts = np.zeros(n, dtype=np.int64)
    for cube, mask in scenes:
        if cube.channels != channels:
            raise ValueError(
                f"all cubes must share a channel count; got {cube.channels} vs {channels}"
            )
        if (cube.height, cube.width) != (mask.height, mask.width):
            raise ValueError(
                f"mask {mask.labels.shape} does not match cube "
                f"{(cube.height, cube.width)}"
            )
        flat = cube.data.reshape(-1, channels)
        labels = mask.labels.reshape(-1)
        for k in range(n):
            sel = labels == k
            counts[k] += int(sel.sum())
            if sel.any():
                sums[k] += flat[sel].sum(axis=0, dtype=np.float64)
    wanted = range(n) if include_background else range(1, n)
    indices, names, rows = [], [], []
    for k in wanted:
        if counts[k] == 0:
            raise ValueError(f"class {catalog.names[k]!r} has no labeled pixels")
        indices.append(k)
        names.append(catalog.names[k])
        rows.append(sums[k] / counts[k])
    return ReferenceSpectra(tuple(indices), tuple(names), np.array(rows, dtype=np.float32))


def _unit_rows(spectra: np.ndarray) -> np.ndarray:
    rows = spectra.astype(np.float64)
    norms = np.sqrt(np.sum(rows * rows, axis=1, keepdims=True))
    if np.any(norms == 0):
        raise ValueError("cannot normalize an all-zero reference spectrum")
    return (rows / norms).astype(np.float32)


def sam_classify_oracle(cube: HSCube, refs: ReferenceSpectra) -> LabelMask:
    """Classic per-pixel spectral angle classification.

    Every pixel gets the class of the reference with the smallest angle
    ``arccos(clip(cos))`` between the vectors; ties resolve to the lowest
    class index and zero-norm pixels go to background (0).
    """
    if refs.channels != cube.channels:
        raise ValueError(
            f"reference spectra have {refs.channels} channels; cube has {cube.channels}"
        )
    normalized = spectral_norm_data(cube.data).reshape(-1, cube.channels)
    units = _unit_rows(refs.spectra)
    # Accumulate in float64, store the cosine scores in float32: the same
    # precision staircase every model forward pass uses.
    cos = (normalized.astype(np.float64) @ units.astype(np.float64).T).astype(np.float32)
    angles = np.arccos(np.clip(cos.astype(np.float64), -1.0, 1.0))
    best = np.argmin(angles, axis=1)
    labels = np.asarray(refs.class_indices, dtype=np.uint8)[best]
    zero = np.max(np.abs(cube.data), axis=2).reshape(-1) == 0
    labels[zero] = 0
    return LabelMask(labels.reshape(cube.height, cube.width))


@dataclass
class Model:
    """An ordered convolution stack plus its decision head.

    ``head`` is ``"softmax"`` (channel softmax, trained with cross-entropy)
    or ``"cosine"`` (raw correlation scores of a spectrally normalized
    input). ``class_indices`` maps output channel -> class label when the
    model was built from a partial reference set; ``None`` means identity.
    """

    kind: str
    layers: list[ConvLayer]
    head: str = "softmax"
    normalize_input: bool = False
    trainable: bool = True
    class_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}; got {self.kind!r}")
        if self.head not in ("softmax", "cosine"):
            raise ValueError(f"head must be 'softmax' or 'cosine'; got {self.head!r}")
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.in_channels != prev.out_channels:
                raise ValueError(
                    f"layer chain broken: {prev.out_channels} outputs feed "
                    f"{nxt.in_channels} inputs"
                )
        if self.class_indices is not None and len(self.class_indices) != self.n_classes:
            raise ValueError(
                f"class_indices has {len(self.class_indices)} entries for "
                f"{self.n_classes} output channels"
            )

    @property
    def input_channels(self) -> int:
        return self.layers[0].in_channels

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_channels


def forward(model: Model, data: np.ndarray) -> np.ndarray:
    """Raw head-input scores ``(H, W, n_classes)`` for an ``(H, W, C)`` input."""
    x = spectral_norm_data(data) if model.normalize_input else data
    for layer in model.layers:
        x = activation_forward(layer.activation, conv2d_forward(x, layer))
    return x


def probabilities(model: Model, data: np.ndarray) -> np.ndarray:
    """Per-pixel class distribution (softmax over the forward scores)."""
    return softmax(forward(model, data))


def predict(model: Model, data: np.ndarray) -> np.ndarray:
    """Per-pixel class labels (uint8) for an ``(H, W, C)`` input."""
    scores = forward(model, data)
    best = np.argmax(scores, axis=2).astype(np.uint8)
    if model.class_indices is not None:
        best = np.asarray(model.class_indices, dtype=np.uint8)[best]
    return best


def build_samnet(refs: ReferenceSpectra, footprint: int = 1) -> Model:
    """Spectral-angle matching as a single convolution layer.

    Each class filter holds that class's reference spectrum, replicated over
    the spatial footprint for the 3x3 variant, and is normalized to unit
    Euclidean norm over the whole filter. Inference normalizes the input
    spectra, so the convolution output is exactly the cosine similarity
    (scaled by one global constant for footprint 3) and the arg-max class
    equals the smallest-angle class.
    """
    if footprint not in (1, 3):
        raise ValueError(f"unsupported footprint {footprint}; expected 1 or 3")
    n_refs, channels = refs.spectra.shape
    if footprint == 1:
        weights = _unit_rows(refs.spectra)[:, None, None, :]
        kind = "samnet"
    else:
        rep = np.broadcast_to(
            refs.spectra.astype(np.float64)[:, None, None, :], (n_refs, 3, 3, channels)
        )
        norms = np.sqrt(np.sum(rep * rep, axis=(1, 2, 3), keepdims=True))
        if np.any(norms == 0):
            raise ValueError("cannot normalize an all-zero reference spectrum")
        weights = (rep / norms).astype(np.float32)
        kind = "samnet3"
    indices = refs.class_indices
    identity = indices == tuple(range(n_refs))
    layer = ConvLayer(weights, np.zeros(n_refs, dtype=np.float32), "linear")
    return Model(
        kind=kind,
        layers=[layer],
        head="cosine",
        normalize_input=True,
        trainable=False,
        class_indices=None if identity else indices,
    )


def _closest_pow2(n: int) -> int:
    lo = 1 << (max(n, 1).bit_length() - 1)
    hi = lo * 2
    return lo if (n - lo) < (hi - n) else hi


def build_mlpnet(input_channels: int = 224, n_classes: int = 5, seed: int = 0) -> Model:
    """Per-pixel MLP as three 1x1 convolutions with TanH hidden activations.

    The first bank keeps the input width, the hidden bank uses the power of
    two closest to it, and the last bank maps to the classes.
    """
    if input_channels < 1:
        raise ValueError(f"input_channels must be >= 1; got {input_channels}")
    hidden = _closest_pow2(input_channels)
    rng = np.random.default_rng(seed)
    chain = [input_channels, input_channels, hidden, n_classes]
    layers = []
    for i, (cin, cout) in enumerate(zip(chain, chain[1:])):
        act = "linear" if i == len(chain) - 2 else "tanh"
        layers.append(
            ConvLayer(glorot_uniform(rng, cout, 1, 1, cin), np.zeros(cout, np.float32), act)
        )
    return Model(kind="mlpnet", layers=layers)


def build_plasticnet(
    input_channels: int = 224, n_classes: int = 5, xl: bool = False, seed: int = 0
) -> Model:
    """Three spatial convolutions with halving channel counts and growing
    footprint, then a 1x1 classifier."""
    kernels = (3, 7, 13) if xl else (3, 5, 7)
    c1 = max(1, input_channels // 2)
    c2 = max(1, c1 // 2)
    c3 = max(1, c2 // 2)
    chain = [(kernels[0], input_channels, c1), (kernels[1], c1, c2),
             (kernels[2], c2, c3), (1, c3, n_classes)]
    rng = np.random.default_rng(seed)
    layers = []
    for i, (k, cin, cout) in enumerate(chain):
        act = "linear" if i == len(chain) - 1 else "relu"
        layers.append(
            ConvLayer(glorot_uniform(rng, cout, k, k, cin), np.zeros(cout, np.float32), act)
        )
    return Model(kind="plasticnetxl" if xl else "plasticnet", layers=layers)


@dataclass(frozen=True)
class ComplexityReport:
    """Multiplies per output pixel and total parameter count."""

    ops_per_pixel: int
    parameters: int


def count_complexity(model: Model) -> ComplexityReport:
    """Exact multiply and parameter counts for a stack of convolutions.

    Every layer contributes ``O * kh * kw * Cin`` multiplies per pixel;
    parameters add one bias per filter on top of the weights.
    """
    ops = sum(l.out_channels * l.kh * l.kw * l.in_channels for l in model.layers)
    biases = sum(l.out_channels for l in model.layers)
    return ComplexityReport(ops_per_pixel=ops, parameters=ops + biases)


# --------------------------------------------------------------------------
# Weight files: magic 'SFW1', kind, layer count, then per layer
# (O, kh, kw, Cin, activation) as u32 LE plus float32 LE weights and biases.
# --------------------------------------------------------------------------

def save_weights(model: Model, path) -> None:
    if model.class_indices is not None:
        raise ValueError(
            "only models whose output channels map 1:1 onto class indices can "
            "be serialized; rebuild from a full reference set"
        )
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<I", _KIND_CODES[model.kind])
    blob += struct.pack("<I", len(model.layers))
    for layer in model.layers:
        blob += struct.pack(
            "<5I", layer.out_channels, layer.kh, layer.kw, layer.in_channels,
            _ACT_CODES[layer.activation],
        )
        blob += layer.weights.astype("<f4").tobytes()
        blob += layer.biases.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_weights(path) -> Model:
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}; expected {_MAGIC!r}")
    pos = 4

    def take(count: int) -> bytes:
        nonlocal pos
        if pos + count > len(blob):
            raise ValueError(
                f"{path}: truncated weight file (needed {pos + count} bytes, "
                f"have {len(blob)})"
            )
        chunk = blob[pos : pos + count]
        pos += count
        return chunk

    kind_code = struct.unpack("<I", take(4))[0]
    if kind_code not in _CODE_KINDS:
        raise ValueError(f"{path}: unknown model kind code {kind_code}")
    kind = _CODE_KINDS[kind_code]
    n_layers = struct.unpack("<I", take(4))[0]
    layers = []
    for _ in range(n_layers):
        o, kh, kw, cin, act_code = struct.unpack("<5I", take(20))
        if act_code not in _CODE_ACTS:
            raise ValueError(f"{path}: unknown activation code {act_code}")
        weights = np.frombuffer(take(4 * o * kh * kw * cin), dtype="<f4").reshape(
            o, kh, kw, cin
        )
        biases = np.frombuffer(take(4 * o), dtype="<f4")
        layers.append(ConvLayer(weights.copy(), biases.copy(), _CODE_ACTS[act_code]))
    if pos != len(blob):
        raise ValueError(f"{path}: {len(blob) - pos} trailing bytes after last layer")
    samlike = kind in ("samnet", "samnet3")
    return Model(
        kind=kind,
        layers=layers,
        head="cosine" if samlike else "softmax",
        normalize_input=samlike,
        trainable=not samlike,
    )


# --------------------------------------------------------------------------
# Reference spectra CSV
# --------------------------------------------------------------------------

def save_reference_spectra(refs: ReferenceSpectra, path) -> None:
    """One CSV row per class: index, name, then the spectrum values."""
    lines = ["class_index,class_name," + ",".join(f"c{i:03d}" for i in range(refs.channels))]
    for idx, name, row in zip(refs.class_indices, refs.names, refs.spectra):
        lines.append(f"{idx},{name}," + ",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_reference_spectra(path) -> ReferenceSpectra:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: no spectra rows found")
    indices, names, rows = [], [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) < 3:
            raise ValueError(f"{path}: malformed spectra row {ln!r}")
        indices.append(int(parts[0]))
        names.append(parts[1])
        rows.append([float(v) for v in parts[2:]])
    return ReferenceSpectra(tuple(indices), tuple(names), np.array(rows, dtype=np.float32))
