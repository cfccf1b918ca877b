"""Training over random tiles and seam-free overlap-tiled inference.

The tiling contract: a model whose deepest influence reaches ``r`` pixels
(the receptive-field radius) produces, on any window padded with zeros,
exactly the same values strictly more than ``r`` pixels away from the
window's cut edges as it would on the whole image. Tiling with an overlap
margin of at least ``r`` and keeping only each tile's central region is
therefore *exactly* equivalent to whole-image inference; at the image
border the tile's own zero padding coincides with the whole image's.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cube import HSCube, LabelMask
from .metrics import confusion, macro, per_class
from .models import Model, predict
from .nn import (
    AdamState,
    activation_backward,
    activation_forward,
    adam_step,
    conv2d_backward,
    conv2d_forward,
    softmax_xent,
)
from .preprocess import Preproc, output_channels, spectral_norm_data, transform_pixels


def receptive_field_radius(model: Model) -> int:
    """Pixels of spatial influence: sum of ``floor(k/2)`` over the layers."""
    return sum(max(layer.kh, layer.kw) // 2 for layer in model.layers)


@dataclass(frozen=True)
class TileGrid:
    """Core-region origins that partition an image exactly once.

    Each core block is ``tile_size - 2 * margin`` on a side (clipped at the
    bottom/right edges); the tile read for a core extends ``margin`` pixels
    beyond it on every side, clipped to the image.
    """

    height: int
    width: int
    tile_size: int
    margin: int
    origins: tuple[tuple[int, int], ...]

    @property
    def stride(self) -> int:
        return self.tile_size - 2 * self.margin

    @classmethod
    def cover(cls, height: int, width: int, tile_size: int, margin: int) -> "TileGrid":
        if margin < 0:
            raise ValueError(f"margin must be >= 0; got {margin}")
        if tile_size <= 2 * margin:
            raise ValueError(
                f"tile size {tile_size} leaves no central region at margin {margin}"
            )
        stride = tile_size - 2 * margin
        origins = tuple(
            (y, x) for y in range(0, height, stride) for x in range(0, width, stride)
        )
        return cls(height, width, tile_size, margin, origins)

    def core(self, origin: tuple[int, int]) -> tuple[slice, slice]:
        y, x = origin
        return (slice(y, min(y + self.stride, self.height)),
                slice(x, min(x + self.stride, self.width)))

    def window(self, origin: tuple[int, int]) -> tuple[slice, slice]:
        ys, xs = self.core(origin)
        return (slice(max(ys.start - self.margin, 0), min(ys.stop + self.margin, self.height)),
                slice(max(xs.start - self.margin, 0), min(xs.stop + self.margin, self.width)))


def infer_tiled(model: Model, cube: HSCube, tile_size: int = 256,
                margin: int | None = None) -> LabelMask:
    """Whole-cube prediction from overlapping tiles, keeping core regions only.

    ``margin`` defaults to the model's receptive-field radius and may not be
    smaller; with that guarantee the result is identical to running the model
    on the entire image at once.
    """
    radius = receptive_field_radius(model)
    if margin is None:
        margin = radius
    if margin < radius:
        raise ValueError(
            f"margin {margin} is smaller than the model's receptive-field "
            f"radius {radius}; seams would differ from whole-image inference"
        )
    if cube.channels != model.input_channels:
        raise ValueError(
            f"cube has {cube.channels} channels; model expects {model.input_channels}"
        )
    grid = TileGrid.cover(cube.height, cube.width, tile_size, margin)
    out = np.zeros((cube.height, cube.width), dtype=np.uint8)
    for origin in grid.origins:
        ys, xs = grid.core(origin)
        wy, wx = grid.window(origin)
        tile_pred = predict(model, cube.data[wy, wx, :])
        out[ys, xs] = tile_pred[
            ys.start - wy.start : ys.stop - wy.start,
            xs.start - wx.start : xs.stop - wx.start,
        ]
    return LabelMask(out)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; a fixed seed makes the whole run reproducible."""

    epochs: int
    tiles_per_epoch: int = 32
    tile_size: int = 256
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    preproc: Preproc = Preproc.NONE
    train_frozen: bool = False

    def __post_init__(self):
        if self.epochs < 0 or self.tiles_per_epoch < 1 or self.tile_size < 1:
            raise ValueError(
                f"bad schedule: epochs={self.epochs}, tiles_per_epoch="
                f"{self.tiles_per_epoch}, tile_size={self.tile_size}"
            )
        object.__setattr__(self, "preproc", Preproc(self.preproc))


@dataclass
class Dataset:
    """Training scenes plus an optional validation split."""

    train: list[tuple[HSCube, LabelMask]]
    val: list[tuple[HSCube, LabelMask]] = field(default_factory=list)


def _forward_training(model: Model, x: np.ndarray):
    if model.normalize_input:
        x = spectral_norm_data(x)
    inputs, outputs = [], []
    for layer in model.layers:
        inputs.append(x)
        x = activation_forward(layer.activation, conv2d_forward(x, layer))
        outputs.append(x)
    return x, inputs, outputs


def _backward_training(model: Model, inputs, outputs, grad_logits):
    grads = []
    grad = grad_logits
    for layer, x_in, x_out in zip(reversed(model.layers), reversed(inputs), reversed(outputs)):
        grad = activation_backward(layer.activation, x_out, grad)
        grad, gw, gb = conv2d_backward(x_in, layer, grad)
        grads.append((gw, gb))
    grads.reverse()
    flat = []
    for gw, gb in grads:
        flat.extend((gw, gb))
    return flat


def _pad_to(data: np.ndarray, labels: np.ndarray, size: int):
    h, w = labels.shape
    if h >= size and w >= size:
        return data, labels
    ph, pw = max(h, size), max(w, size)
    data_p = np.zeros((ph, pw, data.shape[2]), dtype=data.dtype)
    data_p[:h, :w] = data
    labels_p = np.zeros((ph, pw), dtype=labels.dtype)
    labels_p[:h, :w] = labels
    return data_p, labels_p


def _snapshot(model: Model) -> list[np.ndarray]:
    return [arr.copy() for layer in model.layers for arr in (layer.weights, layer.biases)]


def _restore(model: Model, snapshot: list[np.ndarray]) -> None:
    params = [arr for layer in model.layers for arr in (layer.weights, layer.biases)]
    for dst, src in zip(params, snapshot):
        np.copyto(dst, src)


def validation_iou(model: Model, scenes, preproc: Preproc, tile_size: int) -> float:
    """Macro IoU over a list of (cube, mask) scenes."""
    n = model.n_classes
    conf = np.zeros((n, n), dtype=np.int64)
    radius = receptive_field_radius(model)
    for cube, mask in scenes:
        data = transform_pixels(preproc, cube.data)
        pred = infer_tiled(model, HSCube(data), max(tile_size, 2 * radius + 1), radius)
        conf += confusion(pred, mask, n)
    return float(macro(per_class(conf))[0])


def train(model: Model, dataset: Dataset, config: TrainConfig):
    """Adam over uniformly random training tiles; returns the weights of the
    best validation epoch plus the per-epoch (loss, validation IoU) curve.

    Each step samples a random scene and a random in-bounds tile origin,
    applies the configured pre-processing, and takes one cross-entropy /
    Adam step. Scenes smaller than the tile are zero-padded (padding reads
    as background). A non-finite loss aborts with the failing step index.
    """
    if not dataset.train:
        raise ValueError("training dataset is empty")
    if not model.trainable and not config.train_frozen:
        raise ValueError(
            f"{model.kind} weights are frozen by default; set "
            f"TrainConfig.train_frozen=True to optimize them anyway"
        )
    radius = receptive_field_radius(model)
    if config.tile_size < 2 * radius + 1:
        raise ValueError(
            f"tile size {config.tile_size} is smaller than twice the "
            f"receptive-field radius ({radius}) plus one"
        )
    for cube, mask in dataset.train + dataset.val:
        want = output_channels(config.preproc, cube.channels)
        if want != model.input_channels:
            raise ValueError(
                f"{config.preproc.value} of a {cube.channels}-channel cube has "
                f"{want} channels; model expects {model.input_channels}"
            )
        if (cube.height, cube.width) != (mask.height, mask.width):
            raise ValueError("cube and mask dimensions differ")

    curve: list[tuple[int, float, float]] = []
    if config.epochs == 0:
        return model, curve

    rng = np.random.default_rng(config.seed)
    prepared = []
    for cube, mask in dataset.train:
        data = transform_pixels(config.preproc, cube.data)
        prepared.append(_pad_to(data, mask.labels, config.tile_size))
    val_prepared = [
        (HSCube(transform_pixels(config.preproc, cube.data)), mask)
        for cube, mask in dataset.val
    ]

    params = [arr for layer in model.layers for arr in (layer.weights, layer.biases)]
    state = AdamState.init(params, config.lr, config.beta1, config.beta2, config.adam_eps)
    t = config.tile_size
    best_iou = -np.inf
    best_weights: list[np.ndarray] | None = None
    step = 0
    for epoch in range(1, config.epochs + 1):
        losses = []
        for _ in range(config.tiles_per_epoch):
            step += 1
            data, labels = prepared[int(rng.integers(len(prepared)))]
            y0 = int(rng.integers(data.shape[0] - t + 1))
            x0 = int(rng.integers(data.shape[1] - t + 1))
            tile = data[y0 : y0 + t, x0 : x0 + t]
            target = labels[y0 : y0 + t, x0 : x0 + t]
            logits, inputs, outputs = _forward_training(model, tile)
            loss, grad_logits = softmax_xent(logits, target)
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite training loss at step {step}")
            losses.append(loss)
            grads = _backward_training(model, inputs, outputs, grad_logits)
            adam_step(params, grads, state)
        if val_prepared:
            val_iou = validation_iou(model, val_prepared, Preproc.NONE, t)
            if val_iou > best_iou:
                best_iou = val_iou
                best_weights = _snapshot(model)
        else:
            val_iou = float("nan")
        curve.append((epoch, float(np.mean(losses)), val_iou))
    if best_weights is not None:
        _restore(model, best_weights)
    return model, curve
