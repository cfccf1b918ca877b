"""Dense 2-D convolution, activations, softmax cross-entropy and Adam.

Everything here operates on plain numpy arrays in ``(H, W, C)`` layout; dot
products and reductions always accumulate in float64. Results come back in
float32 (the pipeline's storage type) unless the input tensor is float64, in
which case full precision is kept: that is what makes finite-difference
verification of the gradients clean. The convolution is a same-size
zero-padded cross-correlation (weights are learned, so no kernel flipping),
evaluated as one matmul per kernel tap to keep memory flat. Summation order
is fixed, so results are reproducible and independent of BLAS thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("linear", "relu", "tanh")


@dataclass
class ConvLayer:
    """One bank of convolution filters plus an elementwise activation.

    ``weights`` has shape ``(out_channels, kh, kw, in_channels)`` with odd
    ``kh``/``kw``; ``biases`` has shape ``(out_channels,)``.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        b = np.ascontiguousarray(self.biases, dtype=np.float32)
        if w.ndim != 4:
            raise ValueError(f"weights must be (O, kh, kw, Cin); got shape {w.shape}")
        if w.shape[1] % 2 == 0 or w.shape[2] % 2 == 0:
            raise ValueError(f"kernel size must be odd; got {w.shape[1]}x{w.shape[2]}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"biases must be ({w.shape[0]},); got shape {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("layer parameters contain non-finite values")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}; got {self.activation!r}")
        self.weights = w
        self.biases = b

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[3]

    @property
    def kh(self) -> int:
        return self.weights.shape[1]

    @property
    def kw(self) -> int:
        return self.weights.shape[2]


def _padded(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    h, w, c = x.shape
    xp = np.zeros((h + kh - 1, w + kw - 1, c), dtype=np.float64)
    xp[kh // 2 : kh // 2 + h, kw // 2 : kw // 2 + w, :] = x
    return xp


def _out_dtype(x: np.ndarray):
    return np.float64 if x.dtype == np.float64 else np.float32


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Same-size zero-padded cross-correlation; activation NOT applied.

    ``out[y, x, o] = b[o] + sum_{dy,dx,c} in[y+dy-kh//2, x+dx-kw//2, c] * w[o,dy,dx,c]``
    with out-of-bounds input reading as zero.
    """
    if x.ndim != 3 or x.shape[2] != layer.in_channels:
        raise ValueError(
            f"input shape {x.shape} does not match layer input channels "
            f"({layer.in_channels})"
        )
    h, w = x.shape[:2]
    kh, kw = layer.kh, layer.kw
    w64 = layer.weights.astype(np.float64)
    xp = _padded(x, kh, kw)
    acc = np.zeros((h, w, layer.out_channels), dtype=np.float64)
    tmp = np.empty_like(acc)
    for dy in range(kh):
        for dx in range(kw):
            # batched (w, Cin) @ (Cin, O) over rows; the shifted window is a
            # view, so no per-tap copy of the padded input
            np.matmul(xp[dy : dy + h, dx : dx + w, :], w64[:, dy, dx, :].T, out=tmp)
            acc += tmp
    acc += layer.biases.astype(np.float64)
    return acc.astype(_out_dtype(x))


def conv2d_backward(
    x: np.ndarray, layer: ConvLayer, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of :func:`conv2d_forward` w.r.t. input, weights, biases."""
    if x.ndim != 3 or x.shape[2] != layer.in_channels:
        raise ValueError(
            f"input shape {x.shape} does not match layer input channels "
            f"({layer.in_channels})"
        )
    h, w = x.shape[:2]
    if grad_out.shape != (h, w, layer.out_channels):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match forward output "
            f"({h}, {w}, {layer.out_channels})"
        )
    kh, kw = layer.kh, layer.kw
    w64 = layer.weights.astype(np.float64)
    g = grad_out.astype(np.float64)
    xp = _padded(x, kh, kw)
    grad_w = np.empty_like(w64)
    grad_pad = np.zeros_like(xp)
    tmp = np.empty((h, w, layer.in_channels), dtype=np.float64)
    for dy in range(kh):
        for dx in range(kw):
            window = xp[dy : dy + h, dx : dx + w, :]
            grad_w[:, dy, dx, :] = np.tensordot(g, window, axes=([0, 1], [0, 1]))
            np.matmul(g, w64[:, dy, dx, :], out=tmp)
            grad_pad[dy : dy + h, dx : dx + w, :] += tmp
    grad_b = g.sum(axis=(0, 1))
    grad_x = grad_pad[kh // 2 : kh // 2 + h, kw // 2 : kw // 2 + w, :]
    dtype = _out_dtype(x)
    return grad_x.astype(dtype), grad_w.astype(dtype), grad_b.astype(dtype)


def activation_forward(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "linear":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(kind: str, out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Upstream gradient times the local derivative, written in terms of the
    activation's own output."""
    if kind == "relu":
        return grad_out * (out > 0)
    if kind == "tanh":
        return grad_out * (1.0 - out * out)
    if kind == "linear":
        return grad_out
    raise ValueError(f"unknown activation {kind!r}")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Channel-axis softmax, max-shifted for stability."""
    z = logits.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean per-pixel cross-entropy between channel softmax and target labels.

    Returns ``(loss, grad_logits)`` with ``grad = (softmax - onehot) / n_pixels``.
    """
    h, w, n = logits.shape
    if labels.shape != (h, w):
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    lab = np.asarray(labels)
    if lab.size and (int(lab.min()) < 0 or int(lab.max()) >= n):
        raise ValueError(
            f"labels must lie in [0, {n}); found range "
            f"[{int(lab.min())}, {int(lab.max())}]"
        )
    z = logits.astype(np.float64).reshape(-1, n)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    flat = lab.reshape(-1).astype(np.intp)
    rows = np.arange(z.shape[0])
    loss = float(np.mean(lse - z[rows, flat]))
    probs = np.exp(z - lse[:, None])
    probs[rows, flat] -= 1.0
    grad = (probs / z.shape[0]).reshape(h, w, n).astype(_out_dtype(logits))
    return loss, grad


@dataclass
class AdamState:
    """First/second moment buffers plus step count for one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            lr=lr, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> list[np.ndarray]:
    """Standard bias-corrected Adam update, applied in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(
            f"parameter/gradient/state length mismatch: {len(params)}, "
            f"{len(grads)}, {len(state.m)}"
        )
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def glorot_uniform(rng: np.random.Generator, out_channels: int, kh: int, kw: int,
                   in_channels: int) -> np.ndarray:
    """Symmetric uniform init with limit sqrt(6 / (fan_in + fan_out))."""
    fan_in = kh * kw * in_channels
    fan_out = kh * kw * out_channels
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(out_channels, kh, kw, in_channels)).astype(
        np.float32
    )
