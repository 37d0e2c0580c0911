"""Forward and backward passes for every layer the fish models use.

Convolution is lowered to one matrix multiply: ``im2col`` unrolls each
receptive field into a column, the filter bank becomes a row matrix, and the
product goes through the tiled GEMM core.  Pooling, ReLU, dropout, and the
fully-connected/softmax head follow the usual from-scratch formulations.

Layer objects cache whatever the backward pass needs only when ``forward``
runs with ``training=True``; calling ``backward`` without such a forward is an
error.  In eval mode layers are pure functions and networks are safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import gemm


@dataclass(frozen=True)
class ConvSpec:
    """Filter-bank geometry: K filters of kh*kw, stride, symmetric zero pad."""

    out_channels: int
    kernel: tuple[int, int]
    stride: int = 1
    padding: int = 0

    def __post_init__(self) -> None:
        kh, kw = self.kernel
        if self.out_channels < 1:
            raise ValueError("out_channels must be >= 1")
        if kh < 1 or kw < 1:
            raise ValueError(f"kernel dims must be >= 1, got {self.kernel}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")


@dataclass(frozen=True)
class PoolSpec:
    """2x2 window, stride 2, aggregated with max or mean."""

    window: tuple[int, int] = (2, 2)
    stride: int = 2
    mode: str = "max"

    def __post_init__(self) -> None:
        if self.window != (2, 2) or self.stride != 2:
            raise ValueError("only 2x2 windows with stride 2 are supported")
        if self.mode not in ("max", "mean"):
            raise ValueError(f"mode must be 'max' or 'mean', got {self.mode!r}")


def conv_output_hw(h: int, w: int, spec: ConvSpec) -> tuple[int, int]:
    """Output spatial dims: H' = (H + 2p - kh)/s + 1, which must divide evenly."""
    kh, kw = spec.kernel
    num_h = h + 2 * spec.padding - kh
    num_w = w + 2 * spec.padding - kw
    if num_h < 0 or num_w < 0 or num_h % spec.stride or num_w % spec.stride:
        raise ValueError(
            f"kernel {spec.kernel} with stride {spec.stride} does not tile a "
            f"{h}x{w} input at padding {spec.padding}; adjust the padding"
        )
    return num_h // spec.stride + 1, num_w // spec.stride + 1


def im2col(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Unroll receptive fields of an NCHW batch into a (C*kh*kw, N*H'*W') matrix.

    Column p holds the flattened patch for output position p (samples first,
    then output rows, then output columns); rows run channel-major over the
    patch, matching filters flattened as K x (C*kh*kw).
    """
    n, c, h, w = x.shape
    kh, kw = spec.kernel
    h2, w2 = conv_output_hw(h, w, spec)
    if spec.padding:
        pad = spec.padding
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, :: spec.stride, :: spec.stride]
    cols = windows.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, n * h2 * w2)
    return np.ascontiguousarray(cols)


def col2im(dcols: np.ndarray, x_shape, spec: ConvSpec) -> np.ndarray:
    """Scatter-add column gradients back onto the (padded) input grid."""
    n, c, h, w = x_shape
    kh, kw = spec.kernel
    h2, w2 = conv_output_hw(h, w, spec)
    pad = spec.padding
    s = spec.stride
    patches = dcols.reshape(c, kh, kw, n, h2, w2)
    dx = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for ki in range(kh):
        for kj in range(kw):
            dx[:, :, ki : ki + s * h2 : s, kj : kj + s * w2 : s] += (
                patches[:, ki, kj].transpose(1, 0, 2, 3)
            )
    if pad:
        dx = dx[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(dx)


def _conv_from_cols(cols, n, h2, w2, weights, bias):
    k = weights.shape[0]
    wmat = weights.reshape(k, -1)
    out = gemm.matmul(wmat, cols) + bias[:, None]
    return np.ascontiguousarray(out.reshape(k, n, h2, w2).transpose(1, 0, 2, 3))


def conv2d_forward(
    x: np.ndarray, weights: np.ndarray, bias: np.ndarray, spec: ConvSpec
) -> np.ndarray:
    """Convolve an NCHW batch with a K*C*kh*kw filter bank via im2col + GEMM."""
    if weights.shape[1] != x.shape[1]:
        raise ValueError(
            f"filter channels {weights.shape[1]} do not match input "
            f"channels {x.shape[1]}"
        )
    n = x.shape[0]
    h2, w2 = conv_output_hw(x.shape[2], x.shape[3], spec)
    return _conv_from_cols(im2col(x, spec), n, h2, w2, weights, bias)


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(x, 0.0)


def relu_backward(pre_activation: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Pass upstream gradient where the pre-activation was > 0, else 0."""
    return np.where(pre_activation > 0.0, upstream, 0.0)


def maxpool(x: np.ndarray, spec: PoolSpec = PoolSpec()):
    """Pool each 2x2 window per channel; returns (output, cache).

    Max mode remembers the argmax of each window (first maximum in row-major
    scan on ties) so backward can route gradients; mean mode needs no indices.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even for 2x2/2 pooling, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    windows = x.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(n, c, h2, w2, 4)
    if spec.mode == "max":
        idx = windows.argmax(axis=4)
        out = np.take_along_axis(windows, idx[..., None], axis=4)[..., 0]
        cache = (x.shape, idx, spec)
    else:
        out = windows.mean(axis=4)
        cache = (x.shape, None, spec)
    return np.ascontiguousarray(out), cache


def maxpool_backward(cache, upstream: np.ndarray) -> np.ndarray:
    """Route each upstream element to its window's argmax (or spread /4 for mean)."""
    x_shape, idx, spec = cache
    n, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    if spec.mode == "max":
        dwin = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(dwin, idx[..., None], upstream[..., None], axis=4)
    else:
        dwin = np.broadcast_to(upstream[..., None] / 4.0, (n, c, h2, w2, 4)).copy()
    dx = dwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx.reshape(n, c, h, w))


def fc_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """x @ W + b for x of shape N x d_in and W of shape d_in x d_out."""
    if x.shape[1] != weights.shape[0]:
        raise ValueError(
            f"input width {x.shape[1]} does not match weight rows {weights.shape[0]}"
        )
    return gemm.matmul(x, weights) + bias


def dropout(x: np.ndarray, p: float, rng: np.random.Generator, training: bool):
    """Inverted dropout: zero elements with probability p, scale survivors.

    Returns (output, cache); eval mode and p=0 are identity with a None cache.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"drop probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    return x * keep * scale, (keep, scale)


def dropout_backward(cache, upstream: np.ndarray) -> np.ndarray:
    if cache is None:
        return upstream
    keep, scale = cache
    return upstream * keep * scale


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction, so large logits cannot overflow."""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ValueError("softmax expects an N x M matrix with M >= 2")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(probs: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Jacobian-vector product: dz = p * (g - sum(g*p)) per row."""
    inner = (upstream * probs).sum(axis=1, keepdims=True)
    return probs * (upstream - inner)


class Layer:
    """Common layer interface; parametric layers override params/grads."""

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError

    def _require_cache(self, cache):
        if cache is None:
            raise RuntimeError(
                f"{type(self).__name__}.backward needs a training-mode forward first"
            )
        return cache


class Conv2d(Layer):
    """Convolution layer; weights K*C*kh*kw, He-initialized for a ReLU successor."""

    def __init__(self, in_channels: int, spec: ConvSpec, rng: np.random.Generator):
        kh, kw = spec.kernel
        fan_in = in_channels * kh * kw
        std = np.sqrt(2.0 / fan_in)
        self.spec = spec
        self.weights = rng.normal(0.0, std, (spec.out_channels, in_channels, kh, kw))
        self.bias = np.zeros(spec.out_channels)
        self.dweights = np.zeros_like(self.weights)
        self.dbias = np.zeros_like(self.bias)
        self.cache = None

    def forward(self, x, training=False):
        if self.weights.shape[1] != x.shape[1]:
            raise ValueError(
                f"filter channels {self.weights.shape[1]} do not match input "
                f"channels {x.shape[1]}"
            )
        n = x.shape[0]
        h2, w2 = conv_output_hw(x.shape[2], x.shape[3], self.spec)
        cols = im2col(x, self.spec)
        out = _conv_from_cols(cols, n, h2, w2, self.weights, self.bias)
        self.cache = (x.shape, cols) if training else None
        return out

    def backward(self, upstream):
        x_shape, cols = self._require_cache(self.cache)
        k = self.weights.shape[0]
        dmat = np.ascontiguousarray(
            upstream.transpose(1, 0, 2, 3).reshape(k, -1)
        )
        self.dweights = gemm.matmul(dmat, cols.T).reshape(self.weights.shape)
        self.dbias = dmat.sum(axis=1)
        dcols = gemm.matmul(self.weights.reshape(k, -1).T, dmat)
        return col2im(dcols, x_shape, self.spec)

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.dweights, self.dbias]

    def output_shape(self, input_shape):
        c, h, w = input_shape
        if c != self.weights.shape[1]:
            raise ValueError(
                f"conv expects {self.weights.shape[1]} input channels, got {c}"
            )
        h2, w2 = conv_output_hw(h, w, self.spec)
        return (self.spec.out_channels, h2, w2)


class ReLU(Layer):
    def __init__(self):
        self.cache = None

    def forward(self, x, training=False):
        self.cache = x if training else None
        return relu(x)

    def backward(self, upstream):
        return relu_backward(self._require_cache(self.cache), upstream)

    def output_shape(self, input_shape):
        return input_shape


class MaxPool(Layer):
    def __init__(self, spec: PoolSpec = PoolSpec()):
        self.spec = spec
        self.cache = None

    def forward(self, x, training=False):
        out, cache = maxpool(x, self.spec)
        self.cache = cache if training else None
        return out

    def backward(self, upstream):
        return maxpool_backward(self._require_cache(self.cache), upstream)

    def output_shape(self, input_shape):
        c, h, w = input_shape
        if h % 2 or w % 2:
            raise ValueError(f"pooling needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)


class Flatten(Layer):
    def __init__(self):
        self.cache = None

    def forward(self, x, training=False):
        self.cache = x.shape if training else None
        return np.ascontiguousarray(x.reshape(x.shape[0], -1))

    def backward(self, upstream):
        return upstream.reshape(self._require_cache(self.cache))

    def output_shape(self, input_shape):
        size = 1
        for dim in input_shape:
            size *= dim
        return (size,)


class Dense(Layer):
    """Fully-connected layer; output layers use a smaller init than ReLU-fed ones."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        output_layer: bool = False,
    ):
        std = np.sqrt((1.0 if output_layer else 2.0) / in_features)
        self.weights = rng.normal(0.0, std, (in_features, out_features))
        self.bias = np.zeros(out_features)
        self.dweights = np.zeros_like(self.weights)
        self.dbias = np.zeros_like(self.bias)
        self.cache = None

    def forward(self, x, training=False):
        out = fc_forward(x, self.weights, self.bias)
        self.cache = x if training else None
        return out

    def backward(self, upstream):
        x = self._require_cache(self.cache)
        self.dweights = gemm.matmul(x.T, upstream)
        self.dbias = upstream.sum(axis=0)
        return gemm.matmul(upstream, self.weights.T)

    def params(self):
        return [self.weights, self.bias]

    def grads(self):
        return [self.dweights, self.dbias]

    def output_shape(self, input_shape):
        (width,) = input_shape
        if width != self.weights.shape[0]:
            raise ValueError(
                f"dense expects width {self.weights.shape[0]}, got {width}"
            )
        return (self.weights.shape[1],)


class Dropout(Layer):
    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"drop probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng
        self.cache = None
        self._trained = False

    def forward(self, x, training=False):
        out, cache = dropout(x, self.p, self.rng, training)
        self.cache = cache if training else None
        # p == 0 caches None even in training; backward is then pass-through
        self._trained = training
        return out

    def backward(self, upstream):
        if not self._trained:
            raise RuntimeError("Dropout.backward needs a training-mode forward first")
        return dropout_backward(self.cache, upstream)

    def output_shape(self, input_shape):
        return input_shape


class Softmax(Layer):
    def __init__(self):
        self.cache = None

    def forward(self, x, training=False):
        probs = softmax(x)
        self.cache = probs if training else None
        return probs

    def backward(self, upstream):
        return softmax_backward(self._require_cache(self.cache), upstream)

    def output_shape(self, input_shape):
        return input_shape


class Network:
    """An ordered layer stack with reverse-order backpropagation.

    ``backward`` chains each layer's gradient in reverse and returns one
    gradient per parameter tensor, aligned with ``params()``.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple[int, int, int]):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for layer in layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(
                f"network expects input {self.input_shape}, got {tuple(x.shape[1:])}"
            )
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, upstream: np.ndarray) -> list[np.ndarray]:
        for layer in reversed(self.layers):
            upstream = layer.backward(upstream)
        return self.grads()

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]
