"""Layers for the miniature inference engine.

Every layer maps a float64 input array to a float64 output array.  A layer
object serves three computations: the forward pass, vector-Jacobian products
with respect to its input (gradients for attacks and training), and parameter
gradients for the trainable kinds.  Layers hold parameters only; per-call
state such as recorded inputs lives with the caller.

Dense layers act on 1-D vectors, so image models start with Flatten.
Spatial layers act on (height, width, channels) arrays.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Layer",
    "Dense",
    "Conv2D",
    "ReLU",
    "MaxPool2D",
    "AvgPool2D",
    "Flatten",
    "conv_forward",
    "conv_backward_input",
]


def _strided_extent(extent: int, window: int, stride: int, what: str) -> int:
    span = extent - window
    if span < 0:
        raise ValueError(f"{what}: window {window} larger than input extent {extent}")
    if span % stride:
        raise ValueError(
            f"{what}: input extent {extent} is not covered exactly by "
            f"window {window} with stride {stride}"
        )
    return span // stride + 1


def _param(values, shape, what: str) -> np.ndarray:
    """Coerce a parameter array, defaulting to zeros when omitted."""
    if values is None:
        return np.zeros(shape)
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"{what}: expected shape {shape}, got {arr.shape}")
    return arr.copy()


def conv_forward(x, weights, biases, stride: int, padding: int) -> np.ndarray:
    """Strided 2-D cross-correlation of (h, w, c_in) with (c_out, c_in, kh, kw) weights."""
    _, _, kh, kw = weights.shape
    if padding:
        x = np.pad(x, ((padding, padding), (padding, padding), (0, 0)))
    h, w, _ = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((ho, wo, weights.shape[0]))
    for u in range(kh):
        for v in range(kw):
            patch = x[u : u + (ho - 1) * stride + 1 : stride, v : v + (wo - 1) * stride + 1 : stride, :]
            out += patch @ weights[:, :, u, v].T
    if biases is not None:
        out += biases
    return out


def conv_backward_input(grad_out, weights, stride: int, padding: int, input_hw) -> np.ndarray:
    """Scatter an output-side gradient back to the (unpadded) input of conv_forward."""
    _, ci, kh, kw = weights.shape
    h, w = input_hw
    ho, wo = grad_out.shape[:2]
    dx = np.zeros((h + 2 * padding, w + 2 * padding, ci))
    for u in range(kh):
        for v in range(kw):
            dx[u : u + (ho - 1) * stride + 1 : stride, v : v + (wo - 1) * stride + 1 : stride, :] += (
                grad_out @ weights[:, :, u, v]
            )
    if padding:
        return dx[padding : padding + h, padding : padding + w, :]
    return dx


class Layer:
    """Base layer interface; subclasses set ``kind`` and ``trainable``."""

    kind = "base"
    trainable = False

    def output_shape(self, input_shape: tuple) -> tuple:
        raise NotImplementedError

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward_input(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        """Gradient at the input given the gradient at the output."""
        raise NotImplementedError


class Dense(Layer):
    """Affine map y = W x + b with W of shape (out_size, in_size)."""

    kind = "dense"
    trainable = True

    def __init__(self, in_size: int, out_size: int, weights=None, biases=None):
        self.in_size = int(in_size)
        self.out_size = int(out_size)
        if self.in_size < 1 or self.out_size < 1:
            raise ValueError("dense sizes must be >= 1")
        self.weights = _param(weights, (self.out_size, self.in_size), "dense weights")
        self.biases = _param(biases, (self.out_size,), "dense biases")

    def output_shape(self, input_shape):
        if input_shape != (self.in_size,):
            raise ValueError(f"dense expects input shape ({self.in_size},), got {input_shape}")
        return (self.out_size,)

    def forward(self, x):
        return self.weights @ x + self.biases

    def backward_input(self, x, grad_out):
        return self.weights.T @ grad_out

    def parameter_gradients(self, x, grad_out):
        return np.outer(grad_out, x), grad_out.copy()

    def initialize(self, rng):
        limit = np.sqrt(6.0 / (self.in_size + self.out_size))
        self.weights = rng.uniform(-limit, limit, size=(self.out_size, self.in_size))
        self.biases = np.zeros(self.out_size)

    def weight_count(self):
        return self.out_size * self.in_size + self.out_size

    def flatten_weights(self):
        return np.concatenate([self.weights.ravel(), self.biases])

    def load_weights(self, flat):
        n = self.out_size * self.in_size
        self.weights = flat[:n].reshape(self.out_size, self.in_size).astype(np.float64)
        self.biases = flat[n:].astype(np.float64)


class Conv2D(Layer):
    """2-D convolution (cross-correlation) with zero padding and square stride.

    Weights have shape (out_channels, in_channels, kernel_height, kernel_width).
    """

    kind = "conv2d"
    trainable = True

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_height: int,
        kernel_width: int,
        stride: int = 1,
        padding: int = 0,
        weights=None,
        biases=None,
    ):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_height = int(kernel_height)
        self.kernel_width = int(kernel_width)
        self.stride = int(stride)
        self.padding = int(padding)
        if min(self.in_channels, self.out_channels, self.kernel_height, self.kernel_width) < 1:
            raise ValueError("conv2d channel and kernel sizes must be >= 1")
        if self.stride < 1:
            raise ValueError("conv2d stride must be >= 1")
        if self.padding < 0:
            raise ValueError("conv2d padding must be >= 0")
        wshape = (self.out_channels, self.in_channels, self.kernel_height, self.kernel_width)
        self.weights = _param(weights, wshape, "conv2d weights")
        self.biases = _param(biases, (self.out_channels,), "conv2d biases")

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ValueError(f"conv2d expects a 3-D input shape, got {input_shape}")
        h, w, c = input_shape
        if c != self.in_channels:
            raise ValueError(f"conv2d expects {self.in_channels} input channels, got {c}")
        ho = _strided_extent(h + 2 * self.padding, self.kernel_height, self.stride, "conv2d height")
        wo = _strided_extent(w + 2 * self.padding, self.kernel_width, self.stride, "conv2d width")
        return (ho, wo, self.out_channels)

    def forward(self, x):
        return conv_forward(x, self.weights, self.biases, self.stride, self.padding)

    def backward_input(self, x, grad_out):
        return conv_backward_input(grad_out, self.weights, self.stride, self.padding, x.shape[:2])

    def parameter_gradients(self, x, grad_out):
        if self.padding:
            x = np.pad(x, ((self.padding, self.padding), (self.padding, self.padding), (0, 0)))
        ho, wo = grad_out.shape[:2]
        s = self.stride
        dw = np.zeros_like(self.weights)
        for u in range(self.kernel_height):
            for v in range(self.kernel_width):
                patch = x[u : u + (ho - 1) * s + 1 : s, v : v + (wo - 1) * s + 1 : s, :]
                dw[:, :, u, v] = np.tensordot(grad_out, patch, axes=((0, 1), (0, 1)))
        return dw, grad_out.sum(axis=(0, 1))

    def initialize(self, rng):
        fan_in = self.in_channels * self.kernel_height * self.kernel_width
        fan_out = self.out_channels * self.kernel_height * self.kernel_width
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.weights = rng.uniform(-limit, limit, size=self.weights.shape)
        self.biases = np.zeros(self.out_channels)

    def weight_count(self):
        return self.weights.size + self.out_channels

    def flatten_weights(self):
        return np.concatenate([self.weights.ravel(), self.biases])

    def load_weights(self, flat):
        n = self.weights.size
        self.weights = flat[:n].reshape(self.weights.shape).astype(np.float64)
        self.biases = flat[n:].astype(np.float64)


class ReLU(Layer):
    kind = "relu"

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward_input(self, x, grad_out):
        return grad_out * (x > 0.0)


class _Pool2D(Layer):
    """Shared window bookkeeping for the pooling layers."""

    def __init__(self, window: int, stride: int | None = None):
        self.window = int(window)
        self.stride = self.window if stride is None else int(stride)
        if self.window < 1 or self.stride < 1:
            raise ValueError(f"{self.kind} window and stride must be >= 1")

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ValueError(f"{self.kind} expects a 3-D input shape, got {input_shape}")
        h, w, c = input_shape
        ho = _strided_extent(h, self.window, self.stride, f"{self.kind} height")
        wo = _strided_extent(w, self.window, self.stride, f"{self.kind} width")
        return (ho, wo, c)


class MaxPool2D(_Pool2D):
    """Max pooling; ties resolve to the first position in row-major window order."""

    kind = "maxpool2d"

    def winner_indices(self, x):
        """Flat within-window argmax per output position and channel."""
        ho, wo, c = self.output_shape(x.shape)
        k, s = self.window, self.stride
        winners = np.zeros((ho, wo, c), dtype=np.intp)
        for i in range(ho):
            for j in range(wo):
                win = x[i * s : i * s + k, j * s : j * s + k, :].reshape(k * k, c)
                winners[i, j, :] = np.argmax(win, axis=0)
        return winners

    def forward(self, x):
        ho, wo, c = self.output_shape(x.shape)
        k, s = self.window, self.stride
        out = np.zeros((ho, wo, c))
        cols = np.arange(c)
        for i in range(ho):
            for j in range(wo):
                win = x[i * s : i * s + k, j * s : j * s + k, :].reshape(k * k, c)
                out[i, j, :] = win[np.argmax(win, axis=0), cols]
        return out

    def backward_input(self, x, grad_out):
        dx = np.zeros_like(x)
        winners = self.winner_indices(x)
        k, s = self.window, self.stride
        cols = np.arange(x.shape[2])
        ho, wo = grad_out.shape[:2]
        for i in range(ho):
            for j in range(wo):
                u, v = np.divmod(winners[i, j], k)
                dx[i * s + u, j * s + v, cols] += grad_out[i, j, :]
        return dx


class AvgPool2D(_Pool2D):
    kind = "avgpool2d"

    def forward(self, x):
        ho, wo, c = self.output_shape(x.shape)
        k, s = self.window, self.stride
        out = np.zeros((ho, wo, c))
        for i in range(ho):
            for j in range(wo):
                out[i, j, :] = x[i * s : i * s + k, j * s : j * s + k, :].mean(axis=(0, 1))
        return out

    def backward_input(self, x, grad_out):
        dx = np.zeros_like(x)
        k, s = self.window, self.stride
        ho, wo = grad_out.shape[:2]
        for i in range(ho):
            for j in range(wo):
                dx[i * s : i * s + k, j * s : j * s + k, :] += grad_out[i, j, :] / (k * k)
        return dx


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        size = 1
        for extent in input_shape:
            size *= extent
        return (size,)

    def forward(self, x):
        return x.reshape(-1).copy()

    def backward_input(self, x, grad_out):
        return grad_out.reshape(x.shape)
