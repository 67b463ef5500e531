"""Layer-wise relevance propagation from a one-hot output back to the pixels.

Two redistribution rules are implemented for the weighted layers, with
z_ij = x_i * w_ij and z_j = sum_i z_ij + b_j:

* basic-epsilon:  R_i = sum_j z_ij / (z_j + eps * sign(z_j)) * R_j
* alpha-beta:     positive and negative parts of z_ij are redistributed
  separately, weighted by alpha and -beta (alpha - beta = 1); the default
  alpha=1, beta=0 keeps only positive contributions.

sign(0) counts as +1 so the stabilizer never vanishes.  Bias terms stay in
the z_j denominators but their relevance share is absorbed rather than
redistributed, a deliberate conservation leak for biased layers.  ReLU and
flatten pass relevance through, max pooling routes it to the window argmax
(first occurrence on ties), and average pooling splits it proportionally to
each input's contribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import AvgPool2D, Conv2D, Dense, Flatten, Layer, MaxPool2D, ReLU
from .layers import conv_backward_input, conv_forward
from .model import ActivationTrace, Model, forward

__all__ = ["RuleConfig", "Heatmap", "propagate_layer", "lrp", "aggregate_channels", "relevance_heatmap"]

_RULES = ("alpha-beta", "epsilon")


@dataclass
class RuleConfig:
    """Relevance rule applied to every weighted layer."""

    rule: str = "alpha-beta"
    alpha: float = 1.0
    beta: float = 0.0
    epsilon: float = 1e-9

    def __post_init__(self):
        if self.rule not in _RULES:
            raise ValueError(f"unknown rule {self.rule!r}, expected one of {_RULES}")
        if self.epsilon <= 0:
            raise ValueError(f"stabilizer epsilon must be > 0, got {self.epsilon}")
        if self.rule == "alpha-beta" and abs(self.alpha - self.beta - 1.0) > 1e-12:
            raise ValueError(f"alpha - beta must equal 1, got alpha={self.alpha}, beta={self.beta}")


@dataclass
class Heatmap:
    """Per-pixel relevance for one class, channels already summed."""

    values: np.ndarray
    target_class: int
    image_id: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"heatmap values must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("heatmap contains non-finite values")

    @property
    def shape(self) -> tuple:
        return self.values.shape


def _stabilized(z: np.ndarray, epsilon: float) -> np.ndarray:
    return z + epsilon * np.where(z >= 0.0, 1.0, -1.0)


def _dense_epsilon(layer: Dense, x, relevance, epsilon):
    z = layer.weights @ x + layer.biases
    s = relevance / _stabilized(z, epsilon)
    return x * (layer.weights.T @ s)


def _dense_alpha_beta(layer: Dense, x, relevance, alpha, beta, epsilon):
    wp = np.maximum(layer.weights, 0.0)
    wn = np.minimum(layer.weights, 0.0)
    xp = np.maximum(x, 0.0)
    xn = np.minimum(x, 0.0)
    zp = wp @ xp + wn @ xn + np.maximum(layer.biases, 0.0)
    zn = wn @ xp + wp @ xn + np.minimum(layer.biases, 0.0)
    sp = relevance / (zp + epsilon)
    sn = relevance / (zn - epsilon)
    positive = xp * (wp.T @ sp) + xn * (wn.T @ sp)
    negative = xp * (wn.T @ sn) + xn * (wp.T @ sn)
    return alpha * positive - beta * negative


def _conv_epsilon(layer: Conv2D, x, relevance, epsilon):
    z = conv_forward(x, layer.weights, layer.biases, layer.stride, layer.padding)
    s = relevance / _stabilized(z, epsilon)
    return x * conv_backward_input(s, layer.weights, layer.stride, layer.padding, x.shape[:2])


def _conv_alpha_beta(layer: Conv2D, x, relevance, alpha, beta, epsilon):
    wp = np.maximum(layer.weights, 0.0)
    wn = np.minimum(layer.weights, 0.0)
    xp = np.maximum(x, 0.0)
    xn = np.minimum(x, 0.0)
    stride, padding = layer.stride, layer.padding
    hw = x.shape[:2]
    zp = (
        conv_forward(xp, wp, None, stride, padding)
        + conv_forward(xn, wn, None, stride, padding)
        + np.maximum(layer.biases, 0.0)
    )
    zn = (
        conv_forward(xp, wn, None, stride, padding)
        + conv_forward(xn, wp, None, stride, padding)
        + np.minimum(layer.biases, 0.0)
    )
    sp = relevance / (zp + epsilon)
    sn = relevance / (zn - epsilon)
    positive = xp * conv_backward_input(sp, wp, stride, padding, hw) + xn * conv_backward_input(
        sp, wn, stride, padding, hw
    )
    negative = xp * conv_backward_input(sn, wn, stride, padding, hw) + xn * conv_backward_input(
        sn, wp, stride, padding, hw
    )
    return alpha * positive - beta * negative


def _avgpool_relevance(layer: AvgPool2D, x, relevance, epsilon):
    k, s = layer.window, layer.stride
    z = layer.forward(x)
    share = relevance / _stabilized(z, epsilon) / (k * k)
    out = np.zeros_like(x)
    ho, wo = relevance.shape[:2]
    for i in range(ho):
        for j in range(wo):
            out[i * s : i * s + k, j * s : j * s + k, :] += (
                x[i * s : i * s + k, j * s : j * s + k, :] * share[i, j, :]
            )
    return out


def propagate_layer(layer: Layer, layer_input, relevance_out, rule: RuleConfig | None = None) -> np.ndarray:
    """Redistribute output-side relevance of one layer onto its input."""
    rule = rule or RuleConfig()
    x = np.asarray(layer_input, dtype=np.float64)
    relevance = np.asarray(relevance_out, dtype=np.float64)
    expected = layer.output_shape(tuple(x.shape))
    if relevance.shape != expected:
        raise ValueError(f"relevance shape {relevance.shape} does not match layer output {expected}")

    if isinstance(layer, Dense):
        if rule.rule == "epsilon":
            return _dense_epsilon(layer, x, relevance, rule.epsilon)
        return _dense_alpha_beta(layer, x, relevance, rule.alpha, rule.beta, rule.epsilon)
    if isinstance(layer, Conv2D):
        if rule.rule == "epsilon":
            return _conv_epsilon(layer, x, relevance, rule.epsilon)
        return _conv_alpha_beta(layer, x, relevance, rule.alpha, rule.beta, rule.epsilon)
    if isinstance(layer, (ReLU, Flatten)):
        return relevance.reshape(x.shape)
    if isinstance(layer, MaxPool2D):
        # Winner-take-all: reuse the gradient routing, which scatters to the argmax.
        return layer.backward_input(x, relevance)
    if isinstance(layer, AvgPool2D):
        return _avgpool_relevance(layer, x, relevance, rule.epsilon)
    raise ValueError(f"no relevance rule for layer kind {layer.kind!r}")


def aggregate_channels(relevance) -> np.ndarray:
    """Sum an (h, w, c) relevance tensor over channels into an (h, w) map."""
    relevance = np.asarray(relevance, dtype=np.float64)
    if relevance.ndim != 3:
        raise ValueError(f"expected a 3-D relevance tensor, got shape {relevance.shape}")
    return relevance.sum(axis=2)


def lrp(model: Model, trace: ActivationTrace, target_class: int, rules: RuleConfig | None = None) -> Heatmap:
    """Propagate a one-hot output relevance through a recorded trace to the pixels.

    The initial relevance is 1.0 at the target pre-softmax neuron and zero
    elsewhere, so with zero biases the heatmap sums to 1 regardless of the
    logit scale.
    """
    rules = rules or RuleConfig()
    target_class = int(target_class)
    if not 0 <= target_class < model.num_classes:
        raise ValueError(f"target class {target_class} out of range for {model.num_classes} classes")
    if len(trace) != len(model.layers):
        raise ValueError(
            f"trace has {len(trace)} layer inputs but the model has {len(model.layers)} layers"
        )
    if trace.layer_inputs and tuple(trace.layer_inputs[0].shape) != model.input_shape:
        raise ValueError(
            f"trace input shape {trace.layer_inputs[0].shape} does not match model input "
            f"{model.input_shape}"
        )
    relevance = np.zeros(model.num_classes)
    relevance[target_class] = 1.0
    for layer, layer_input in zip(reversed(model.layers), reversed(trace.layer_inputs)):
        relevance = propagate_layer(layer, layer_input, relevance, rules)
    return Heatmap(aggregate_channels(relevance), target_class)


def relevance_heatmap(model: Model, image, target_class: int | None = None,
                      rules: RuleConfig | None = None) -> Heatmap:
    """Forward pass plus relevance propagation; defaults to the top-1 class."""
    prediction, trace = forward(model, image)
    if target_class is None:
        target_class = prediction.top1
    return lrp(model, trace, target_class, rules)
