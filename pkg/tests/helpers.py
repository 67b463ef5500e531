"""Shared builders for the test suite: random small nets and images."""

from __future__ import annotations

import numpy as np

from heatblur import AvgPool2D, Conv2D, Dense, Flatten, MaxPool2D, Model, ReLU


def random_image(rng, shape=(6, 6, 1), low=0.05, high=0.95):
    return rng.uniform(low, high, size=shape)


def _weights(rng, shape, nonnegative):
    w = rng.normal(0.0, 0.6, size=shape)
    return np.abs(w) if nonnegative else w


def random_net(rng, input_shape=(6, 6, 1), classes=3, nonnegative=False, zero_bias=True):
    """A random MLP or small CNN with at most four weighted layers.

    zero_bias keeps every bias at zero (the construction default); with
    nonnegative=True all weights are made nonnegative as well.
    """
    h, w, c = input_shape
    kind = rng.integers(0, 4)
    if kind == 0:  # one-layer MLP
        layers = [Flatten(), Dense(h * w * c, classes, weights=_weights(rng, (classes, h * w * c), nonnegative))]
    elif kind == 1:  # two-layer MLP with relu
        hidden = int(rng.integers(4, 9))
        layers = [
            Flatten(),
            Dense(h * w * c, hidden, weights=_weights(rng, (hidden, h * w * c), nonnegative)),
            ReLU(),
            Dense(hidden, classes, weights=_weights(rng, (classes, hidden), nonnegative)),
        ]
    elif kind == 2:  # conv + maxpool + dense
        ch = int(rng.integers(2, 5))
        layers = [
            Conv2D(c, ch, 3, 3, stride=1, padding=1, weights=_weights(rng, (ch, c, 3, 3), nonnegative)),
            ReLU(),
            MaxPool2D(2),
            Flatten(),
            Dense((h // 2) * (w // 2) * ch, classes,
                  weights=_weights(rng, (classes, (h // 2) * (w // 2) * ch), nonnegative)),
        ]
    else:  # two convs + avgpool + dense
        ch1 = int(rng.integers(2, 4))
        ch2 = int(rng.integers(2, 4))
        layers = [
            Conv2D(c, ch1, 3, 3, stride=1, padding=1, weights=_weights(rng, (ch1, c, 3, 3), nonnegative)),
            ReLU(),
            Conv2D(ch1, ch2, 3, 3, stride=1, padding=1, weights=_weights(rng, (ch2, ch1, 3, 3), nonnegative)),
            ReLU(),
            AvgPool2D(2),
            Flatten(),
            Dense((h // 2) * (w // 2) * ch2, classes,
                  weights=_weights(rng, (classes, (h // 2) * (w // 2) * ch2), nonnegative)),
        ]
    if not zero_bias:
        for layer in layers:
            if layer.trainable:
                layer.biases = rng.normal(0.0, 0.3, size=layer.biases.shape)
    return Model(layers, [f"c{i}" for i in range(classes)], input_shape)


def finite_difference_gradient(model, image, class_index, objective, h=1e-5):
    """Central finite differences of the scalar objective over every pixel."""
    from heatblur import forward

    def value(x):
        prediction, _ = forward(model, x)
        if objective == "logit":
            return float(prediction.logits[class_index])
        return float(-np.log(prediction.probabilities[class_index]))

    grad = np.zeros_like(image)
    it = np.nditer(image, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        up = image.copy()
        dn = image.copy()
        up[idx] += h
        dn[idx] -= h
        grad[idx] = (value(up) - value(dn)) / (2.0 * h)
        it.iternext()
    return grad
