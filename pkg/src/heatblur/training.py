"""Plain mini-batch SGD on cross-entropy, enough to train the desk-scale models."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .model import Model, softmax

__all__ = ["TrainingConfig", "TrainingResult", "train_toy", "evaluate_accuracy"]


@dataclass
class TrainingConfig:
    epochs: int = 20
    learning_rate: float = 0.1
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass
class TrainingResult:
    model: Model
    train_accuracy: float
    test_accuracy: float | None
    epoch_losses: list = field(default_factory=list)


def evaluate_accuracy(model: Model, dataset: Dataset) -> float:
    """Fraction of images whose top-1 prediction matches the label."""
    from .model import forward

    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    hits = 0
    for i in range(len(dataset)):
        prediction, _ = forward(model, dataset.images[i])
        hits += prediction.top1 == int(dataset.labels[i])
    return hits / len(dataset)


def train_toy(
    arch: Model,
    train_set: Dataset,
    config: TrainingConfig | None = None,
    test_set: Dataset | None = None,
) -> TrainingResult:
    """Train a copy of ``arch`` with seeded initialization and shuffling.

    The input model is left untouched; weighted layers of the copy are
    re-initialized from the seed, so passing an architecture without weights
    (all-zero parameters) behaves the same as passing a trained one.
    Deterministic: identical (arch, data, config) produce identical weights.
    """
    config = config or TrainingConfig()
    if len(train_set) == 0:
        raise ValueError("training dataset is empty")
    if train_set.image_shape != arch.input_shape:
        raise ValueError(
            f"dataset images {train_set.image_shape} do not match model input {arch.input_shape}"
        )
    if int(train_set.labels.max()) >= arch.num_classes:
        raise ValueError(
            f"label {int(train_set.labels.max())} out of range for {arch.num_classes} model classes"
        )

    model = copy.deepcopy(arch)
    rng = np.random.default_rng(config.seed)
    for layer in model.trainable_layers():
        layer.initialize(rng)

    n = len(train_set)
    epoch_losses = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            sums = {}
            for idx in batch:
                x = train_set.images[idx]
                label = int(train_set.labels[idx])
                inputs = []
                for layer in model.layers:
                    inputs.append(x)
                    x = layer.forward(x)
                probabilities = softmax(x)
                total_loss += -np.log(max(probabilities[label], 1e-300))
                grad = probabilities.copy()
                grad[label] -= 1.0
                for layer, layer_input in zip(reversed(model.layers), reversed(inputs)):
                    if layer.trainable:
                        dw, db = layer.parameter_gradients(layer_input, grad)
                        if id(layer) in sums:
                            sums[id(layer)][0] += dw
                            sums[id(layer)][1] += db
                        else:
                            sums[id(layer)] = [dw, db]
                    grad = layer.backward_input(layer_input, grad)
            scale = config.learning_rate / len(batch)
            for layer in model.trainable_layers():
                if id(layer) in sums:
                    layer.weights -= scale * sums[id(layer)][0]
                    layer.biases -= scale * sums[id(layer)][1]
        epoch_losses.append(total_loss / n)

    train_accuracy = evaluate_accuracy(model, train_set)
    test_accuracy = evaluate_accuracy(model, test_set) if test_set is not None and len(test_set) else None
    return TrainingResult(model, train_accuracy, test_accuracy, epoch_losses)
