import numpy as np
import pytest

from heatblur import (
    AttackConfig,
    TrainingConfig,
    build_architecture,
    generate_synthetic_dataset,
    split_dataset,
    train_toy,
)


@pytest.fixture(scope="session")
def pipeline():
    """One trained toy CNN plus its held-out split, shared across test modules."""
    full = generate_synthetic_dataset(classes=3, size=600, side=16, seed=1)
    train_set, test_set = split_dataset(full, 0.8, seed=0)
    arch = build_architecture("small_cnn", train_set.image_shape, train_set.class_names)
    result = train_toy(arch, train_set, TrainingConfig(epochs=8, learning_rate=0.08, batch_size=16, seed=0),
                       test_set)
    return {"model": result.model, "train": train_set, "test": test_set, "result": result}


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
