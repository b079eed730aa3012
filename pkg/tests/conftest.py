import numpy as np
import pytest

from dipmix import Dataset, MixConfig, OptimState, apply_stats, gen_spirals, mlp_init, split, standardize, train


@pytest.fixture
def tiny_spirals():
    """16 standardized spiral points, 8 per class."""
    ds = gen_spirals(8, 0.05, 1.25, seed=3)
    ds, _ = standardize(ds)
    return ds


@pytest.fixture
def small_net():
    return mlp_init([2, 8, 2], "tanh", seed=1)


@pytest.fixture(scope="session")
def mixup_spirals_model():
    """A label-mixing-trained net on small spirals, with its train/test split.

    Shared by predictor tests that need a model whose raw and marginalized
    predictions genuinely differ.
    """
    full = gen_spirals(250, 0.05, 1.25, seed=3)
    train_set, test_set = split(full, 0.5, seed=3)
    train_set, stats = standardize(train_set)
    test_set = apply_stats(test_set, stats)
    params = mlp_init([2, 64, 64, 2], "relu", seed=3)
    optim = OptimState(0.1, 0.9, [(100, 0.1), (150, 0.1)])
    params, _ = train(params, train_set, MixConfig("label_mixing", 1.0, 1), optim,
                      200, 64, np.random.default_rng([3, 1]))
    return params, train_set, test_set
