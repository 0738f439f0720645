import numpy as np
import pytest

from heatlens.netgraph import Conv2D, Dense, GlobalAvgPool, MaxPool2D, Network, ReLU, build_network, toy_cnn_architecture


def random_cnn(rng, bias=True, in_shape=(2, 8, 8), num_classes=3, batchnorm=False):
    """Conv-ReLU-MaxPool-Conv-ReLU-GAP-Dense with random weights (and biases)."""
    c0 = in_shape[0]
    k1, k2 = int(rng.integers(2, 5)), int(rng.integers(2, 5))

    def b(n):
        return rng.normal(scale=0.3, size=n) if bias else None

    layers = [Conv2D(rng.normal(size=(k1, c0, 3, 3)) * 0.5, b(k1), 1, 1), ReLU(), MaxPool2D(2)]
    layers += [Conv2D(rng.normal(size=(k2, k1, 3, 3)) * 0.5, b(k2), 1, 1)]
    if batchnorm:
        from heatlens.netgraph import BatchNorm

        layers.append(BatchNorm(rng.normal(size=k2), rng.uniform(0.5, 2, k2), rng.uniform(0.5, 2, k2), rng.normal(size=k2) * 0.1))
    layers += [ReLU(), GlobalAvgPool(), Dense(rng.normal(size=(num_classes, k2)), b(num_classes))]
    return Network(tuple(layers), in_shape, num_classes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_toy_net():
    return build_network(toy_cnn_architecture((4, 4)), (1, 16, 16), 4, seed=3)


@pytest.fixture(scope="session")
def trained_blob_net():
    """A toy CNN trained for a few seconds on 16x16 blob images; held-out rows are 240..299."""
    from heatlens.netgraph import TrainConfig, generate_blob_dataset, train

    ds = generate_blob_dataset(300, 16, seed=0)
    net = build_network(toy_cnn_architecture((8, 8)), (1, 16, 16), 4, seed=0)
    net, _ = train(net, ds.images()[:240], ds.labels[:240], TrainConfig(epochs=60, learning_rate=1e-2))
    return net, ds


def constant_net(in_shape=(1, 8, 8), num_classes=2, value=0.3):
    """Zero weights everywhere, so every input gets the same logits."""
    layers = (
        Conv2D(np.zeros((2, in_shape[0], 3, 3)), np.zeros(2), 1, 1),
        ReLU(),
        GlobalAvgPool(),
        Dense(np.zeros((num_classes, 2)), np.full(num_classes, value)),
    )
    return Network(layers, in_shape, num_classes)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
