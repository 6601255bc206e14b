import numpy as np
import pytest

from safecross.crossover import permute_network
from safecross.datasets import generate_blobs, split
from safecross.mlp import Architecture, TrainConfig, init_network, train_adam

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blobs_split():
    return split(generate_blobs(classes=4, per_class=100, dim=12, spread=1.2, seed=7), seed=3)


def train_on(data, hidden, seed, epochs=30, lr=1e-2):
    arch = Architecture(data.train.inputs.shape[1], tuple(hidden), 4)
    net, _ = train_adam(init_network(arch, seed), data.train,
                        TrainConfig(learning_rate=lr, batch_size=32, epochs=epochs, seed=seed))
    return net


@pytest.fixture(scope="session")
def trained_pair(blobs_split):
    """Two networks trained on the same blobs from different initialisations."""
    return train_on(blobs_split, (16,), 1), train_on(blobs_split, (16,), 2)


def planted_copy(net, seed):
    """Return a hidden-permuted copy of ``net`` and the permutations used.

    Hidden neuron ``j`` of the copy at depth d is neuron ``perms[d][j]`` of ``net``.
    """
    r = np.random.default_rng(seed)
    perms = [r.permutation(h).tolist() for h in net.architecture.hidden_sizes]
    return permute_network(net, perms), perms
