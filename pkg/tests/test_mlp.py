import math

import numpy as np
import pytest

from safecross.crossover import permute_network
from safecross.datasets import generate_blobs
from safecross.mlp import (
    Architecture,
    Dataset,
    MLPClassifier,
    Network,
    ShapeError,
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    forward,
    init_network,
    load_network,
    loss_and_gradients,
    network_from_bytes,
    network_to_bytes,
    save_network,
    train_adam,
)


def zero_net(m, hidden, k):
    net = init_network(Architecture(m, hidden, k), 0)
    return Network([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases], net.architecture)


def test_init_shapes_and_zero_bias():
    net = init_network(Architecture(1, (1,), 1), seed=5)
    assert [w.shape for w in net.weights] == [(1, 1), (1, 1)]
    assert [b.tolist() for b in net.biases] == [[0.0], [0.0]]


def test_init_deterministic():
    arch = Architecture(7, (5, 3), 2)
    a, b = init_network(arch, 11), init_network(arch, 11)
    for x, y in zip(a.parameters(), b.parameters()):
        assert np.array_equal(x, y)


def test_init_standard_deviation():
    net = init_network(Architecture(784, (512,), 10), seed=0)
    assert abs(net.weights[0].std() / 784 ** -0.5 - 1) < 0.05
    assert abs(net.weights[1].std() / 512 ** -0.5 - 1) < 0.05


@pytest.mark.parametrize("bad", [dict(input_dim=0, hidden_sizes=(2,), output_dim=2),
                                 dict(input_dim=2, hidden_sizes=(), output_dim=2)])
def test_architecture_validation(bad):
    with pytest.raises(ValueError):
        Architecture(**bad)


def test_softmax_of_zeros_is_uniform():
    _, probs = forward(zero_net(4, (3,), 10), np.random.default_rng(0).normal(size=(6, 4)))
    np.testing.assert_allclose(probs, 0.1, atol=1e-15)


def test_relu_clamps_negative():
    net = Network([np.array([[2.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)], Architecture(1, (1,), 1))
    hidden, _ = forward(net, np.array([[-3.0]]))
    assert hidden[0][0, 0] == 0.0


def test_hand_computed_2_2_2():
    w1 = np.array([[1.0, -1.0], [0.5, 2.0]])
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[1.0, -0.5], [0.3, 0.7]])
    b2 = np.array([0.05, 0.0])
    net = Network([w1, w2], [b1, b2], Architecture(2, (2,), 2))
    x = [0.4, -0.3]
    h = [max(0.0, x[0] * w1[0, j] + x[1] * w1[1, j] + b1[j]) for j in range(2)]
    z = [h[0] * w2[0, k] + h[1] * w2[1, k] + b2[k] for k in range(2)]
    expected = [math.exp(v) / (math.exp(z[0]) + math.exp(z[1])) for v in z]
    hidden, probs = forward(net, np.array([x]))
    np.testing.assert_allclose(hidden[0][0], h, atol=1e-15)
    np.testing.assert_allclose(probs[0], expected, atol=1e-12)


def test_forward_rejects_bad_shape():
    with pytest.raises(ShapeError):
        forward(zero_net(3, (2,), 2), np.ones((4, 5)))


def test_probabilities_sum_to_one_for_extreme_inputs(rng):
    net = init_network(Architecture(5, (8, 8), 6), 1)
    x = rng.normal(scale=1e3, size=(50, 5))
    _, probs = forward(net, x)
    assert np.all(np.isfinite(probs))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_evaluate_uniform_network():
    labels = np.array([0, 3, 0, 9, 5, 0, 1])
    data = Dataset(np.random.default_rng(1).normal(size=(7, 4)), labels)
    loss, acc = evaluate(zero_net(4, (3,), 10), data)
    assert loss == pytest.approx(math.log(10), abs=1e-12)
    assert acc == pytest.approx(3 / 7)


def test_evaluate_confident_network():
    net = zero_net(2, (2,), 2)
    net.weights[0][:] = np.eye(2) * 100
    net.weights[1][:] = np.eye(2) * 100
    data = Dataset(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0, 1]))
    loss, acc = evaluate(net, data)
    assert loss < 1e-30 and acc == 1.0


def test_evaluate_hand_summed_loss(rng):
    net = init_network(Architecture(3, (4,), 3), 2)
    x = rng.normal(size=(5, 3))
    y = np.array([0, 2, 1, 1, 0])
    _, probs = forward(net, x)
    expected = -sum(math.log(probs[i, y[i]]) for i in range(5)) / 5
    loss, _ = evaluate(net, Dataset(x, y))
    assert loss == pytest.approx(expected, abs=1e-12)


def test_evaluate_empty_dataset():
    with pytest.raises(ValueError):
        evaluate(zero_net(2, (2,), 2), Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int)))


def finite_difference_gradients(net, x, y, step=1e-5):
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + step
            up, _ = evaluate(net, Dataset(x, y))
            p[idx] = old - step
            down, _ = evaluate(net, Dataset(x, y))
            p[idx] = old
            g[idx] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def test_gradients_match_finite_differences(rng):
    net = init_network(Architecture(4, (3,), 2), 3)
    net.biases[0][:] = rng.normal(size=3) * 0.1
    x = rng.normal(size=(6, 4))
    y = np.array([0, 1, 1, 0, 1, 0])
    _, analytic = loss_and_gradients(net, x, y)
    numeric = finite_difference_gradients(net, x, y)
    for a, n in zip(analytic, numeric):
        rel = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-12)
        assert rel.max() <= 1e-4


def test_training_memorizes_small_dataset():
    data = generate_blobs(classes=2, per_class=10, dim=5, spread=1.0, seed=0)
    net = init_network(Architecture(5, (32,), 2), 0)
    trained, history = train_adam(net, data, TrainConfig(learning_rate=1e-2, epochs=200, seed=0))
    assert [h[0] for h in history] == list(range(1, 201))
    assert history[-1][1] < 0.01
    assert evaluate(trained, data)[1] == 1.0


def test_zero_learning_rate_leaves_weights():
    data = generate_blobs(classes=3, per_class=5, dim=4, spread=1.0, seed=1)
    net = init_network(Architecture(4, (6,), 3), 0)
    trained, _ = train_adam(net, data, TrainConfig(learning_rate=0.0, epochs=3))
    for a, b in zip(net.parameters(), trained.parameters()):
        assert np.array_equal(a, b)


def test_training_is_deterministic_and_leaves_input_untouched():
    data = generate_blobs(classes=3, per_class=20, dim=4, spread=1.0, seed=1)
    net = init_network(Architecture(4, (6,), 3), 0)
    before = [p.copy() for p in net.parameters()]
    cfg = TrainConfig(learning_rate=1e-2, batch_size=16, epochs=3, seed=9)
    a, _ = train_adam(net, data, cfg)
    b, _ = train_adam(net, data, cfg)
    for x, y in zip(a.parameters(), b.parameters()):
        assert np.array_equal(x, y)
    for x, y in zip(before, net.parameters()):
        assert np.array_equal(x, y)


def test_divergence_is_reported():
    data = Dataset(np.array([[1e308, 1e308]]), np.array([0]))
    net = init_network(Architecture(2, (3,), 2), 0)
    net.weights[0][:] = 1.0  # hidden pre-activations overflow to inf
    with pytest.raises(TrainingDivergedError) as info, np.errstate(over="ignore", invalid="ignore"):
        train_adam(net, data, TrainConfig(epochs=1))
    assert info.value.epoch == 1 and info.value.batch == 0


def test_permutation_symmetry(rng):
    net = init_network(Architecture(6, (5, 4), 3), 4)
    net.biases[0][:] = rng.normal(size=5)
    x = rng.normal(size=(30, 6))
    permuted = permute_network(net, [rng.permutation(5).tolist(), rng.permutation(4).tolist()])
    np.testing.assert_allclose(forward(permuted, x)[1], forward(net, x)[1], atol=1e-12)


def test_serialization_round_trip_is_bit_exact(tmp_path, rng):
    net = init_network(Architecture(5, (4, 3), 2), 8)
    net.biases[1][:] = rng.normal(size=3)
    path = tmp_path / "net.scnet"
    save_network(net, path)
    back = load_network(path)
    assert back.architecture == net.architecture
    for a, b in zip(net.parameters(), back.parameters()):
        assert a.tobytes() == b.tobytes()
    assert network_to_bytes(back) == path.read_bytes()


def test_serialization_rejects_corruption():
    blob = network_to_bytes(init_network(Architecture(2, (2,), 2), 0))
    with pytest.raises(ValueError, match="magic"):
        network_from_bytes(b"XXXXX" + blob[5:])
    with pytest.raises(ValueError, match="bytes"):
        network_from_bytes(blob[:-8])


def test_classifier_estimator_api():
    data = generate_blobs(classes=3, per_class=30, dim=4, spread=0.5, seed=2)
    clf = MLPClassifier(hidden_sizes=(8,), learning_rate=1e-2, epochs=40, batch_size=16)
    assert clf.get_params()["hidden_sizes"] == (8,)
    clf.fit(data.inputs, data.labels)
    assert clf.score(data.inputs, data.labels) > 0.95
    assert clf.predict_proba(data.inputs).shape == (90, 3)
    assert [h.shape for h in clf.hidden_activations(data.inputs[:5])] == [(5, 8)]
