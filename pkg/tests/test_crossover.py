import numpy as np
import pytest

from safecross.cca import CcaConfig
from safecross.crossover import (
    ArchitectureMismatch,
    SafeCrossover,
    SweepError,
    align_pair,
    complete_order,
    default_t_grid,
    interpolate,
    permute_network,
    sweep,
)
from safecross.mlp import Architecture, Dataset, evaluate, forward, init_network

from conftest import planted_copy


def random_net(rng, sizes, seed=0):
    net = init_network(Architecture(sizes[0], tuple(sizes[1:-1]), sizes[-1]), seed)
    for b in net.biases:
        b[:] = rng.normal(size=b.shape) * 0.1
    return net


def test_identity_permutation_is_bit_identical(rng):
    net = random_net(rng, [5, 4, 3, 2])
    out = permute_network(net, [list(range(4)), list(range(3))])
    for a, b in zip(net.parameters(), out.parameters()):
        assert a.tobytes() == b.tobytes()


def test_reverse_single_layer(rng):
    net = random_net(rng, [3, 5, 2])
    out = permute_network(net, [[4, 3, 2, 1, 0]])
    np.testing.assert_array_equal(out.weights[0], net.weights[0][:, ::-1])
    np.testing.assert_array_equal(out.biases[0], net.biases[0][::-1])
    np.testing.assert_array_equal(out.weights[1], net.weights[1][::-1])
    x = rng.normal(size=(20, 3))
    np.testing.assert_allclose(forward(out, x)[1], forward(net, x)[1], atol=1e-12)


def test_random_permutations_three_depths(rng):
    net = random_net(rng, [8, 6, 6, 6, 4])
    lists = [rng.permutation(6).tolist() for _ in range(3)]
    x = rng.normal(size=(50, 8))
    np.testing.assert_allclose(forward(permute_network(net, lists), x)[1], forward(net, x)[1], atol=1e-9)


def test_permutation_errors(rng):
    net = random_net(rng, [3, 4, 2])
    with pytest.raises(IndexError):
        permute_network(net, [[0, 1, 2, 4]])
    with pytest.raises(ValueError):
        permute_network(net, [[0, 1, 2, 3], [0]])


def test_partial_lists_are_completed(rng):
    assert complete_order([3, 1], 5) == [3, 1, 0, 2, 4]
    net = random_net(rng, [3, 5, 2])
    x = rng.normal(size=(10, 3))
    np.testing.assert_allclose(forward(permute_network(net, [[4, 2]]), x)[1], forward(net, x)[1], atol=1e-12)
    with pytest.raises(ValueError):
        complete_order([1, 1], 3)


@pytest.mark.parametrize("strategy", ["bipartite", "semi_match", "cca"])
def test_align_undoes_planted_permutation(strategy, trained_pair, blobs_split):
    net = trained_pair[0]
    copy, _ = planted_copy(net, seed=4)
    pair = align_pair(net, copy, strategy, blobs_split.train)
    for a, b in zip(pair.net_a_aligned.parameters(), pair.net_b_aligned.parameters()):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_align_self_pair_is_functionally_identity(trained_pair, blobs_split):
    net = trained_pair[0]
    pair = align_pair(net, net, "bipartite", blobs_split.train)
    x = blobs_split.validation.inputs
    np.testing.assert_allclose(forward(pair.net_a_aligned, x)[1], forward(net, x)[1], atol=1e-12)
    np.testing.assert_allclose(forward(pair.net_b_aligned, x)[1], forward(net, x)[1], atol=1e-12)


@pytest.mark.parametrize("strategy", ["bipartite", "cca"])
def test_aligned_trained_networks_keep_their_loss(strategy, trained_pair, blobs_split):
    net_a, net_b = trained_pair
    pair = align_pair(net_a, net_b, strategy, blobs_split.train, CcaConfig())
    val = blobs_split.validation
    for src, aligned in ((net_a, pair.net_a_aligned), (net_b, pair.net_b_aligned)):
        assert evaluate(aligned, val)[0] == pytest.approx(evaluate(src, val)[0], abs=1e-9)


def test_align_with_svcca_and_ridge(trained_pair, blobs_split):
    net_a, net_b = trained_pair
    val = blobs_split.validation
    for cfg in (CcaConfig(mode="svcca", svd_directions=8), CcaConfig(mode="ridge", reg=0.1)):
        pair = align_pair(net_a, net_b, "cca", blobs_split.train, cfg)
        assert evaluate(pair.net_b_aligned, val)[0] == pytest.approx(evaluate(net_b, val)[0], abs=1e-9)


def test_semi_match_duplicates_keep_only_a_side_equivalent(rng):
    net_a = random_net(rng, [4, 5, 3], seed=1)
    net_b = random_net(rng, [4, 5, 3], seed=2)
    probe = rng.normal(size=(200, 4))
    pair = align_pair(net_a, net_b, "semi_match", probe)
    l_a, l_b = pair.mapping.pairs_per_depth[0]
    assert l_a == list(range(5))
    x = rng.normal(size=(30, 4))
    np.testing.assert_allclose(forward(pair.net_a_aligned, x)[1], forward(net_a, x)[1], atol=1e-12)
    if len(set(l_b)) < len(l_b):
        assert not np.allclose(forward(pair.net_b_aligned, x)[1], forward(net_b, x)[1], atol=1e-9)


def test_literal_row_indexing_breaks_b_equivalence(trained_pair, blobs_split):
    net = trained_pair[0]
    copy, _ = planted_copy(net, seed=9)
    x = blobs_split.validation.inputs
    literal = align_pair(net, copy, "bipartite", blobs_split.train, literal_rows=True)
    assert not np.allclose(forward(literal.net_b_aligned, x)[1], forward(copy, x)[1], atol=1e-9)
    np.testing.assert_allclose(forward(literal.net_a_aligned, x)[1], forward(net, x)[1], atol=1e-12)


def test_align_architecture_mismatch(rng):
    with pytest.raises(ArchitectureMismatch):
        align_pair(random_net(rng, [3, 4, 2]), random_net(rng, [3, 5, 2]), "bipartite", rng.normal(size=(10, 3)))


def test_interpolation_endpoints_and_midpoint(rng):
    a, b = random_net(rng, [3, 4, 2], 1), random_net(rng, [3, 4, 2], 2)
    for x, y in zip(interpolate(a, b, 0.0).parameters(), a.parameters()):
        assert np.array_equal(x, y)
    for x, y in zip(interpolate(a, b, 1.0).parameters(), b.parameters()):
        assert np.array_equal(x, y)
    for x, y in zip(interpolate(a, a, 0.5).parameters(), a.parameters()):
        assert np.array_equal(x, y)
    mid = interpolate(a, b, 0.25)
    np.testing.assert_allclose(mid.weights[0], 0.75 * a.weights[0] + 0.25 * b.weights[0], atol=1e-15)


def test_interpolation_swap_symmetry_is_exact(rng):
    a, b = random_net(rng, [3, 4, 2], 1), random_net(rng, [3, 4, 2], 2)
    for t in list(default_t_grid()) + list(rng.uniform(-0.25, 1.25, size=50)):
        for x, y in zip(interpolate(a, b, t).parameters(), interpolate(b, a, 1 - t).parameters()):
            assert np.array_equal(x, y)


def test_interpolation_mismatch(rng):
    with pytest.raises(ArchitectureMismatch):
        interpolate(random_net(rng, [3, 4, 2]), random_net(rng, [3, 4, 3]), 0.5)


def test_default_grid():
    grid = default_t_grid()
    assert len(grid) == 61 and grid[0] == -0.25 and grid[-1] == 1.25
    assert np.diff(grid) == pytest.approx(0.025)


def test_sweep_endpoints_match_parents(trained_pair, blobs_split):
    a, b = trained_pair
    val = blobs_split.validation
    records = sweep(a, b, [1.0, 0.0], val, "naive", "p0")
    assert [r.t for r in records] == [0.0, 1.0]
    assert records[0].loss == pytest.approx(evaluate(a, val)[0], abs=1e-12)
    assert records[1].loss == pytest.approx(evaluate(b, val)[0], abs=1e-12)


def test_safe_sweep_on_planted_pair_is_flat(trained_pair, blobs_split):
    net = trained_pair[0]
    copy, _ = planted_copy(net, seed=5)
    pair = align_pair(net, copy, "bipartite", blobs_split.train)
    losses = [r.loss for r in sweep(pair.net_a_aligned, pair.net_b_aligned, default_t_grid(),
                                    blobs_split.validation, "sc_pwc_bipartite", "p")]
    assert max(losses) - min(losses) < 1e-9


def test_naive_sweep_has_a_barrier(trained_pair, blobs_split):
    records = sweep(*trained_pair, default_t_grid(), blobs_split.validation, "naive", "p")
    interior = [r.loss for r in records if 0 < r.t < 1]
    start = [r for r in records if r.t == 0.0][0].loss
    stop = [r for r in records if r.t == 1.0][0].loss
    assert max(interior) > max(start, stop)


def test_sweep_errors_carry_t(rng):
    net = random_net(rng, [3, 4, 2])
    bad = Dataset(rng.normal(size=(4, 3)), np.array([0, 1, 5, 1]))
    with pytest.raises(SweepError) as info:
        sweep(net, net, [0.3], bad, "naive", "p")
    assert info.value.t == 0.3
    with pytest.raises(ValueError):
        sweep(net, net, [], bad, "naive", "p")


def test_safe_crossover_estimator(trained_pair, blobs_split):
    a, b = trained_pair
    est = SafeCrossover(strategy="bipartite").fit(a, b, blobs_split.train.inputs)
    assert est.get_params()["strategy"] == "bipartite"
    assert est.mapping_.strategy == "bipartite"
    child = est.offspring(0.5)
    assert child.architecture == a.architecture
    records = est.sweep(blobs_split.validation, [0.0, 0.5, 1.0])
    assert [r.method for r in records] == ["sc_pwc_bipartite"] * 3
    naive = SafeCrossover(strategy=None).fit(a, b)
    assert naive.sweep(blobs_split.validation, [0.5])[0].method == "naive"
