import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastertucker import (
    SparseCooTensor,
    balance_stats,
    build_forest,
    build_tree,
    dump_tree,
    flatten_leaves,
    generate_synthetic,
    traverse,
)
from fastertucker.errors import ConfigError


def _hand_tensor():
    # Entries {(1,1,1), (1,1,2), (1,2,1)} in 1-based coordinates.
    idx = np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]])
    return SparseCooTensor((1, 2, 2), idx, np.array([1.0, 2.0, 3.0]))


def test_hand_tree_structure():
    tree = build_tree(_hand_tensor(), root_mode=0, fiber_threshold=None)
    assert tree.level_modes == (0, 1, 2)
    assert [len(a) for a in tree.inds] == [1, 2, 3]  # 1 root, 2 mid nodes, 3 leaves
    assert tree.num_fibers == 2
    assert tree.num_subtensors == 1


def test_hand_tree_preorder_depths():
    tree = build_tree(_hand_tensor(), root_mode=0, fiber_threshold=None)
    depths, values = [], []
    traverse(tree, lambda d, mode, index, value: (depths.append(d), values.append(value)))
    assert depths == [0, 1, 2, 2, 1, 2]
    assert [v for v in values if v is not None] == [1.0, 2.0, 3.0]


def test_single_entry_visits_every_depth_once():
    idx = np.array([[2, 3, 1, 0]])
    t = SparseCooTensor((4, 4, 4, 4), idx, np.array([7.0]))
    tree = build_tree(t, root_mode=1)
    depths = []
    traverse(tree, lambda d, mode, index, value: depths.append(d))
    assert depths == [0, 1, 2, 3]
    assert tree.level_modes == (1, 2, 3, 0)


def test_dump_golden():
    tree = build_tree(_hand_tensor(), root_mode=0, fiber_threshold=None)
    expected = (
        "0 0 0 2\n"
        "  1 1 0 2\n"
        "    2 2 0 0 1.0\n"
        "    2 2 1 0 2.0\n"
        "  1 1 1 1\n"
        "    2 2 0 0 3.0\n"
    )
    assert dump_tree(tree) == expected


def test_heavy_slice_split_sizes():
    # One root slice with 300 fibers; threshold 128 must give 128/128/44.
    idx = np.array([[0, f, 0] for f in range(300)])
    t = SparseCooTensor((1, 300, 1), idx, np.ones(300))
    tree = build_tree(t, root_mode=0, fiber_threshold=128)
    fibers = np.diff(tree.sub_fiber_ptr)
    assert list(fibers) == [128, 128, 44]
    assert fibers.sum() == 300
    assert all(f <= 128 for f in fibers)
    # every sub-slice keeps the same root index value
    assert np.array_equal(tree.inds[0], np.zeros(3, dtype=np.int64))


def test_threshold_none_gives_one_subtensor_per_root_value():
    t = generate_synthetic((7, 9, 11), 200, seed=2)
    tree = build_tree(t, root_mode=0, fiber_threshold=None)
    roots = np.unique(t.idx[:, 0])
    assert tree.num_subtensors == roots.size
    assert np.array_equal(tree.inds[0], roots)


def test_pigeonhole_bound_after_split():
    t = generate_synthetic((3, 40, 40), 900, seed=8)
    thr = 16
    tree = build_tree(t, root_mode=0, fiber_threshold=thr)
    # count fibers of the heaviest slice from the unsplit tree
    plain = build_tree(t, root_mode=0, fiber_threshold=None)
    per_root = np.diff(plain.sub_fiber_ptr)
    assert tree.num_subtensors >= int(np.ceil(per_root.max() / thr))


def test_forest_conserves_nnz_and_reconstructs():
    t = generate_synthetic((9, 8, 7, 6), 350, seed=13)
    forest = build_forest(t, 4)
    want = np.lexsort(t.idx.T)
    for tree in forest.trees:
        assert tree.nnz == t.nnz
        idx, vals = flatten_leaves(tree)
        got = np.lexsort(idx.T)
        assert np.array_equal(idx[got], t.idx[want])
        assert np.array_equal(vals[got], t.vals[want])
        assert np.diff(tree.sub_fiber_ptr).max() <= 4


def test_balance_stats_trivial_and_bound():
    idx = np.array([[0, f, 0] for f in range(10)])
    t = SparseCooTensor((1, 10, 1), idx, np.ones(10))
    forest = build_forest(t, None)
    stats = balance_stats(forest)
    one_sub = stats[0]
    assert one_sub.subtensors == 1
    assert one_sub.max_leaves == one_sub.min_leaves == 10
    t2 = generate_synthetic((50, 50, 50), 3000, seed=21)
    forest2 = build_forest(t2, 128)
    for s in balance_stats(forest2):
        assert s.max_fibers <= 128
        longest_fiber = max(
            int(np.diff(tree.fiber_ptr).max()) for tree in forest2.trees
        )
        assert s.max_leaves <= 128 * longest_fiber


def test_mode_cycling_leaf_mode():
    t = generate_synthetic((5, 5, 5, 5, 5), 100, seed=1)
    forest = build_forest(t, 8)
    for n, tree in enumerate(forest.trees):
        assert tree.root_mode == n
        assert tree.leaf_mode == (n + t.order - 1) % t.order
        assert tree.level_modes == tuple((n + d) % t.order for d in range(t.order))


def test_build_validation():
    t = generate_synthetic((4, 4, 4), 10, seed=0)
    with pytest.raises(ConfigError):
        build_tree(t, root_mode=3)
    with pytest.raises(ConfigError):
        build_tree(t, root_mode=0, fiber_threshold=0)


@settings(max_examples=20, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=10_000),
    order=st.integers(min_value=3, max_value=5),
    thr=st.sampled_from([1, 2, 3, 8, 128]),
)
def test_bcsf_invariants_random(seed, order, thr):
    rng = np.random.default_rng(seed)
    dims = tuple(int(rng.integers(2, 7)) for _ in range(order))
    cap = int(np.prod(dims))
    nnz = int(rng.integers(1, min(cap, 150) + 1))
    t = generate_synthetic(dims, nnz, seed=seed)
    for root in range(order):
        tree = build_tree(t, root, thr)
        assert tree.nnz == nnz
        assert np.diff(tree.sub_fiber_ptr).max() <= thr
        idx, vals = flatten_leaves(tree)
        a, b = np.lexsort(idx.T), np.lexsort(t.idx.T)
        assert np.array_equal(idx[a], t.idx[b])
        assert np.array_equal(vals[a], t.vals[b])
