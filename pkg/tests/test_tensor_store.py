import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastertucker import (
    SparseCooTensor,
    generate_synthetic,
    hidden_low_rank_model,
    load_coo,
    predict_batch,
    split_dataset,
    write_coo,
)
from fastertucker.errors import CapacityError, ConfigError, ParseError, ValidationError


def test_load_single_entry(tmp_path):
    path = tmp_path / "t.coo"
    path.write_text("1 1 1 5.0\n")
    t = load_coo(path, order=3)
    assert t.dims == (1, 1, 1)
    assert t.nnz == 1
    assert t.vals[0] == 5.0
    assert list(t.idx[0]) == [0, 0, 0]


def test_load_rejects_duplicates(tmp_path):
    path = tmp_path / "t.coo"
    path.write_text("1 1 1 5.0\n1 1 1 3.0\n")
    with pytest.raises(ValidationError, match="line 2"):
        load_coo(path, order=3)


def test_load_rejects_arity_mismatch(tmp_path):
    path = tmp_path / "t.coo"
    path.write_text("1 1 1 5.0\n2 2 2 2 4.0\n")
    with pytest.raises(ParseError, match="line 2"):
        load_coo(path, order=3)


def test_load_rejects_bad_value_and_zero_coordinate(tmp_path):
    path = tmp_path / "bad_value.coo"
    path.write_text("1 1 1 abc\n")
    with pytest.raises(ParseError, match="line 1"):
        load_coo(path, order=3)
    path = tmp_path / "zero_coord.coo"
    path.write_text("0 1 1 2.0\n")
    with pytest.raises(ValidationError, match="1-based"):
        load_coo(path, order=3)


def test_load_skips_comments_and_blank_lines(tmp_path):
    path = tmp_path / "t.coo"
    path.write_text("# header\n\n2 3 4 1.5\n# trailing\n1 1 1 2.5\n")
    t = load_coo(path, order=3)
    assert t.nnz == 2
    assert t.dims == (2, 3, 4)


def test_load_normalize(tmp_path):
    path = tmp_path / "t.coo"
    path.write_text("1 1 1 10.0\n2 2 2 30.0\n1 2 1 20.0\n")
    t = load_coo(path, order=3, normalize=(0.0, 5.0))
    assert t.vals.min() == 0.0 and t.vals.max() == 5.0
    assert 2.5 in t.vals


def test_round_trip_preserves_multiset(tmp_path):
    t = generate_synthetic((5, 6, 7, 4), 60, value_range=(-2.0, 9.0), seed=42)
    path = tmp_path / "rt.coo"
    write_coo(path, t)
    back = load_coo(path, order=4, dims=t.dims)
    key = np.lexsort(t.idx.T)
    key2 = np.lexsort(back.idx.T)
    assert np.array_equal(t.idx[key], back.idx[key2])
    assert np.array_equal(t.vals[key], back.vals[key2])


def test_duplicate_coordinates_rejected_in_constructor():
    idx = np.array([[0, 0, 0], [0, 0, 0]])
    with pytest.raises(ValidationError, match="duplicate"):
        SparseCooTensor((2, 2, 2), idx, np.array([1.0, 2.0]))


def test_generate_reproducible_and_distinct():
    a = generate_synthetic((30, 30, 30), 400, seed=9)
    b = generate_synthetic((30, 30, 30), 400, seed=9)
    assert np.array_equal(a.idx, b.idx) and np.array_equal(a.vals, b.vals)
    c = generate_synthetic((30, 30, 30), 400, seed=10)
    assert not np.array_equal(a.vals, c.vals)


def test_generate_saturated_cube():
    t = generate_synthetic((2, 2, 2), 8, seed=0)
    assert t.nnz == 8
    assert np.unique(t.idx, axis=0).shape[0] == 8


def test_generate_capacity_error():
    with pytest.raises(CapacityError):
        generate_synthetic((2, 2, 2), 9, seed=0)


def test_generate_value_range():
    t = generate_synthetic((40, 40, 40), 2000, value_range=(1.0, 5.0), seed=1)
    assert t.vals.min() >= 1.0 and t.vals.max() <= 5.0


def test_generate_rejection_path_hits_big_spaces():
    # Capacity far beyond the permutation cutoff exercises the batched
    # dedup path; coordinates must still be unique and reproducible.
    t = generate_synthetic((300, 300, 300), 5000, seed=4)
    assert np.unique(t.idx, axis=0).shape[0] == 5000
    again = generate_synthetic((300, 300, 300), 5000, seed=4)
    assert np.array_equal(t.idx, again.idx)


def test_low_rank_values_match_hidden_model():
    dims, ranks, R, seed = (15, 12, 10), (2, 2, 2), 2, 77
    t = generate_synthetic(dims, 300, seed=seed, low_rank=(ranks, R))
    hidden = hidden_low_rank_model(dims, ranks, R, seed)
    pred = predict_batch(hidden, t.idx)
    resid = t.vals - pred
    rmse = math.sqrt(float(resid @ resid) / resid.size)
    assert rmse < 1e-12


def test_split_counts_and_determinism():
    t = generate_synthetic((10, 10, 10), 100, seed=5)
    s1 = split_dataset(t, 0.2, seed=3)
    s2 = split_dataset(t, 0.2, seed=3)
    assert s1.train.nnz == 80 and s1.test.nnz == 20
    assert np.array_equal(s1.train.idx, s2.train.idx)
    assert np.array_equal(s1.test.vals, s2.test.vals)


def test_split_fraction_validation():
    t = generate_synthetic((10, 10, 10), 100, seed=5)
    for bad in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ConfigError):
            split_dataset(t, bad, seed=1)


@settings(max_examples=25, deadline=None)
@given(
    nnz=st.integers(min_value=4, max_value=120),
    frac=st.floats(min_value=0.05, max_value=0.95),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_split_partition_law(nnz, frac, seed):
    t = generate_synthetic((8, 8, 8), nnz, seed=11)
    n_test = int(round(nnz * frac))
    if n_test < 1 or n_test >= nnz:
        return
    s = split_dataset(t, frac, seed=seed)
    combined_idx = np.concatenate([s.train.idx, s.test.idx])
    combined_vals = np.concatenate([s.train.vals, s.test.vals])
    order_a = np.lexsort(combined_idx.T)
    order_b = np.lexsort(t.idx.T)
    assert np.array_equal(combined_idx[order_a], t.idx[order_b])
    assert np.array_equal(combined_vals[order_a], t.vals[order_b])
    # disjointness comes with exact partition + uniqueness of the source
    assert combined_idx.shape[0] == t.nnz


def test_tensor_requires_order_three():
    with pytest.raises(ValidationError):
        SparseCooTensor((4, 4), np.array([[0, 0]]), np.array([1.0]))
