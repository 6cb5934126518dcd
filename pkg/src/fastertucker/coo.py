"""Coordinate-format sparse tensors: loading, generation, splitting.

File boundary uses the conventional 1-based coordinates; everything in
memory is 0-based. Coordinate tuples are unique by construction: a
repeated cell is an input error, not an implicit sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigError, ParseError, ValidationError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SparseCooTensor:
    """N-order sparse tensor: unique 0-based coordinates plus values.

    Attributes
    ----------
    dims : tuple of int
        Extent of each of the N >= 3 modes.
    idx : (nnz, N) int64 array, read-only
    vals : (nnz,) float64 array, read-only
    """

    dims: tuple[int, ...]
    idx: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 3:
            raise ValidationError(f"tensor order must be >= 3, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise ValidationError(f"dims must be positive, got {dims}")
        idx = np.asarray(self.idx, dtype=np.int64)
        vals = np.asarray(self.vals, dtype=np.float64)
        if idx.ndim != 2 or idx.shape[1] != len(dims):
            raise ValidationError(f"idx shape {idx.shape} does not match order {len(dims)}")
        if vals.shape != (idx.shape[0],):
            raise ValidationError("vals length does not match idx")
        if idx.shape[0] == 0:
            raise ValidationError("tensor must contain at least one entry")
        if idx.min(initial=0) < 0 or np.any(idx.max(axis=0) >= np.asarray(dims)):
            raise ValidationError("coordinate out of range for dims")
        uniq = np.unique(idx, axis=0)
        if uniq.shape[0] != idx.shape[0]:
            dup = _first_duplicate(idx)
            raise ValidationError(f"duplicate coordinate {tuple(int(c) + 1 for c in dup)}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "idx", _frozen(idx))
        object.__setattr__(self, "vals", _frozen(vals))

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def nnz(self) -> int:
        return self.idx.shape[0]

    def capacity(self) -> int:
        return math.prod(self.dims)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/test partition of one tensor's entries."""

    train: SparseCooTensor
    test: SparseCooTensor
    seed: int


def _first_duplicate(idx: np.ndarray) -> np.ndarray:
    seen = set()
    for row in idx:
        key = tuple(row.tolist())
        if key in seen:
            return row
        seen.add(key)
    raise AssertionError("no duplicate present")


def load_coo(path, order: int, dims=None, normalize=None) -> SparseCooTensor:
    """Read a whitespace-separated coordinate file.

    Each non-comment line holds `order` 1-based integer coordinates and one
    real value. Lines starting with '#' are ignored. `dims` defaults to the
    per-mode coordinate maxima. `normalize=(lo, hi)` rescales values onto
    [lo, hi] by a linear min-max map.
    """
    rows, values = [], []
    seen: set[tuple] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split()
            if len(fields) != order + 1:
                raise ParseError(
                    f"{path}: line {lineno}: expected {order + 1} fields, got {len(fields)}"
                )
            try:
                coord = tuple(int(f) for f in fields[:order])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: bad coordinate: {exc}") from None
            try:
                val = float(fields[order])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: bad value {fields[order]!r}") from None
            if any(c < 1 for c in coord):
                raise ValidationError(f"{path}: line {lineno}: coordinates are 1-based")
            if coord in seen:
                raise ValidationError(f"{path}: line {lineno}: duplicate coordinate {coord}")
            seen.add(coord)
            rows.append(coord)
            values.append(val)
    if not rows:
        raise ValidationError(f"{path}: no entries")
    idx = np.asarray(rows, dtype=np.int64) - 1
    vals = np.asarray(values, dtype=np.float64)
    if normalize is not None:
        vals = _minmax_scale(vals, normalize)
    if dims is None:
        dims = tuple(int(m) + 1 for m in idx.max(axis=0))
    return SparseCooTensor(tuple(dims), idx, vals)


def _minmax_scale(vals: np.ndarray, target) -> np.ndarray:
    lo, hi = float(target[0]), float(target[1])
    if not lo < hi:
        raise ConfigError(f"normalize range must satisfy lo < hi, got ({lo}, {hi})")
    vmin, vmax = float(vals.min()), float(vals.max())
    if vmin == vmax:
        raise ConfigError("cannot min-max scale constant values")
    return lo + (vals - vmin) * ((hi - lo) / (vmax - vmin))


def write_coo(path, tensor: SparseCooTensor) -> None:
    """Write the 1-based text form; values use shortest round-trip repr."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# order={tensor.order} dims={','.join(map(str, tensor.dims))}\n")
        for row, val in zip(tensor.idx, tensor.vals):
            coords = " ".join(str(int(c) + 1) for c in row)
            fh.write(f"{coords} {float(val)!r}\n")


def _decode_linear(linear: np.ndarray, dims) -> np.ndarray:
    return np.stack(np.unravel_index(linear, dims), axis=1).astype(np.int64)


def _sample_coords(dims, nnz: int, rng: np.random.Generator) -> np.ndarray:
    """nnz distinct coordinates, uniform without replacement, seed-stable."""
    capacity = math.prod(dims)
    if capacity <= max(4_000_000, 4 * nnz):
        perm = rng.permutation(capacity)[:nnz]
        return _decode_linear(perm, dims)
    # Rejection path for huge index spaces (cells may not fit an int64).
    chosen = np.empty((0, len(dims)), dtype=np.int64)
    while chosen.shape[0] < nnz:
        batch = max(nnz - chosen.shape[0], 1) * 2
        draw = np.stack([rng.integers(0, d, size=batch) for d in dims], axis=1)
        pool = np.concatenate([chosen, draw.astype(np.int64)], axis=0)
        _, first = np.unique(pool, axis=0, return_index=True)
        chosen = pool[np.sort(first)]
    return chosen[:nnz]


def generate_synthetic(
    dims,
    nnz: int,
    value_range=(1.0, 5.0),
    seed: int = 0,
    low_rank=None,
) -> SparseCooTensor:
    """Random sparse tensor with exactly `nnz` distinct cells.

    Values are uniform in `value_range`, unless `low_rank=(ranks, core_rank)`
    is given, in which case values are the predictions of a hidden random
    factor model (see `hidden_low_rank_model`) and `value_range` is unused.
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) < 3 or any(d < 1 for d in dims):
        raise ConfigError(f"dims must be >= 3 positive extents, got {dims}")
    if nnz < 1:
        raise ConfigError("nnz must be positive")
    if nnz > math.prod(dims):
        raise CapacityError(f"nnz={nnz} exceeds capacity {math.prod(dims)} of dims {dims}")
    idx = _sample_coords(dims, nnz, np.random.default_rng([int(seed), 0]))
    if low_rank is None:
        lo, hi = float(value_range[0]), float(value_range[1])
        if not lo < hi:
            raise ConfigError(f"value range must satisfy lo < hi, got ({lo}, {hi})")
        vals = np.random.default_rng([int(seed), 1]).uniform(lo, hi, size=nnz)
    else:
        from .model import hidden_low_rank_model, predict_batch

        ranks, core_rank = low_rank
        hidden = hidden_low_rank_model(dims, ranks, core_rank, seed)
        vals = predict_batch(hidden, idx)
    return SparseCooTensor(dims, idx, vals)


def split_dataset(tensor: SparseCooTensor, test_fraction: float, seed: int) -> DatasetSplit:
    """Deterministic exact partition into train and test tensors."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = int(round(tensor.nnz * test_fraction))
    if n_test < 1 or n_test >= tensor.nnz:
        raise ConfigError(
            f"test_fraction {test_fraction} leaves an empty part for nnz={tensor.nnz}"
        )
    perm = np.random.default_rng([int(seed), 2]).permutation(tensor.nnz)
    test_rows, train_rows = perm[:n_test], perm[n_test:]
    return DatasetSplit(
        train=SparseCooTensor(tensor.dims, tensor.idx[train_rows], tensor.vals[train_rows]),
        test=SparseCooTensor(tensor.dims, tensor.idx[test_rows], tensor.vals[test_rows]),
        seed=int(seed),
    )
