"""Factor/core matrices, initialization, element prediction, and the
brute-force Kronecker oracle that validates the factorized fast path.

The model represents an N-order tensor as N factor matrices (one per mode,
shape I_n x J_n) and N small core matrices (J_n x R, held transposed as
R x J_n so core rows are contiguous). An element prediction is

    sum over r of  prod over n of  (factor_row_n . core_col_{n,r})

which the fast path evaluates mode by mode; the oracle evaluates the same
quantity through explicit Kronecker products of rows and columns.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import ConfigError, OracleCapacityError, ValidationError

_CKPT_MAGIC = b"FTMODEL\x00"
_CKPT_VERSION = 1

# Kronecker-expansion guard for the oracle: product of the used J_n.
ORACLE_SIZE_GUARD = 1_000_000


@dataclass(frozen=True)
class InitSpec:
    """Uniform(lo, hi) i.i.d. initialization with a fixed seed."""

    lo: float
    hi: float
    seed: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError(f"init range must satisfy lo < hi, got ({self.lo}, {self.hi})")


class Model:
    """Mutable container for the factor and transposed core matrices."""

    __slots__ = ("dims", "ranks", "core_rank", "factors", "cores_t")

    def __init__(self, dims, ranks, core_rank, factors, cores_t):
        dims = tuple(int(d) for d in dims)
        ranks = tuple(int(j) for j in ranks)
        core_rank = int(core_rank)
        if len(ranks) != len(dims):
            raise ConfigError("ranks must give one J per mode")
        if any(j < 1 for j in ranks) or core_rank < 1 or any(d < 1 for d in dims):
            raise ConfigError("shapes must be positive")
        self.dims = dims
        self.ranks = ranks
        self.core_rank = core_rank
        self.factors = [np.ascontiguousarray(a, dtype=np.float64) for a in factors]
        self.cores_t = [np.ascontiguousarray(b, dtype=np.float64) for b in cores_t]
        for n, (a, b) in enumerate(zip(self.factors, self.cores_t)):
            if a.shape != (dims[n], ranks[n]):
                raise ConfigError(f"factor {n} shape {a.shape} != {(dims[n], ranks[n])}")
            if b.shape != (core_rank, ranks[n]):
                raise ConfigError(f"core {n} shape {b.shape} != {(core_rank, ranks[n])}")

    @property
    def order(self) -> int:
        return len(self.dims)

    def core(self, n: int) -> np.ndarray:
        """Core matrix of mode n in the standard J_n x R orientation."""
        return self.cores_t[n].T

    def copy(self) -> "Model":
        return Model(
            self.dims,
            self.ranks,
            self.core_rank,
            [a.copy() for a in self.factors],
            [b.copy() for b in self.cores_t],
        )

    def all_close_bits(self, other: "Model") -> bool:
        """Exact (bitwise) equality of shapes and entries."""
        if (self.dims, self.ranks, self.core_rank) != (other.dims, other.ranks, other.core_rank):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.factors, other.factors)) and all(
            np.array_equal(a, b) for a, b in zip(self.cores_t, other.cores_t)
        )

    def max_abs(self) -> float:
        return max(
            max(float(np.abs(a).max()) for a in self.factors),
            max(float(np.abs(b).max()) for b in self.cores_t),
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.factors) and all(
            np.isfinite(b).all() for b in self.cores_t
        )


def init_model(dims, ranks, core_rank, spec: InitSpec) -> Model:
    """All factor and core entries i.i.d. uniform(lo, hi), seed-deterministic.

    Draw order is fixed: factors for modes 0..N-1, then cores 0..N-1.
    """
    rng = np.random.default_rng(int(spec.seed))
    dims = tuple(int(d) for d in dims)
    ranks = tuple(int(j) for j in ranks)
    if len(ranks) != len(dims):
        raise ConfigError("ranks must give one J per mode")
    factors = [rng.uniform(spec.lo, spec.hi, size=(dims[n], ranks[n])) for n in range(len(dims))]
    cores_t = [rng.uniform(spec.lo, spec.hi, size=(int(core_rank), ranks[n])) for n in range(len(dims))]
    return Model(dims, ranks, core_rank, factors, cores_t)


def default_init_model(dims, ranks, core_rank, seed) -> Model:
    """Scaled uniform default: U(0,1)/sqrt(J_n) factors, U(0,1)/sqrt(R) cores.

    The scaling keeps initial predictions O(1) at any order; raw uniform(0,1)
    entries overflow the loss for orders >= 4. Pass an explicit InitSpec to
    init_model to override. `seed` is anything numpy's default_rng accepts.
    """
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in dims)
    ranks = tuple(int(j) for j in ranks)
    if len(ranks) != len(dims):
        raise ConfigError("ranks must give one J per mode")
    factors = [
        rng.uniform(0.0, 1.0, size=(dims[n], ranks[n])) / math.sqrt(ranks[n])
        for n in range(len(dims))
    ]
    cores_t = [
        rng.uniform(0.0, 1.0, size=(int(core_rank), ranks[n])) / math.sqrt(int(core_rank))
        for n in range(len(dims))
    ]
    return Model(dims, ranks, core_rank, factors, cores_t)


def hidden_low_rank_model(dims, ranks, core_rank, seed: int) -> Model:
    """Deterministic generator model behind low-rank synthetic tensors."""
    return default_init_model(dims, ranks, core_rank, np.random.SeedSequence([int(seed), 3]))


def _check_coord(model: Model, coord) -> np.ndarray:
    coord = np.asarray(coord, dtype=np.int64)
    if coord.shape != (model.order,):
        raise ValidationError(f"coordinate must have {model.order} entries")
    if np.any(coord < 0) or np.any(coord >= np.asarray(model.dims)):
        raise ValidationError(f"coordinate {tuple(coord)} out of range for dims {model.dims}")
    return coord


def factored_inner(model: Model, coord, skip_mode: int, r: int) -> float:
    """Product over modes != skip_mode of (factor row . core column r).

    This is the factorized form of the inner product between the Kronecker
    product of the N-1 fixed factor rows and the Kronecker product of the
    matching core columns; `kron_inner` evaluates it by brute force.
    """
    coord = _check_coord(model, coord)
    out = 1.0
    for n in range(model.order):
        if n == skip_mode:
            continue
        out *= float(np.dot(model.factors[n][coord[n]], model.cores_t[n][r]))
    return out


def kron_inner(model: Model, coord, skip_mode: int, r: int) -> float:
    """Brute-force oracle for `factored_inner` via explicit Kronecker products.

    Builds the row of the Kronecker-product factor matrix and the column of
    the Khatri-Rao core matrix for the fixed modes (highest mode first, so
    mode 1 varies fastest, matching the mode-n unfolding column order) and
    returns their inner product. Guarded to `ORACLE_SIZE_GUARD` elements.
    """
    coord = _check_coord(model, coord)
    modes = [n for n in range(model.order) if n != skip_mode]
    size = math.prod(model.ranks[n] for n in modes)
    if size > ORACLE_SIZE_GUARD:
        raise OracleCapacityError(f"oracle expansion of {size} elements exceeds guard")
    rows = [model.factors[n][coord[n]] for n in reversed(modes)]
    cols = [model.cores_t[n][r] for n in reversed(modes)]
    s_row = reduce(np.kron, rows)
    q_col = reduce(np.kron, cols)
    return float(np.dot(s_row, q_col))


def predict_element(model: Model, coord) -> float:
    """Model value at one cell: sum over ranks of per-mode dot products."""
    coord = _check_coord(model, coord)
    out = 0.0
    for r in range(model.core_rank):
        term = 1.0
        for n in range(model.order):
            term *= float(np.dot(model.factors[n][coord[n]], model.cores_t[n][r]))
        out += term
    return out


def predict_element_via_mode(model: Model, coord, mode: int) -> float:
    """Same value computed through the mode-`mode` split form.

    Evaluates factor_row . (sum over r of rank_product * core_col), the shape
    the sweep kernels use; must agree with `predict_element` for every mode.
    """
    coord = _check_coord(model, coord)
    vec = np.zeros(model.ranks[mode])
    for r in range(model.core_rank):
        vec += factored_inner(model, coord, mode, r) * model.cores_t[mode][r]
    return float(np.dot(model.factors[mode][coord[mode]], vec))


def predict_batch(model: Model, idx: np.ndarray, chunk: int = 1 << 18) -> np.ndarray:
    """Vectorized `predict_element` over an (m, N) coordinate array."""
    idx = np.asarray(idx, dtype=np.int64)
    dots = [model.factors[n] @ model.cores_t[n].T for n in range(model.order)]  # (I_n, R)
    out = np.empty(idx.shape[0])
    for lo in range(0, idx.shape[0], chunk):
        hi = min(lo + chunk, idx.shape[0])
        prod = dots[0][idx[lo:hi, 0]].copy()
        for n in range(1, model.order):
            prod *= dots[n][idx[lo:hi, n]]
        out[lo:hi] = prod.sum(axis=1)
    return out


def full_loss(model: Model, tensor, reg_a: float, reg_b: float) -> float:
    """Squared error over observed cells plus Frobenius regularizers."""
    resid = tensor.vals - predict_batch(model, tensor.idx)
    loss = float(resid @ resid)
    loss += reg_a * sum(float(np.sum(a * a)) for a in model.factors)
    loss += reg_b * sum(float(np.sum(b * b)) for b in model.cores_t)
    return loss


def unfold_index(coord, dims, mode: int) -> tuple[int, int]:
    """Mode-`mode` matricization position of a tensor cell, as an index map.

    Returns (row, col) with row = coord[mode] and col enumerating the
    remaining modes with mode 0 varying fastest (0-based form of the
    standard unfolding). Nothing is materialized.
    """
    col = 0
    stride = 1
    for k in range(len(dims)):
        if k == mode:
            continue
        col += int(coord[k]) * stride
        stride *= int(dims[k])
    return int(coord[mode]), col


def vectorize_index(coord, dims, mode: int) -> int:
    """Mode-`mode` vectorization position: column-major flattening of the
    unfolding, so vec position = col * I_mode + row."""
    row, col = unfold_index(coord, dims, mode)
    return col * int(dims[mode]) + row


def save_model(path, model: Model) -> None:
    """Binary checkpoint.

    Layout (little-endian): magic "FTMODEL\\x00"; u32 version=1, u32 N,
    u32 R, u32 reserved=0; N pairs (u64 I_n, u64 J_n); then per mode the
    factor matrix as float64 row-major (I_n x J_n); then per mode the
    transposed core as float64 row-major (R x J_n).
    """
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<IIII", _CKPT_VERSION, model.order, model.core_rank, 0))
        for n in range(model.order):
            fh.write(struct.pack("<QQ", model.dims[n], model.ranks[n]))
        for a in model.factors:
            fh.write(a.astype("<f8", copy=False).tobytes())
        for b in model.cores_t:
            fh.write(b.astype("<f8", copy=False).tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValidationError(f"{path}: not a model checkpoint")
        version, order, core_rank, _ = struct.unpack("<IIII", fh.read(16))
        if version != _CKPT_VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint version {version}")
        dims, ranks = [], []
        for _ in range(order):
            i_n, j_n = struct.unpack("<QQ", fh.read(16))
            dims.append(i_n)
            ranks.append(j_n)
        factors = [
            np.frombuffer(fh.read(8 * dims[n] * ranks[n]), dtype="<f8").reshape(dims[n], ranks[n])
            for n in range(order)
        ]
        cores_t = [
            np.frombuffer(fh.read(8 * core_rank * ranks[n]), dtype="<f8").reshape(
                core_rank, ranks[n]
            )
            for n in range(order)
        ]
        trailing = fh.read(1)
        if trailing:
            raise ValidationError(f"{path}: trailing bytes in checkpoint")
    return Model(dims, ranks, core_rank, factors, cores_t)
