"""Balanced compressed-sparse-fiber trees over a COO tensor.

One tree per root mode. Levels cycle through the modes starting at the
root, so the tree rooted at mode t stores coordinates in the order
(t, t+1, ..., t+N-1) mod N and its leaves vary in mode (t+N-1) mod N.
A fiber is a parent-of-leaf node: the run of entries sharing the first
N-1 coordinates in level order.

Load balancing splits any root-level slice holding more than
`fiber_threshold` fibers into consecutive sub-slices of at most that many
whole fibers. Every sub-slice becomes its own root node (duplicating the
root index value) and is the unit of work handed to one worker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BuildError, ConfigError

DEFAULT_FIBER_THRESHOLD = 128


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CsfTree:
    """Level-ordered index hierarchy for one root mode.

    `inds[d]` holds the coordinate (in mode `level_modes[d]`) of every
    depth-d node; `ptrs[d][k] : ptrs[d][k+1]` is node k's child range one
    level down. Leaves align with `vals`. Root nodes coincide with
    subtensors. `fiber_ptr`, `fiber_coord`, `sub_fiber_ptr` and
    `sub_leaf_ptr` are flattened views used by the sweep kernels.
    """

    root_mode: int
    level_modes: tuple[int, ...]
    dims: tuple[int, ...]
    inds: tuple[np.ndarray, ...]
    ptrs: tuple[np.ndarray, ...]
    vals: np.ndarray
    fiber_ptr: np.ndarray
    fiber_coord: np.ndarray
    sub_fiber_ptr: np.ndarray
    sub_leaf_ptr: np.ndarray

    @property
    def order(self) -> int:
        return len(self.level_modes)

    @property
    def nnz(self) -> int:
        return self.vals.shape[0]

    @property
    def num_fibers(self) -> int:
        return self.fiber_ptr.shape[0] - 1

    @property
    def num_subtensors(self) -> int:
        return self.sub_fiber_ptr.shape[0] - 1

    @property
    def leaf_coord(self) -> np.ndarray:
        return self.inds[-1]

    @property
    def prefix_modes(self) -> np.ndarray:
        return np.asarray(self.level_modes[:-1], dtype=np.int64)

    @property
    def leaf_mode(self) -> int:
        return self.level_modes[-1]


@dataclass(frozen=True)
class CsfForest:
    """One tree per root mode over the same entry multiset."""

    trees: tuple[CsfTree, ...]
    fiber_threshold: int | None


@dataclass(frozen=True)
class TreeBalance:
    root_mode: int
    subtensors: int
    min_leaves: int
    max_leaves: int
    mean_leaves: float
    max_fibers: int


def build_tree(tensor, root_mode: int, fiber_threshold=DEFAULT_FIBER_THRESHOLD) -> CsfTree:
    """Sort entries into level order and split heavy root slices.

    `fiber_threshold=None` disables splitting, leaving one subtensor per
    distinct root index (plain CSF).
    """
    N = tensor.order
    nnz = tensor.nnz
    if nnz == 0:
        raise BuildError("cannot index an empty tensor")
    if not 0 <= root_mode < N:
        raise ConfigError(f"root_mode must be in [0, {N}), got {root_mode}")
    if fiber_threshold is None:
        thr = nnz + 1
    else:
        thr = int(fiber_threshold)
        if thr < 1:
            raise ConfigError(f"fiber_threshold must be >= 1, got {fiber_threshold}")

    perm = tuple((root_mode + d) % N for d in range(N))
    keys = np.ascontiguousarray(tensor.idx[:, perm])
    order = np.lexsort(keys.T[::-1])
    k = keys[order]
    v = tensor.vals[order]

    prefix_change = np.zeros(nnz, dtype=bool)
    prefix_change[0] = True
    if nnz > 1:
        prefix_change[1:] = np.any(k[1:, : N - 1] != k[:-1, : N - 1], axis=1)
    fiber_of_entry = np.cumsum(prefix_change) - 1
    fiber_starts = np.flatnonzero(prefix_change)
    F = fiber_starts.size
    fiber_ptr = np.append(fiber_starts, nnz).astype(np.int64)

    # Greedy split of root slices at whole-fiber granularity.
    root_of_fiber = k[fiber_starts, 0]
    run_change = np.zeros(F, dtype=bool)
    run_change[0] = True
    run_change[1:] = root_of_fiber[1:] != root_of_fiber[:-1]
    run_starts = np.flatnonzero(run_change)
    run_lens = np.diff(np.append(run_starts, F))
    n_chunks = -(-run_lens // thr)
    S = int(n_chunks.sum())
    chunk_run = np.repeat(np.arange(run_starts.size), n_chunks)
    within = np.arange(S) - np.repeat(np.cumsum(n_chunks) - n_chunks, n_chunks)
    sub_fiber_ptr = np.append(run_starts[chunk_run] + within * thr, F).astype(np.int64)
    sub_of_fiber = np.repeat(np.arange(S, dtype=np.int64), np.diff(sub_fiber_ptr))
    sub_of_entry = sub_of_fiber[fiber_of_entry]

    sub_change = np.zeros(nnz, dtype=bool)
    sub_change[0] = True
    if nnz > 1:
        sub_change[1:] = sub_of_entry[1:] != sub_of_entry[:-1]

    # Node boundaries per depth; a subtensor boundary starts a new node at
    # every depth so split slices stay independent worker units.
    node_starts = []
    for d in range(N):
        if d == N - 1:
            ch = np.ones(nnz, dtype=bool)
        else:
            ch = np.zeros(nnz, dtype=bool)
            ch[0] = True
            if nnz > 1:
                ch[1:] = np.any(k[1:, : d + 1] != k[:-1, : d + 1], axis=1) | sub_change[1:]
        node_starts.append(ch)

    inds = []
    for d in range(N):
        pos = np.flatnonzero(node_starts[d])
        inds.append(_frozen(k[pos, d].astype(np.int64)))
    ptrs = []
    for d in range(N - 1):
        pos = np.flatnonzero(node_starts[d])
        child_id = np.cumsum(node_starts[d + 1]) - 1
        ptrs.append(
            _frozen(np.append(child_id[pos], np.count_nonzero(node_starts[d + 1])).astype(np.int64))
        )

    fiber_coord = np.empty((F, N - 1), dtype=np.int64)
    for d in range(N - 1):
        fiber_coord[:, d] = k[fiber_starts, d]
    sub_leaf_ptr = np.append(np.flatnonzero(sub_change), nnz).astype(np.int64)

    return CsfTree(
        root_mode=root_mode,
        level_modes=perm,
        dims=tensor.dims,
        inds=tuple(inds),
        ptrs=tuple(ptrs),
        vals=_frozen(v),
        fiber_ptr=_frozen(fiber_ptr),
        fiber_coord=_frozen(fiber_coord),
        sub_fiber_ptr=_frozen(sub_fiber_ptr),
        sub_leaf_ptr=_frozen(sub_leaf_ptr),
    )


def build_forest(tensor, fiber_threshold=DEFAULT_FIBER_THRESHOLD) -> CsfForest:
    trees = tuple(build_tree(tensor, t, fiber_threshold) for t in range(tensor.order))
    return CsfForest(trees=trees, fiber_threshold=fiber_threshold)


def traverse(tree: CsfTree, visitor) -> None:
    """Preorder walk. The visitor receives (depth, mode, index, value);
    value is None except at leaves."""
    N = tree.order

    def visit(d, node):
        index = int(tree.inds[d][node])
        mode = tree.level_modes[d]
        if d == N - 1:
            visitor(d, mode, index, float(tree.vals[node]))
            return
        visitor(d, mode, index, None)
        for child in range(tree.ptrs[d][node], tree.ptrs[d][node + 1]):
            visit(d + 1, int(child))

    for s in range(tree.num_subtensors):
        visit(0, s)


def dump_tree(tree: CsfTree) -> str:
    """Indented text form for golden tests: depth, mode, index, child count,
    and the value on leaf lines. Indices are 0-based."""
    lines = []
    N = tree.order

    def visit(d, node):
        index = int(tree.inds[d][node])
        mode = tree.level_modes[d]
        pad = "  " * d
        if d == N - 1:
            lines.append(f"{pad}{d} {mode} {index} 0 {float(tree.vals[node])!r}")
            return
        lo, hi = int(tree.ptrs[d][node]), int(tree.ptrs[d][node + 1])
        lines.append(f"{pad}{d} {mode} {index} {hi - lo}")
        for child in range(lo, hi):
            visit(d + 1, child)

    for s in range(tree.num_subtensors):
        visit(0, s)
    return "\n".join(lines) + "\n"


def flatten_leaves(tree: CsfTree) -> tuple[np.ndarray, np.ndarray]:
    """Reconstruct the entry multiset (original mode order) from the leaves."""
    N = tree.order
    leaf_counts = np.diff(tree.fiber_ptr)
    idx = np.empty((tree.nnz, N), dtype=np.int64)
    for d in range(N - 1):
        idx[:, tree.level_modes[d]] = np.repeat(tree.fiber_coord[:, d], leaf_counts)
    idx[:, tree.level_modes[-1]] = tree.leaf_coord
    return idx, tree.vals.copy()


def balance_stats(forest: CsfForest) -> list[TreeBalance]:
    """Leaves-per-subtensor spread for each tree in the forest."""
    out = []
    for tree in forest.trees:
        leaves = np.diff(tree.sub_leaf_ptr)
        fibers = np.diff(tree.sub_fiber_ptr)
        out.append(
            TreeBalance(
                root_mode=tree.root_mode,
                subtensors=tree.num_subtensors,
                min_leaves=int(leaves.min()),
                max_leaves=int(leaves.max()),
                mean_leaves=float(leaves.mean()),
                max_fibers=int(fibers.max()),
            )
        )
    return out
