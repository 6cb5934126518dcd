"""Reusable intermediate products and their cost accounting.

Two kinds of intermediates cut the sweep cost:

* a per-mode cache of every factor-row x core-column dot product
  (`DotCache`, one I_n x R matrix per mode), refreshed after the mode's
  parameters change;
* a per-fiber shared vector, built from the cached dots once per fiber and
  reused by every leaf in the fiber (the leaf-mode row does not enter it,
  so reuse is exact, not an approximation).

All multiply counting runs through `fastertucker.counter.OpCounter`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import counter as _counter
from . import _kernels as _kern
from .counter import CH_CHAIN, CH_COMBINE, CH_SHARED, OpCounter
from .errors import ConfigError, StalenessError
from .model import Model


class DotCache:
    """Per-mode matrices of factor-row . core-column inner products.

    `arrays[n][i, r]` equals `factors[n][i] . cores_t[n][r]` whenever mode n
    is clean. Sweeps mark a mode dirty after updating its factor or core and
    must refresh it before the next read.
    """

    __slots__ = ("arrays", "dirty")

    def __init__(self, model: Model):
        self.arrays = [
            np.zeros((model.dims[n], model.core_rank)) for n in range(model.order)
        ]
        self.dirty = np.ones(model.order, dtype=bool)

    @property
    def order(self) -> int:
        return len(self.arrays)

    def mark_dirty(self, mode: int) -> None:
        self.dirty[mode] = True

    def max_error(self, model: Model) -> float:
        """Largest deviation from freshly computed dot products (probe)."""
        worst = 0.0
        for n in range(self.order):
            fresh = model.factors[n] @ model.cores_t[n].T
            worst = max(worst, float(np.abs(fresh - self.arrays[n]).max()))
        return worst


def refresh_mode(cache: DotCache, model: Model, mode: int, counter: OpCounter | None = None) -> None:
    """Recompute mode `mode` rows and clear its dirty flag.

    Refreshing a clean mode is an allowed no-op only in the sense that it
    changes no values; the recompute cost is still paid and counted.
    """
    raw = _counter.new_raw_counts()
    _kern.impl.refresh_dot_mode(model.factors[mode], model.cores_t[mode], cache.arrays[mode], raw)
    if counter is not None:
        counter.merge(raw)
    cache.dirty[mode] = False


def precompute_cache(model: Model, counter: OpCounter | None = None) -> DotCache:
    """Fill all modes; costs exactly sum over n of I_n * J_n * R multiplies."""
    cache = DotCache(model)
    for n in range(model.order):
        refresh_mode(cache, model, n, counter)
    return cache


@dataclass(frozen=True)
class SharedVec:
    """Per-fiber intermediates for one update mode.

    `rank_products[r]` is the product of cached dots over every mode except
    `mode`; `vec` is their combination with the mode's core rows, the
    length-J vector every leaf of the fiber dots against.
    """

    mode: int
    rank_products: np.ndarray
    vec: np.ndarray


def shared_vec(
    cache: DotCache,
    model: Model,
    prefix_coords,
    mode: int,
    counter: OpCounter | None = None,
) -> SharedVec:
    """Build the shared vector for the fiber fixing all modes except `mode`.

    `prefix_coords` lists the fixed coordinates for modes != mode in
    ascending mode order. Requires a clean cache for those modes.
    """
    N = model.order
    others = [n for n in range(N) if n != mode]
    if len(prefix_coords) != N - 1:
        raise ConfigError(f"expected {N - 1} fixed coordinates, got {len(prefix_coords)}")
    stale = [n for n in others if cache.dirty[n]]
    if stale:
        raise StalenessError(f"cache modes {stale} are stale; refresh before reading")
    R = model.core_rank
    rank_products = np.empty(R)
    for r in range(R):
        v = float(cache.arrays[others[0]][prefix_coords[0], r])
        for d in range(1, N - 1):
            v = v * float(cache.arrays[others[d]][prefix_coords[d], r])
        rank_products[r] = v
    Ju = model.ranks[mode]
    vec = np.zeros(Ju)
    for r in range(R):
        vec += rank_products[r] * model.cores_t[mode][r]
    if counter is not None:
        counter.counts[CH_CHAIN] += (N - 2) * R
        counter.counts[CH_COMBINE] += Ju * R
        counter.counts[CH_SHARED] += Ju * R + N - 2
    return SharedVec(mode=mode, rank_products=rank_products, vec=vec)


def counted_sweep_cost(
    plan: str,
    tensor,
    model: Model,
    forest=None,
    fiber_threshold=None,
    counter: OpCounter | None = None,
) -> int:
    """Run one full factor-update pass with zero learning rate and return
    the dot-product multiply total it tallied.

    With lr=0 every parameter step adds exactly 0.0, so the model is
    untouched while the sweeps execute (and count) the same multiplies as a
    real pass. For the cached plan the returned figure covers the per-mode
    refreshes; the one-time precompute is counted separately by
    `precompute_cache`.
    """
    from .csf import DEFAULT_FIBER_THRESHOLD, build_forest
    from .train import TrainConfig, update_factor_mode

    if plan not in ("cached", "uncached"):
        raise ConfigError(f"plan must be 'cached' or 'uncached', got {plan!r}")
    if forest is None:
        forest = build_forest(
            tensor, DEFAULT_FIBER_THRESHOLD if fiber_threshold is None else fiber_threshold
        )
    if counter is None:
        counter = OpCounter()
    cache = precompute_cache(model) if plan == "cached" else None
    cfg = TrainConfig(lr_a=0.0, lr_b=0.0, reg_a=0.0, reg_b=0.0, epochs=1, plan=plan)
    before = counter.snapshot()
    for n in range(model.order):
        update_factor_mode(model, forest, cache, n, cfg, counter)
    return counter.delta(before)["dot"]
