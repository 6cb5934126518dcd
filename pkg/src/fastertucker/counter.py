"""Multiplication counters for verifying the cost model of each sweep.

Counts are tallied by the kernels as one integer add per tree node, never
per multiply, so instrumentation stays on in real runs. Channels:

``dot``
    Multiplies spent inside factor-row x core-column dot products: cache
    precompute, per-mode refresh, and the per-element recomputation done
    by the uncached plan.
``chain``
    Multiplies chaining the cached per-rank scalars into the rank products
    of a shared vector: (N - 2) * R per evaluation.
``combine``
    Multiplies combining rank products with the update-mode core rows into
    the shared vector: J * R per evaluation.
``shared``
    The same shared-vector evaluations in the complexity-model unit
    J * R + N - 2, which counts the length-(N-1) scalar chain once across
    all ranks (it reuses one operand walk). This is the unit the per-fiber
    cost law is stated in; it overlaps ``chain`` + ``combine`` and is
    excluded from ``total_multiplies``.
``update``
    Multiplies in residual evaluation and parameter updates.
"""

from __future__ import annotations

import numpy as np

CHANNELS = ("dot", "chain", "combine", "shared", "update")
CH_DOT, CH_CHAIN, CH_COMBINE, CH_SHARED, CH_UPDATE = range(len(CHANNELS))


class OpCounter:
    """Monotone per-channel multiply tallies."""

    __slots__ = ("counts",)

    def __init__(self):
        self.counts = np.zeros(len(CHANNELS), dtype=np.int64)

    def __getitem__(self, channel: str) -> int:
        return int(self.counts[CHANNELS.index(channel)])

    @property
    def total_multiplies(self) -> int:
        """Actual multiplies: every channel except the overlapping ``shared``."""
        return int(self.counts.sum() - self.counts[CH_SHARED])

    def merge(self, raw: np.ndarray) -> None:
        self.counts += raw

    def snapshot(self) -> dict[str, int]:
        return {name: int(self.counts[i]) for i, name in enumerate(CHANNELS)}

    def delta(self, before: dict[str, int]) -> dict[str, int]:
        return {name: int(self.counts[i]) - before[name] for i, name in enumerate(CHANNELS)}

    def reset(self) -> None:
        self.counts[:] = 0

    def csv_rows(self, plan: str, mode) -> list[str]:
        """One ``plan,mode,channel,count`` row per channel."""
        return [f"{plan},{mode},{name},{int(self.counts[i])}" for i, name in enumerate(CHANNELS)]

    def __repr__(self):
        inner = ", ".join(f"{k}={v}" for k, v in self.snapshot().items())
        return f"OpCounter({inner})"


def new_raw_counts() -> np.ndarray:
    """Scratch tally array in the layout the kernels expect."""
    return np.zeros(len(CHANNELS), dtype=np.int64)
