"""Wall-clock benchmarks: cached vs uncached plans, compiled vs Python kernels.

Timings use a fresh identically-seeded model per repetition so every run
performs the same work; the best of `repeat` runs is reported.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import _kernels as _kern
from .cache import precompute_cache
from .counter import OpCounter
from .csf import build_forest
from .model import default_init_model
from .train import TrainConfig, train, update_core_mode, update_factor_mode


@dataclass
class BenchRow:
    backend: str
    plan: str
    factor_pass_s: float
    core_pass_s: float
    nnz: int

    @property
    def factor_knnz_s(self) -> float:
        return self.nnz / self.factor_pass_s / 1e3

    def line(self) -> str:
        return (
            f"{self.backend:<8} {self.plan:<9} factor={self.factor_pass_s:9.4f}s "
            f"core={self.core_pass_s:9.4f}s  ({self.factor_knnz_s:,.0f} knnz/s factor)"
        )


def time_passes(tensor, ranks, core_rank, plan, fiber_threshold=128, repeat=3, seed=0,
                forest=None):
    """Best factor-pass and core-pass times for one plan on the current backend."""
    if forest is None:
        forest = build_forest(tensor, fiber_threshold)
    cfg = TrainConfig(lr_a=1e-4, lr_b=1e-4, reg_a=1e-3, reg_b=1e-3, plan=plan)
    best_f = best_c = float("inf")
    for _ in range(repeat):
        model = default_init_model(tensor.dims, ranks, core_rank, seed)
        counter = OpCounter()
        cache = precompute_cache(model, counter) if plan == "cached" else None
        t0 = time.perf_counter()
        for n in range(model.order):
            update_factor_mode(model, forest, cache, n, cfg, counter)
        t1 = time.perf_counter()
        for n in range(model.order):
            update_core_mode(model, forest, cache, n, cfg, counter)
        t2 = time.perf_counter()
        best_f = min(best_f, t1 - t0)
        best_c = min(best_c, t2 - t1)
    return best_f, best_c, forest


def bench_plans(tensor, ranks, core_rank, fiber_threshold=128, repeat=3, seed=0,
                backend=None):
    """Compare the cached and uncached plans on one backend."""
    rows = []
    name = backend or _kern.current_backend()
    with _kern.use_backend(name):
        forest = None
        for plan in ("cached", "uncached"):
            f_s, c_s, forest = time_passes(
                tensor, ranks, core_rank, plan, fiber_threshold, repeat, seed, forest
            )
            rows.append(BenchRow(name, plan, f_s, c_s, tensor.nnz))
    return rows


def bench_backends(tensor, ranks, core_rank, fiber_threshold=128, repeat=3, seed=0,
                   epochs=2):
    """Compare compiled and pure-Python kernels on identical work.

    Also trains a couple of epochs on each backend and checks the resulting
    models are bit-identical. Returns (rows, identical_flag_or_None).
    """
    names = ["python"]
    try:
        _kern.get_backend("c")
        names.insert(0, "c")
    except ImportError:
        pass
    rows = []
    trained = {}
    for name in names:
        with _kern.use_backend(name):
            forest = None
            for plan in ("cached", "uncached"):
                f_s, c_s, forest = time_passes(
                    tensor, ranks, core_rank, plan, fiber_threshold, repeat, seed, forest
                )
                rows.append(BenchRow(name, plan, f_s, c_s, tensor.nnz))
            model = default_init_model(tensor.dims, ranks, core_rank, seed)
            cfg = TrainConfig(lr_a=1e-3, lr_b=1e-3, epochs=epochs, plan="cached",
                              fiber_threshold=fiber_threshold)
            train(model, tensor, cfg, forest=forest)
            trained[name] = model
    identical = None
    if len(trained) == 2:
        identical = trained["c"].all_close_bits(trained["python"])
    return rows, identical


def format_report(rows, identical) -> str:
    lines = [row.line() for row in rows]
    by_key = {(r.backend, r.plan): r for r in rows}
    if ("c", "uncached") in by_key and ("c", "cached") in by_key:
        speedup = by_key[("c", "uncached")].factor_pass_s / by_key[("c", "cached")].factor_pass_s
        lines.append(f"cached-plan speedup over uncached (compiled, factor pass): {speedup:.2f}x")
    if ("python", "cached") in by_key and ("c", "cached") in by_key:
        speedup = by_key[("python", "cached")].factor_pass_s / by_key[("c", "cached")].factor_pass_s
        lines.append(f"compiled speedup over pure Python (cached, factor pass): {speedup:.2f}x")
    if identical is not None:
        lines.append(f"backends produce bit-identical models: {identical}")
    return "\n".join(lines)


def rows_csv(rows) -> str:
    out = ["backend,plan,factor_pass_s,core_pass_s,nnz"]
    out += [f"{r.backend},{r.plan},{r.factor_pass_s!r},{r.core_pass_s!r},{r.nnz}" for r in rows]
    return "\n".join(out) + "\n"
