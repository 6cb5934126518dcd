"""SGD training sweeps over the fiber forest.

An epoch runs one factor pass then one core pass. Each pass walks the N
trees in root-mode order; the tree rooted at mode t updates the parameters
of its leaf mode (t + N - 1) mod N, so a full pass touches every mode.
Factor rows step immediately per leaf (batch of one); core matrices
accumulate a full-sweep gradient and step once, normalized by the total
nonzero count.

Update rule (verified against central finite differences of the halved
per-element objective 0.5*(x - xhat)^2 + 0.5*reg*||w||^2):

    factor row:  w -= lr_a * (reg_a * w - e * shared_vec)
    core col r:  accumulate -e * rank_product[r] * row over all leaves,
                 then B -= lr_b * (acc / nnz + reg_b * B)

Parallel mode is lock-free: each worker owns one subtensor at a time from
a shared queue; factor-row writes may race (hogwild), core gradients go to
worker-private buffers merged at a barrier. Serial mode is bit-deterministic
and identical between the cached and uncached plans.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _kern
from .cache import DotCache, precompute_cache, refresh_mode
from .counter import OpCounter, new_raw_counts
from .csf import CsfForest, build_forest
from .errors import ConfigError, DivergenceError, ValidationError
from .model import Model, factored_inner, predict_batch, predict_element


@dataclass(frozen=True)
class TrainConfig:
    """Learning rates, regularizers, plan, and execution mode.

    The lr/reg defaults are conventional placeholders; every experiment and
    test should pin its own. `workers <= 1` selects the deterministic
    serial path.
    """

    lr_a: float = 1e-3
    lr_b: float = 1e-3
    reg_a: float = 1e-2
    reg_b: float = 1e-2
    epochs: int = 10
    plan: str = "cached"
    workers: int = 0
    seed: int = 0
    fiber_threshold: int | None = 128
    divergence_limit: float = 1e12
    rmse_delta_stop: float | None = None

    def __post_init__(self):
        if self.plan not in ("cached", "uncached"):
            raise ConfigError(f"plan must be 'cached' or 'uncached', got {self.plan!r}")
        if self.lr_a < 0 or self.lr_b < 0 or self.reg_a < 0 or self.reg_b < 0:
            raise ConfigError("learning rates and regularizers must be non-negative")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class EpochMetrics:
    epoch: int
    train_rmse: float
    train_mae: float
    test_rmse: float
    test_mae: float
    seconds: float
    multiplies: int
    counts: dict = field(default_factory=dict)

    def csv_row(self) -> str:
        return (
            f"{self.epoch},{self.train_rmse!r},{self.test_rmse!r},"
            f"{self.train_mae!r},{self.test_mae!r},{self.seconds:.6f},{self.multiplies}"
        )


METRICS_CSV_HEADER = "epoch,train_rmse,test_rmse,train_mae,test_mae,seconds,multiplies"


def evaluate(model: Model, tensor) -> tuple[float, float]:
    """Root-mean-square and mean-absolute error over a tensor's entries."""
    if tensor is None or tensor.nnz == 0:
        raise ValidationError("cannot evaluate on an empty entry set")
    resid = tensor.vals - predict_batch(model, tensor.idx)
    rmse = math.sqrt(float(resid @ resid) / resid.size)
    mae = float(np.abs(resid).sum()) / resid.size
    return rmse, mae


def _guard_factor(model: Model, mode: int, cfg: TrainConfig) -> None:
    a = model.factors[mode]
    if not np.isfinite(a).all() or float(np.abs(a).max()) > cfg.divergence_limit:
        raise DivergenceError(f"factor mode {mode} diverged", mode=mode)


def _guard_core(model: Model, mode: int, cfg: TrainConfig) -> None:
    b = model.cores_t[mode]
    if not np.isfinite(b).all() or float(np.abs(b).max()) > cfg.divergence_limit:
        raise DivergenceError(f"core mode {mode} diverged", mode=mode)


def _tree_args(tree):
    return (
        tree.leaf_coord,
        tree.vals,
        tree.fiber_ptr,
        tree.fiber_coord,
        tree.prefix_modes,
        tree.leaf_mode,
    )


def _parallel_over_subtensors(tree, workers: int, task) -> None:
    """Dynamic queue of subtensors; task(worker_id, fib_lo, fib_hi)."""
    state = {"next": 0}
    lock = threading.Lock()
    errors: list[BaseException] = []
    sub_ptr = tree.sub_fiber_ptr

    def loop(wid: int) -> None:
        try:
            while True:
                with lock:
                    s = state["next"]
                    if s >= tree.num_subtensors:
                        return
                    state["next"] = s + 1
                task(wid, int(sub_ptr[s]), int(sub_ptr[s + 1]))
        except BaseException as exc:  # surface worker failures to the caller
            errors.append(exc)

    threads = [threading.Thread(target=loop, args=(w,)) for w in range(workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]


def update_factor_mode(
    model: Model,
    forest: CsfForest,
    cache: DotCache | None,
    n: int,
    cfg: TrainConfig,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Sweep the tree rooted at mode n, updating its leaf mode's factor rows.

    Refreshes the updated mode's dot cache afterwards (cached plan).
    Returns the raw per-channel multiply tallies of the sweep.
    """
    tree = forest.trees[n]
    u = tree.leaf_mode
    dots = cache.arrays if cfg.plan == "cached" else None
    args = _tree_args(tree)
    total = new_raw_counts()
    if cfg.workers <= 1:
        _kern.impl.factor_sweep(
            *args, model.factors, model.cores_t, dots, cfg.lr_a, cfg.reg_a,
            total, 0, tree.num_fibers,
        )
    else:
        raws = [new_raw_counts() for _ in range(cfg.workers)]

        def task(wid, lo, hi):
            _kern.impl.factor_sweep(
                *args, model.factors, model.cores_t, dots, cfg.lr_a, cfg.reg_a,
                raws[wid], lo, hi,
            )

        _parallel_over_subtensors(tree, cfg.workers, task)
        for raw in raws:
            total += raw
    _guard_factor(model, u, cfg)
    if cache is not None:
        cache.mark_dirty(u)
        if cfg.plan == "cached":
            refresh = new_raw_counts()
            _kern.impl.refresh_dot_mode(model.factors[u], model.cores_t[u], cache.arrays[u], refresh)
            cache.dirty[u] = False
            total += refresh
    if counter is not None:
        counter.merge(total)
    return total


def update_core_mode(
    model: Model,
    forest: CsfForest,
    cache: DotCache | None,
    n: int,
    cfg: TrainConfig,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Sweep the tree rooted at mode n, accumulating its leaf mode's core
    gradient over every entry, then apply one batch step normalized by the
    full nonzero count."""
    tree = forest.trees[n]
    u = tree.leaf_mode
    dots = cache.arrays if cfg.plan == "cached" else None
    args = _tree_args(tree)
    R, Ju = model.core_rank, model.ranks[u]
    total = new_raw_counts()
    if cfg.workers <= 1:
        acc = np.zeros((R, Ju))
        _kern.impl.core_sweep(
            *args, model.factors, model.cores_t, dots, acc, total, 0, tree.num_fibers
        )
    else:
        raws = [new_raw_counts() for _ in range(cfg.workers)]
        accs = [np.zeros((R, Ju)) for _ in range(cfg.workers)]

        def task(wid, lo, hi):
            _kern.impl.core_sweep(
                *args, model.factors, model.cores_t, dots, accs[wid], raws[wid], lo, hi
            )

        _parallel_over_subtensors(tree, cfg.workers, task)
        for raw in raws:
            total += raw
        acc = accs[0]
        for extra in accs[1:]:
            acc += extra
    _kern.impl.apply_core_update(model.cores_t[u], acc, float(tree.nnz), cfg.lr_b, cfg.reg_b, total)
    _guard_core(model, u, cfg)
    if cache is not None:
        cache.mark_dirty(u)
        if cfg.plan == "cached":
            refresh = new_raw_counts()
            _kern.impl.refresh_dot_mode(model.factors[u], model.cores_t[u], cache.arrays[u], refresh)
            cache.dirty[u] = False
            total += refresh
    if counter is not None:
        counter.merge(total)
    return total


def run_epoch(
    model: Model,
    forest: CsfForest,
    cache: DotCache | None,
    train_tensor,
    cfg: TrainConfig,
    counter: OpCounter,
    epoch_no: int,
    test_tensor=None,
    sweep_log: list | None = None,
) -> EpochMetrics:
    """One factor pass then one core pass, followed by evaluation."""
    t0 = time.perf_counter()
    try:
        for n in range(model.order):
            raw = update_factor_mode(model, forest, cache, n, cfg, counter)
            if sweep_log is not None:
                _log_sweep(sweep_log, cfg.plan, "factor", forest.trees[n].leaf_mode, raw)
        for n in range(model.order):
            raw = update_core_mode(model, forest, cache, n, cfg, counter)
            if sweep_log is not None:
                _log_sweep(sweep_log, cfg.plan, "core", forest.trees[n].leaf_mode, raw)
    except DivergenceError as exc:
        raise DivergenceError(
            f"divergence at epoch {epoch_no}, mode {exc.mode}", mode=exc.mode, epoch=epoch_no
        ) from None
    seconds = time.perf_counter() - t0
    return _metrics(model, train_tensor, test_tensor, cfg, counter, epoch_no, seconds)


def _log_sweep(sweep_log, plan, kind, mode, raw):
    from .counter import CHANNELS

    for i, name in enumerate(CHANNELS):
        sweep_log.append((plan, f"{kind}:{mode}", name, int(raw[i])))


def _metrics(model, train_tensor, test_tensor, cfg, counter, epoch_no, seconds):
    train_rmse, train_mae = evaluate(model, train_tensor)
    if test_tensor is not None:
        test_rmse, test_mae = evaluate(model, test_tensor)
    else:
        test_rmse = test_mae = float("nan")
    return EpochMetrics(
        epoch=epoch_no,
        train_rmse=train_rmse,
        train_mae=train_mae,
        test_rmse=test_rmse,
        test_mae=test_mae,
        seconds=seconds,
        multiplies=counter.total_multiplies,
        counts=counter.snapshot(),
    )


def train(
    model: Model,
    train_tensor,
    cfg: TrainConfig,
    test_tensor=None,
    forest: CsfForest | None = None,
    counter: OpCounter | None = None,
    sweep_log: list | None = None,
) -> list[EpochMetrics]:
    """Full training loop; row 0 evaluates the initial model.

    Stops at cfg.epochs, or earlier when the monitored RMSE moves by less
    than cfg.rmse_delta_stop between epochs (if set).
    """
    if forest is None:
        forest = build_forest(train_tensor, cfg.fiber_threshold)
    if counter is None:
        counter = OpCounter()
    cache = precompute_cache(model, counter) if cfg.plan == "cached" else None
    metrics = [_metrics(model, train_tensor, test_tensor, cfg, counter, 0, 0.0)]
    for epoch_no in range(1, cfg.epochs + 1):
        m = run_epoch(
            model, forest, cache, train_tensor, cfg, counter, epoch_no, test_tensor, sweep_log
        )
        metrics.append(m)
        if cfg.rmse_delta_stop is not None and len(metrics) >= 2:
            monitored = "test_rmse" if test_tensor is not None else "train_rmse"
            prev, cur = getattr(metrics[-2], monitored), getattr(metrics[-1], monitored)
            if abs(prev - cur) < cfg.rmse_delta_stop:
                break
    return metrics


# Analytic per-element gradients, shared by the tests that check the sweep
# kernels against central finite differences of `element_loss_*`.


def _element_parts(model: Model, coord, mode: int):
    R = model.core_rank
    cross = np.empty(R)
    for r in range(R):
        cross[r] = factored_inner(model, coord, mode, r)
    vec = np.zeros(model.ranks[mode])
    for r in range(R):
        vec += cross[r] * model.cores_t[mode][r]
    row = model.factors[mode][coord[mode]]
    return cross, vec, row


def factor_gradient(model: Model, coord, x: float, mode: int, reg: float) -> np.ndarray:
    """Gradient of 0.5*(x - xhat)^2 + 0.5*reg*||row||^2 w.r.t. the factor row."""
    cross, vec, row = _element_parts(model, coord, mode)
    e = x - float(np.dot(row, vec))
    return -e * vec + reg * row


def core_gradient(model: Model, coord, x: float, mode: int, reg: float) -> np.ndarray:
    """Gradient of 0.5*(x - xhat)^2 + 0.5*reg*||B||^2 w.r.t. the transposed core."""
    cross, vec, row = _element_parts(model, coord, mode)
    e = x - float(np.dot(row, vec))
    grad = np.empty_like(model.cores_t[mode])
    for r in range(model.core_rank):
        grad[r] = -e * cross[r] * row + reg * model.cores_t[mode][r]
    return grad


def element_loss_factor(model: Model, coord, x: float, mode: int, reg: float) -> float:
    e = x - predict_element(model, coord)
    row = model.factors[mode][coord[mode]]
    return 0.5 * e * e + 0.5 * reg * float(np.dot(row, row))


def element_loss_core(model: Model, coord, x: float, mode: int, reg: float) -> float:
    e = x - predict_element(model, coord)
    b = model.cores_t[mode]
    return 0.5 * e * e + 0.5 * reg * float(np.sum(b * b))
