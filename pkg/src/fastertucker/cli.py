"""Command-line front end.

Subcommands: generate, train, count, bench. Exit codes are stable:
0 success, 1 usage error, 2 invalid input/config (including capacity),
3 divergence during training, 4 operation-count mismatch.

`FASTERTUCKER_THREADS` overrides `--parallel`; `FASTERTUCKER_BACKEND`
forces a kernel backend.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import bench as _bench
from ._kernels import current_backend
from .cache import counted_sweep_cost, precompute_cache
from .coo import generate_synthetic, load_coo, split_dataset, write_coo
from .counter import OpCounter
from .csf import build_forest
from .errors import (
    BuildError,
    ConfigError,
    CountMismatchError,
    DivergenceError,
    FasterTuckerError,
    ParseError,
    ValidationError,
)
from .model import InitSpec, default_init_model, hidden_low_rank_model, init_model, save_model
from .train import METRICS_CSV_HEADER, TrainConfig, train, update_factor_mode


def parse_dims(text: str) -> tuple[int, ...]:
    """Accept '1000,1000,1000' or the shorthand '1000^3'."""
    text = text.strip()
    if "^" in text:
        base, _, power = text.partition("^")
        return tuple([int(base)] * int(power))
    return tuple(int(part) for part in text.split(","))


def parse_ranks(text: str, order: int) -> tuple[int, ...]:
    ranks = parse_dims(text)
    if len(ranks) == 1:
        ranks = ranks * order
    if len(ranks) != order:
        raise ConfigError(f"--ranks gives {len(ranks)} values for order {order}")
    return ranks


def parse_pair(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigError(f"{flag} expects LO:HI, got {text!r}")
    return float(parts[0]), float(parts[1])


def parse_parallel(text: str) -> int:
    if text == "serial":
        return 0
    workers = int(text)
    if workers < 1:
        raise ConfigError(f"--parallel expects 'serial' or a positive integer, got {text!r}")
    return workers


def _resolve_workers(args) -> int:
    env = os.environ.get("FASTERTUCKER_THREADS")
    if env:
        return parse_parallel(env)
    return parse_parallel(args.parallel)


def _add_shape_flags(p, with_nnz=True):
    p.add_argument("--order", type=int, help="tensor order N")
    p.add_argument("--dims", type=str, help="mode extents: 'I1,...,IN' or 'I^N'")
    if with_nnz:
        p.add_argument("--nnz", type=int, help="number of nonzero entries")
    p.add_argument("--seed", type=int, default=0)


def _add_model_flags(p):
    p.add_argument("--ranks", type=str, help="factor ranks: 'J1,...,JN' or a single J")
    p.add_argument("--core-rank", type=int, help="shared core rank R")
    p.add_argument("--init", type=str, default=None,
                   help="raw uniform init range LO:HI (default: scaled uniform)")


def _add_train_flags(p):
    p.add_argument("--lr-a", type=float, default=1e-3)
    p.add_argument("--lr-b", type=float, default=1e-3)
    p.add_argument("--reg-a", type=float, default=1e-2)
    p.add_argument("--reg-b", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--plan", choices=("cached", "uncached"), default="cached")
    p.add_argument("--parallel", type=str, default="serial",
                   help="'serial' or a worker count (env FASTERTUCKER_THREADS overrides)")
    p.add_argument("--fiber-threshold", type=int, default=128)
    p.add_argument("--rmse-delta-stop", type=float, default=None)


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise ConfigError(f"missing required flags: {', '.join(missing)}")


def _check_order(args, dims) -> None:
    if args.order is not None and args.order != len(dims):
        raise ConfigError(f"--order {args.order} does not match dims of length {len(dims)}")


def _build_model(args, dims, ranks):
    if args.init is not None:
        lo, hi = parse_pair(args.init, "--init")
        return init_model(dims, ranks, args.core_rank, InitSpec(lo, hi, args.seed))
    return default_init_model(dims, ranks, args.core_rank, args.seed)


def cmd_generate(args) -> int:
    if args.from_manifest:
        with open(args.from_manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        args.dims = ",".join(str(d) for d in manifest["dims"])
        args.nnz = manifest["nnz"]
        args.seed = manifest["seed"]
        args.value_range = f"{manifest['value_range'][0]}:{manifest['value_range'][1]}"
        if manifest.get("low_rank"):
            args.low_rank = True
            args.ranks = ",".join(str(j) for j in manifest["low_rank"]["ranks"])
            args.core_rank = manifest["low_rank"]["core_rank"]
        if args.out is None:
            args.out = manifest["out"]
    _require(args, "dims", "nnz", "out")
    dims = parse_dims(args.dims)
    _check_order(args, dims)
    value_range = parse_pair(args.value_range, "--value-range")
    low_rank = None
    if args.low_rank:
        _require(args, "ranks", "core_rank")
        low_rank = (parse_ranks(args.ranks, len(dims)), args.core_rank)
    tensor = generate_synthetic(dims, args.nnz, value_range, args.seed, low_rank)
    write_coo(args.out, tensor)
    manifest = {
        "command": "generate",
        "order": len(dims),
        "dims": list(dims),
        "nnz": args.nnz,
        "seed": args.seed,
        "value_range": list(value_range),
        "low_rank": None,
        "out": args.out,
    }
    if low_rank is not None:
        manifest["low_rank"] = {"ranks": list(low_rank[0]), "core_rank": low_rank[1]}
        hidden = hidden_low_rank_model(dims, low_rank[0], low_rank[1], args.seed)
        save_model(args.out + ".hidden.ckpt", hidden)
    with open(args.out + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {tensor.nnz} entries to {args.out} (dims {'x'.join(map(str, dims))})")
    return 0


def cmd_train(args) -> int:
    _require(args, "input", "order", "ranks", "core_rank", "out")
    dims = parse_dims(args.dims) if args.dims else None
    normalize = parse_pair(args.normalize, "--normalize") if args.normalize else None
    tensor = load_coo(args.input, args.order, dims, normalize)
    ranks = parse_ranks(args.ranks, tensor.order)
    split = split_dataset(tensor, args.test_fraction, args.seed)
    model = _build_model(args, tensor.dims, ranks)
    cfg = TrainConfig(
        lr_a=args.lr_a,
        lr_b=args.lr_b,
        reg_a=args.reg_a,
        reg_b=args.reg_b,
        epochs=args.epochs,
        plan=args.plan,
        workers=_resolve_workers(args),
        seed=args.seed,
        fiber_threshold=args.fiber_threshold,
        rmse_delta_stop=args.rmse_delta_stop,
    )
    counter = OpCounter()
    sweep_log = [] if args.counters else None
    metrics = train(model, split.train, cfg, split.test, counter=counter, sweep_log=sweep_log)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(METRICS_CSV_HEADER + "\n")
        for row in metrics:
            fh.write(row.csv_row() + "\n")
    if args.checkpoint:
        save_model(args.checkpoint, model)
    if args.counters:
        with open(args.counters, "w", encoding="utf-8") as fh:
            fh.write("plan,mode,channel,count\n")
            for plan, mode, channel, count in sweep_log:
                fh.write(f"{plan},{mode},{channel},{count}\n")
    if args.summary_json:
        last = metrics[-1]
        summary = {
            "backend": current_backend(),
            "plan": cfg.plan,
            "epochs_run": last.epoch,
            "train_rmse": last.train_rmse,
            "test_rmse": last.test_rmse,
            "train_mae": last.train_mae,
            "test_mae": last.test_mae,
            "multiplies": last.multiplies,
        }
        with open(args.summary_json, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    last = metrics[-1]
    print(
        f"epoch {last.epoch}: train_rmse={last.train_rmse:.6f} test_rmse={last.test_rmse:.6f} "
        f"multiplies={last.multiplies}"
    )
    return 0


def _count_report_line(label, measured, formula_text, expected) -> str:
    status = "ok" if measured == expected else "MISMATCH"
    return f"{label:<22} measured={measured:<15} {formula_text}={expected:<15} {status}"


def cmd_count(args) -> int:
    _require(args, "ranks", "core_rank")
    if args.input:
        _require(args, "order")
        tensor = load_coo(args.input, args.order)
    else:
        _require(args, "dims", "nnz")
        dims = parse_dims(args.dims)
        _check_order(args, dims)
        tensor = generate_synthetic(dims, args.nnz, seed=args.seed)
    ranks = parse_ranks(args.ranks, tensor.order)
    model = _build_model(args, tensor.dims, ranks)
    forest = build_forest(tensor, args.fiber_threshold)
    N, R, nnz = tensor.order, args.core_rank, tensor.nnz
    sum_jr = sum(j * R for j in ranks)
    sum_ijr = sum(d * j * R for d, j in zip(tensor.dims, ranks))

    lines = []
    ok = True

    measured = counted_sweep_cost("uncached", tensor, model, forest)
    expected = (N - 1) * nnz * sum_jr
    lines.append(_count_report_line("uncached factor pass", measured, "(N-1)*nnz*sum(JnR)", expected))
    ok &= measured == expected

    measured = counted_sweep_cost("cached", tensor, model, forest)
    lines.append(_count_report_line("cached factor pass", measured, "sum(In*Jn*R)", sum_ijr))
    ok &= measured == sum_ijr

    pre_counter = OpCounter()
    precompute_cache(model, pre_counter)
    lines.append(_count_report_line("precompute", pre_counter["dot"], "sum(In*Jn*R)", sum_ijr))
    ok &= pre_counter["dot"] == sum_ijr

    cache = precompute_cache(model)
    cfg = TrainConfig(lr_a=0.0, lr_b=0.0, reg_a=0.0, reg_b=0.0, plan="cached",
                      fiber_threshold=args.fiber_threshold)
    for n in range(N):
        counter = OpCounter()
        update_factor_mode(model, forest, cache, n, cfg, counter)
        tree = forest.trees[n]
        u = tree.leaf_mode
        expected = tree.num_fibers * (ranks[u] * R + N - 2)
        lines.append(
            _count_report_line(
                f"shared tree={n} mode={u}", counter["shared"], "fibers*(JuR+N-2)", expected
            )
        )
        ok &= counter["shared"] == expected

    print("\n".join(lines))
    if not ok:
        raise CountMismatchError("measured operation counts disagree with closed forms")
    ratio = ((N - 1) * nnz * sum_jr) / sum_ijr
    print(f"uncached/cached dot-cost ratio: {ratio:.2f}x")
    return 0


def cmd_bench(args) -> int:
    _require(args, "dims", "nnz", "ranks", "core_rank")
    dims = parse_dims(args.dims)
    _check_order(args, dims)
    ranks = parse_ranks(args.ranks, len(dims))
    tensor = generate_synthetic(dims, args.nnz, seed=args.seed)
    if args.backends == "both":
        rows, identical = _bench.bench_backends(
            tensor, ranks, args.core_rank, args.fiber_threshold, args.repeat, args.seed
        )
    else:
        backend = None if args.backends == "auto" else args.backends
        rows = _bench.bench_plans(
            tensor, ranks, args.core_rank, args.fiber_threshold, args.repeat, args.seed, backend
        )
        identical = None
    print(_bench.format_report(rows, identical))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(_bench.rows_csv(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fastertucker",
        description="Sparse tensor factorization with factorized cores and cached sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic COO tensor plus manifest")
    _add_shape_flags(p)
    _add_model_flags(p)
    p.add_argument("--value-range", type=str, default="1:5", help="uniform value range LO:HI")
    p.add_argument("--low-rank", action="store_true",
                   help="draw values from a hidden factor model (--ranks/--core-rank)")
    p.add_argument("--out", type=str, help="output COO path")
    p.add_argument("--from-manifest", type=str, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train on a COO file and write metrics + checkpoint")
    p.add_argument("--input", type=str, help="COO text file")
    _add_shape_flags(p, with_nnz=False)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--normalize", type=str, default=None, help="min-max scale values to LO:HI")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", type=str, help="metrics CSV path")
    p.add_argument("--checkpoint", type=str, default=None, help="model checkpoint path")
    p.add_argument("--counters", type=str, default=None, help="per-sweep counter CSV path")
    p.add_argument("--summary-json", type=str, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("count", help="verify multiply counters against closed forms")
    p.add_argument("--input", type=str, default=None)
    _add_shape_flags(p)
    _add_model_flags(p)
    p.add_argument("--fiber-threshold", type=int, default=128)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("bench", help="benchmark plans and kernel backends")
    _add_shape_flags(p)
    _add_model_flags(p)
    p.add_argument("--fiber-threshold", type=int, default=128)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--backends", choices=("auto", "both", "c", "python"), default="auto")
    p.add_argument("--out", type=str, default=None, help="CSV output path")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except CountMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FasterTuckerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
