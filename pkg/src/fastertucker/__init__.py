"""Sparse tensor factorization with factorized cores, cached intermediates,
and balanced compressed-sparse-fiber indexing.

Hot sweeps run in a compiled extension when available and fall back to a
bit-identical pure-Python kernel module otherwise; see
`fastertucker._kernels`.
"""

from ._kernels import BACKEND, COMPILED
from .cache import DotCache, OpCounter, SharedVec, counted_sweep_cost, precompute_cache, refresh_mode, shared_vec
from .coo import DatasetSplit, SparseCooTensor, generate_synthetic, load_coo, split_dataset, write_coo
from .csf import CsfForest, CsfTree, balance_stats, build_forest, build_tree, dump_tree, flatten_leaves, traverse
from .model import (
    InitSpec,
    Model,
    default_init_model,
    factored_inner,
    full_loss,
    hidden_low_rank_model,
    init_model,
    kron_inner,
    load_model,
    predict_batch,
    predict_element,
    predict_element_via_mode,
    save_model,
)
from .train import EpochMetrics, TrainConfig, evaluate, run_epoch, train, update_core_mode, update_factor_mode

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "COMPILED",
    "CsfForest",
    "CsfTree",
    "DatasetSplit",
    "DotCache",
    "EpochMetrics",
    "InitSpec",
    "Model",
    "OpCounter",
    "SharedVec",
    "SparseCooTensor",
    "TrainConfig",
    "balance_stats",
    "build_forest",
    "build_tree",
    "counted_sweep_cost",
    "default_init_model",
    "dump_tree",
    "evaluate",
    "factored_inner",
    "flatten_leaves",
    "full_loss",
    "generate_synthetic",
    "hidden_low_rank_model",
    "init_model",
    "kron_inner",
    "load_coo",
    "load_model",
    "precompute_cache",
    "predict_batch",
    "predict_element",
    "predict_element_via_mode",
    "refresh_mode",
    "run_epoch",
    "save_model",
    "shared_vec",
    "split_dataset",
    "train",
    "traverse",
    "update_core_mode",
    "update_factor_mode",
    "write_coo",
]
