"""Hashed parameter sharing with stable mappings, gradient scalers and baselines."""

from .hashing import MappingKind, MappingSpec, bucket_array, cache_fetches, load_report, map_index
from .model import Dataset, Dense, ModelSpec, forward, init_params, loss_and_grad, shrink_model
from .pruning import PruneMask, ScorerKind, global_prune
from .store import CompressedStore, GammaKind, init_store, make_mapping
from .theory import Method, RegressionSpec, mc_variance, variance_closed_form
from .harness import ExperimentConfig, MethodConfig, run_single, sweep

__all__ = [
    "MappingKind", "MappingSpec", "bucket_array", "cache_fetches", "load_report", "map_index",
    "Dataset", "Dense", "ModelSpec", "forward", "init_params", "loss_and_grad", "shrink_model",
    "PruneMask", "ScorerKind", "global_prune",
    "CompressedStore", "GammaKind", "init_store", "make_mapping",
    "Method", "RegressionSpec", "mc_variance", "variance_closed_form",
    "ExperimentConfig", "MethodConfig", "run_single", "sweep",
]
