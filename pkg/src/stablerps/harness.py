"""Desk-scale experiments: data synthesis, training, single runs and sweeps.

Every run is fully determined by ``(config, seed)``. Independent numpy
generators are derived from the seed for data, initialisation, mapping,
pruning and batch order so that, e.g., an RPS run and a pruning run with the
same seed see identical mini-batches.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .hashing import MappingKind
from .model import Dataset, ModelSpec, accuracy, forward, init_params, load_csv, loss_and_grad, shrink_model
from .pruning import ScorerKind, apply_mask, global_prune
from .store import CompressedStore, GammaKind, init_store
from .theory import sample_regression

CSV_COLUMNS = (
    "method",
    "mapping",
    "scaler",
    "compression",
    "seed",
    "steps",
    "final_loss",
    "accuracy",
    "norm",
    "diverged",
)

DIVERGENCE_NORM = 1e6


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


def synth_regression(n_features: int, rho, sigma_x: float, sigma_y: float, n_samples: int, seed: int = 0) -> Dataset:
    rho = np.broadcast_to(np.asarray(rho, dtype=np.float64), (n_features,))
    chunks = list(sample_regression(rho, sigma_x, sigma_y, n_samples, seed))
    x = np.concatenate([c[0] for c in chunks])
    y = np.concatenate([c[1] for c in chunks])
    return Dataset(x, y[:, None])


def synth_classification(
    classes: int, dim: int, separation: float, n_samples: int, seed: int = 0, clusters_per_class: int = 1
) -> Dataset:
    """Gaussian blobs with unit-variance noise.

    Each class is a mixture of ``clusters_per_class`` blobs whose centres are
    random directions scaled to norm ``separation``.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    if clusters_per_class < 1:
        raise ValueError("need at least one cluster per class")
    rng = np.random.default_rng(seed)
    centres = rng.standard_normal((classes * clusters_per_class, dim))
    centres *= separation / np.linalg.norm(centres, axis=1, keepdims=True)
    blob = rng.permutation(np.arange(n_samples) % (classes * clusters_per_class))
    x = centres[blob] + rng.standard_normal((n_samples, dim))
    return Dataset(x, (blob % classes).astype(np.int64))


# ---------------------------------------------------------------------------
# Configuration and records
# ---------------------------------------------------------------------------


@dataclass
class MethodConfig:
    name: str = "rps"  # rps | prune | small_model | full
    mapping: str = MappingKind.STABLE_RPS.value
    scaler: str = GammaKind.EFFECTIVE.value
    init_stdev: float = 0.01
    chunk_len: int = 32
    scorer: str = ScorerKind.RANDOM.value
    rounds: int = 100

    def __post_init__(self):
        if self.name not in ("rps", "prune", "small_model", "full"):
            raise ValueError(f"unknown method {self.name!r}")
        MappingKind(self.mapping)
        GammaKind(self.scaler)
        ScorerKind(self.scorer)
        if self.init_stdev <= 0:
            raise ValueError("init_stdev must be positive")

    @property
    def mapping_label(self) -> str:
        return self.mapping if self.name == "rps" else ""

    @property
    def scaler_label(self) -> str:
        if self.name == "rps":
            return self.scaler
        return self.scorer if self.name == "prune" else ""


@dataclass
class ExperimentConfig:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    dataset: dict = field(
        default_factory=lambda: {
            "kind": "classification",
            "classes": 4,
            "dim": 20,
            "separation": 4.0,
            "clusters_per_class": 8,
            "n_train": 4000,
            "n_test": 2000,
            "seed": 1234,
        }
    )
    method: MethodConfig = field(default_factory=MethodConfig)
    compression: float = 1.0
    lr: float = 0.1
    steps: int = 3000
    batch_size: int = 64
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    target_stds: tuple[float, ...] | None = None

    def __post_init__(self):
        if isinstance(self.method, dict):
            self.method = MethodConfig(**self.method)
        self.hidden = tuple(self.hidden)
        self.seeds = tuple(self.seeds)
        if self.target_stds is not None:
            self.target_stds = tuple(self.target_stds)
        if self.compression < 1:
            raise ValueError("compression must be >= 1")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "ExperimentConfig":
        if "method" in changes and isinstance(changes["method"], dict):
            changes["method"] = dataclasses.replace(self.method, **changes["method"])
        return dataclasses.replace(self, **changes)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("seeds")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class RunRecord:
    config_hash: str
    method: str
    mapping: str
    scaler: str
    compression: float
    seed: int
    steps: int
    final_loss: float
    accuracy: float
    norm: float
    diverged: bool
    actual_compression: float

    def csv_row(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _batches(n_samples: int, batch_size: int, steps: int, seed: int):
    """Index batches for ``steps`` SGD steps (epoch-wise reshuffles)."""
    rng = np.random.default_rng([seed, 7])
    order = np.empty(0, dtype=np.int64)
    pos = 0
    for _ in range(steps):
        if batch_size >= n_samples:
            yield np.arange(n_samples)
            continue
        if pos + batch_size > order.size:
            order = rng.permutation(n_samples)
            pos = 0
        yield order[pos : pos + batch_size]
        pos += batch_size


def _diverged(loss: float, norm: float) -> bool:
    return not (math.isfinite(loss) and math.isfinite(norm)) or norm > DIVERGENCE_NORM


@dataclass
class TrainResult:
    params: np.ndarray
    losses: list[float]
    diverged: bool
    trajectory: list[np.ndarray] | None = None


def train_dense(
    spec: ModelSpec,
    params: np.ndarray,
    data: Dataset,
    lr: float,
    steps: int,
    batch_size: int,
    seed: int = 0,
    keep: np.ndarray | None = None,
    record: bool = False,
) -> TrainResult:
    """SGD on a dense (optionally masked) model."""
    params = np.array(params, dtype=np.float64)
    if keep is not None:
        params = apply_mask(params, keep)
    losses, traj = [], [params.copy()] if record else None
    diverged = False
    with np.errstate(all="ignore"):
        for idx in _batches(len(data), batch_size, steps, seed):
            loss, grad, _ = loss_and_grad(spec, params, data.inputs[idx], data.targets[idx])
            if keep is not None:
                grad = apply_mask(grad, keep)
            params -= lr * grad
            losses.append(loss)
            if record:
                traj.append(params.copy())
            if _diverged(loss, float(np.linalg.norm(params))):
                diverged = True
                break
    return TrainResult(params, losses, diverged, traj)


def train_rps(
    spec: ModelSpec,
    store: CompressedStore,
    biases: np.ndarray,
    data: Dataset,
    lr: float,
    steps: int,
    batch_size: int,
    seed: int = 0,
    scaler: GammaKind | str = GammaKind.EFFECTIVE,
    record: bool = False,
) -> TrainResult:
    """SGD on ``psi`` (Gamma-scaled) and the dense biases.

    ``store`` is updated in place; the returned params are recovered weights
    followed by biases.
    """
    n = spec.n_weights
    gamma = store.compute_gamma(scaler)
    biases = np.array(biases, dtype=np.float64)
    params = np.concatenate([store.recover(), biases])
    losses, traj = [], [params.copy()] if record else None
    diverged = False
    with np.errstate(all="ignore"):
        for idx in _batches(len(data), batch_size, steps, seed):
            loss, grad, _ = loss_and_grad(spec, params, data.inputs[idx], data.targets[idx])
            store.step(grad[:n], lr, gamma)
            biases -= lr * grad[n:]
            params = np.concatenate([store.recover(), biases])
            losses.append(loss)
            if record:
                traj.append(params.copy())
            if _diverged(loss, float(np.linalg.norm(params))):
                diverged = True
                break
    return TrainResult(params, losses, diverged, traj)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


def load_dataset(source: dict) -> tuple[Dataset, Dataset]:
    """``(train, test)`` from a dataset description."""
    kind = source.get("kind", "classification")
    seed = int(source.get("seed", 0))
    if kind == "classification":
        n_train, n_test = int(source.get("n_train", 2000)), int(source.get("n_test", 2000))
        full = synth_classification(
            int(source.get("classes", 4)), int(source.get("dim", 20)), float(source.get("separation", 3.0)),
            n_train + n_test, seed, int(source.get("clusters_per_class", 1)),
        )
        return full.subset(slice(0, n_train)), full.subset(slice(n_train, None))
    if kind == "regression":
        n_train, n_test = int(source.get("n_train", 2000)), int(source.get("n_test", 2000))
        full = synth_regression(
            int(source["n_features"]), source["rho"], float(source.get("sigma_x", 1.0)),
            float(source.get("sigma_y", 1.0)), n_train + n_test, seed,
        )
        return full.subset(slice(0, n_train)), full.subset(slice(n_train, None))
    if kind == "csv":
        cls = bool(source.get("classification", True))
        train = load_csv(source["path"], int(source.get("n_targets", 1)), cls)
        test = load_csv(source["test_path"], int(source.get("n_targets", 1)), cls) if "test_path" in source else train
        return train, test
    raise ValueError(f"unknown dataset kind {kind!r}")


def build_model(config: ExperimentConfig, train: Dataset) -> ModelSpec:
    if train.is_classification:
        out, loss = int(train.targets.max()) + 1, "softmax_ce"
        if "classes" in config.dataset:
            out = int(config.dataset["classes"])
    else:
        out, loss = train.targets.reshape(len(train), -1).shape[1], "mse"
    return ModelSpec.mlp([train.inputs.shape[1], *config.hidden, out], config.activation, loss)


def compressed_budget(n_weights: int, compression: float) -> int:
    budget = int(round(n_weights / compression))
    if budget < 1:
        raise ValueError("compression leaves no weights")
    return budget


def _evaluate(spec: ModelSpec, params: np.ndarray, test: Dataset, diverged: bool) -> tuple[float, float]:
    if spec.loss == "softmax_ce":
        chance = 100.0 / spec.out_dim
        if diverged:
            return float("nan"), chance
        out, loss = forward(spec, params, test.inputs, test.targets)
        return loss, accuracy(out, test.targets)
    if diverged:
        return float("nan"), float("nan")
    return forward(spec, params, test.inputs, test.targets)[1], float("nan")


def run_single(config: ExperimentConfig, seed: int, data: tuple[Dataset, Dataset] | None = None) -> RunRecord:
    train, test = data if data is not None else load_dataset(config.dataset)
    spec = build_model(config, train)
    n = spec.n_weights
    budget = compressed_budget(n, config.compression)
    meth = config.method
    stds = config.target_stds
    if meth.name == "rps":
        store = init_store(spec, budget, meth.init_stdev, stds, seed, meth.mapping, meth.chunk_len)
        res = train_rps(
            spec, store, np.zeros(spec.n_biases), train, config.lr, config.steps, config.batch_size, seed, meth.scaler
        )
        used = store.m
    else:
        if meth.name == "small_model":
            spec = shrink_model(spec, budget)
        params = init_params(spec, seed, None if meth.name == "small_model" else stds)
        keep = None
        if meth.name == "prune" and budget < n:
            batch = None
            if meth.scorer == ScorerKind.SNIP.value:
                pick = np.random.default_rng([seed, 11]).choice(len(train), min(128, len(train)), replace=False)
                batch = train.subset(pick)
            keep = global_prune(spec, params, meth.scorer, budget / n, meth.rounds, batch, seed).keep
        res = train_dense(spec, params, train, config.lr, config.steps, config.batch_size, seed, keep)
        used = spec.n_weights if keep is None else int(keep.sum())
    loss, acc = _evaluate(spec, res.params, test, res.diverged)
    return RunRecord(
        config_hash=config.config_hash(),
        method=meth.name,
        mapping=meth.mapping_label,
        scaler=meth.scaler_label,
        compression=float(config.compression),
        seed=int(seed),
        steps=len(res.losses),
        final_loss=float(loss),
        accuracy=float(acc),
        norm=float(np.linalg.norm(res.params[:spec.n_weights])) if not res.diverged else float("inf"),
        diverged=bool(res.diverged),
        actual_compression=n / used,
    )


def run_experiment(config: ExperimentConfig) -> list[RunRecord]:
    data = load_dataset(config.dataset)
    return [run_single(config, s, data) for s in config.seeds]


def expand_grid(
    base: ExperimentConfig, methods: Sequence[MethodConfig | dict], compressions: Sequence[float]
) -> list[ExperimentConfig]:
    """Cartesian product methods x compressions (seeds stay in each config)."""
    out = []
    for meth in methods:
        meth = meth if isinstance(meth, MethodConfig) else MethodConfig(**meth)
        for c in compressions:
            out.append(dataclasses.replace(base, method=meth, compression=float(c)))
    return out


def sweep(configs: Iterable[ExperimentConfig], threads: int = 1) -> list[RunRecord]:
    """All runs of all configs, ordered by config index then seed."""
    configs = list(configs)
    if not configs:
        raise ValueError("need at least one config")
    jobs = [(c, s) for c in configs for s in c.seeds]

    def one(job):
        cfg, seed = job
        try:
            return run_single(cfg, seed)
        except Exception as exc:  # recorded per row, never aborts the sweep
            return _failed(cfg, seed, exc)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


def _failed(cfg: ExperimentConfig, seed: int, exc: Exception) -> RunRecord:
    return RunRecord(
        cfg.config_hash(), cfg.method.name, cfg.method.mapping_label, f"error: {type(exc).__name__}",
        float(cfg.compression), int(seed), 0, float("nan"), float("nan"), float("nan"), True, float("nan"),
    )


def records_to_csv(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def write_csv(records: Sequence[RunRecord], path: str | Path) -> None:
    Path(path).write_text(records_to_csv(records))


def summarize(records: Sequence[RunRecord]) -> dict[tuple, tuple[float, float]]:
    """Mean and std of accuracy per (method, mapping, scaler, compression)."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.method, r.mapping, r.scaler, r.compression), []).append(r.accuracy)
    return {k: (float(np.mean(v)), float(np.std(v))) for k, v in groups.items()}
