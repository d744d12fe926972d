"""The compressed parameter store and its gradient scalers.

A :class:`CompressedStore` holds the shared array ``psi`` (length ``m``),
a mapping from global weight index to bucket, and a positive scale
``lambda_i`` per weight. The recovered weight is::

    theta[i] = g(i) * lambda_i * psi[bucket(i)]

Gradients flow back by the transpose of that map. The optional per-bucket
scaler ``Gamma`` multiplies the psi-gradient before the optimizer step.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .hashing import MappingKind, MappingSpec, bucket_array, signs_for
from .model import ModelSpec, he_stds

FORMAT = "stablerps.store/1"


class GammaKind(str, enum.Enum):
    NONE = "none"
    THEORY = "theory"  # 1 / sum(lambda^2)
    EFFECTIVE = "effective"  # count / (sum lambda)^2


@dataclass(frozen=True)
class GammaVector:
    kind: GammaKind
    values: np.ndarray


@dataclass(frozen=True)
class StabilityRange:
    upper: float
    lower: float = 0.0

    def __contains__(self, lr: float) -> bool:
        return self.lower < lr < self.upper


def make_mapping(
    kind: MappingKind | str,
    n: int,
    m: int,
    seed: int = 0,
    *,
    chunk_len: int = 32,
    module_sizes: Sequence[int] | None = None,
) -> MappingSpec:
    """Mapping of ``kind`` over ``n`` weights.

    For ROAST the chunks are laid out module by module, each module cut into
    pieces of ``min(chunk_len, m)`` weights; ROBE-Z uses the same length as Z.
    """
    kind = MappingKind(kind)
    z = max(1, min(chunk_len, m))
    if kind is MappingKind.ROBE_Z:
        return MappingSpec(kind, n, m, seed, z=z)
    if kind is MappingKind.ROAST:
        sizes = list(module_sizes) if module_sizes is not None else [n]
        chunks, cid = [], 0
        for size in sizes:
            full, rest = divmod(size, z)
            for length in [z] * full + ([rest] if rest else []):
                chunks.append((cid, length))
                cid += 1
        return MappingSpec(kind, n, m, seed, chunks=tuple(chunks))
    return MappingSpec(kind, n, m, seed)


class CompressedStore:
    """RPS array ``psi`` plus mapping, signs and per-weight scales."""

    def __init__(
        self,
        psi: np.ndarray,
        mapping: MappingSpec,
        lambdas: np.ndarray,
        init_stdev: float = 1.0,
        module_sizes: Sequence[int] | None = None,
    ):
        psi = np.array(psi, dtype=np.float64)
        lambdas = np.broadcast_to(np.asarray(lambdas, dtype=np.float64), (mapping.n,)).copy()
        if psi.shape != (mapping.m,):
            raise ValueError(f"psi must have length m={mapping.m}")
        if np.any(lambdas <= 0) or not np.all(np.isfinite(lambdas)):
            raise ValueError("scale factors must be positive and finite")
        if init_stdev <= 0:
            raise ValueError("init_stdev must be positive")
        if module_sizes is not None and sum(module_sizes) != mapping.n:
            raise ValueError("module sizes must sum to n")
        self.psi = psi
        self.mapping = mapping
        self.lambdas = lambdas
        self.init_stdev = float(init_stdev)
        self.module_sizes = None if module_sizes is None else tuple(int(s) for s in module_sizes)
        self.buckets = bucket_array(mapping)
        self.signs = signs_for(mapping)
        # g(i) * lambda_i, the diagonal of the sign/scale matrix
        self.coef = self.signs * self.lambdas

    @property
    def n(self) -> int:
        return self.mapping.n

    @property
    def m(self) -> int:
        return self.mapping.m

    def bucket_loads(self) -> np.ndarray:
        return np.bincount(self.buckets, minlength=self.m)

    def _bucket_sum(self, values: np.ndarray) -> np.ndarray:
        # bincount accumulates in index order: deterministic reduction
        return np.bincount(self.buckets, weights=values, minlength=self.m)

    # -- recovery and its adjoint ------------------------------------------

    def recover(self, psi: np.ndarray | None = None) -> np.ndarray:
        """All recovered weights ``theta`` (length n)."""
        psi = self.psi if psi is None else psi
        return self.coef * psi[self.buckets]

    def recover_weight(self, i: int) -> float:
        if not 0 <= i < self.n:
            raise IndexError(f"index {i} out of range for n={self.n}")
        return float(self.coef[i] * self.psi[self.buckets[i]])

    def accumulate_gradient(self, grad_theta: np.ndarray) -> np.ndarray:
        """``grad_psi[j] = sum_{i -> j} g(i) lambda_i grad_theta[i]``."""
        grad_theta = np.asarray(grad_theta, dtype=np.float64)
        if grad_theta.shape != (self.n,):
            raise ValueError(f"gradient must have length n={self.n}")
        return self._bucket_sum(self.coef * grad_theta)

    def effective_update(self, grad_theta: np.ndarray, i: int, gamma: GammaVector | None = None) -> float:
        """Change of ``theta[i]`` per unit (negative) learning rate after one GD step."""
        if not 0 <= i < self.n:
            raise IndexError(f"index {i} out of range for n={self.n}")
        g_psi = self.accumulate_gradient(grad_theta)
        j = self.buckets[i]
        scale = 1.0 if gamma is None else gamma.values[j]
        return float(self.coef[i] * scale * g_psi[j])

    # -- scalers ----------------------------------------------------------

    def compute_gamma(self, kind: GammaKind | str = GammaKind.EFFECTIVE) -> GammaVector:
        kind = GammaKind(kind)
        values = np.ones(self.m)
        if kind is GammaKind.NONE:
            return GammaVector(kind, values)
        loads = self.bucket_loads()
        used = loads > 0
        if kind is GammaKind.THEORY:
            sq = self._bucket_sum(self.lambdas**2)
            values[used] = 1.0 / sq[used]
        else:
            s = self._bucket_sum(self.lambdas)
            values[used] = loads[used] / s[used] ** 2
        return GammaVector(kind, values)

    def stability_bound(self, lipschitz: float, scaler: GammaKind | str | bool | None = None) -> StabilityRange:
        """Largest stable GD learning rate for an ``L``-smooth loss through the store.

        The psi-space curvature is ``diag(R^T Lambda^2 R)``; with a scaler the
        step sees ``Gamma_j * sum_{i->j} lambda_i^2``. ``scaler=True`` means
        the theory-driven scaler, giving exactly ``2 / L``.
        """
        if lipschitz <= 0:
            raise ValueError("Lipschitz constant must be positive")
        if self.n == 0:
            raise ValueError("empty store")
        if scaler is True:
            scaler = GammaKind.THEORY
        elif scaler is False or scaler is None:
            scaler = GammaKind.NONE
        gamma = self.compute_gamma(scaler).values
        curvature = self._bucket_sum(self.lambdas**2) * gamma
        used = self.bucket_loads() > 0
        return StabilityRange(upper=2.0 / (lipschitz * float(curvature[used].max())))

    # -- training step ----------------------------------------------------

    def step(self, grad_theta: np.ndarray, lr: float, gamma: GammaVector | None = None) -> np.ndarray:
        """Plain GD step on psi; returns the (scaled) psi-gradient used."""
        g = self.accumulate_gradient(grad_theta)
        if gamma is not None:
            g = gamma.values * g
        self.psi -= lr * g
        return g

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        # run-length encode the per-weight scales; they are constant per module
        change = np.flatnonzero(np.diff(self.lambdas)) + 1
        starts = np.concatenate([[0], change])
        counts = np.diff(np.concatenate([starts, [self.n]]))
        return {
            "format": FORMAT,
            "mapping": self.mapping.to_dict(),
            "init_stdev": self.init_stdev,
            "module_sizes": None if self.module_sizes is None else list(self.module_sizes),
            "lambdas": [[float(self.lambdas[s]), int(c)] for s, c in zip(starts, counts)],
            "psi": [float(v) for v in self.psi],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompressedStore":
        if d.get("format") != FORMAT:
            raise ValueError(f"unsupported store format {d.get('format')!r}")
        lambdas = np.concatenate([np.full(c, v) for v, c in d["lambdas"]])
        return cls(
            np.array(d["psi"], dtype=np.float64),
            MappingSpec.from_dict(d["mapping"]),
            lambdas,
            d["init_stdev"],
            d.get("module_sizes"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "CompressedStore":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_store(
    model: ModelSpec,
    m: int,
    init_stdev: float,
    target_stds: Sequence[float] | None = None,
    seed: int = 0,
    mapping: MappingKind | str = MappingKind.STABLE_RPS,
    chunk_len: int = 32,
) -> CompressedStore:
    """Store for the weights of ``model`` (biases stay dense).

    Each layer's scale is ``target_std / init_stdev`` so recovered weights
    start with the layer's target spread; ``psi`` is drawn i.i.d.
    ``N(0, init_stdev^2)`` from ``seed``.
    """
    if init_stdev <= 0:
        raise ValueError("init_stdev must be positive")
    if m < 1:
        raise ValueError("m must be >= 1")
    stds = he_stds(model) if target_stds is None else np.asarray(target_stds, dtype=np.float64)
    if stds.shape != (len(model.layers),):
        raise ValueError("need one target std per layer")
    if np.any(stds <= 0):
        raise ValueError("target stds must be positive")
    sizes = [layer.n_weights for layer in model.layers]
    lambdas = np.repeat(stds / init_stdev, sizes)
    spec = make_mapping(mapping, model.n_weights, m, seed, chunk_len=chunk_len, module_sizes=sizes)
    # unit normals scaled afterwards, so psi0 / init_stdev is init-independent
    psi = np.random.default_rng(seed).standard_normal(m) * init_stdev
    return CompressedStore(psi, spec, lambdas, init_stdev, sizes)
