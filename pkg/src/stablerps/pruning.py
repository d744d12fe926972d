"""Global score-based pruning baselines (RAND, MAG, SNIP, SYNFLOW).

Scores cover the weights only (global indices ``[0, n)``); biases are
always kept. Iterative pruning follows a geometric schedule: after round
``r`` of ``R`` the surviving fraction is ``keep ** (r / R)``.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Dataset, ModelSpec, loss_and_grad, output_gradient

_MAGIC = b"RPSMASK1"


class ScorerKind(str, enum.Enum):
    RANDOM = "rand"
    MAGNITUDE = "mag"
    SNIP = "snip"
    SYNFLOW = "synflow"


@dataclass(frozen=True)
class PruneMask:
    keep: np.ndarray  # bool, one per weight
    scorer: ScorerKind = ScorerKind.RANDOM
    seed: int = 0
    keep_fraction: float = 1.0

    @property
    def n(self) -> int:
        return self.keep.size

    @property
    def count(self) -> int:
        return int(self.keep.sum())

    def to_bytes(self) -> bytes:
        header = json.dumps(
            {"n": self.n, "scorer": ScorerKind(self.scorer).value, "seed": self.seed,
             "keep_fraction": self.keep_fraction}
        ).encode()
        bits = np.packbits(self.keep.astype(np.uint8), bitorder="little").tobytes()
        return _MAGIC + struct.pack("<I", len(header)) + header + bits

    @classmethod
    def from_bytes(cls, blob: bytes) -> "PruneMask":
        if blob[:8] != _MAGIC:
            raise ValueError("not a mask blob")
        (hlen,) = struct.unpack("<I", blob[8:12])
        header = json.loads(blob[12 : 12 + hlen])
        bits = np.frombuffer(blob[12 + hlen :], dtype=np.uint8)
        keep = np.unpackbits(bits, count=header["n"], bitorder="little").astype(bool)
        return cls(keep, ScorerKind(header["scorer"]), header["seed"], header["keep_fraction"])

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "PruneMask":
        return cls.from_bytes(Path(path).read_bytes())


def score(
    model: ModelSpec,
    params: np.ndarray,
    kind: ScorerKind | str,
    batch: Dataset | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Per-weight importance scores (higher survives)."""
    kind = ScorerKind(kind)
    n = model.n_weights
    if (kind is ScorerKind.SNIP) != (batch is not None):
        raise ValueError("a data batch is required for SNIP and only for SNIP")
    theta = np.asarray(params, dtype=np.float64)
    if kind is ScorerKind.RANDOM:
        return np.random.default_rng(seed).random(n)
    if kind is ScorerKind.MAGNITUDE:
        return np.abs(theta[:n])
    if kind is ScorerKind.SNIP:
        _, grad, _ = loss_and_grad(model, theta, batch.inputs, batch.targets)
        return np.abs(grad[:n] * theta[:n])
    # SynFlow: all parameters replaced by |theta|, all-ones input, R = sum(outputs)
    abs_params = np.abs(theta)
    ones = np.ones((1, model.in_dim))
    _, grad = output_gradient(model, abs_params, ones, np.ones_like)
    return grad[:n] * abs_params[:n]


def top_k_mask(scores: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of the ``k`` highest scores; ties go to the lower index."""
    n = scores.size
    order = np.lexsort((np.arange(n), -scores))
    keep = np.zeros(n, dtype=bool)
    keep[order[:k]] = True
    return keep


def global_prune(
    model: ModelSpec,
    params: np.ndarray,
    kind: ScorerKind | str,
    keep_fraction: float,
    rounds: int = 100,
    batch: Dataset | None = None,
    seed: int = 0,
) -> PruneMask:
    """Iterative global pruning down to ``round(keep_fraction * n)`` weights."""
    kind = ScorerKind(kind)
    if not 0 < keep_fraction <= 1:
        raise ValueError("keep_fraction must be in (0, 1]")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    n = model.n_weights
    budget = int(round(keep_fraction * n))
    if budget < 1:
        raise ValueError("pruning budget rounds to zero weights")
    keep = np.ones(n, dtype=bool)
    params = np.array(params, dtype=np.float64)
    if budget == n:
        return PruneMask(keep, kind, seed, keep_fraction)
    for r in range(1, rounds + 1):
        target = budget if r == rounds else max(budget, int(round(n * keep_fraction ** (r / rounds))))
        masked = apply_mask(params, keep)
        s = score(model, masked, kind, batch, seed).astype(np.float64)
        s[~keep] = -np.inf
        s[np.isnan(s)] = -np.inf
        keep = top_k_mask(s, target) & keep
    return PruneMask(keep, kind, seed, keep_fraction)


def apply_mask(params: np.ndarray, mask: PruneMask | np.ndarray) -> np.ndarray:
    """Copy of ``params`` with pruned weights set to exactly zero (biases untouched)."""
    keep = mask.keep if isinstance(mask, PruneMask) else np.asarray(mask, dtype=bool)
    params = np.asarray(params, dtype=np.float64)
    if keep.size > params.size:
        raise ValueError("mask longer than parameter vector")
    out = params.copy()
    out[: keep.size][~keep] = 0.0
    return out


def mask_gradient(grad: np.ndarray, mask: PruneMask | np.ndarray) -> np.ndarray:
    """Zero the gradient of pruned weights so they never train."""
    return apply_mask(grad, mask)
