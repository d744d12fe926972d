"""Dense networks with exact reverse-mode gradients and a flat parameter layout.

Parameters live in one float64 vector. Weights come first in layer-major,
row-major order (``W`` has shape ``(out_dim, in_dim)``), so weight
coordinates ``(layer, row, col)`` map to the global index range
``[0, n_weights)``. Biases follow, in layer order. Only weights are ever
compressed; biases stay dense.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("identity", "relu", "tanh")
LOSSES = ("mse", "softmax_ce")


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    activation: str = "identity"
    has_bias: bool = True

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_weights(self) -> int:
        return self.in_dim * self.out_dim


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[Dense, ...]
    loss: str = "mse"

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ValueError("model needs at least one layer")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"incompatible layers: {a.out_dim} -> {b.in_dim}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    @classmethod
    def mlp(cls, sizes: Sequence[int], activation: str = "relu", loss: str = "mse", bias: bool = True):
        """Fully connected net; the last layer has identity activation."""
        sizes = list(sizes)
        layers = [
            Dense(a, b, activation if k < len(sizes) - 2 else "identity", bias)
            for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]
        return cls(tuple(layers), loss)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(layer.out_dim for layer in self.layers[:-1])

    @property
    def n_weights(self) -> int:
        return sum(layer.n_weights for layer in self.layers)

    @property
    def n_biases(self) -> int:
        return sum(layer.out_dim for layer in self.layers if layer.has_bias)

    @property
    def n_params(self) -> int:
        return self.n_weights + self.n_biases

    @property
    def weight_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([layer.n_weights for layer in self.layers])]).astype(int)

    @property
    def bias_offsets(self) -> np.ndarray:
        sizes = [layer.out_dim if layer.has_bias else 0 for layer in self.layers]
        return self.n_weights + np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def weight_slice(self, layer: int) -> slice:
        off = self.weight_offsets
        return slice(int(off[layer]), int(off[layer + 1]))

    def to_dict(self) -> dict:
        return {
            "layers": [[l.in_dim, l.out_dim, l.activation, l.has_bias] for l in self.layers],
            "loss": self.loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(tuple(Dense(*row) for row in d["layers"]), d.get("loss", "mse"))


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.targets = np.asarray(self.targets)
        if self.inputs.shape[0] < 1:
            raise ValueError("dataset needs at least one example")
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise ValueError("inputs and targets disagree on N")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("non-finite inputs")
        if self.targets.dtype.kind == "f" and not np.all(np.isfinite(self.targets)):
            raise ValueError("non-finite targets")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def is_classification(self) -> bool:
        return self.targets.ndim == 1 and self.targets.dtype.kind in "iu"

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx])


def load_csv(path: str | Path, n_targets: int = 1, classification: bool = False) -> Dataset:
    """Read ``features..., target...`` rows. A non-numeric first line is a header."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    x, t = data[:, :-n_targets], data[:, -n_targets:]
    if classification:
        if n_targets != 1:
            raise ValueError("classification CSV has exactly one target column")
        t = t[:, 0]
        if not np.allclose(t, np.round(t)):
            raise ValueError("class ids must be integers")
        t = t.astype(np.int64)
    return Dataset(x, t)


def save_csv(data: Dataset, path: str | Path) -> None:
    t = data.targets.reshape(len(data), -1)
    d, o = data.inputs.shape[1], t.shape[1]
    header = ",".join([f"x{j}" for j in range(d)] + [f"y{j}" for j in range(o)])
    fmt = ["%.17g"] * d + (["%d"] if data.is_classification else ["%.17g"] * o)
    np.savetxt(path, np.hstack([data.inputs, t]), delimiter=",", header=header, comments="", fmt=fmt)


# ---------------------------------------------------------------------------
# Layout
# ---------------------------------------------------------------------------


def global_index(spec: ModelSpec, layer: int, row: int, col: int) -> int:
    """Global index of weight ``W_layer[row, col]``.

    ``col == in_dim`` addresses the bias column of the augmented matrix
    ``[W | b]``; biases are never compressed and are rejected.
    """
    if not 0 <= layer < len(spec.layers):
        raise IndexError("layer out of range")
    lyr = spec.layers[layer]
    if col == lyr.in_dim:
        raise ValueError("bias parameters have no global index")
    if not (0 <= row < lyr.out_dim and 0 <= col < lyr.in_dim):
        raise IndexError("weight coordinate out of range")
    return int(spec.weight_offsets[layer]) + row * lyr.in_dim + col


def weight_coords(spec: ModelSpec, i: int) -> tuple[int, int, int]:
    if not 0 <= i < spec.n_weights:
        raise IndexError("global index out of range")
    layer = int(np.searchsorted(spec.weight_offsets, i, side="right")) - 1
    local = i - int(spec.weight_offsets[layer])
    row, col = divmod(local, spec.layers[layer].in_dim)
    return layer, row, col


def unpack(spec: ModelSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Views ``(W, b)`` per layer into the flat parameter vector."""
    params = np.asarray(params)
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got {params.shape}")
    w_off, b_off = spec.weight_offsets, spec.bias_offsets
    out = []
    for k, layer in enumerate(spec.layers):
        w = params[w_off[k] : w_off[k + 1]].reshape(layer.out_dim, layer.in_dim)
        b = params[b_off[k] : b_off[k + 1]] if layer.has_bias else None
        out.append((w, b))
    return out


def he_stds(spec: ModelSpec) -> np.ndarray:
    """Per-layer ``sqrt(2 / fan_in)``."""
    return np.array([math.sqrt(2.0 / layer.in_dim) for layer in spec.layers])


def init_params(spec: ModelSpec, seed: int = 0, stds: Sequence[float] | None = None) -> np.ndarray:
    """Gaussian weights with per-layer stds (He by default), zero biases."""
    stds = he_stds(spec) if stds is None else np.asarray(stds, dtype=np.float64)
    rng = np.random.default_rng(seed)
    params = np.zeros(spec.n_params)
    for k, layer in enumerate(spec.layers):
        params[spec.weight_slice(k)] = rng.normal(0.0, stds[k], layer.n_weights)
    return params


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _check_inputs(spec: ModelSpec, inputs) -> np.ndarray:
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[1] != spec.in_dim:
        raise ValueError(f"expected inputs with {spec.in_dim} features, got {x.shape[1]}")
    return x


def _loss(spec: ModelSpec, out: np.ndarray, targets) -> tuple[float, np.ndarray]:
    """Loss and d loss / d outputs."""
    n = out.shape[0]
    if spec.loss == "mse":
        t = np.asarray(targets, dtype=np.float64).reshape(n, -1)
        if t.shape != out.shape:
            raise ValueError(f"targets shape {t.shape} does not match outputs {out.shape}")
        diff = out - t
        return float(np.sum(diff * diff) / n), 2.0 * diff / n
    t = np.asarray(targets).astype(np.int64).reshape(n)
    z = out - out.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float(logp[np.arange(n), t].sum() / n)
    dout = np.exp(logp)
    dout[np.arange(n), t] -= 1.0
    return loss, dout / n


def _forward_cache(spec: ModelSpec, params, x):
    cache = []
    a = x
    for layer, (w, b) in zip(spec.layers, unpack(spec, params)):
        z = a @ w.T
        if b is not None:
            z = z + b
        h = _act(layer.activation, z)
        cache.append((a, z, h))
        a = h
    return a, cache


def _backprop(spec: ModelSpec, params, cache, dout: np.ndarray) -> np.ndarray:
    grad = np.zeros(spec.n_params)
    gviews = unpack(spec, grad)
    pviews = unpack(spec, params)
    delta = dout
    for k in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[k]
        a_in, z, h = cache[k]
        delta = delta * _act_grad(layer.activation, z, h)
        gw, gb = gviews[k]
        gw[...] = delta.T @ a_in
        if gb is not None:
            gb[...] = delta.sum(axis=0)
        if k:
            delta = delta @ pviews[k][0]
    return grad


def forward(spec: ModelSpec, params, inputs, targets=None) -> tuple[np.ndarray, float | None]:
    x = _check_inputs(spec, inputs)
    out, _ = _forward_cache(spec, params, x)
    loss = None if targets is None else _loss(spec, out, targets)[0]
    return out, loss


def loss_and_grad(spec: ModelSpec, params, inputs, targets) -> tuple[float, np.ndarray, np.ndarray]:
    """One pass: ``(loss, gradient over all params, outputs)``."""
    x = _check_inputs(spec, inputs)
    out, cache = _forward_cache(spec, params, x)
    loss, dout = _loss(spec, out, targets)
    return loss, _backprop(spec, params, cache, dout), out


def backward(spec: ModelSpec, params, inputs, targets) -> np.ndarray:
    return loss_and_grad(spec, params, inputs, targets)[1]


def output_gradient(spec: ModelSpec, params, inputs, dout_fn: Callable[[np.ndarray], np.ndarray]):
    """Gradient of an arbitrary scalar of the outputs; ``dout_fn`` gives d scalar / d outputs."""
    x = _check_inputs(spec, inputs)
    out, cache = _forward_cache(spec, params, x)
    return out, _backprop(spec, params, cache, dout_fn(out))


def accuracy(outputs: np.ndarray, targets) -> float:
    """Percent of rows whose argmax equals the class id."""
    return 100.0 * float(np.mean(np.argmax(outputs, axis=1) == np.asarray(targets)))


# ---------------------------------------------------------------------------
# SMALL-MODEL baseline
# ---------------------------------------------------------------------------


def _scaled(spec: ModelSpec, scale: float) -> ModelSpec:
    widths = [max(1, int(round(w * scale))) for w in spec.hidden_widths]
    dims = [spec.in_dim, *widths, spec.out_dim]
    layers = tuple(
        Dense(a, b, layer.activation, layer.has_bias) for layer, a, b in zip(spec.layers, dims[:-1], dims[1:])
    )
    return ModelSpec(layers, spec.loss)


def shrink_model(spec: ModelSpec, target_param_count: int) -> ModelSpec:
    """Same depth, hidden widths scaled by one common factor.

    Returns the largest such model whose weight count is <= the target.
    """
    if target_param_count >= spec.n_weights:
        return spec
    if _scaled(spec, 0.0).n_weights > target_param_count:
        raise ValueError("target smaller than the width-1 network")
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _scaled(spec, mid).n_weights <= target_param_count:
            lo = mid
        else:
            hi = mid
    return _scaled(spec, lo)
