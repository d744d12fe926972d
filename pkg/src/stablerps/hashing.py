"""Seeded hash primitives and weight-index -> bucket mappings.

Every mapping is a pure function of a frozen :class:`MappingSpec`. All
randomness comes from one 64-bit mixer, :func:`mix64`, keyed by
``(seed, stream)`` so the roles (partition offsets, signs, permutation,
per-element buckets, chunk offsets) never share hash values.

The mixer is the splitmix64 finalizer applied to ``(x ^ key) + GOLDEN``
where ``key = fmix(seed + GOLDEN)``. Reduction of a 64-bit hash to
``[0, m)`` is multiply-then-shift on the top 32 bits::

    reduce(h, m) = ((h >> 32) * m) >> 32        # requires m <= 2**32

Both scalar (python int) and vectorised (uint64 ndarray) paths implement
exactly the same arithmetic, so outputs are bit-stable across platforms.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "MASK64",
    "GOLDEN",
    "Stream",
    "MappingKind",
    "MappingSpec",
    "LoadReport",
    "CacheReport",
    "fmix64",
    "mix64",
    "mix64_array",
    "stream_key",
    "hash_array",
    "reduce_range",
    "sign_hash",
    "sign_array",
    "signs_for",
    "fisher_yates",
    "random_fold",
    "partition_offsets",
    "map_index",
    "bucket_array",
    "load_report",
    "cache_fetches",
    "cache_report",
]

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB

_U64 = np.uint64


class Stream(enum.IntEnum):
    """Stream ids separating the independent hash roles."""

    FOLD_OFFSET = 1  # u: partition number -> [m]
    SIGN = 2  # g: index -> +-1
    PERMUTATION = 3
    ELEMENT = 4  # h for element-wise mapping
    CHUNK = 5  # h for ROBE-Z blocks / ROAST chunk ids


# ---------------------------------------------------------------------------
# Mixer
# ---------------------------------------------------------------------------


def fmix64(z: int) -> int:
    """splitmix64 finalizer on a python int (taken mod 2**64)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _C1) & MASK64
    z = ((z ^ (z >> 27)) * _C2) & MASK64
    return z ^ (z >> 31)


def mix64(seed: int, x: int) -> int:
    """Keyed avalanche mix of ``x`` under ``seed``; bijective in ``x``."""
    key = fmix64((seed & MASK64) + GOLDEN)
    return fmix64(((x & MASK64) ^ key) + GOLDEN)


def _fmix64_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _U64(30))
    z = z * _U64(_C1)
    z = z ^ (z >> _U64(27))
    z = z * _U64(_C2)
    return z ^ (z >> _U64(31))


def _as_u64(a) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype == np.uint64:
        return arr
    if arr.dtype.kind in "iu" and arr.dtype != np.uint64:
        return arr.astype(np.int64).view(np.uint64) if arr.dtype.kind == "i" else arr.astype(np.uint64)
    if arr.dtype == object:
        return np.array([int(v) & MASK64 for v in arr.ravel()], dtype=np.uint64).reshape(arr.shape)
    raise TypeError(f"expected integer input, got dtype {arr.dtype}")


def mix64_array(seed, x) -> np.ndarray:
    """Vectorised :func:`mix64`; ``seed`` and ``x`` broadcast against each other."""
    s = _as_u64(seed)
    xs = _as_u64(x)
    with np.errstate(over="ignore"):
        key = _fmix64_array(np.atleast_1d(s) + _U64(GOLDEN))
        out = _fmix64_array((np.atleast_1d(xs) ^ key) + _U64(GOLDEN))
    shape = np.broadcast_shapes(s.shape, xs.shape)
    return out.reshape(shape)


def stream_key(seed: int, stream: int) -> int:
    """Sub-seed for one hash role."""
    return mix64(seed, int(stream))


def hash_array(seed, stream: int, x) -> np.ndarray:
    """64-bit hashes of ``x`` in the given stream. ``seed`` may be an array of keys."""
    s = _as_u64(seed)
    keys = mix64_array(s, np.full(s.shape, int(stream), dtype=np.uint64))
    return mix64_array(keys, x)


def reduce_range(h, m):
    """Map 64-bit hash(es) uniformly onto ``[0, m)``; ``m`` may broadcast."""
    if isinstance(h, (int, np.integer)) and isinstance(m, (int, np.integer)):
        return (((int(h) & MASK64) >> 32) * int(m)) >> 32
    hs = _as_u64(h)
    ms = np.asarray(m, dtype=np.uint64)
    if np.any(ms > _U64(1 << 32)):
        raise ValueError("range must be <= 2**32")
    with np.errstate(over="ignore"):
        return ((hs >> _U64(32)) * ms) >> _U64(32)


def _hash_scalar(seed: int, stream: int, x: int) -> int:
    return mix64(stream_key(seed, stream), x)


def sign_hash(seed: int, i: int) -> int:
    """+1 or -1 from the top bit of the sign-stream hash of ``i``."""
    return -1 if _hash_scalar(seed, Stream.SIGN, i) >> 63 else 1


def sign_array(seed, idx) -> np.ndarray:
    """Vectorised :func:`sign_hash` returning float64 +-1."""
    top = hash_array(seed, Stream.SIGN, idx) >> _U64(63)
    return 1.0 - 2.0 * top.astype(np.float64)


def fisher_yates(seed, n: int) -> np.ndarray:
    """Seeded uniform permutation of ``range(n)``.

    With an array of seeds of shape ``S`` returns shape ``S + (n,)``; row
    ``t`` equals ``fisher_yates(seed[t], n)``.
    """
    seeds = _as_u64(seed)
    batch = seeds.shape
    keys = mix64_array(seeds, np.full(batch, int(Stream.PERMUTATION), dtype=np.uint64))
    perm = np.broadcast_to(np.arange(n, dtype=np.int64), batch + (n,)).copy()
    flat = perm.reshape(-1, n)
    kflat = keys.reshape(-1)
    rows = np.arange(flat.shape[0])
    for i in range(n - 1, 0, -1):
        j = reduce_range(mix64_array(kflat, np.uint64(i)), i + 1).astype(np.int64)
        a = flat[:, i].copy()
        flat[:, i] = flat[rows, j]
        flat[rows, j] = a
    return flat.reshape(batch + (n,))


def random_fold(x, m: int, offsets) -> np.ndarray:
    """``(offsets[x // m] + x % m) % m`` for global positions ``x``."""
    x = np.asarray(x, dtype=np.int64)
    offsets = np.asarray(offsets, dtype=np.int64)
    return (offsets[..., x // m] + x % m) % m if offsets.ndim == 1 else (
        np.take_along_axis(offsets, x // m, axis=-1) + x % m
    ) % m


# ---------------------------------------------------------------------------
# Mapping specs
# ---------------------------------------------------------------------------


class MappingKind(str, enum.Enum):
    ELEMENT_WISE = "element_wise"
    ROBE_Z = "robe_z"
    ROAST = "roast"
    STABLE_RPS = "stable_rps"
    STABLE_RPS_PERMUTED = "stable_rps_permuted"


@dataclass(frozen=True)
class MappingSpec:
    """A seeded map from global weight index ``[0, n)`` to bucket ``[0, m)``.

    ``offsets`` optionally pins the hashed offsets instead of drawing them
    from ``seed``: one per partition for the STABLE-RPS kinds, one per block
    for ROBE-Z, one per chunk for ROAST. ``permutation`` likewise pins the
    pre-fold permutation of ``STABLE_RPS_PERMUTED``. Both exist so callers
    can enumerate draws exactly.
    """

    kind: MappingKind
    n: int
    m: int
    seed: int = 0
    z: int | None = None
    chunks: tuple[tuple[int, int], ...] | None = None
    offsets: tuple[int, ...] | None = None
    permutation: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MappingKind(self.kind))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1 <= self.m <= (1 << 32):
            raise ValueError("m must be in [1, 2**32]")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.kind is MappingKind.ROBE_Z:
            if self.z is None or not 1 <= self.z <= self.m:
                raise ValueError("ROBE-Z needs 1 <= z <= m")
        if self.kind is MappingKind.ROAST:
            if not self.chunks:
                raise ValueError("ROAST mapping needs chunks")
            chunks = tuple((int(c), int(length)) for c, length in self.chunks)
            object.__setattr__(self, "chunks", chunks)
            lengths = [length for _, length in chunks]
            if sum(lengths) != self.n:
                raise ValueError(f"chunk lengths sum to {sum(lengths)}, expected n={self.n}")
            if any(not 1 <= length <= self.m for length in lengths):
                raise ValueError("every chunk length must be in [1, m]")
            if len({c for c, _ in chunks}) != len(chunks):
                raise ValueError("chunk ids must be unique")
        if self.offsets is not None:
            offs = tuple(int(o) for o in self.offsets)
            if len(offs) != self._n_offsets():
                raise ValueError(f"expected {self._n_offsets()} offsets, got {len(offs)}")
            if any(not 0 <= o < self.m for o in offs):
                raise ValueError("offsets must lie in [0, m)")
            object.__setattr__(self, "offsets", offs)
        if self.permutation is not None:
            if self.kind is not MappingKind.STABLE_RPS_PERMUTED:
                raise ValueError("permutation only applies to STABLE_RPS_PERMUTED")
            perm = tuple(int(p) for p in self.permutation)
            if sorted(perm) != list(range(self.n)):
                raise ValueError("permutation must be a permutation of range(n)")
            object.__setattr__(self, "permutation", perm)

    def _n_offsets(self) -> int:
        if self.kind in (MappingKind.STABLE_RPS, MappingKind.STABLE_RPS_PERMUTED):
            return math.ceil(self.n / self.m)
        if self.kind is MappingKind.ROBE_Z:
            return math.ceil(self.n / self.z)
        if self.kind is MappingKind.ROAST:
            return len(self.chunks)
        raise ValueError("element-wise mapping has no offsets")

    @property
    def n_partitions(self) -> int:
        return math.ceil(self.n / self.m)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "n": self.n, "m": self.m, "seed": self.seed}
        if self.z is not None:
            d["z"] = self.z
        if self.chunks is not None:
            d["chunks"] = [list(c) for c in self.chunks]
        if self.offsets is not None:
            d["offsets"] = list(self.offsets)
        if self.permutation is not None:
            d["permutation"] = list(self.permutation)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MappingSpec":
        d = dict(d)
        if "chunks" in d and d["chunks"] is not None:
            d["chunks"] = tuple(tuple(c) for c in d["chunks"])
        for key in ("offsets", "permutation"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def partition_offsets(spec: MappingSpec) -> np.ndarray:
    """Hashed offsets (the ``u``/``h`` values) used by chunked mappings."""
    if spec.offsets is not None:
        return np.asarray(spec.offsets, dtype=np.int64)
    if spec.kind in (MappingKind.STABLE_RPS, MappingKind.STABLE_RPS_PERMUTED):
        keys = np.arange(spec.n_partitions, dtype=np.uint64)
        stream = Stream.FOLD_OFFSET
    elif spec.kind is MappingKind.ROBE_Z:
        keys = np.arange(math.ceil(spec.n / spec.z), dtype=np.uint64)
        stream = Stream.CHUNK
    elif spec.kind is MappingKind.ROAST:
        keys = _as_u64(np.array([c for c, _ in spec.chunks], dtype=np.int64))
        stream = Stream.CHUNK
    else:
        raise ValueError("element-wise mapping has no offsets")
    return reduce_range(hash_array(np.uint64(spec.seed), stream, keys), spec.m).astype(np.int64)


@functools.lru_cache(maxsize=64)
def _permutation(spec: MappingSpec) -> np.ndarray:
    if spec.permutation is not None:
        perm = np.asarray(spec.permutation, dtype=np.int64)
    else:
        perm = fisher_yates(np.uint64(spec.seed), spec.n)
    perm.setflags(write=False)
    return perm


@functools.lru_cache(maxsize=64)
def _buckets(spec: MappingSpec) -> np.ndarray:
    idx = np.arange(spec.n, dtype=np.int64)
    if spec.kind is MappingKind.ELEMENT_WISE:
        b = reduce_range(hash_array(np.uint64(spec.seed), Stream.ELEMENT, idx.astype(np.uint64)), spec.m)
        out = b.astype(np.int64)
    elif spec.kind is MappingKind.ROBE_Z:
        offs = partition_offsets(spec)
        out = (offs[idx // spec.z] + idx % spec.z) % spec.m
    elif spec.kind is MappingKind.ROAST:
        offs = partition_offsets(spec)
        lengths = np.array([length for _, length in spec.chunks], dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        chunk_of = np.repeat(np.arange(len(lengths)), lengths)
        out = (offs[chunk_of] + idx - starts[chunk_of]) % spec.m
    elif spec.kind is MappingKind.STABLE_RPS:
        out = random_fold(idx, spec.m, partition_offsets(spec))
    else:
        out = random_fold(_permutation(spec), spec.m, partition_offsets(spec))
    out = np.ascontiguousarray(out, dtype=np.int64)
    out.setflags(write=False)
    return out


def bucket_array(spec: MappingSpec) -> np.ndarray:
    """Buckets of every index ``0..n-1`` (read-only, cached)."""
    return _buckets(spec)


def map_index(spec: MappingSpec, i: int) -> int:
    if not 0 <= i < spec.n:
        raise IndexError(f"index {i} out of range for n={spec.n}")
    return int(_buckets(spec)[i])


def signs_for(spec: MappingSpec) -> np.ndarray:
    """Sign ``g(i)`` of every global index (signs belong to the index, not the bucket)."""
    return sign_array(np.uint64(spec.seed), np.arange(spec.n, dtype=np.uint64))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoadReport:
    loads: np.ndarray
    max_load: int
    min_load: int

    @property
    def optimal_max_load(self) -> int:
        return math.ceil(int(self.loads.sum()) / len(self.loads))


def load_report(spec: MappingSpec) -> LoadReport:
    loads = np.bincount(_buckets(spec), minlength=spec.m)
    return LoadReport(loads=loads, max_load=int(loads.max()), min_load=int(loads.min()))


def cache_fetches(spec: MappingSpec, chunk: tuple[int, int], width: int) -> int:
    """Distinct aligned cache lines of the bucket array touched by one chunk.

    A line holds ``width`` consecutive buckets and lines start at multiples
    of ``width``. ``chunk`` is ``(start global index, length)``.
    """
    start, length = chunk
    if width < 1:
        raise ValueError("cache line width must be >= 1")
    if not 1 <= length <= spec.m:
        raise ValueError("chunk length must be in [1, m]")
    if start < 0 or start + length > spec.n:
        raise ValueError("chunk exceeds index range")
    touched = _buckets(spec)[start : start + length] // width
    return int(np.unique(touched).size)


@dataclass(frozen=True)
class CacheReport:
    width: int
    chunks: tuple[tuple[int, int], ...]
    fetches: tuple[int, ...]

    @property
    def lower_bounds(self) -> tuple[int, ...]:
        return tuple(math.ceil(length / self.width) for _, length in self.chunks)


def cache_report(spec: MappingSpec, chunks: Sequence[tuple[int, int]], width: int) -> CacheReport:
    chunks = tuple((int(s), int(length)) for s, length in chunks)
    return CacheReport(width, chunks, tuple(cache_fetches(spec, c, width) for c in chunks))
