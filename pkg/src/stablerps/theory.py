"""Pruning vs. STABLE-RPS as data compression: estimators, variances, residuals.

A *draw* fixes one random compression of ``R^n`` into ``m`` slots:

* prune: a uniform ``m``-subset ``S``; ``<x, y>`` is estimated by
  ``k * sum_{j in S} x_j y_j`` with ``k = n / m``.
* STABLE-RPS: a uniform permutation followed by a random fold and random
  signs (the permuted STABLE-RPS mapping); the estimate is
  ``sum_b (sum_{j->b} g_j x_j)(sum_{j->b} g_j y_j)``.

Closed forms assume ``m | n``. Two independent oracles check them: exact
enumeration of every draw (small ``n``) and seeded Monte Carlo.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .hashing import (
    MappingKind,
    MappingSpec,
    Stream,
    bucket_array,
    fisher_yates,
    hash_array,
    mix64_array,
    random_fold,
    reduce_range,
    sign_array,
    signs_for,
)


class Method(str, enum.Enum):
    PRUNE = "prune"
    RPS = "stable_rps"


class NonDivisibleWarning(UserWarning):
    """Closed form evaluated outside its ``m | n`` assumption."""


# ---------------------------------------------------------------------------
# Draws and estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompressionDraw:
    method: Method
    n: int
    m: int
    seed: int = 0
    subset: np.ndarray | None = None
    buckets: np.ndarray | None = None
    signs: np.ndarray | None = None

    @property
    def k(self) -> float:
        return self.n / self.m


def draw_prune(n: int, m: int, seed: int = 0) -> CompressionDraw:
    subset = np.sort(fisher_yates(np.uint64(seed), n)[:m])
    return CompressionDraw(Method.PRUNE, n, m, seed, subset=subset)


def draw_rps(n: int, m: int, seed: int = 0) -> CompressionDraw:
    spec = MappingSpec(MappingKind.STABLE_RPS_PERMUTED, n, m, seed)
    return CompressionDraw(Method.RPS, n, m, seed, buckets=np.array(bucket_array(spec)), signs=signs_for(spec))


def prune_draw_from_subset(n: int, m: int, subset) -> CompressionDraw:
    subset = np.sort(np.asarray(subset, dtype=np.int64))
    if subset.size != m or len(set(subset.tolist())) != m:
        raise ValueError("subset must hold m distinct indices")
    return CompressionDraw(Method.PRUNE, n, m, subset=subset)


def draw(method: Method | str, n: int, m: int, seed: int = 0) -> CompressionDraw:
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    return draw_prune(n, m, seed) if Method(method) is Method.PRUNE else draw_rps(n, m, seed)


def _check_xy(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = x if y is None else np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("x and y must be vectors of equal length")
    return x, y


def estimate_inner(d: CompressionDraw, x, y) -> float:
    x, y = _check_xy(x, y)
    if x.size != d.n:
        raise ValueError(f"vectors must have length n={d.n}")
    if d.method is Method.PRUNE:
        return float(d.k * np.sum(x[d.subset] * y[d.subset]))
    bx = np.bincount(d.buckets, weights=d.signs * x, minlength=d.m)
    by = np.bincount(d.buckets, weights=d.signs * y, minlength=d.m)
    return float(bx @ by)


def estimate_norm(d: CompressionDraw, x) -> float:
    """Estimate of the squared norm ``<x, x>``."""
    return estimate_inner(d, x, x)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def _offdiag_sums(x, y):
    """``sum_{i!=j} x_i^2 y_j^2`` and ``sum_{i!=j} x_i y_i x_j y_j``."""
    p = x * y
    spread = np.sum(x * x) * np.sum(y * y) - np.sum(p * p)
    cross = np.sum(p) ** 2 - np.sum(p * p)
    return float(spread), float(cross)


def _check_nm(n: int, m: int) -> None:
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    if n % m:
        warnings.warn(f"m={m} does not divide n={n}; closed form assumes it does", NonDivisibleWarning, stacklevel=3)


def variance_closed_form(method: Method | str, x, y=None, m: int = 1) -> float:
    """Variance of the inner-product estimator over draws (``y=None``: squared norm)."""
    x, y = _check_xy(x, y)
    n = x.size
    _check_nm(n, m)
    if n == m:
        return 0.0
    spread, cross = _offdiag_sums(x, y)
    if Method(method) is Method.PRUNE:
        p = x * y
        return float((n / m - 1.0) * np.sum(p * p) + (m - n) / (m * (n - 1)) * cross)
    return float((n - m) / (m * (n - 1)) * (spread + cross))


def expected_variance(method: Method | str, quantity: str, sigmas, m: int) -> float:
    """Closed-form variance averaged over data with independent ``N(0, sigma_i^2)`` coordinates.

    ``quantity`` is ``"inner"`` (x, y independent) or ``"norm"`` (x = y,
    Gaussian fourth moment ``3 sigma^4``).
    """
    sig = np.asarray(sigmas, dtype=np.float64)
    if np.any(sig <= 0) or np.any(~np.isfinite(sig)):
        raise ValueError("sigmas must be positive")
    s2 = sig**2
    if quantity not in ("inner", "norm"):
        raise ValueError("quantity must be 'inner' or 'norm'")
    n = s2.size
    _check_nm(n, m)
    if n == m:
        return 0.0
    sum4 = float(np.sum(s2 * s2))
    pairs = float(np.sum(s2) ** 2 - sum4)  # sum_{i!=j} s_i^2 s_j^2
    prune = Method(method) is Method.PRUNE
    if quantity == "inner":
        if prune:
            return (n - m) / m * sum4
        return (n - m) / (m * (n - 1)) * pairs
    if prune:
        return (n / m - 1.0) * 3.0 * sum4 + (m - n) / (m * (n - 1)) * pairs
    return 2.0 * (n - m) / (m * (n - 1)) * pairs


def power_law_sigmas(n: int, t: float, sigma: float = 1.0) -> np.ndarray:
    """``sigma_i`` with ``sigma_i^2 = sigma^2 exp(-t i)``."""
    return sigma * np.exp(-0.5 * t * np.arange(n))


# ---------------------------------------------------------------------------
# Oracles: enumeration and Monte Carlo
# ---------------------------------------------------------------------------


MAX_ENUMERATION_N = 6


@functools.lru_cache(maxsize=32)
def _draw_matrices(method: Method, n: int, m: int) -> np.ndarray:
    """Stack of ``A_d`` with estimate ``x^T A_d y``, one per equally likely draw."""
    if Method(method) is Method.PRUNE:
        mats = []
        for subset in itertools.combinations(range(n), m):
            a = np.zeros((n, n))
            a[list(subset), list(subset)] = n / m
            mats.append(a)
        return np.array(mats)
    parts = math.ceil(n / m)
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
    sign_outer = signs[:, :, None] * signs[:, None, :]
    mats = []
    for perm in itertools.permutations(range(n)):
        for offs in itertools.product(range(m), repeat=parts):
            b = random_fold(np.array(perm), m, np.array(offs))
            collide = (b[:, None] == b[None, :]).astype(np.float64)
            mats.append(sign_outer * collide)
    return np.concatenate(mats)


def exact_moments(method: Method | str, x, y, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and variance of the estimator by enumerating every draw.

    ``y`` may be a single vector or a 2-D stack of vectors (one result each).
    Enumerates all ``C(n, m)`` subsets, or all ``n! * m^ceil(n/m) * 2^n``
    permutation/offset/sign draws.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"enumeration limited to n <= {MAX_ENUMERATION_N}")
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    ys = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if ys.shape[1] != n:
        raise ValueError("x and y must have equal length")
    mats = _draw_matrices(Method(method), n, m)
    ests = np.einsum("i,dij->dj", x, mats) @ ys.T  # (draws, len(ys))
    mean = ests.mean(axis=0)
    var = np.mean((ests - mean) ** 2, axis=0)
    if np.ndim(y) == 1:
        return mean[0], var[0]
    return mean, var


def exact_variance(method: Method | str, x, y, m: int) -> float:
    return float(exact_moments(method, x, y, m)[1])


@dataclass(frozen=True)
class VarianceReport:
    method: Method
    n: int
    m: int
    seed: int
    trials: int
    truth: float
    closed_form: float
    monte_carlo_mean: float
    monte_carlo_var: float
    standard_error: float  # of the MC mean
    var_standard_error: float  # of the MC variance

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["method"] = self.method.value
        return d


def _batch_estimates(method: Method, x, y, m: int, seeds: np.ndarray) -> np.ndarray:
    """Estimates for the draws with the given per-trial seeds (vectorised)."""
    n = x.size
    perm = fisher_yates(seeds, n)
    if method is Method.PRUNE:
        sel = perm[:, :m]
        return (n / m) * np.sum(x[sel] * y[sel], axis=1)
    parts = math.ceil(n / m)
    offs = reduce_range(
        hash_array(seeds[:, None], Stream.FOLD_OFFSET, np.arange(parts, dtype=np.uint64)[None, :]), m
    ).astype(np.int64)
    buckets = random_fold(perm, m, offs)
    g = sign_array(seeds[:, None], np.arange(n, dtype=np.uint64)[None, :])
    rows = np.arange(len(seeds))[:, None] * m
    flat = (buckets + rows).ravel()
    bx = np.bincount(flat, weights=(g * x).ravel(), minlength=len(seeds) * m).reshape(-1, m)
    by = np.bincount(flat, weights=(g * y).ravel(), minlength=len(seeds) * m).reshape(-1, m)
    return np.sum(bx * by, axis=1)


def trial_seeds(seed: int, trials: int, start: int = 0) -> np.ndarray:
    """Per-trial seeds; trial ``t`` uses ``mix64(seed, t)``."""
    return mix64_array(np.uint64(seed), np.arange(start, start + trials, dtype=np.uint64))


def mc_variance(
    method: Method | str, x, y=None, m: int = 1, trials: int = 100_000, seed: int = 0, batch: int = 20_000
) -> VarianceReport:
    """Monte Carlo mean/variance of the estimator; trial ``t`` equals ``draw(method, n, m, mix64(seed, t))``."""
    method = Method(method)
    x, y = _check_xy(x, y)
    n = x.size
    if trials < 2:
        raise ValueError("need at least two trials")
    ests = np.concatenate(
        [
            _batch_estimates(method, x, y, m, trial_seeds(seed, min(batch, trials - s), s))
            for s in range(0, trials, batch)
        ]
    )
    mean = float(np.mean(ests))
    centered = ests - mean
    var = float(np.sum(centered**2) / (trials - 1))
    mu4 = float(np.mean(centered**4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonDivisibleWarning)
        closed = variance_closed_form(method, x, y, m)
    return VarianceReport(
        method=method,
        n=n,
        m=m,
        seed=seed,
        trials=trials,
        truth=float(x @ y),
        closed_form=closed,
        monte_carlo_mean=mean,
        monte_carlo_var=var,
        standard_error=math.sqrt(var / trials),
        var_standard_error=math.sqrt(max(mu4 - var * var, 0.0) / trials),
    )


# ---------------------------------------------------------------------------
# Linear regression under compression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionSpec:
    """Independent features of std ``sigma_x`` with correlations ``rho_i`` to the target."""

    rho: tuple[float, ...]
    m: int
    sigma_x: float = 1.0
    sigma_y: float = 1.0

    def __post_init__(self):
        rho = tuple(float(r) for r in np.ravel(self.rho))
        object.__setattr__(self, "rho", rho)
        if self.sigma_x <= 0 or self.sigma_y <= 0:
            raise ValueError("standard deviations must be positive")
        if sum(r * r for r in rho) >= 1.0:
            raise ValueError("sum of squared correlations must be < 1")
        if not 1 <= self.m <= len(rho) or len(rho) % self.m:
            raise ValueError("m must divide n")

    @property
    def n(self) -> int:
        return len(self.rho)

    @property
    def k(self) -> int:
        return self.n // self.m

    @property
    def rho_array(self) -> np.ndarray:
        return np.array(self.rho)


@dataclass(frozen=True)
class ResidualReport:
    full: float
    compressed: float
    relative_excess: float  # (<rho,rho> - <rho^,rho^>/k) / (1 - <rho,rho>)
    norm_estimate: float  # <rho^, rho^>

    @property
    def relative_excess_direct(self) -> float:
        return (self.compressed - self.full) / self.full


def residual_full(spec: RegressionSpec) -> float:
    r = spec.rho_array
    return spec.sigma_y**2 * (1.0 - float(r @ r))


def residual_compressed(spec: RegressionSpec, d: CompressionDraw) -> ResidualReport:
    if (d.n, d.m) != (spec.n, spec.m):
        raise ValueError("draw does not match the regression dimensions")
    r = spec.rho_array
    est = estimate_norm(d, r)
    rr = float(r @ r)
    return ResidualReport(
        full=residual_full(spec),
        compressed=spec.sigma_y**2 * (1.0 - est / spec.k),
        relative_excess=(rr - est / spec.k) / (1.0 - rr),
        norm_estimate=est,
    )


def sample_regression(rho, sigma_x: float, sigma_y: float, n_samples: int, seed: int = 0, chunk: int = 1 << 17):
    """Yield ``(X, y)`` chunks of ``x = sigma_x z``, ``y = sigma_y (rho.z + sqrt(1-|rho|^2) z0)``."""
    rho = np.asarray(rho, dtype=np.float64)
    rr = float(rho @ rho)
    if rr >= 1.0:
        raise ValueError("sum of squared correlations must be < 1")
    rng = np.random.default_rng(seed)
    noise = math.sqrt(1.0 - rr)
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        z = rng.standard_normal((size, rho.size))
        z0 = rng.standard_normal(size)
        yield sigma_x * z, sigma_y * (z @ rho + noise * z0)
        done += size


def compressed_features(d: CompressionDraw, x: np.ndarray) -> np.ndarray:
    """Pruned columns, or signed bucket sums of columns for STABLE-RPS."""
    if d.method is Method.PRUNE:
        return x[:, d.subset]
    out = np.zeros((x.shape[0], d.m))
    for j in range(d.m):
        members = d.buckets == j
        out[:, j] = x[:, members] @ d.signs[members]
    return out


def residual_empirical(spec: RegressionSpec, d: CompressionDraw, n_samples: int = 1_000_000, seed: int = 0) -> float:
    """Least-squares residual variance of the compressed linear model on sampled data."""
    gram = np.zeros((d.m, d.m))
    zy = np.zeros(d.m)
    yy = 0.0
    for x, y in sample_regression(spec.rho, spec.sigma_x, spec.sigma_y, n_samples, seed):
        z = compressed_features(d, x)
        gram += z.T @ z
        zy += z.T @ y
        yy += float(y @ y)
    coef = np.linalg.lstsq(gram, zy, rcond=None)[0]
    return (yy - float(coef @ zy)) / n_samples
