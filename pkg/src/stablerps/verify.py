"""Oracle-backed verification routines shared by the CLI and the test-suite."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .hashing import MappingKind, MappingSpec, cache_fetches, load_report
from .store import CompressedStore, GammaKind
from .theory import (
    Method,
    RegressionSpec,
    draw,
    mc_variance,
    residual_compressed,
    residual_empirical,
)


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Mapping statistics
# ---------------------------------------------------------------------------


def map_stats(kind: str, n: int, m: int, seed: int = 0, width: int = 8, chunk_len: int = 32) -> dict:
    """Load report plus per-chunk cache fetches for consecutive chunks of ``chunk_len``."""
    from .store import make_mapping

    spec = make_mapping(kind, n, m, seed, chunk_len=chunk_len)
    rep = load_report(spec)
    length = max(1, min(chunk_len, m))
    starts = range(0, n - length + 1, length)
    fetches = [cache_fetches(spec, (s, length), width) for s in starts]
    return {
        "kind": spec.kind.value,
        "n": n,
        "m": m,
        "seed": seed,
        "max_load": rep.max_load,
        "min_load": rep.min_load,
        "optimal_max_load": math.ceil(n / m),
        "cache_width": width,
        "chunk_len": length,
        "mean_fetches": float(np.mean(fetches)) if fetches else 0.0,
        "max_fetches": int(max(fetches)) if fetches else 0,
    }


def check_cache_bound(trials: int = 1000, seed: int = 0) -> Check:
    """STABLE-RPS fetches never exceed ROAST fetches + 3 on the same chunk."""
    rng = np.random.default_rng(seed)
    worst = -math.inf
    violations = 0
    for t in range(trials):
        width = int(rng.choice([1, 2, 4, 8, 16, 32]))
        m = int(rng.integers(1, 513))
        n = int(rng.integers(m, 8 * m + 1))
        length = int(rng.integers(1, m + 1))
        start = int(rng.integers(0, n - length + 1))
        chunks = [c for c in ((0, start), (1, length), (2, n - start - length)) if c[1] > 0]
        # ROAST chunk layout around the probed chunk; pieces longer than m are split
        pieces, cid = [], 0
        for _, size in chunks:
            while size > 0:
                take = min(size, m)
                pieces.append((cid, take))
                cid += 1
                size -= take
        roast = MappingSpec(MappingKind.ROAST, n, m, seed=int(rng.integers(2**63)), chunks=tuple(pieces))
        stable = MappingSpec(MappingKind.STABLE_RPS, n, m, seed=int(rng.integers(2**63)))
        c_roast = cache_fetches(roast, (start, length), width)
        c_stable = cache_fetches(stable, (start, length), width)
        worst = max(worst, c_stable - c_roast)
        violations += c_stable > c_roast + 3
    return Check("cache_bound", violations == 0, {"trials": trials, "violations": violations, "worst_excess": worst})


# ---------------------------------------------------------------------------
# Stability on a quadratic
# ---------------------------------------------------------------------------


def quadratic_gd(
    store: CompressedStore,
    lipschitz: float,
    lr: float,
    steps: int = 500,
    scaler: GammaKind | str = GammaKind.NONE,
    blowup: float = 1e6,
) -> tuple[bool, float]:
    """GD through the store on ``F(theta) = L/2 |theta|^2``.

    Returns ``(diverged, final |theta|)``; divergence means a non-finite or
    ``> blowup`` norm. ``store.psi`` is left untouched.
    """
    psi0 = store.psi.copy()
    gamma = store.compute_gamma(scaler)
    norm = float(np.linalg.norm(store.recover()))
    try:
        with np.errstate(all="ignore"):
            for _ in range(steps):
                theta = store.recover()
                store.step(lipschitz * theta, lr, gamma)
                norm = float(np.linalg.norm(store.recover()))
                if not math.isfinite(norm) or norm > blowup:
                    return True, norm
    finally:
        store.psi = psi0
    return False, norm


def verify_stability(
    n: int = 64, m: int = 16, lipschitz: float = 1.0, lam_range=(1.0, 5.0), seed: int = 0, steps: int = 500
) -> list[Check]:
    """Converge at 0.95x and diverge at 1.05x of the predicted bound, with and without the scaler."""
    rng = np.random.default_rng(seed)
    lambdas = rng.uniform(*lam_range, n)
    spec = MappingSpec(MappingKind.STABLE_RPS, n, m, seed)
    store = CompressedStore(rng.standard_normal(m), spec, lambdas)
    checks = []
    for scaler in (GammaKind.NONE, GammaKind.THEORY):
        bound = store.stability_bound(lipschitz, scaler).upper
        below, norm_below = quadratic_gd(store, lipschitz, 0.95 * bound, steps, scaler)
        above, norm_above = quadratic_gd(store, lipschitz, 1.05 * bound, steps, scaler)
        checks.append(
            Check(
                f"stability_{scaler.value}",
                (not below) and above,
                {"bound": bound, "norm_at_0.95": norm_below, "norm_at_1.05": norm_above,
                 "two_over_L": 2.0 / lipschitz},
            )
        )
    return checks


# ---------------------------------------------------------------------------
# Variance and residual checks
# ---------------------------------------------------------------------------


def verify_variance(
    n: int = 12, ms=(2, 3, 4, 6), vectors: int = 3, trials: int = 100_000, seed: int = 0
) -> list[Check]:
    """MC variance within 3% relative or 4 standard errors of the closed form; MC mean unbiased."""
    rng = np.random.default_rng(seed)
    xs = [rng.standard_normal(n) for _ in range(vectors)]
    ys = [rng.standard_normal(n) for _ in range(vectors)]
    checks = []
    for method in Method:
        for m in ms:
            for v, (x, y) in enumerate(zip(xs, ys)):
                rep = mc_variance(method, x, y, m, trials, seed=seed * 1000 + m * 10 + v)
                rel = abs(rep.monte_carlo_var - rep.closed_form) / rep.closed_form
                within = abs(rep.monte_carlo_var - rep.closed_form) <= 4 * rep.var_standard_error
                unbiased = abs(rep.monte_carlo_mean - rep.truth) <= 4 * rep.standard_error
                checks.append(
                    Check(f"variance_{method.value}_m{m}_v{v}", (rel < 0.03 or within) and unbiased,
                          {**rep.to_dict(), "relative_error": rel})
                )
    return checks


def random_rho(n: int, rng: np.random.Generator, max_norm2: float = 0.8) -> np.ndarray:
    rho = rng.standard_normal(n) * np.exp(-0.3 * np.arange(n))
    return rho * math.sqrt(rng.uniform(0.1, max_norm2)) / np.linalg.norm(rho)


def verify_residual(
    n: int = 8, m: int = 4, count: int = 5, samples: int = 1_000_000, seed: int = 0, tol: float = 0.02
) -> list[Check]:
    """Empirical least-squares residual matches the closed form for prune and RPS draws."""
    rng = np.random.default_rng(seed)
    checks = []
    for c in range(count):
        spec = RegressionSpec(tuple(random_rho(n, rng)), m, sigma_x=float(rng.uniform(0.5, 2)), sigma_y=1.0)
        for method in Method:
            d = draw(method, n, m, seed=seed * 100 + c)
            rep = residual_compressed(spec, d)
            emp = residual_empirical(spec, d, samples, seed=seed * 100 + c + 1)
            rel = abs(emp - rep.compressed) / rep.compressed
            identity = abs(rep.relative_excess - rep.relative_excess_direct)
            checks.append(
                Check(f"residual_{method.value}_{c}", rel < tol and identity < 1e-12,
                      {"closed_form": rep.compressed, "empirical": emp, "relative_error": rel,
                       "identity_gap": identity, "rho": list(spec.rho)})
            )
    return checks
