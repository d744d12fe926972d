# %% [markdown]
# # Gradient scalers and the stable learning-rate range
#
# Sharing one array across weights with different scale factors shrinks the
# range of stable learning rates. The per-bucket scaler restores it.

# %%
import numpy as np

from stablerps.hashing import MappingKind, MappingSpec
from stablerps.store import CompressedStore
from stablerps.verify import quadratic_gd

rng = np.random.default_rng(0)
n, m = 64, 16
store = CompressedStore(rng.standard_normal(m), MappingSpec(MappingKind.STABLE_RPS, n, m, 0), rng.uniform(1, 5, n))

# %%
for scaler in ("none", "theory", "effective"):
    bound = store.stability_bound(1.0, scaler).upper
    print(f"{scaler:9s} stable for lr < {bound:.4f}")

# %% [markdown]
# On the quadratic F = |theta|^2 / 2 the bound is tight: just below it GD
# converges, just above it GD blows up.

# %%
for scaler in ("none", "theory"):
    bound = store.stability_bound(1.0, scaler).upper
    for factor in (0.95, 1.05):
        diverged, norm = quadratic_gd(store, 1.0, factor * bound, 500, scaler)
        print(f"{scaler:7s} lr={factor:.2f}x bound -> {'diverged' if diverged else 'converged'} (|theta|={norm:.3g})")
