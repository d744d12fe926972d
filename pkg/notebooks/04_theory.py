# %% [markdown]
# # Compression as estimation
#
# Pruning and parameter sharing both compress a vector into m numbers. We
# compare the variance of the resulting inner-product estimates, exactly,
# in expectation and by simulation, and then the residual of a compressed
# linear model.

# %%
import numpy as np

from stablerps.theory import (
    RegressionSpec,
    draw,
    exact_variance,
    expected_variance,
    mc_variance,
    power_law_sigmas,
    residual_compressed,
    residual_empirical,
    variance_closed_form,
)

x = np.array([1.0, 1.0])
for method in ("prune", "stable_rps"):
    print(method, variance_closed_form(method, x, m=1), exact_variance(method, x, x, 1))

# %% [markdown]
# Monte Carlo against the closed form for a random 12-dimensional pair.

# %%
rng = np.random.default_rng(0)
x, y = rng.standard_normal(12), rng.standard_normal(12)
for method in ("prune", "stable_rps"):
    rep = mc_variance(method, x, y, 4, 100_000, seed=1)
    print(f"{method:10s} closed {rep.closed_form:.4f}  MC {rep.monte_carlo_var:.4f} +- {rep.var_standard_error:.4f}")

# %% [markdown]
# Average case over decaying coordinate scales: sharing wins, more so as
# the decay steepens.

# %%
for t in (0.0, 0.25, 0.5, 1.0):
    s = power_law_sigmas(8, t)
    ratio = expected_variance("prune", "inner", s, 2) / expected_variance("stable_rps", "inner", s, 2)
    print(f"t={t:4.2f} prune/rps variance ratio {ratio:.3f}")

# %% [markdown]
# Least-squares residual after compression.

# %%
spec = RegressionSpec((0.5, -0.3, 0.2, 0.1, 0.4, 0.0, -0.2, 0.1), 4)
for method in ("prune", "stable_rps"):
    d = draw(method, 8, 4, seed=3)
    rep = residual_compressed(spec, d)
    emp = residual_empirical(spec, d, 200_000, seed=1)
    print(f"{method:10s} closed {rep.compressed:.4f} empirical {emp:.4f} relative excess {rep.relative_excess:.3f}")
