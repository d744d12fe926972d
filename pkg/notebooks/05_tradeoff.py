# %% [markdown]
# # Memory-accuracy tradeoff on the blob task
#
# Shared-array compression against random pruning and a narrower network
# at two compression factors. Three seeds keep this under a minute.

# %%
from stablerps.harness import ExperimentConfig, MethodConfig, expand_grid, summarize, sweep

base = ExperimentConfig(seeds=(0, 1, 2))
methods = [
    MethodConfig("rps", mapping="stable_rps"),
    MethodConfig("rps", mapping="element_wise"),
    MethodConfig("prune", scorer="rand"),
    MethodConfig("small_model"),
]
records = sweep(expand_grid(base, methods, [10, 50]))

# %%
for (method, mapping, scaler, c), (mean, std) in sorted(summarize(records).items(), key=lambda kv: kv[0][3]):
    print(f"c={c:4.0f} {method:12s} {mapping or scaler:14s} {mean:6.2f} +- {std:.2f}")
