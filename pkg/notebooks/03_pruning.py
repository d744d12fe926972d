# %% [markdown]
# # Pruning baselines
#
# Scores for the four pruning criteria on a small network, then an
# iterative global prune to 10% of the weights.

# %%
import numpy as np

from stablerps.harness import synth_classification
from stablerps.model import ModelSpec, init_params
from stablerps.pruning import PruneMask, global_prune

spec = ModelSpec.mlp([20, 64, 64, 4], "relu", "softmax_ce")
params = init_params(spec, 0)
batch = synth_classification(4, 20, 4.0, 128, seed=0)

# %%
for kind in ("rand", "mag", "snip", "synflow"):
    mask = global_prune(spec, params, kind, 0.1, rounds=100, batch=batch if kind == "snip" else None)
    per_layer = [int(mask.keep[spec.weight_slice(k)].sum()) for k in range(len(spec.layers))]
    print(f"{kind:8s} kept {mask.count} weights, per layer {per_layer}")

# %% [markdown]
# Masks serialise to a compact bitset with a small JSON header.

# %%
blob = mask.to_bytes()
print(len(blob), "bytes;", np.array_equal(PruneMask.from_bytes(blob).keep, mask.keep))
