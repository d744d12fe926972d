# %% [markdown]
# # Index mappings, load and cache behaviour
#
# Four ways of sending a flat weight index to a slot of the shared array.
# We compare their worst-case bucket load and how many cache lines a
# contiguous chunk of weights touches.

# %%
import math

import numpy as np

from stablerps.hashing import MappingKind, MappingSpec, bucket_array, cache_fetches, load_report
from stablerps.store import make_mapping

# %% [markdown]
# A hand-checkable fold: n=10 weights, m=4 slots, partition offsets (1, 3, 0).

# %%
spec = MappingSpec(MappingKind.STABLE_RPS, 10, 4, offsets=(1, 3, 0))
print(bucket_array(spec), load_report(spec).loads)

# %% [markdown]
# Load factor over many seeds. The fold always hits the optimum ceil(n/m);
# independent hashing of each index does not.

# %%
n, m = 4096, 256
for kind in MappingKind:
    loads = [load_report(make_mapping(kind, n, m, seed, chunk_len=32)).max_load for seed in range(20)]
    print(f"{kind.value:22s} max load {np.mean(loads):5.2f} (optimum {math.ceil(n / m)})")

# %% [markdown]
# Cache lines touched by 32-weight chunks with 8-slot lines.

# %%
for kind in (MappingKind.ELEMENT_WISE, MappingKind.ROAST, MappingKind.STABLE_RPS):
    s = make_mapping(kind, n, m, 1, chunk_len=32)
    f = [cache_fetches(s, (start, 32), 8) for start in range(0, n, 32)]
    print(f"{kind.value:14s} mean fetches per chunk {np.mean(f):.2f}")
