"""
Sampling a nonzero coordinate from a binary vector
===================================================

A CubeSketch summarizes a 0/1 vector in a few kilobytes and can hand back
one of its nonzero coordinates. Updates toggle a coordinate, so adding the
same index twice removes it again.
"""

import numpy as np

from sketchcc import CubeSketch, SketchParams

# %%
# A vector of length one million needs 20 rows; the default failure
# probability of 1/100 gives 7 columns.
params = SketchParams(10**6, master_seed=7)
sketch = CubeSketch(params)
print("rows x columns:", params.num_rows, "x", params.num_columns)
print("payload bytes:", params.num_rows * params.num_columns * 12)

# %%
# Toggle a handful of coordinates and ask for one of them.
rng = np.random.default_rng(0)
support = rng.choice(10**6, size=50, replace=False)
sketch.update_many(support.astype(np.uint64))
result = sketch.query()
print(result.kind.name, result.index, "in support:", result.index in set(support.tolist()))

# %%
# Toggling everything a second time brings the sketch back to zero.
sketch.update_many(support.astype(np.uint64))
print("after cancelling:", sketch.query().kind.name)

# %%
# Sketches with the same seed add up: the XOR of two sketches is the sketch
# of the symmetric difference of the two sets.
a = CubeSketch(params)
b = CubeSketch(params)
a.update_many(np.array([1, 2, 3], dtype=np.uint64))
b.update_many(np.array([2, 3], dtype=np.uint64))
print("merge samples", a.merge(b).query().index)

# %%
# How often does a query fail? Repeat with many independent seeds.
fails = 0
for seed in range(2000):
    s = CubeSketch(SketchParams(10_000, master_seed=seed))
    s.update_many(rng.choice(10_000, size=100, replace=False).astype(np.uint64))
    fails += s.query().kind.name == "FAIL"
print(f"failure rate over 2000 seeds: {fails / 2000:.4f}")
