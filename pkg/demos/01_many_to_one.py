"""
Weighted occupation versus the exact semigroup
==============================================

A population of branching birth-death particles is kept between 2 and 6
particles.  Every forced resampling multiplies the weight by (N-1)/N and
every forced selection by (N+1)/N; the weighted occupation averaged over
replicas then matches the exact semigroup at every time.
"""

# %%
import numpy as np

from bbmmi.batch import run_batch
from bbmmi.estimators import many_to_one
from bbmmi.models.birth_death import benchmark
from bbmmi.oracle import semigroup_apply, tilted_generator
from bbmmi.policies import NminNmaxPolicy

model = benchmark(5)
policy = NminNmaxPolicy(2, 6)
start = [2, 2, 2]
grid = np.linspace(0.0, 1.0, 5)

# %%
# exact values of m_0 Q_t 1 from uniformization
A = tilted_generator(model)
exact = [3 * semigroup_apply(A, np.ones(A.size), t)[A.index(2)] for t in grid]

# %%
batch = run_batch(model, policy, start, 1.0, replicas=5000, seed=1, grid=grid)
print(f"{'t':>5} {'weighted MC':>12} {'+/-':>8} {'exact':>10}")
for t, ex in zip(grid, exact):
    est, se = many_to_one(batch, t, "occ_1")
    print(f"{t:5.2f} {est:12.4f} {se:8.4f} {ex:10.4f}")

# %%
# the raw particle count alone is far off: the weights carry the growth
print("mean unweighted size at t=1:", np.nanmean(batch.column("N")[:, -1]))
