"""
Branching random walk in a switching environment
================================================

A walk on {0, ..., n} branches only while a global regime is on; each time
the regime switches on, a new branching rate is drawn.  Without
interactions the population explodes or dies; the Nmin-Nmax system keeps
it between two bounds and carries the growth in its weights.
"""

# %%
import numpy as np

from bbmmi.batch import run_batch
from bbmmi.estimators import many_to_one
from bbmmi.models.brw import BRWSpec, brw_make
from bbmmi.policies import ConstantPolicy, NminNmaxPolicy

spec = BRWSpec(n=10, p=0.5, s_on=1.0, s_off=1.0, B=1.0, kill=0.3)
model = brw_make(spec)
grid = np.linspace(0, 4, 5)

# %%
# free replicas that enter a fast-branching regime blow up; a small event
# budget stops them early and they are reported instead of averaged
free = run_batch(model, ConstantPolicy(0, 0), [5] * 5, 4.0, replicas=200, seed=1, grid=grid,
                 max_events=5_000)
held = run_batch(model, NminNmaxPolicy(3, 10), [5] * 5, 4.0, replicas=200, seed=2, grid=grid)
print(f"free replicas stopped by the event budget: {int((~free.ok).sum())} of 200")

# %%
print(f"{'t':>3} {'free mean':>10} {'free sizes':>18} {'weighted':>10} {'held sizes':>12}")
for i, t in enumerate(grid):
    nf = free.column("N")[free.ok, i]
    nh = held.column("N")[:, i]
    w, se = many_to_one(held, t, "occ_1")
    print(f"{t:3.0f} {nf.mean():10.2f} {f'[{nf.min():.0f}, {nf.max():.0f}]':>18} "
          f"{w:10.2f} {f'[{nh.min():.0f}, {nh.max():.0f}]':>12}")
