"""
Nmin-Nmax versus Fleming-Viot on the birth-death benchmark
==========================================================

Both systems approximate the same quasi-stationary mean.  The Fleming-Viot
system kills at rate M - x and resamples at every death, so its interaction
cost grows with M; the Nmin-Nmax system only selects when a branching
overshoots N, which hardly depends on M.
"""

# %%
from bbmmi.experiments import benchmark_target, table_row

N = 10
print("quasi-stationary mean (oracle):", benchmark_target(10))

# %%
# short runs to keep the demo quick; the acceptance suite uses T=200, 200 replicas
print(f"{'M':>5} {'algorithm':>9} {'bias':>7} {'std':>7} {'events/T':>9}")
for M in (10, 100):
    for alg in ("NminNmax", "FV"):
        row = table_row(N, M, alg, horizon=60.0, replicas=40, seed=3)
        print(f"{M:5d} {alg:>9} {row['bias']:7.3f} {row['std']:7.3f} {row['event_rate']:9.1f}")
