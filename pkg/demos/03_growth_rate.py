"""
Estimating the growth rate
==========================

Three estimators of the leading eigenvalue of the tilted generator: the
log-weight slope of one long trajectory, the windowed average of weight
ratios, and a particle filter whose particles are whole systems.
"""

# %%
import numpy as np

from bbmmi.estimators import PFConfig, lambda_bar, lambda_hat, pf_lambda
from bbmmi.fast import FastEngine
from bbmmi.models.birth_death import benchmark
from bbmmi.oracle import benchmark_triple
from bbmmi.policies import NminNmaxPolicy
from bbmmi.process import derive_stream

model = benchmark(10)
lam = benchmark_triple(10).lam
print("exact growth rate:", lam)

# %%
N = 100
policy = NminNmaxPolicy(N, N)
eng = FastEngine(model, policy)
traj = eng.run([1] * N, 4000.0, np.linspace(0, 4000, 4001), derive_stream(7, 0).generator())
print("single trajectory, T=4000")
print("  lambda_hat:", lambda_hat(traj))
print("  lambda_bar:", lambda_bar(traj))

# %%
# 100 systems of 100 particles over T=40: a comparable number of events
res = pf_lambda(PFConfig(40.0, 0.4, 100, N, 1), model, policy, 8, details=True)
print("particle filter:", res.value, f"({res.resamplings} resamplings, {res.events} events)")

# %%
# resampling only when the effective sample size drops below half
lazy = pf_lambda(PFConfig(40.0, 0.4, 100, N, 1, ess_threshold=0.5), model, policy, 8,
                 details=True)
print("ESS-triggered filter:", lazy.value, f"({lazy.resamplings} resamplings)")
