"""
h-transformed neutron random walk in a slab
===========================================

A neutron flies across (0, L) at one of four speeds and scatters at rate
alpha.  Weighting by h = phi(time to exit) pushes flights away from the
faces, and the absorption at the faces turns into soft killing at rate
-Lh/h.  Without fission Lh is never positive, so this slab has no
branching.  The transformed walk never reaches a face.
"""

# %%
import numpy as np

from bbmmi.estimators import PFConfig, pf_lambda
from bbmmi.models.nrw import NRWSlabSpec, nrw_make
from bbmmi.engine import run
from bbmmi.policies import NminNmaxPolicy

spec = NRWSlabSpec(L=1.0, V=(-1.0, -0.5, 0.5, 1.0), alpha=1.0)
model = nrw_make(spec)
print("plateau delta:", spec.delta)

# %%
# Lh/h along the slab for the fastest right-moving velocity
for r in np.linspace(0.05, 0.95, 7):
    scatter, b, kappa = model.channel_rates((r, 3))
    print(f"r={r:4.2f}  h={model.h(r, 3):.3f}  branch={b:.3f}  kill={kappa:.3f}  "
          f"scatter={scatter:.3f}")

# %%
# a constant-size system: hard kills would show up as 'hardkill' events
tr = run([(0.5, k % 4) for k in range(20)], model, NminNmaxPolicy(20, 20), 10.0,
         rng=np.random.Generator(np.random.Philox(1)), log_events=True)
kinds = {}
for e in tr.events:
    kinds[e.kind] = kinds.get(e.kind, 0) + 1
print("event counts:", kinds)

# %%
# growth rate of the slab (no exact oracle here)
print("particle-filter growth rate:", pf_lambda(PFConfig(10.0, 1.0, 10, 20, (0.5, 0)), model,
                                                NminNmaxPolicy(20, 20), 2))
