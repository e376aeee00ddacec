"""The two standalone recursions behind the positivity and rate results.

1. Noiseless stochastic approximation: the gap to a/b shrinks like t^(-b),
   so reaching 1e-3 with b = 0.5 takes about 1e8 steps.
2. A Bernoulli-driven urn-like recursion whose rescaled value stays away
   from zero on every replica.
"""

import numpy as np

from ibplab.recursion import (RecursionSpec, SAProblem, noiseless_sa_gap, positivity_fraction,
                              run_replicas, run_sa)

prob = SAProblem(b=0.5, a_inf=2.0, theta=1.0, x0=0.0)
print("noiseless SA, target a/b = 4")
for h in (10**3, 10**4, 10**5, 10**6, 10**7):
    x = run_sa(prob, h).x_final
    print(f"  horizon {h:>9}: X = {x:.6f}  gap {abs(x - 4):.3e}  closed form "
          f"{noiseless_sa_gap(prob, h):.3e}")

spec = RecursionSpec(theta=1.0, delta=0.5, form="nonneg", innovation="bernoulli", x1=0.5)
paths = run_replicas(spec, 10**5, 200, master_seed=3, checkpoints=[10**3, 10**4, 10**5])
r = paths.rescaled(0.5)
print("\nBernoulli recursion, t^(1/2) X_t over 200 replicas")
for j, t in enumerate(paths.t):
    print(f"  t={t:>6}: median {np.median(r[:, j]):.3f}  min {r[:, j].min():.3f}")
print(f"  fraction below 1e-3 at 1e5: {positivity_fraction(r[:, -1], 1e-3):.3f}")
