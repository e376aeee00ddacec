"""Second-order behaviour of the average number of dishes per customer.

Runs a modest version of the mean CLT pipeline (300 replicas instead of the
2000 used by the acceptance suite) and prints the normality gate, the
variance ratio and a text histogram of the standardized residuals.
Expect a few minutes on one core.
"""

import numpy as np

from ibplab import Parameters, clt_pipeline_mean

p = Parameters(2.0, 0.2, 1.0, 1.0, 0.5)
res = clt_pipeline_mean(p, replicas=300, t_check=10**4, t_max=10**6, master_seed=11)
print(f"variance ratio {res.variance_ratio:.3f} (target 1)")
print(f"normality gate: {res.normality.summary() if res.normality else 'needs >= 500 samples'}")

counts, edges = np.histogram(res.residuals, bins=np.linspace(-3.5, 3.5, 15))
for c, lo in zip(counts, edges):
    print(f"{lo:+5.1f} | {'#' * int(c)}")
