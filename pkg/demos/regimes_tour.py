"""A short tour of the asymptotic regimes.

For a few parameter choices, simulate one trajectory, print the regime
classification and watch each rescaled aggregate settle toward its limit.
Run with ``python3 demos/regimes_tour.py`` (about half a minute).
"""

import numpy as np

from ibplab import Parameters, classify_regime, simulate
from ibplab.observables import table_cells

CASES = {
    "weak forcing (beta < w)": Parameters(2.0, 0.2, 1.0, 0.8, 0.3),
    "critical (beta = w)": Parameters(2.0, 0.5, 1.0, 0.5, 0.0),
    "strong forcing (w < beta)": Parameters(2.0, 0.8, 1.0, 0.4, 0.0),
    "full interaction (iota = 1)": Parameters(2.0, 0.4, 1.0, 0.7, 1.0),
}

for name, p in CASES.items():
    reg = classify_regime(p)
    tr = simulate(p, 10**5, n_tagged=4, seed=2024)
    print(f"\n== {name}: {p}")
    print(f"   mean row {reg.mean_row}, dish case {reg.dish_case}, CLT case {reg.clt_mean_case}")
    show = [10**3, 10**4, 10**5]
    idx = np.searchsorted(tr.t, show)
    for q, rule in table_cells(p):
        if q in ("K_tagged", "P_tagged"):
            continue
        x = rule.rescale(tr.t[idx], tr.column(q)[idx])
        vals = "  ".join(f"{v:9.4f}" for v in x)
        lim = f"{rule.value:g}" if rule.limit_kind == "deterministic" else f"{rule.value:g} x Z*"
        print(f"   {q:>5} * {rule.factor_text:<14} {vals}   -> {lim}")
