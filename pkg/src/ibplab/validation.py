"""Exact identities that every recorded row must satisfy."""

from __future__ import annotations

import numpy as np


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(scale > 0, np.abs(a - b) / scale, 0.0)


def identity_errors(tr) -> dict[str, np.ndarray]:
    """Relative errors of the exact identities at each checkpoint.

    S and the count total are summed dish by dish during the run, so these
    checks exercise the bookkeeping rather than restating definitions.
    """
    p = tr.params
    t = tr.t.astype(float)
    theta_t = p.theta + t
    tbar = tr.sum_counts / t
    has = tr.D > 0
    D = np.where(has, tr.D, 1)
    kbar_direct = tr.K_direct / D
    pbar_direct = tr.S_direct / D
    out = {
        "S": _rel(tr.S_direct, p.w * (t / theta_t) * tbar),
        "Pbar": np.where(has, _rel(pbar_direct, p.w * kbar_direct / theta_t), 0.0),
        "Kbar": np.where(has, _rel(kbar_direct, (t / D) * tbar), 0.0),
    }
    return out


def order_violations(tr) -> np.ndarray:
    """Rows where 0 <= R <= S <= Z fails."""
    S = tr.S_direct
    return ~((tr.R >= 0) & (tr.R <= S) & (S <= S + tr.lam) & (S <= tr.Z))


def n_order_violations(tr) -> int:
    return int(np.count_nonzero(order_violations(tr)))


def identity_violations(tr, tol: float = 1e-12) -> int:
    errs = identity_errors(tr)
    bad = order_violations(tr).copy()
    for e in errs.values():
        bad |= e > tol
    return int(np.count_nonzero(bad))
