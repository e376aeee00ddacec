"""Model parameters and the innovation rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ParameterError(ValueError):
    """Raised when a model parameter is outside its admissible range."""


@dataclass(frozen=True)
class Parameters:
    """Mass ``alpha``, discount ``beta``, concentration ``theta``,
    reinforcement weight ``w`` and interaction intensity ``iota``."""

    alpha: float
    beta: float
    theta: float = 1.0
    w: float = 1.0
    iota: float = 0.0

    def replace(self, **changes) -> "Parameters":
        values = {**self.as_dict(), **changes}
        return validate(Parameters(**values))

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "theta": self.theta,
                "w": self.w, "iota": self.iota}


def validate(params: Parameters) -> Parameters:
    p = params
    for name in ("alpha", "beta", "theta", "w", "iota"):
        v = getattr(p, name)
        if not isinstance(v, (int, float, np.floating, np.integer)) or not math.isfinite(v):
            raise ParameterError(f"{name} must be a finite real number")
    if not p.alpha > 0:
        raise ParameterError("alpha must be > 0")
    if not 0 <= p.beta <= 1:
        raise ParameterError("beta must be in [0,1]")
    if not p.theta > 0:
        raise ParameterError("theta must be > 0")
    if not 0 < p.w <= 1:
        raise ParameterError("w must be in (0,1]")
    if not 0 <= p.iota <= 1:
        raise ParameterError("iota must be in [0,1]")
    return params


def lambda_t(params: Parameters, t):
    """Poisson mean of the number of new dishes tried by customer ``t + 1``."""
    t = np.asarray(t, dtype=float) if np.ndim(t) else float(t)
    return params.alpha / (t + 1.0) ** (1.0 - params.beta)


def Lambda_t(params: Parameters, t: int) -> float:
    """Mean of D_t: the sum of lambda_{n-1} for n = 1..t."""
    if t <= 0:
        return 0.0
    n = np.arange(1, int(t) + 1, dtype=float)
    return math.fsum(params.alpha * n ** (params.beta - 1.0))


def Lambda_series(params: Parameters, ts) -> np.ndarray:
    """Lambda_t at each (sorted) entry of ``ts`` by one cumulative pass."""
    ts = np.asarray(ts, dtype=np.int64)
    if ts.size == 0:
        return np.zeros(0)
    n = np.arange(1, int(ts.max()) + 1, dtype=float)
    csum = np.cumsum(params.alpha * n ** (params.beta - 1.0))
    out = np.zeros(ts.shape, dtype=float)
    pos = ts > 0
    out[pos] = csum[ts[pos] - 1]
    return out
