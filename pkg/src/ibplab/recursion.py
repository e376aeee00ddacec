"""Synthetic recursive dynamics with known asymptotics.

Two recursion shapes are supported:

``nonneg``
    X_{t+1} = (1 - 1/(theta+t+1)) X_t + Y_{t+1}/(theta+t+1) with Y >= 0 and
    E[Y_{t+1} | past] = delta X_t + rho_t.
``real``
    X_{t+1} = (1 - (1-delta)/(theta+t+1)) X_t + (dM_{t+1} + rho_{t+1})/(theta+t+1).

The remainder is rho_t = rho_inf * t**(rho - 1), so t**(1-rho) rho_t -> rho_inf.
A stochastic-approximation driver (``run_sa``) covers the recursion
X_{t+1} = X_t + eta_t (A_t - b_t X_t) + eta_t dM_{t+1} + rho_{t+1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

from .process import geometric_checkpoints

FORMS = ("nonneg", "real")
NONNEG_INNOVATIONS = ("zero", "bernoulli", "poisson")
REAL_INNOVATIONS = ("zero", "rademacher", "gaussian")


class RecursionError(ValueError):
    pass


@dataclass(frozen=True)
class RecursionSpec:
    """A recursion with declared drift exponent and remainder.

    ``innovation`` is a name from ``NONNEG_INNOVATIONS`` / ``REAL_INNOVATIONS``
    or a callable ``f(rng, t, x, mean) -> value`` returning Y_{t+1} (nonneg
    form, ``mean`` is its conditional mean) or dM_{t+1} (real form).
    ``noise_var`` sets V* for the built-in real-form noises: the increment
    has conditional variance noise_var * t**(delta-1).
    """

    theta: float = 1.0
    delta: float = 1.0
    form: str = "real"
    innovation: str | Callable = "rademacher"
    rho: float = 0.0
    rho_inf: float = 0.0
    x1: float = 0.0
    noise_var: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise RecursionError("theta must be > 0")
        if not 0 < self.delta <= 1:
            raise RecursionError("delta must be in (0,1]")
        if not 0 <= self.rho <= 1:
            raise RecursionError("rho must be in [0,1]")
        if self.form not in FORMS:
            raise RecursionError(f"form must be one of {FORMS}")
        allowed = NONNEG_INNOVATIONS if self.form == "nonneg" else REAL_INNOVATIONS
        if not callable(self.innovation) and self.innovation not in allowed:
            raise RecursionError(f"innovation for form {self.form!r} must be one of {allowed}")
        if self.form == "nonneg" and self.x1 < 0:
            raise RecursionError("x1 must be >= 0 for the non-negative form")

    def remainder(self, t):
        return self.rho_inf * np.asarray(t, dtype=float) ** (self.rho - 1.0)

    def limit_variance(self, xstar):
        """V*/delta: the limit variance of the CLT residual given X*."""
        xstar = np.asarray(xstar, dtype=float)
        if self.form == "real":
            if callable(self.innovation):
                raise RecursionError("declare the variance of a custom innovation")
            return np.full_like(xstar, self.noise_var / self.delta)
        if self.innovation == "bernoulli":
            # Var(Y) = m(1 - m) with m ~ delta X; the (1 - m) factor survives only if delta = 1
            return xstar * (1.0 - xstar) if self.delta == 1 else xstar
        if self.innovation == "poisson":
            return xstar
        raise RecursionError("no variance available for this innovation")


@dataclass
class RecursionPath:
    t: np.ndarray
    x: np.ndarray

    def rescaled(self, delta: float) -> np.ndarray:
        return self.t.astype(float) ** (1.0 - delta) * self.x

    def at(self, t: int) -> float:
        i = np.searchsorted(self.t, t)
        if i >= self.t.size or self.t[i] != t:
            raise KeyError(f"t={t} is not a checkpoint")
        return float(self.x[i])


_INNOV_CODE = {"zero": 0, "bernoulli": 1, "poisson": 2, "rademacher": 3, "gaussian": 4}


@njit(cache=True)
def _rec_kernel(real, code, theta, delta, x1, horizon, rho, rho_inf, noise_var,
                checkpoints, out, rng):
    x = x1
    ci = 0
    if checkpoints[0] == 1:
        out[0] = x
        ci = 1
    for t in range(1, horizon):
        den = theta + t + 1.0
        r = rho_inf * t ** (rho - 1.0) if rho_inf != 0.0 else 0.0
        if real:
            sd = math.sqrt(noise_var * t ** (delta - 1.0))
            if code == 3:
                dm = sd if rng.random() < 0.5 else -sd
            elif code == 4:
                dm = sd * rng.standard_normal()
            else:
                dm = 0.0
            x = (1.0 - (1.0 - delta) / den) * x + (dm + r) / den
        else:
            mean = delta * x + r
            if code == 1:
                if mean > 1.0 or mean < 0.0:
                    return -1
                y = 1.0 if rng.random() < mean else 0.0
            elif code == 2:
                if mean < 0.0:
                    return -1
                y = float(rng.poisson(mean))
            else:
                y = 0.0
            x = (1.0 - 1.0 / den) * x + y / den
            if x < 0.0:
                return -1
        if ci < checkpoints.shape[0] and checkpoints[ci] == t + 1:
            out[ci] = x
            ci += 1
    return 0


def _python_loop(spec, horizon, ck, out, rng):
    x = spec.x1
    ci = 0
    if ck[0] == 1:
        out[0] = x
        ci = 1
    for t in range(1, horizon):
        den = spec.theta + t + 1.0
        r = float(spec.remainder(t)) if spec.rho_inf else 0.0
        if spec.form == "real":
            x = (1.0 - (1.0 - spec.delta) / den) * x + (spec.innovation(rng, t, x, 0.0) + r) / den
        else:
            y = spec.innovation(rng, t, x, spec.delta * x + r)
            if y < 0:
                raise RecursionError("innovation must be non-negative")
            x = (1.0 - 1.0 / den) * x + y / den
            if x < 0:
                raise RecursionError("negative X under the non-negative form")
        if ci < ck.size and ck[ci] == t + 1:
            out[ci] = x
            ci += 1


def run_recursion(spec: RecursionSpec, horizon: int, seed=0, checkpoints=None) -> RecursionPath:
    """Iterate the recursion from X_1 = spec.x1 up to ``horizon``."""
    if horizon < 1:
        raise RecursionError("horizon must be >= 1")
    ck = geometric_checkpoints(horizon) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    if np.any(np.diff(ck) <= 0) or ck[0] < 1 or ck[-1] > horizon:
        raise RecursionError("checkpoints must be increasing within [1, horizon]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.full(ck.size, np.nan)
    if callable(spec.innovation):
        _python_loop(spec, horizon, ck, out, rng)
    else:
        status = _rec_kernel(spec.form == "real", _INNOV_CODE[spec.innovation], spec.theta,
                             spec.delta, spec.x1, horizon, spec.rho, spec.rho_inf,
                             spec.noise_var, ck, out, rng)
        if status != 0:
            raise RecursionError("invariant failure: conditional mean left its range")
    return RecursionPath(ck, out)


def run_replicas(spec: RecursionSpec, horizon: int, replicas: int, master_seed: int,
                 checkpoints=None) -> RecursionPath:
    """Stack of independent paths; ``x`` has shape (replicas, checkpoints)."""
    from .ensemble import replica_seed

    paths = [run_recursion(spec, horizon, replica_seed(master_seed, r), checkpoints)
             for r in range(replicas)]
    return RecursionPath(paths[0].t, np.vstack([p.x for p in paths]))


def positivity_fraction(values, epsilon: float) -> float:
    """Fraction of terminal rescaled values strictly below ``epsilon``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty sample")
    return float(np.mean(v < epsilon))


def clt_residuals(paths: RecursionPath, spec: RecursionSpec, t_check: int, t_max: int,
                  standardize: bool = True, drift_correction: bool = True,
                  variance_at: str = "t_max") -> np.ndarray:
    """Per-replica CLT residuals at ``t_check`` against a limit proxy at ``t_max``.

    The proxy is the compact-form quantity evaluated at ``t_max``, i.e.
    t^{1-delta} X_t plus the drift correction, which removes the deterministic
    part of the t_max bias.  For delta/2 < rho < delta with
    ``drift_correction=False`` the residual is scaled by t^{delta-rho} instead,
    and concentrates near -rho_inf/(delta-rho).

    ``variance_at`` picks the per-replica plug-in for a random limit variance:
    the limit proxy (``"t_max"``) or the rescaled value at ``t_check``.  Both
    are consistent; the second is uncorrelated with the future increments and
    removes an O(t_check^{-delta/4}) skew at desk-scale horizons.
    """
    d, r = spec.delta, spec.rho
    if r >= d:
        raise RecursionError("CLT requires rho < delta")
    if t_check > t_max / 10:
        raise RecursionError("t_check must be at most t_max/10")
    x = np.atleast_2d(paths.x)
    xc = x[:, paths.t.searchsorted(t_check)] if t_check in paths.t else None
    xm = x[:, paths.t.searchsorted(t_max)] if t_max in paths.t else None
    if xc is None or xm is None:
        raise RecursionError("t_check and t_max must be checkpoints")
    c = spec.rho_inf / (d - r) if spec.rho_inf else 0.0
    xstar = t_max ** (1 - d) * xm + c * t_max ** (-(d - r))
    if drift_correction:
        res = t_check ** (d / 2) * (t_check ** (1 - d) * xc + c * t_check ** (-(d - r)) - xstar)
        if standardize:
            if variance_at == "t_max":
                v = spec.limit_variance(xstar)
            elif variance_at == "t_check":
                v = spec.limit_variance(t_check ** (1 - d) * xc + c * t_check ** (-(d - r)))
            else:
                raise ValueError("variance_at must be 't_max' or 't_check'")
            res = res / np.sqrt(v)
        return res
    return t_check ** (d - r) * (t_check ** (1 - d) * xc - xstar)


# --- stochastic approximation ---------------------------------------------

@dataclass(frozen=True)
class SAProblem:
    """X_{t+1} = X_t + eta_t (A_t - b_t X_t) + eta_t dM_{t+1} + rho_{t+1}.

    ``a_inf`` is the attractor limit, either a number or a callable
    ``f(rng) -> float`` drawn once per replica.  A_t = A_inf + a_noise * xi_t / t
    with xi_t Rademacher.  ``eta`` and ``b`` are callables on an integer array
    ``t`` (default eta_t = 1/(theta+t+1), b_t = b).
    """

    b: float | Callable = 0.5
    a_inf: float | Callable = 2.0
    a_noise: float = 0.0
    noise: str = "zero"
    eta: Callable | None = None
    remainder: Callable | None = None
    theta: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        if self.noise not in ("zero", "rademacher", "gaussian"):
            raise RecursionError("noise must be zero, rademacher or gaussian")

    @property
    def is_default(self) -> bool:
        """Default step sizes, constant b and no remainder (the default schedule
        is square summable, so no numerical validation is needed)."""
        return self.eta is None and not callable(self.b) and self.remainder is None

    def sequences(self, horizon: int):
        t = np.arange(1, horizon, dtype=float)
        eta = 1.0 / (self.theta + t + 1.0) if self.eta is None else np.asarray(self.eta(t), dtype=float)
        b = np.full_like(t, float(self.b)) if not callable(self.b) else np.asarray(self.b(t), dtype=float)
        rem = np.zeros_like(t) if self.remainder is None else np.asarray(self.remainder(t), dtype=float)
        return eta, b, rem

    def validate(self, horizon: int) -> None:
        """Numerical check of sum eta = inf and sum eta^2 < inf on the horizon."""
        eta, b, _ = self.sequences(horizon)
        if horizon < 100:
            raise RecursionError("horizon too short to validate step sizes")
        cut = horizon // 10
        s1, s2 = np.cumsum(eta), np.cumsum(eta * eta)
        if s2[-1] - s2[cut] > 0.1 * s2[-1]:
            raise RecursionError("sum of eta_t^2 does not converge")
        if s1[-1] - s1[cut] < 0.1 * s1[-1]:
            raise RecursionError("sum of eta_t does not diverge")
        if not b[-1] > 0:
            raise RecursionError("b_t must converge to b > 0")


@njit(cache=True)
def _sa_kernel(x0, eta, b, rem, a_inf, a_noise, noise, rng):
    x = x0
    for i in range(eta.shape[0]):
        t = i + 1.0
        a = a_inf
        if a_noise != 0.0:
            a += a_noise * (1.0 if rng.random() < 0.5 else -1.0) / t
        if noise == 1:
            dm = 1.0 if rng.random() < 0.5 else -1.0
        elif noise == 2:
            dm = rng.standard_normal()
        else:
            dm = 0.0
        x = x + eta[i] * (a - b[i] * x) + eta[i] * dm + rem[i]
    return x


@njit(cache=True)
def _sa_kernel_default(x0, theta, b, horizon, a_inf, a_noise, noise, rng):
    # eta_t = 1/(theta+t+1), constant b, no remainder; no arrays needed
    x = x0
    for i in range(horizon - 1):
        t = i + 1.0
        eta = 1.0 / (theta + t + 1.0)
        a = a_inf
        if a_noise != 0.0:
            a += a_noise * (1.0 if rng.random() < 0.5 else -1.0) / t
        if noise == 1:
            dm = 1.0 if rng.random() < 0.5 else -1.0
        elif noise == 2:
            dm = rng.standard_normal()
        else:
            dm = 0.0
        x = x + eta * (a - b * x) + eta * dm
    return x


@dataclass
class SAResult:
    x_final: float
    a_inf: float
    target: float


def run_sa(problem: SAProblem, horizon: int, seed=0) -> SAResult:
    """Iterate the SA recursion for ``horizon - 1`` steps from X_1 = x0."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a_inf = float(problem.a_inf(rng)) if callable(problem.a_inf) else float(problem.a_inf)
    code = {"zero": 0, "rademacher": 1, "gaussian": 2}[problem.noise]
    if problem.is_default:
        if horizon < 100:
            raise RecursionError("horizon too short to validate step sizes")
        x = _sa_kernel_default(float(problem.x0), float(problem.theta), float(problem.b),
                               int(horizon), a_inf, float(problem.a_noise), code, rng)
        return SAResult(float(x), a_inf, a_inf / float(problem.b))
    problem.validate(horizon)
    eta, b, rem = problem.sequences(horizon)
    x = _sa_kernel(float(problem.x0), eta, b, rem, a_inf, float(problem.a_noise), code, rng)
    return SAResult(float(x), a_inf, a_inf / b[-1])


def noiseless_sa_gap(problem: SAProblem, horizon: int) -> float:
    """Closed-form |X_H - a/b| for constant A and b: |x0 - a/b| * prod(1 - b eta_t)."""
    if problem.is_default:
        # prod_{t=1}^{H-1} (theta+t+1-b)/(theta+t+1) as a ratio of gamma functions
        th, b = float(problem.theta), float(problem.b)
        log_prod = (math.lgamma(th + horizon + 1 - b) - math.lgamma(th + 2 - b)
                    - math.lgamma(th + horizon + 1) + math.lgamma(th + 2))
        return abs(problem.x0 - float(problem.a_inf) / b) * math.exp(log_prod)
    eta, b, _ = problem.sequences(horizon)
    target = float(problem.a_inf) / b[-1]
    return abs(problem.x0 - target) * float(np.exp(np.sum(np.log1p(-b * eta))))
