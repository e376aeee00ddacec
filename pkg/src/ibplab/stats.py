"""Statistical diagnostics: normality gate, LIL band, log-log regression."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .params import Lambda_series, Parameters

SKEW_MAX = 0.15
KURT_MAX = 0.3
KS_CRIT_1PCT = 1.63
KS_SLACK = 1.5
MIN_NORMAL_N = 500


@dataclass(frozen=True)
class NormalityResult:
    n: int
    mean: float
    var: float
    skewness: float
    excess_kurtosis: float
    ks: float
    ks_bound: float
    passed: bool

    def summary(self) -> str:
        verdict = "pass" if self.passed else "fail"
        return (f"n={self.n} skew={self.skewness:+.4f} exkurt={self.excess_kurtosis:+.4f} "
                f"ks={self.ks:.4f}/{self.ks_bound:.4f} -> {verdict}")


def normality_check(sample, skew_max: float = SKEW_MAX, kurt_max: float = KURT_MAX,
                    ks_slack: float = KS_SLACK) -> NormalityResult:
    """Gate a sample for approximate normality after standardization."""
    x = np.asarray(sample, dtype=float)
    x = x[np.isfinite(x)]
    n = x.size
    if n < MIN_NORMAL_N:
        raise ValueError(f"normality check needs at least {MIN_NORMAL_N} values, got {n}")
    mu, sd = float(x.mean()), float(x.std(ddof=1))
    z = (x - mu) / sd
    skew = float(stats.skew(z))
    kurt = float(stats.kurtosis(z))
    ks = float(stats.kstest(z, "norm").statistic)
    bound = ks_slack * KS_CRIT_1PCT / math.sqrt(n)
    ok = abs(skew) < skew_max and abs(kurt) < kurt_max and ks < bound
    return NormalityResult(n, mu, sd * sd, skew, kurt, ks, bound, bool(ok))


def lil_envelope(Lambda):
    L = np.asarray(Lambda, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.sqrt(2.0 * L * np.log(np.log(L)))


def lil_band_check(t, D, params: Parameters, c: float = 3.0, Lambda=None) -> float:
    """Fraction of checkpoints with |D_t - Lambda_t| above ``c`` LIL envelopes.

    ``D`` may be one path or a (replicas, checkpoints) array; the fraction is
    pooled.  Checkpoints with Lambda_t < e^2 are ignored.
    """
    t = np.asarray(t)
    D = np.atleast_2d(np.asarray(D, dtype=float))
    L = Lambda_series(params, t) if Lambda is None else np.asarray(Lambda, dtype=float)
    keep = L >= math.e ** 2
    if not np.any(keep):
        raise ValueError("no checkpoint with Lambda_t >= e^2")
    dev = np.abs(D[:, keep] - L[keep])
    return float(np.mean(dev > c * lil_envelope(L[keep])))


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    rss: float
    n: int
    skipped: int
    curvature_t: float
    slope_drift: float
    curved: bool


CURV_T = 3.0
CURV_DRIFT = 0.02


def _ols(x, y):
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rss = float(resid @ resid)
    dof = max(x.size - 2, 1)
    cov = rss / dof * np.linalg.inv(X.T @ X)
    return coef, rss, np.sqrt(np.diag(cov))


def default_window(t) -> tuple[float, float]:
    """The last two decades of the checkpoint range."""
    hi = float(np.max(t))
    return hi / 100.0, hi


def loglog_fit(t, y, window=None) -> FitResult:
    """OLS of ln y on ln t within ``window`` plus a quadratic curvature test."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = default_window(t) if window is None else window
    inside = (t >= lo) & (t <= hi) & np.isfinite(y)
    good = inside & (y > 0)
    skipped = int(np.count_nonzero(inside & ~(y > 0)))
    if np.count_nonzero(good) < 5:
        raise ValueError("log-log fit needs at least 5 positive points in the window")
    x, v = np.log(t[good]), np.log(y[good])
    coef, rss, se = _ols(x, v)

    curv_t, drift = 0.0, 0.0
    if x.size >= 6:
        xc = x - x.mean()
        Q = np.column_stack([np.ones_like(xc), xc, xc * xc])
        qc, *_ = np.linalg.lstsq(Q, v, rcond=None)
        r = v - Q @ qc
        s2 = float(r @ r) / max(x.size - 3, 1)
        cov = s2 * np.linalg.pinv(Q.T @ Q)
        q_se = math.sqrt(max(cov[2, 2], 0.0))
        if q_se > 0:
            curv_t = float(qc[2] / q_se)
        elif abs(qc[2]) > 1e-12:
            curv_t = math.copysign(math.inf, qc[2])
        drift = float(2.0 * qc[2] * (x.max() - x.min()))
    curved = abs(curv_t) > CURV_T and abs(drift) > CURV_DRIFT
    return FitResult(float(coef[1]), float(coef[0]), float(se[1]), float(se[0]), rss,
                     int(x.size), skipped, curv_t, drift, bool(curved))


@dataclass(frozen=True)
class ConvergenceResult:
    rescaled: np.ndarray
    gap: float
    running: float
    converged: bool

    @property
    def relative_gap(self) -> float:
        return self.gap / abs(self.running) if self.running else math.inf


def convergence_diagnostic(t, values, rule, tolerance: float = 0.05) -> ConvergenceResult:
    """Rescale a series and measure its spread over the last decade.

    ``rule`` is a ScalingRule or any callable ``t -> factor``.
    """
    t = np.asarray(t, dtype=float)
    if t.size < 3:
        raise ValueError("need at least 3 checkpoints")
    factor = rule.factor(t) if hasattr(rule, "factor") else np.asarray(rule(t), dtype=float)
    r = factor * np.asarray(values, dtype=float)
    last = t >= t.max() / 10.0
    seg = r[last & np.isfinite(r)]
    running = float(r[-1])
    gap = float(seg.max() - seg.min()) if seg.size else math.nan
    ok = bool(np.isfinite(gap) and gap < tolerance * abs(running))
    return ConvergenceResult(r, gap, running, ok)


def mean_and_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size < 2:
        return (float(x.mean()) if x.size else math.nan), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def two_sample_z(a, b) -> float:
    """Difference of means in units of the pooled standard error."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    diff = a.mean() - b.mean()
    return 0.0 if se == 0 and diff == 0 else float(diff / se)
