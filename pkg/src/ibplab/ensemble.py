"""Replica orchestration, limit proxies, CLT pipelines and parameter recovery."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .observables import (QUANTITIES, Regime, RegimeError, a_t, classify_regime,
                          clt_centering, lam_beta, scaling_rule)
from .params import Parameters, validate
from .process import Trajectory, geometric_checkpoints, simulate
from .stats import (FitResult, NormalityResult, convergence_diagnostic, default_window,
                    lil_band_check, loglog_fit, mean_and_se, normality_check)


def replica_seed(master_seed: int, index: int) -> int:
    """64-bit seed of replica ``index``.

    The pair (master_seed, index) is hashed by numpy's SeedSequence, whose
    mixing function is fixed and documented, and the first 64-bit word of
    its output state is used.
    """
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _run_one(args):
    params, horizon, checkpoints, n_tagged, seed, mode = args
    return simulate(params, horizon, checkpoints, n_tagged=n_tagged, seed=seed, mode=mode)


def run_replicas(params: Parameters, horizon: int, replicas: int, master_seed: int,
                 checkpoints=None, n_tagged: int = 8, mode: str = "histogram",
                 n_jobs: int = 1) -> list[Trajectory]:
    """Independent trajectories, returned in replica-index order."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    ck = geometric_checkpoints(horizon) if checkpoints is None else checkpoints
    jobs = [(params, horizon, ck, n_tagged, replica_seed(master_seed, r), mode)
            for r in range(replicas)]
    if n_jobs == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, replicas // (4 * n_jobs))))


# --- limit proxies -----------------------------------------------------------

def zstar_proxy(params: Parameters, t, Z):
    """Compact-form estimate of Z*: t^{1-w} Z_t + alpha beta/(w-beta) t^{-(w-beta)}.

    Only meaningful for beta < w, where Z* is random.
    """
    p = params
    if not p.beta < p.w:
        raise RegimeError("Z* is defined only for beta<w")
    t = np.asarray(t, dtype=float)
    return t ** (1 - p.w) * np.asarray(Z, dtype=float) + \
        p.alpha * p.beta / (p.w - p.beta) * t ** (-(p.w - p.beta))


def zstar_from_tbar(params: Parameters, t, Tbar):
    """Z* estimated from the running mean: w (t^{1-w} Tbar + alpha/(w-beta) t^{-(w-beta)})."""
    p = params
    if not p.beta < p.w:
        raise RegimeError("Z* is defined only for beta<w")
    t = np.asarray(t, dtype=float)
    return p.w * (t ** (1 - p.w) * np.asarray(Tbar, dtype=float)
                  + p.alpha / (p.w - p.beta) * t ** (-(p.w - p.beta)))


def r_scale(params: Parameters, t):
    """r_t: t^{1-max(w,beta)}, divided by ln t when w = beta."""
    t = np.asarray(t, dtype=float)
    r = t ** (1 - max(params.w, params.beta))
    return r / np.log(t) if params.w == params.beta else r


# --- ensemble summary --------------------------------------------------------

@dataclass
class QuantityRecord:
    quantity: str
    factor: str
    limit_kind: str
    limit_value: float
    values: np.ndarray
    mean: float
    se: float
    cv: float
    limit_estimate: float
    normality: NormalityResult | None = None
    skipped: str | None = None


@dataclass
class EnsembleSummary:
    params: Parameters
    regime: Regime
    horizon: int
    replicas: int
    master_seed: int
    records: dict[str, QuantityRecord]
    zstar: np.ndarray | None
    rtilde: np.ndarray | None
    lil_violation: float | None
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    def terminal_table(self) -> tuple[list[str], np.ndarray]:
        """Per-replica terminal rescaled values (tagged quantities: replica mean)."""
        names, cols = [], []
        for q, rec in self.records.items():
            if rec.skipped is None and rec.values.size == self.replicas:
                names.append(q)
                cols.append(rec.values)
        if self.zstar is not None:
            names.append("Zstar_proxy")
            cols.append(self.zstar)
        return names, np.column_stack(cols) if cols else np.zeros((self.replicas, 0))


def _terminal(tr: Trajectory, q: str):
    if q == "K_tagged":
        return tr.tag_K[-1]
    if q == "P_tagged":
        return tr.tag_P[-1]
    return np.array([tr.column(q)[-1]])


def run_ensemble(params: Parameters, horizon: int, replicas: int, master_seed: int,
                 quantities=("D", "Z", "Tbar", "Pbar", "Kbar", "K_tagged", "P_tagged"),
                 n_tagged: int = 8, checkpoints=None, n_jobs: int = 1,
                 keep_trajectories: bool = False, lil_c: float = 3.0) -> EnsembleSummary:
    """Run ``replicas`` independent trajectories and summarize terminal rescaled values."""
    params = validate(params)
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    regime = classify_regime(params)
    trs = run_replicas(params, horizon, replicas, master_seed, checkpoints, n_tagged,
                       n_jobs=n_jobs)
    tH = float(trs[0].t[-1])
    zstar = None
    if params.beta < params.w:
        zstar = np.array([float(zstar_proxy(params, tH, tr.Z[-1])) for tr in trs])
    rtilde = np.array([float(r_scale(params, tH) * tr.R[-1]) for tr in trs])

    records = {}
    for q in quantities:
        if q not in QUANTITIES:
            raise ValueError(f"unknown quantity {q!r}")
        try:
            rule = scaling_rule(regime, q, params)
        except RegimeError as exc:
            records[q] = QuantityRecord(q, "", "", math.nan, np.zeros(0), math.nan, math.nan,
                                        math.nan, math.nan, skipped=str(exc))
            continue
        vals = np.concatenate([rule.factor(tH) * _terminal(tr, q) for tr in trs])
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            records[q] = QuantityRecord(q, rule.factor_text, rule.limit_kind, rule.value,
                                        vals, math.nan, math.nan, math.nan, math.nan,
                                        skipped="no observed values")
            continue
        mean, se = mean_and_se(vals)
        cv = float(vals.std(ddof=1) / abs(mean)) if vals.size > 1 and mean else math.nan
        if rule.limit_kind == "deterministic":
            est = rule.value
        elif rule.limit_kind == "random_proportional" and zstar is not None:
            est = rule.value * float(zstar.mean())
        else:
            est = mean
        norm = None
        if vals.size >= 500:
            norm = normality_check(vals)
        records[q] = QuantityRecord(q, rule.factor_text, rule.limit_kind, rule.value, vals,
                                    mean, se, cv, est, norm)
    lil = None
    try:
        lil = lil_band_check(trs[0].t, np.vstack([tr.D for tr in trs]), params, lil_c)
    except ValueError:
        pass
    return EnsembleSummary(params, regime, horizon, replicas, master_seed, records, zstar,
                           rtilde, lil, trs if keep_trajectories else [])


# --- parameter recovery ------------------------------------------------------

@dataclass(frozen=True)
class Estimate:
    name: str
    value: float | None
    se: float
    assumption: str
    warning: str | None = None


@dataclass
class EstimationReport:
    alpha_hat: Estimate
    beta_hat: Estimate
    w_hat: Estimate
    iota_hat: Estimate
    fits: dict[str, FitResult]
    regime_assumed: str

    def as_dict(self) -> dict:
        out = {}
        for e in (self.alpha_hat, self.beta_hat, self.w_hat, self.iota_hat):
            out[e.name] = e.value
            out[e.name + "_se"] = e.se
        return out


BETA_ZERO_SLOPE = 0.05


def averaged_series(trajectories: list[Trajectory]):
    """Replica-averaged D, Tbar and tagged-K series on the common checkpoints.

    Tagged counts are averaged over every dish born before the fit window.
    """
    t = trajectories[0].t
    D = np.mean([tr.D for tr in trajectories], axis=0)
    Tbar = np.mean([tr.Tbar for tr in trajectories], axis=0)
    lo, _ = default_window(t)
    tk = np.hstack([tr.tag_K for tr in trajectories])
    born = np.isfinite(tk[np.searchsorted(t, lo)]) if tk.size else np.zeros(0, bool)
    if born.any():
        with warnings.catch_warnings():
            # checkpoints before any tagged birth are all-NaN rows
            warnings.simplefilter("ignore", RuntimeWarning)
            K = np.nanmean(tk[:, born], axis=1)
    else:
        K = np.full(t.size, np.nan)
    return t, D, Tbar, K


def estimate_parameters(trajectories, window=None) -> EstimationReport:
    """Recover (alpha, beta, w, iota) from log-log slopes and intercepts."""
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    t, D, Tbar, K = averaged_series(trajectories)
    if window is None:
        window = default_window(t)
    lo, hi = window
    if hi / lo < 10:
        raise ValueError("fit window must span at least one decade")
    fits: dict[str, FitResult] = {}

    fD = loglog_fit(t, D, window)
    fits["D"] = fD
    sel = (t >= lo) & (t <= hi) & (D > 0)
    lnlnt = np.log(np.log(t[sel]))
    X = np.column_stack([np.ones(sel.sum()), lnlnt])
    _, rss_log, *_ = np.linalg.lstsq(X, np.log(D[sel]), rcond=None)
    rss_log = float(rss_log[0]) if len(rss_log) else 0.0
    if fD.slope < BETA_ZERO_SLOPE or rss_log < fD.rss:
        X1 = np.column_stack([np.ones(sel.sum()), np.log(t[sel])])
        coef, res, *_ = np.linalg.lstsq(X1, D[sel], rcond=None)
        beta = Estimate("beta_hat", 0.0, math.nan, "D_t ~ alpha ln t (beta = 0)")
        alpha = Estimate("alpha_hat", float(coef[1]), math.nan, "slope of D_t against ln t")
        b_val = 0.0
    else:
        b_val = fD.slope
        warn = "curvature in ln D fit" if fD.curved else None
        beta = Estimate("beta_hat", b_val, fD.slope_se, "D_t ~ (alpha/beta) t^beta", warn)
        a_val = b_val * math.exp(fD.intercept)
        alpha = Estimate("alpha_hat", a_val, a_val * math.hypot(fD.slope_se / b_val, fD.intercept_se),
                         "alpha = beta * exp(intercept)", warn)

    fT = loglog_fit(t, Tbar, window)
    fits["Tbar"] = fT
    w_val = 1.0 + fT.slope
    w_warn = "curvature in ln Tbar fit (log correction, beta = w?)" if fT.curved else None
    if not b_val < w_val:
        w_warn = (w_warn + "; " if w_warn else "") + "estimated beta >= w: slope is not 1 - w"
    w_est = Estimate("w_hat", w_val, fT.slope_se, "beta < w: Tbar ~ t^{-(1-w)}", w_warn)

    iota = Estimate("iota_hat", None, math.nan, "low interaction: K ~ t^{w(1-iota)}",
                    "no tagged dish series")
    if np.isfinite(K).sum() >= 5:
        fK = loglog_fit(t, K, window)
        fits["K_tagged"] = fK
        i_val = 1.0 - fK.slope / w_val
        i_se = fK.slope_se / w_val
        if w_val > 0 and i_val < min(b_val / w_val, 1.0):
            warn = "curvature in ln K fit" if fK.curved else None
            iota = Estimate("iota_hat", i_val, i_se, "low interaction: K ~ t^{w(1-iota)}", warn)
        else:
            iota = Estimate("iota_hat", None, i_se, "low interaction: K ~ t^{w(1-iota)}",
                            "slope inconsistent with low interaction; no estimate")
    return EstimationReport(alpha, beta, w_est, iota, fits, "beta < w, low interaction")


# --- CLT pipelines -----------------------------------------------------------

@dataclass
class CLTResult:
    case: str
    residuals: np.ndarray          # standardized, drift corrected (empty if none)
    raw: np.ndarray                # unstandardized drift-corrected residuals
    normality: NormalityResult | None
    variance_ratio: float
    shift: float | None = None     # ensemble mean of the shifted statistic
    shift_se: float | None = None
    shift_prediction: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.normality is None:
            return False
        return self.normality.passed and abs(self.variance_ratio - 1) <= 0.15

    @property
    def shift_ratio(self) -> float:
        return self.shift / self.shift_prediction if self.shift_prediction else math.nan


def _endpoints(params, replicas, t_check, t_max, master_seed, n_tagged, n_jobs):
    trs = run_replicas(params, t_max, replicas, master_seed, [t_check, t_max],
                       n_tagged=n_tagged, n_jobs=n_jobs)
    return trs


def clt_pipeline_mean(params: Parameters, replicas: int, t_check: int, t_max: int,
                      master_seed: int, n_jobs: int = 1, quantity: str = "Tbar") -> CLTResult:
    """Second-order check for Tbar (or Z) when beta < w."""
    p = validate(params)
    regime = classify_regime(p)
    if regime.clt_mean_case == "none":
        raise RegimeError("clt mean requires β<w")
    if t_check > t_max / 100:
        raise ValueError("t_check must be at most t_max/100")
    if quantity not in ("Tbar", "Z"):
        raise ValueError("quantity must be Tbar or Z")
    trs = _endpoints(p, replicas, t_check, t_max, master_seed, 0, n_jobs)
    Zc = np.array([tr.Z[0] for tr in trs])
    Zm = np.array([tr.Z[1] for tr in trs])
    Tc = np.array([tr.Tbar[0] for tr in trs])
    Tm = np.array([tr.Tbar[1] for tr in trs])
    Rm = np.array([tr.R[1] for tr in trs])
    zstar = zstar_from_tbar(p, t_max, Tm) if quantity == "Tbar" else zstar_proxy(p, t_max, Zm)
    sigma = zstar - Rm if (p.w == 1 and p.iota == 0) else zstar
    w, b, a = p.w, p.beta, p.alpha
    tc = float(t_check)
    cen = clt_centering(regime, quantity, p, tc, 0.0)
    x = Tc if quantity == "Tbar" else Zc
    target = zstar / w if quantity == "Tbar" else zstar
    raw = cen.residual(x, target)
    var_lim = sigma / w if quantity == "Tbar" else w * sigma
    std = raw / np.sqrt(var_lim)
    norm = normality_check(std) if std.size >= 500 else None
    res = CLTResult(regime.clt_mean_case, std, raw, norm, float(np.var(std, ddof=1)),
                    extras={"zstar": zstar, "sigma": sigma})
    # uncorrected statistics for the boundary and in-probability cases
    zs_z = zstar_proxy(p, t_max, Zm)
    shift_z = tc ** (w / 2) * (tc ** (1 - w) * Zc - zs_z)
    zs_t = zstar_from_tbar(p, t_max, Tm)
    shift_t = tc ** (w / 2) * (tc ** (1 - w) * Tc - zs_t / w)
    if regime.clt_mean_case == "beta_eq_half_w":
        res.extras["shift_Z"] = mean_and_se(shift_z) + (-a,)
        res.extras["shift_Tbar"] = mean_and_se(shift_t) + (-a / (w - b),)
        m, se, pred = res.extras["shift_Z" if quantity == "Z" else "shift_Tbar"]
        res.shift, res.shift_se, res.shift_prediction = m, se, pred
    elif regime.clt_mean_case == "half_w_lt_beta_lt_w":
        g = tc ** (w - b)
        inprob_z = g * (tc ** (1 - w) * Zc - zs_z)
        inprob_t = g * (tc ** (1 - w) * Tc - zs_t / w)
        res.extras["inprob_Z"] = mean_and_se(inprob_z) + (-a * b / (w - b),)
        res.extras["inprob_Tbar"] = mean_and_se(inprob_t) + (-a / (w - b),)
        m, se, pred = res.extras["inprob_Z" if quantity == "Z" else "inprob_Tbar"]
        res.shift, res.shift_se, res.shift_prediction = m, se, pred
    return res


def clt_pipeline_dish(params: Parameters, replicas: int, t_check: int, t_max: int,
                      master_seed: int, n_tagged: int = 8, n_jobs: int = 1) -> CLTResult:
    """Second-order check for tagged dish counts under low interaction."""
    p = validate(params)
    regime = classify_regime(p)
    if regime.dish_case != "low" or regime.clt_dish_case == "none":
        raise RegimeError("clt dish requires low interaction")
    if t_check > t_max / 10:
        raise ValueError("t_check must be at most t_max/10")
    trs = _endpoints(p, replicas, t_check, t_max, master_seed, n_tagged, n_jobs)
    a, b, w, i = p.alpha, p.beta, p.w, p.iota
    delta = (1 - i) * w
    tc, tm = float(t_check), float(t_max)
    Kc, Km, Zs = [], [], []
    for tr in trs:
        born = np.isfinite(tr.tag_K[0])
        Kc.append(tr.tag_K[0, born])
        Km.append(tr.tag_K[1, born])
        zs = float(zstar_proxy(p, tm, tr.Z[1])) if b < w else math.nan
        Zs.append(np.full(born.sum(), zs))
    Kc, Km, Zs = np.concatenate(Kc), np.concatenate(Km), np.concatenate(Zs)
    case_ii = regime.clt_dish_case.startswith("case_ii")
    drift_on = regime.dish_drift or case_ii
    C = i * (b / a) / (b - w * i) if drift_on else 0.0
    gap = b - w * i
    kstar = tm ** (-delta) * Km + (C * Zs * tm ** (-gap) if drift_on else 0.0)
    raw = tc ** (delta / 2) * (tc ** (-delta) * Kc + (C * Zs * tc ** (-gap) if drift_on else 0.0) - kstar)
    std = raw / np.sqrt(kstar)
    exact_var = kstar * (1 - kstar) if delta == 1 else kstar
    norm = None
    if std.size >= 500 and regime.clt_dish_case != "case_ii":
        norm = normality_check(std)
    res = CLTResult(regime.clt_dish_case, std, raw, norm, float(np.var(std, ddof=1)),
                    extras={"kstar": kstar, "zstar": Zs, "n_dishes": int(Kc.size),
                            "variance_ratio_exact": float(np.var(raw / np.sqrt(exact_var), ddof=1))})
    if case_ii:
        stat = tc ** gap * (tc ** (-delta) * Kc - kstar)
        pred = -C * Zs
        m, se = mean_and_se(stat)
        res.shift, res.shift_se, res.shift_prediction = m, se, float(np.mean(pred))
    return res
