"""Averaged observables, regime classification and asymptotic scaling rules."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .params import Parameters, lambda_t, validate

TIE_TOL = 1e-9

QUANTITIES = ("Z", "Tbar", "Pbar", "Kbar", "K_tagged", "P_tagged", "D")


class RegimeError(ValueError):
    """A quantity or statistic is not defined for the requested regime."""


class BoundaryWarning(UserWarning):
    """Parameters lie within 1e-9 of a regime boundary."""


@dataclass(frozen=True)
class AggregateRow:
    t: int
    D: int
    T: int
    Tbar: float
    S: float
    Z: float
    Pbar: float | None
    Kbar: float | None
    R: float
    lam: float
    Lambda: float
    tagged: list = field(default_factory=list)  # (j, tau_j, K_tj, P_tj)


def aggregates(state, params: Parameters | None = None) -> AggregateRow:
    """Observable row for the current state."""
    p = state.params if params is None else validate(params)
    t, d, total = state.t, state.d_total, state.sum_counts
    theta_t = p.theta + t
    S = p.w * total / theta_t
    lam = float(lambda_t(p, t))
    if d > 0:
        pbar = S / d
        a = p.w * (1.0 - p.iota) / theta_t
        c = p.iota * pbar
        if state.mode == "histogram":
            R = float(K.r_sum(state._st, state.cnt, state.G, state.tag_k, a, c)[0])
        else:
            probs = a * state.cnt[:d] + c
            R = float(np.sum(probs * probs))
        kbar = total / d
    else:
        pbar = kbar = None
        a = c = 0.0
        R = 0.0
    tagged = [(j, tau, k, a * k + c) for j, tau, k in state.tagged]
    return AggregateRow(t=t, D=d, T=state.last_T, Tbar=total / t if t else 0.0, S=S,
                        Z=S + lam, Pbar=pbar, Kbar=kbar, R=R, lam=lam,
                        Lambda=state.Lambda, tagged=tagged)


# --- regimes ---------------------------------------------------------------

@dataclass(frozen=True)
class Regime:
    mean_case: str        # beta_lt_w | beta_eq_w | w_lt_beta
    beta_zero: bool
    dish_case: str        # iota_one | high | critical | low
    clt_mean_case: str    # beta_lt_half_w | beta_eq_half_w | half_w_lt_beta_lt_w | none
    clt_dish_case: str    # case_i | case_ii | case_ii_with_clt | none
    dish_drift: bool = False   # boundary iota = 2 beta/w - 1 inside case (i)
    near_boundaries: tuple = ()

    @property
    def mean_row(self) -> str:
        return "beta_zero" if self.beta_zero else self.mean_case


def _near(x: float, y: float, label: str, out: list) -> None:
    if x != y and abs(x - y) < TIE_TOL:
        out.append(label)


def classify_regime(params: Parameters, warn: bool = False) -> Regime:
    """Place (beta, w, iota) in the cells of the asymptotic tables.

    Comparisons are exact; parameters within 1e-9 of a boundary are listed in
    ``near_boundaries`` (and reported as a warning when ``warn`` is set).
    """
    p = validate(params)
    beta, w, iota = float(p.beta), float(p.w), float(p.iota)
    ratio = beta / w
    near: list[str] = []
    _near(beta, w, "beta=w", near)
    _near(beta, w / 2, "beta=w/2", near)
    _near(iota, ratio, "iota=beta/w", near)
    _near(iota, 2 * ratio - 1, "iota=2beta/w-1", near)
    _near(iota, 3 * ratio - 1, "iota=3beta/w-1", near)
    _near(iota, 1.0, "iota=1", near)

    if beta < w:
        mean_case = "beta_lt_w"
    elif beta == w:
        mean_case = "beta_eq_w"
    else:
        mean_case = "w_lt_beta"

    if iota == 1.0:
        dish_case = "iota_one"
    elif ratio < iota:
        dish_case = "high"
    elif 0 < iota == ratio:
        dish_case = "critical"
    else:
        dish_case = "low"

    if beta < w / 2:
        clt_mean = "beta_lt_half_w"
    elif beta == w / 2:
        clt_mean = "beta_eq_half_w"
    elif beta < w:
        clt_mean = "half_w_lt_beta_lt_w"
    else:
        clt_mean = "none"

    clt_dish, drift = "none", False
    if dish_case == "low":
        edge = 2 * ratio - 1
        if iota == 0 or iota < min(edge, 1.0):
            clt_dish = "case_i"
        elif 0 < iota == edge < 1:
            clt_dish, drift = "case_i", True
        elif max(0.0, edge) < iota < ratio < 1:
            clt_dish = "case_ii_with_clt" if iota < 3 * ratio - 1 else "case_ii"

    if warn and near:
        warnings.warn("parameters within 1e-9 of regime boundary: " + ", ".join(near),
                      BoundaryWarning, stacklevel=2)
    return Regime(mean_case, beta == 0.0, dish_case, clt_mean, clt_dish, drift, tuple(near))


# --- scaling rules ---------------------------------------------------------

@dataclass(frozen=True)
class ScalingRule:
    """``t**power * ln(t)**log_power * X_t`` converges to the limit described.

    ``limit_kind`` is ``deterministic`` (``value`` is the limit),
    ``random_proportional`` (limit is ``value * Z*``) or
    ``random_dish_specific`` (limit is ``value * K*_j``).
    """

    quantity: str
    power: float
    log_power: int
    limit_kind: str
    value: float
    cell: str

    def factor(self, t):
        t = np.asarray(t, dtype=float)
        return t ** self.power * np.log(t) ** self.log_power

    def rescale(self, t, x):
        return self.factor(t) * np.asarray(x, dtype=float)

    @property
    def factor_text(self) -> str:
        parts = []
        if self.power:
            parts.append(f"t^{self.power:g}")
        if self.log_power:
            parts.append(f"ln(t)^{self.log_power}")
        return "*".join(parts) or "1"


_POSSIBLE = {
    "beta_zero": {"iota_one", "high", "low"},
    "beta_lt_w": {"iota_one", "high", "critical", "low"},
    "beta_eq_w": {"iota_one", "low"},
    "w_lt_beta": {"iota_one", "low"},
}


def _rule(q, power, log_power, kind, value, cell):
    return ScalingRule(q, float(power), int(log_power), kind, float(value), cell)


def scaling_rule(regime: Regime, quantity: str, params: Parameters) -> ScalingRule:
    """Normalization and limit of ``quantity`` in the given regime."""
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}")
    p = validate(params)
    a, b, w, i = p.alpha, p.beta, p.w, p.iota
    row = regime.mean_row
    dish = regime.dish_case
    if dish not in _POSSIBLE[row]:
        raise RegimeError(f"cell ({row}, {dish}) is not possible")
    det, prop, spec = "deterministic", "random_proportional", "random_dish_specific"

    if quantity == "D":
        if b == 0:
            return _rule("D", 0, -1, det, a, "ln(t)*alpha")
        return _rule("D", -b, 0, det, a / b, "t^beta*alpha/beta")

    if quantity in ("Z", "Tbar", "Pbar", "Kbar"):
        table = {
            "beta_zero": lambda: {
                "Z": (1 - w, 0, prop, 1.0, "t^-(1-w)*Z*"),
                "Tbar": (1 - w, 0, prop, 1 / w, "t^-(1-w)*Z*/w"),
                "Pbar": (1 - w, 1, prop, 1 / a, "t^-(1-w)/ln(t)*Z*/alpha"),
                "Kbar": (-w, 1, prop, 1 / (a * w), "t^w/ln(t)*Z*/(alpha*w)"),
            },
            "beta_lt_w": lambda: {
                "Z": (1 - w, 0, prop, 1.0, "t^-(1-w)*Z*"),
                "Tbar": (1 - w, 0, prop, 1 / w, "t^-(1-w)*Z*/w"),
                "Pbar": (1 - w + b, 0, prop, b / a, "t^-(1-w+beta)*Z*beta/alpha"),
                "Kbar": (-(w - b), 0, prop, b / (a * w), "t^(w-beta)*Z*beta/(alpha*w)"),
            },
            "beta_eq_w": lambda: {
                "Z": (1 - w, -1, det, a * w, "t^-(1-w)*ln(t)*alpha*w"),
                "Tbar": (1 - w, -1, det, a, "t^-(1-w)*ln(t)*alpha"),
                "Pbar": (1, -1, det, w * w, "t^-1*ln(t)*w^2"),
                "Kbar": (0, -1, det, w, "ln(t)*w"),
            },
            "w_lt_beta": lambda: {
                "Z": (1 - b, 0, det, a * b / (b - w), "t^-(1-beta)*alpha*beta/(beta-w)"),
                "Tbar": (1 - b, 0, det, a / (b - w), "t^-(1-beta)*alpha/(beta-w)"),
                "Pbar": (1, 0, det, w * b / (b - w), "t^-1*w*beta/(beta-w)"),
                "Kbar": (0, 0, det, b / (b - w), "beta/(beta-w)"),
            },
        }
        return _rule(quantity, *table[row]()[quantity])

    if quantity == "K_tagged":
        if dish == "low":
            return _rule(quantity, -w * (1 - i), 0, spec, 1.0, "t^(w(1-iota))*K*_j")
        if dish == "critical":
            return _rule(quantity, -(w - b), -1, prop, i * b / a,
                         "t^(w-beta)*ln(t)*iota*beta/alpha*Z*")
        if row == "beta_zero":
            return _rule(quantity, -w, 1, prop, 1 / (a * w), "t^w/ln(t)*Z*/(alpha*w)")
        if dish == "high":
            return _rule(quantity, -(w - b), 0, prop, i * b / ((i * w - b) * a),
                         "t^(w-beta)*iota/(iota*w-beta)*beta/alpha*Z*")
        cells = {
            "beta_lt_w": lambda: (-(w - b), 0, prop, b / (a * (w - b)),
                          "t^(w-beta)*Z*beta/(alpha*(w-beta))"),
            "beta_eq_w": lambda: (0, -2, det, w * w / 2, "ln(t)^2*w^2/2"),
            "w_lt_beta": lambda: (0, -1, det, w * b / (b - w), "ln(t)*w*beta/(beta-w)"),
        }
        return _rule(quantity, *cells[row]())

    # P_tagged
    if dish == "low":
        return _rule(quantity, 1 - w * (1 - i), 0, spec, (1 - i) * w,
                     "t^-(1-w(1-iota))*(1-iota)*w*K*_j")
    if dish == "critical":
        return _rule(quantity, 1 - w + b, -1, prop, (1 - i) * w * i * b / a,
                     "ln(t)/t^(1-w+beta)*(1-iota)*w*iota*beta/alpha*Z*")
    if row == "beta_zero":
        return _rule(quantity, 1 - w, 1, prop, 1 / a, "t^-(1-w)/ln(t)*Z*/alpha")
    if dish == "high":
        return _rule(quantity, 1 - w + b, 0, prop, i * (w - b) * b / ((i * w - b) * a),
                     "t^-(1-w+beta)*iota*(w-beta)/(iota*w-beta)*beta/alpha*Z*")
    cells = {
        "beta_lt_w": lambda: (1 - w + b, 0, prop, b / a, "t^-(1-w+beta)*Z*beta/alpha"),
        "beta_eq_w": lambda: (1, -1, det, w * w, "ln(t)/t*w^2"),
        "w_lt_beta": lambda: (1, 0, det, w * b / (b - w), "t^-1*w*beta/(beta-w)"),
    }
    return _rule(quantity, *cells[row]())


def table_cells(params: Parameters) -> list[tuple[str, ScalingRule]]:
    """All scaling rules that apply to ``params``, in table order."""
    regime = classify_regime(params)
    return [(q, scaling_rule(regime, q, params)) for q in QUANTITIES]


# --- second-order centering -------------------------------------------------

def a_t(beta: float, t):
    """Growth sequence of D_t: t^beta, or ln t when beta = 0."""
    t = np.asarray(t, dtype=float)
    return np.log(t) if beta == 0 else t ** beta


def lam_beta(params: Parameters) -> float:
    """Limit of D_t / a_t(beta)."""
    return params.alpha if params.beta == 0 else params.alpha / params.beta


@dataclass(frozen=True)
class CLTCentering:
    """Residual ``scale * (factor * X + drift - target)``.

    ``target`` is ``None`` for dish-specific limits that must be supplied per
    dish.  ``variance`` describes the Gaussian limit.
    """

    quantity: str
    factor: float
    drift: float
    target: float | None
    scale: float
    variance: str

    def residual(self, x, target=None):
        tgt = self.target if target is None else target
        return self.scale * (self.factor * np.asarray(x, dtype=float) + self.drift - tgt)


def clt_centering(regime: Regime, quantity: str, params: Parameters, t: float,
                  zstar_estimate: float) -> CLTCentering:
    """Drift correction, scale and limit-variance descriptor for a CLT residual."""
    p = validate(params)
    a, b, w, i = p.alpha, p.beta, p.w, p.iota
    t = float(t)
    if quantity in ("Z", "Tbar", "Pbar", "Kbar"):
        if regime.clt_mean_case == "none":
            raise RegimeError("mean CLT requires beta<w")
        decay = t ** (-(w - b))
        if quantity == "Z":
            return CLTCentering("Z", t ** (1 - w), a * b / (w - b) * decay, zstar_estimate,
                                t ** (w / 2), "w*Sigma")
        if quantity == "Tbar":
            return CLTCentering("Tbar", t ** (1 - w), a / (w - b) * decay, zstar_estimate / w,
                                t ** (w / 2), "Sigma/w")
        lb = lam_beta(p)
        at = float(a_t(b, t))
        if quantity == "Pbar":
            return CLTCentering("Pbar", t ** (1 - w) * at, a * w / (lb * (w - b)) * decay,
                                zstar_estimate / lb, math.sqrt(at), "Z*^2/lambda^3")
        return CLTCentering("Kbar", at / t ** w, a / (lb * (w - b)) * decay,
                            zstar_estimate / (lb * w), math.sqrt(at), "Z*^2/(lambda^3*w^2)")
    if quantity == "K_tagged":
        if regime.clt_dish_case == "none":
            raise RegimeError("dish CLT requires low interaction")
        delta = (1 - i) * w
        with_drift = regime.dish_drift or regime.clt_dish_case.startswith("case_ii")
        drift = 0.0
        if with_drift:
            drift = i * (b / a) / (b - w * i) * zstar_estimate * t ** (-(b - w * i))
        return CLTCentering("K_tagged", t ** (-delta), drift, None, t ** (delta / 2), "K*_j")
    raise RegimeError(f"no CLT for quantity {quantity!r}")
