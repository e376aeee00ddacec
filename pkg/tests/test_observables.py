import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibplab import (Parameters, RegimeError, aggregates, classify_regime, clt_centering,
                    scaling_rule, simulate, state_from_counts)
from ibplab.observables import QUANTITIES, BoundaryWarning, Regime, _POSSIBLE, table_cells
from ibplab.validation import identity_errors, identity_violations, n_order_violations


def test_aggregates_hand_example():
    p = Parameters(1.0, 0.5, theta=1.0, w=0.5, iota=0.2)
    row = aggregates(state_from_counts(p, t=4, counts=[3, 1]), p)
    assert row.S == pytest.approx(0.4)
    assert row.Z == pytest.approx(0.4 + 1.0 / 5 ** 0.5)
    assert row.Pbar == pytest.approx(0.2) and row.Kbar == 2.0
    probs = np.array([0.5 * 0.8 * k / 5 + 0.2 * 0.2 for k in (3, 1)])
    assert row.R == pytest.approx(float(np.sum(probs ** 2)), rel=1e-14)


def test_aggregates_empty_state_has_missing_means():
    p = Parameters(1.0, 0.5)
    row = aggregates(state_from_counts(p, t=2, counts=[]), p)
    assert row.D == 0 and row.Pbar is None and row.Kbar is None and row.R == 0.0


@pytest.mark.parametrize("mode", ["histogram", "naive"])
def test_iota_one_R_equals_S_squared_over_D(mode):
    p = Parameters(1.0, 0.5, theta=2.0, w=0.6, iota=1.0)
    s = state_from_counts(p, t=9, counts=[9, 4, 4, 2, 1], mode=mode)
    row = aggregates(s, p)
    assert row.R == pytest.approx(row.S ** 2 / row.D, rel=1e-14)


def test_identities_on_mixed_trajectories():
    rng = np.random.default_rng(0)
    for i in range(6):
        p = Parameters(rng.uniform(0.5, 3), rng.uniform(0, 1), rng.uniform(0.2, 5),
                       rng.uniform(0.1, 1), rng.uniform(0, 1))
        for mode in ("histogram", "naive"):
            tr = simulate(p, 3000 if mode == "histogram" else 400, seed=i, mode=mode)
            assert identity_violations(tr) == 0
            errs = identity_errors(tr)
            assert all(np.nanmax(e) <= 1e-12 for e in errs.values())
            assert n_order_violations(tr) == 0


# --- regime classification ------------------------------------------------

def test_regime_examples():
    r = classify_regime(Parameters(1.0, 0.3, w=0.7, iota=0.6))
    assert (r.mean_case, r.dish_case) == ("beta_lt_w", "high")
    r = classify_regime(Parameters(1.0, 0.5, w=0.5, iota=0.0))
    assert (r.mean_case, r.dish_case) == ("beta_eq_w", "low")
    assert classify_regime(Parameters(1.0, 0.4, w=0.8, iota=0.5)).dish_case == "critical"
    assert classify_regime(Parameters(1.0, 0.0, w=0.8, iota=0.5)).beta_zero
    assert classify_regime(Parameters(1.0, 0.6, w=0.8, iota=1.0)).dish_case == "iota_one"


def test_clt_case_labels():
    assert classify_regime(Parameters(1.0, 0.3, w=1.0, iota=0.0)).clt_dish_case == "case_i"
    r = classify_regime(Parameters(2.0, 0.75, w=1.0, iota=0.5))
    assert r.clt_dish_case == "case_i" and r.dish_drift
    assert classify_regime(Parameters(2.0, 0.4, w=1.0, iota=0.3)).clt_dish_case == "case_ii"
    assert classify_regime(Parameters(2.0, 0.5, w=1.0, iota=0.3)).clt_dish_case == "case_ii_with_clt"
    assert classify_regime(Parameters(2.0, 0.5, w=1.0, iota=0.1)).clt_dish_case == "case_ii_with_clt"
    assert classify_regime(Parameters(2.0, 0.5, w=1.0, iota=0.0)).clt_mean_case == "beta_eq_half_w"
    assert classify_regime(Parameters(2.0, 0.9, w=0.4)).clt_mean_case == "none"


def test_classification_total_over_random_triples():
    rng = np.random.default_rng(2024)
    n = 100_000
    betas = rng.uniform(0, 1, n)
    ws = rng.uniform(1e-6, 1, n)
    iotas = rng.uniform(0, 1, n)
    # sprinkle exact boundaries
    k = n // 10
    iotas[:k] = betas[:k] / ws[:k]
    betas[k:2 * k] = ws[k:2 * k]
    iotas[2 * k:3 * k] = 1.0
    iotas[3 * k:4 * k] = 0.0
    betas[4 * k:5 * k] = 0.0
    valid = iotas <= 1
    for b, w, i in zip(betas[valid], ws[valid], iotas[valid]):
        r = classify_regime(Parameters(1.0, float(b), 1.0, float(w), float(i)))
        assert r.dish_case in _POSSIBLE[r.mean_row]


@settings(max_examples=300, deadline=None)
@given(b=st.one_of(st.just(0.0), st.floats(1e-4, 1)), w=st.floats(0.001, 1),
       i=st.one_of(st.just(0.0), st.just(1.0), st.floats(1e-4, 1)))
def test_every_reachable_cell_has_positive_rules(b, w, i):
    p = Parameters(1.3, b, 1.0, w, i)
    for q, rule in table_cells(p):
        assert rule.value > 0
        assert np.all(rule.factor(np.array([2.0, 10.0, 1e6])) > 0)


def test_near_boundary_warning():
    p = Parameters(1.0, 0.5, w=0.5 + 1e-12)
    with pytest.warns(BoundaryWarning, match="beta=w"):
        classify_regime(p, warn=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        classify_regime(Parameters(1.0, 0.5, w=0.5), warn=True)


# --- scaling rules ----------------------------------------------------------

def _rule(q, **kw):
    p = Parameters(**{"alpha": 2.0, **kw})
    return scaling_rule(classify_regime(p), q, p)


def test_scaling_examples():
    z = _rule("Z", beta=0.8, w=0.4)
    assert z.power == pytest.approx(0.2) and z.log_power == 0
    assert z.limit_kind == "deterministic" and z.value == pytest.approx(4.0)
    tb = _rule("Tbar", beta=0.5, w=0.5)
    assert tb.factor(100.0) == pytest.approx(10.0 / math.log(100.0)) and tb.value == 2.0
    kt = _rule("K_tagged", beta=0.5, w=0.5, iota=1.0)
    assert kt.factor(100.0) == pytest.approx(math.log(100.0) ** -2) and kt.value == 0.125
    kb = _rule("Kbar", beta=0.8, w=0.4)
    assert kb.cell == "beta/(beta-w)" and kb.value == pytest.approx(2.0)
    assert _rule("D", beta=0.5).value == 4.0
    assert _rule("D", beta=0.0).log_power == -1


def test_unreachable_cell_is_rejected():
    fake = Regime("w_lt_beta", False, "high", "none", "none")
    with pytest.raises(RegimeError, match="not possible"):
        scaling_rule(fake, "Z", Parameters(1.0, 0.8, w=0.4, iota=0.9))


@settings(max_examples=200, deadline=None)
@given(a=st.floats(0.1, 5), b=st.floats(0.01, 1), w=st.floats(0.01, 1))
def test_table_rows_are_mutually_consistent(a, b, w):
    # deterministic rows: Z = w Tbar (+ lambda term if w < beta), Pbar = w Kbar / t,
    # Kbar = t Tbar / D with D ~ (alpha/beta) t^beta
    p = Parameters(a, b, 1.0, w, 0.0)
    reg = classify_regime(p)
    if reg.mean_case == "beta_lt_w":
        return
    t = 1e8
    lim = {q: scaling_rule(reg, q, p) for q in ("Z", "Tbar", "Pbar", "Kbar")}
    val = {q: r.value / r.factor(t) for q, r in lim.items()}
    lam_part = a * t ** (b - 1)
    if reg.mean_case == "w_lt_beta":
        assert val["Z"] == pytest.approx(w * val["Tbar"] + lam_part, rel=1e-9)
    else:
        assert val["Z"] == pytest.approx(w * val["Tbar"], rel=1e-9)
    assert val["Pbar"] == pytest.approx(w * val["Kbar"] / t, rel=1e-9)
    assert val["Kbar"] == pytest.approx(t * val["Tbar"] / ((a / b) * t ** b), rel=1e-9)


def test_random_rows_share_zstar_coefficients():
    a, b, w = 2.0, 0.3, 0.7
    p = Parameters(a, b, 1.0, w, 0.0)
    reg = classify_regime(p)
    t = 1e9
    c = {q: scaling_rule(reg, q, p).value / scaling_rule(reg, q, p).factor(t)
         for q in ("Z", "Tbar", "Pbar", "Kbar")}
    assert c["Z"] == pytest.approx(w * c["Tbar"])
    assert c["Pbar"] == pytest.approx(w * c["Kbar"] / t)
    assert c["Kbar"] == pytest.approx(t * c["Tbar"] / ((a / b) * t ** b))


# --- CLT centering ----------------------------------------------------------

def test_centering_mean_weak_forcing():
    a = 2.0
    p = Parameters(a, 0.2, w=1.0)
    c = clt_centering(classify_regime(p), "Z", p, 1e4, 3.0)
    assert c.drift == pytest.approx(0.2 * a / 0.8 * 1e4 ** -0.8)
    assert c.scale == pytest.approx(100.0) and c.variance == "w*Sigma"
    assert c.residual(3.0) == pytest.approx(100.0 * c.drift)


def test_centering_half_w_shift_is_alpha():
    p = Parameters(2.0, 0.5, w=1.0)
    reg = classify_regime(p)
    for t in (1e3, 1e5, 1e7):
        c = clt_centering(reg, "Z", p, t, 0.0)
        assert c.scale * c.drift == pytest.approx(2.0)


def test_centering_dish_drift_indicator():
    p = Parameters(2.0, 0.3, w=1.0, iota=0.0)
    c = clt_centering(classify_regime(p), "K_tagged", p, 1e4, 1.0)
    assert c.drift == 0.0 and c.scale == pytest.approx(1e2)
    p2 = Parameters(2.0, 0.75, w=1.0, iota=0.5)
    c2 = clt_centering(classify_regime(p2), "K_tagged", p2, 1e4, 1.0)
    assert c2.drift > 0


def test_centering_regime_errors():
    p = Parameters(2.0, 0.9, w=0.4)
    with pytest.raises(RegimeError, match="beta<w"):
        clt_centering(classify_regime(p), "Tbar", p, 1e4, 1.0)
    p2 = Parameters(2.0, 0.3, w=0.7, iota=0.6)
    with pytest.raises(RegimeError, match="low interaction"):
        clt_centering(classify_regime(p2), "K_tagged", p2, 1e4, 1.0)
