"""Numba kernels for the buffet dynamics.

Untagged dishes live in ``cnt`` sorted by count in descending order.
``G[k]`` is the number of untagged dishes whose count exceeds ``k``, so the
dishes with count ``k`` occupy positions ``G[k]:G[k-1]``.  Promoting one
dish from ``k`` to ``k + 1`` is then ``cnt[G[k]] = k + 1; G[k] += 1``.

Integer scalars are carried in ``st`` and float accumulators in ``fs`` so the
kernels can mutate them in place:

    st = [t, D, sum_counts, n_untagged, n_tagged_born]
    fs = [Lambda_t, sum_{n<=t} Pbar_{n-1}]

RNG consumption order per step: untagged sweep, tagged Bernoulli draws,
Poisson innovation.  Checkpoint recording never touches the generator.
"""

import numpy as np
from numba import njit

T_, D_, SUM_, NU_, NTAG_ = 0, 1, 2, 3, 4
LAM_, PBS_ = 0, 1


@njit(cache=True)
def _grow(arr, need):
    cap = arr.shape[0]
    if need <= cap:
        return arr
    new_cap = max(need, 2 * cap + 16)
    out = np.zeros(new_cap, dtype=arr.dtype)
    out[:cap] = arr
    return out


@njit(cache=True)
def _coefficients(st, theta, w, iota):
    """Return (a, c, pbar) with P(k) = a * k + c at the current time."""
    t = st[T_]
    d = st[D_]
    theta_t = theta + t
    if d == 0:
        return 0.0, 0.0, np.nan
    s = w * st[SUM_] / theta_t
    pbar = s / d
    a = w * (1.0 - iota) / theta_t
    c = iota * pbar
    return a, c, pbar


@njit(cache=True)
def _add_new(st, cnt, G, tag_k, tag_tau, n_new, n_tagged):
    t_new = st[T_] + 1
    left = n_new
    while left > 0 and st[NTAG_] < n_tagged:
        j = st[NTAG_]
        tag_k[j] = 1
        tag_tau[j] = t_new
        st[NTAG_] += 1
        left -= 1
    if left > 0:
        nu = st[NU_]
        cnt = _grow(cnt, nu + left)
        for i in range(nu, nu + left):
            cnt[i] = 1
        G[0] += left
        st[NU_] = nu + left
    return cnt


@njit(cache=True)
def init_state(st, fs, cnt, G, tag_k, tag_tau, alpha, n_tagged, rng):
    st[:] = 0
    fs[:] = 0.0
    n1 = rng.poisson(alpha)
    cnt = _add_new(st, cnt, G, tag_k, tag_tau, n1, n_tagged)
    st[T_] = 1
    st[D_] = n1
    st[SUM_] = n1
    fs[LAM_] = alpha
    return cnt, n1


@njit(cache=True)
def _sweep_skip(st, cnt, G, a, c, rng):
    # Geometric skipping under a decreasing envelope, then thinning.
    nu = st[NU_]
    if nu == 0:
        return 0
    selected = 0
    i = 0
    env = a * cnt[0] + c
    while True:
        i += rng.geometric(env) - 1
        if i >= nu:
            break
        k = cnt[i]
        p = a * k + c
        if p >= env or rng.random() * env < p:
            pos = G[k]
            cnt[pos] = k + 1
            G[k] = pos + 1
            selected += 1
        env = p
        i += 1
        if i >= nu:
            break
    return selected


@njit(cache=True)
def _sweep_binomial(st, cnt, G, a, c, rng):
    # One Binomial(n_k, P(k)) draw per occupied count value.
    nu = st[NU_]
    selected = 0
    pos = 0
    while pos < nu:
        k = cnt[pos]
        end = G[k - 1]
        m = rng.binomial(end - pos, a * k + c)
        for r in range(m):
            cnt[pos + r] = k + 1
        G[k] = pos + m
        selected += m
        pos = end
    return selected


@njit(cache=True)
def step_hist(st, fs, cnt, G, tag_k, tag_tau, alpha, beta, theta, w, iota,
              n_tagged, use_binomial, rng):
    t = st[T_]
    old_sel = 0
    if st[D_] > 0:
        a, c, pbar = _coefficients(st, theta, w, iota)
        fs[PBS_] += pbar
        if use_binomial:
            old_sel += _sweep_binomial(st, cnt, G, a, c, rng)
        else:
            old_sel += _sweep_skip(st, cnt, G, a, c, rng)
        for j in range(st[NTAG_]):
            p = a * tag_k[j] + c
            if rng.random() < p:
                tag_k[j] += 1
                old_sel += 1
    lam = alpha / (t + 1.0) ** (1.0 - beta)
    n_new = rng.poisson(lam)
    cnt = _add_new(st, cnt, G, tag_k, tag_tau, n_new, n_tagged)
    st[T_] = t + 1
    st[D_] += n_new
    st[SUM_] += old_sel + n_new
    fs[LAM_] += lam
    return cnt, n_new, old_sel


@njit(cache=True)
def r_sum(st, cnt, G, tag_k, a, c):
    """Direct sums over dishes: (sum P^2, sum P, sum K)."""
    r = 0.0
    s = 0.0
    ksum = 0
    nu = st[NU_]
    pos = 0
    while pos < nu:
        k = cnt[pos]
        end = G[k - 1]
        p = a * k + c
        r += (end - pos) * p * p
        s += (end - pos) * p
        ksum += (end - pos) * k
        pos = end
    for j in range(st[NTAG_]):
        p = a * tag_k[j] + c
        r += p * p
        s += p
        ksum += tag_k[j]
    return r, s, ksum


@njit(cache=True)
def _record(ci, st, fs, cnt, G, tag_k, tag_tau, theta, w, iota, last_T,
            o_int, o_flt, o_tk, o_tt):
    o_int[ci, 0] = st[T_]
    o_int[ci, 1] = st[D_]
    o_int[ci, 2] = last_T
    o_int[ci, 3] = st[SUM_]
    if st[D_] > 0:
        a, c, pbar = _coefficients(st, theta, w, iota)
        r, s, ksum = r_sum(st, cnt, G, tag_k, a, c)
        o_flt[ci, 0] = r
        o_flt[ci, 3] = s
        o_int[ci, 4] = ksum
    else:
        o_flt[ci, 0] = 0.0
        o_flt[ci, 3] = 0.0
        o_int[ci, 4] = 0
    o_flt[ci, 1] = fs[LAM_]
    o_flt[ci, 2] = fs[PBS_]
    for j in range(st[NTAG_]):
        o_tk[ci, j] = tag_k[j]
        o_tt[ci, j] = tag_tau[j]


@njit(cache=True)
def run_hist(st, fs, cnt, G, tag_k, tag_tau, alpha, beta, theta, w, iota,
             n_tagged, use_binomial, horizon, checkpoints, last_T,
             o_int, o_flt, o_tk, o_tt, rng):
    """Advance to ``horizon`` recording rows whose t is in ``checkpoints``."""
    n_ck = checkpoints.shape[0]
    ci = 0
    while ci < n_ck and checkpoints[ci] < st[T_]:
        ci += 1
    if ci < n_ck and checkpoints[ci] == st[T_]:
        _record(ci, st, fs, cnt, G, tag_k, tag_tau, theta, w, iota, last_T,
                o_int, o_flt, o_tk, o_tt)
        ci += 1
    while st[T_] < horizon:
        cnt, n_new, old_sel = step_hist(st, fs, cnt, G, tag_k, tag_tau, alpha,
                                        beta, theta, w, iota, n_tagged,
                                        use_binomial, rng)
        last_T = n_new + old_sel
        if ci < n_ck and checkpoints[ci] == st[T_]:
            _record(ci, st, fs, cnt, G, tag_k, tag_tau, theta, w, iota,
                    last_T, o_int, o_flt, o_tk, o_tt)
            ci += 1
    return cnt, last_T


# --- naive reference: one count per dish, one Bernoulli draw per dish ------

@njit(cache=True)
def init_naive(st, fs, counts, birth, alpha, rng):
    st[:] = 0
    fs[:] = 0.0
    n1 = rng.poisson(alpha)
    counts = _grow(counts, n1)
    birth = _grow(birth, n1)
    for i in range(n1):
        counts[i] = 1
        birth[i] = 1
    st[T_] = 1
    st[D_] = n1
    st[SUM_] = n1
    fs[LAM_] = alpha
    return counts, birth, n1


@njit(cache=True)
def step_naive(st, fs, counts, birth, alpha, beta, theta, w, iota, rng):
    t = st[T_]
    d = st[D_]
    old_sel = 0
    if d > 0:
        theta_t = theta + t
        total = st[SUM_]
        pbar = (w * total / theta_t) / d
        fs[PBS_] += pbar
        for j in range(d):
            p = w * ((1.0 - iota) * counts[j] / theta_t
                     + iota * (1.0 / d) * (total / theta_t))
            if rng.random() < p:
                counts[j] += 1
                old_sel += 1
    lam = alpha / (t + 1.0) ** (1.0 - beta)
    n_new = rng.poisson(lam)
    counts = _grow(counts, d + n_new)
    birth = _grow(birth, d + n_new)
    for i in range(d, d + n_new):
        counts[i] = 1
        birth[i] = t + 1
    st[T_] = t + 1
    st[D_] = d + n_new
    st[SUM_] += old_sel + n_new
    fs[LAM_] += lam
    return counts, birth, n_new, old_sel


@njit(cache=True)
def run_naive(st, fs, counts, birth, alpha, beta, theta, w, iota, horizon,
              rng):
    last_T = 0
    while st[T_] < horizon:
        counts, birth, n_new, old_sel = step_naive(st, fs, counts, birth,
                                                   alpha, beta, theta, w,
                                                   iota, rng)
        last_T = n_new + old_sel
    return counts, birth, last_T
