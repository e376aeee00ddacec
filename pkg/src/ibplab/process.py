"""Exact simulation of the interacting buffet process.

Two interchangeable engines are provided.  The histogram engine keeps the
untagged dishes grouped by popularity and only visits dishes that are
plausibly selected; the naive engine draws one Bernoulli per dish and is kept
as a reference oracle for small horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .params import Parameters, lambda_t, validate

MODES = ("histogram", "naive")
SAMPLERS = ("skip", "binomial")


@dataclass(frozen=True)
class StepRecord:
    t_new: int
    T: int
    N: int
    old_selected: int


@dataclass
class ModelState:
    """Simulation state at time ``t``.

    ``rng`` is owned by the state; two states never share a generator.
    """

    params: Parameters
    n_tagged: int
    rng: np.random.Generator
    mode: str = "histogram"
    last_T: int = 0
    _st: np.ndarray = field(default_factory=lambda: np.zeros(5, dtype=np.int64))
    _fs: np.ndarray = field(default_factory=lambda: np.zeros(2))
    cnt: np.ndarray = field(default_factory=lambda: np.zeros(16, dtype=np.int64))
    G: np.ndarray = field(default_factory=lambda: np.zeros(16, dtype=np.int64))
    tag_k: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    tag_tau: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def t(self) -> int:
        return int(self._st[K.T_])

    @property
    def d_total(self) -> int:
        return int(self._st[K.D_])

    @property
    def sum_counts(self) -> int:
        return int(self._st[K.SUM_])

    @property
    def Lambda(self) -> float:
        return float(self._fs[K.LAM_])

    @property
    def n_untagged(self) -> int:
        if self.mode == "naive":
            return max(self.d_total - self.n_tagged, 0)
        return int(self._st[K.NU_])

    def untagged_counts(self) -> np.ndarray:
        """Counts of the untagged dishes (descending in histogram mode)."""
        if self.mode == "naive":
            return self.cnt[min(self.n_tagged, self.d_total):self.d_total].copy()
        return self.cnt[:self.n_untagged].copy()

    @property
    def hist(self) -> dict[int, int]:
        values, freq = np.unique(self.untagged_counts(), return_counts=True)
        return {int(k): int(n) for k, n in zip(values, freq)}

    @property
    def tagged(self) -> list[tuple[int, int, int]]:
        """(dish id, birth time, count) for each individually tracked dish."""
        if self.mode == "naive":
            m = min(self.n_tagged, self.d_total)
            return [(j + 1, int(self.G[j]), int(self.cnt[j])) for j in range(m)]
        m = int(self._st[K.NTAG_])
        return [(j + 1, int(self.tag_tau[j]), int(self.tag_k[j])) for j in range(m)]

    def tagged_counts(self) -> np.ndarray:
        return np.array([k for _, _, k in self.tagged], dtype=np.int64)

    def all_counts(self) -> np.ndarray:
        return np.concatenate([self.tagged_counts(), self.untagged_counts()])

    def check_invariants(self) -> None:
        counts = self.all_counts()
        assert counts.size == self.d_total
        assert int(counts.sum()) == self.sum_counts
        assert counts.size == 0 or (counts.min() >= 1 and counts.max() <= self.t)
        for _, tau, k in self.tagged:
            assert 1 <= k <= self.t - tau + 1
        if self.mode == "histogram":
            u = self.untagged_counts()
            assert np.all(np.diff(u) <= 0)
            for k in range(0, int(u.max()) + 1 if u.size else 1):
                assert self.G[k] == np.count_nonzero(u > k)


def _new_state(params: Parameters, n_tagged: int, seed, mode: str) -> ModelState:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if n_tagged < 0:
        raise ValueError("n_tagged must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    state = ModelState(params=validate(params), n_tagged=int(n_tagged), rng=rng, mode=mode)
    state.tag_k = np.zeros(max(n_tagged, 1), dtype=np.int64)
    state.tag_tau = np.zeros(max(n_tagged, 1), dtype=np.int64)
    return state


def init(params: Parameters, seed, n_tagged: int = 8, mode: str = "histogram") -> ModelState:
    """Customer 1 tries Poisson(alpha) dishes; the first ``n_tagged`` are tagged."""
    state = _new_state(params, n_tagged, seed, mode)
    p = state.params
    if mode == "naive":
        state.cnt, state.G, n1 = K.init_naive(state._st, state._fs, state.cnt,
                                             state.G, p.alpha, state.rng)
    else:
        state.cnt, n1 = K.init_state(state._st, state._fs, state.cnt, state.G,
                                     state.tag_k, state.tag_tau, p.alpha,
                                     state.n_tagged, state.rng)
    state.last_T = int(n1)
    return state


def state_from_counts(params: Parameters, t: int, counts, seed=0,
                      tagged=(), mode: str = "histogram") -> ModelState:
    """Build a state at time ``t`` from explicit dish counts.

    ``counts`` are untagged dishes; ``tagged`` is a sequence of
    ``(birth_time, count)`` pairs.  ``Lambda`` is set to its mean value.
    """
    from .params import Lambda_t

    counts = np.asarray(counts, dtype=np.int64)
    tagged = list(tagged)
    state = _new_state(params, len(tagged), seed, mode)
    if np.any(counts < 1) or np.any(counts > t):
        raise ValueError("counts must lie in [1, t]")
    if mode == "naive":
        allc = np.concatenate([np.array([k for _, k in tagged], dtype=np.int64), counts])
        births = np.concatenate([np.array([tau for tau, _ in tagged], dtype=np.int64),
                                 np.ones(counts.size, dtype=np.int64)])
        state.cnt = np.zeros(max(allc.size, 16), dtype=np.int64)
        state.G = np.zeros(max(allc.size, 16), dtype=np.int64)
        state.cnt[:allc.size] = allc
        state.G[:allc.size] = births
        nu = counts.size
    else:
        u = np.sort(counts)[::-1]
        state.cnt = np.zeros(max(u.size, 16), dtype=np.int64)
        state.cnt[:u.size] = u
        state.G = np.zeros(t + 3, dtype=np.int64)
        for k in range(0, t + 1):
            state.G[k] = np.count_nonzero(u > k)
        for j, (tau, k) in enumerate(tagged):
            state.tag_tau[j] = tau
            state.tag_k[j] = k
        nu = u.size
    total = int(counts.sum()) + sum(k for _, k in tagged)
    state._st[:] = [t, counts.size + len(tagged), total, nu, len(tagged)]
    state._fs[K.LAM_] = Lambda_t(state.params, t)
    return state


def inclusion_probability(state: ModelState, params: Parameters, count_k: int) -> float:
    """Probability that the next customer selects an old dish with ``count_k`` customers."""
    t, d = state.t, state.d_total
    if d == 0:
        raise ValueError("no observed dishes")
    if not 1 <= count_k <= t:
        raise ValueError("count must lie in [1, t]")
    theta_t = params.theta + t
    pbar = (params.w * state.sum_counts / theta_t) / d
    return params.w * (1.0 - params.iota) / theta_t * count_k + params.iota * pbar


def _ensure_G(state: ModelState) -> None:
    need = state.t + 3
    if state.G.shape[0] < need:
        grown = np.zeros(max(need, 2 * state.G.shape[0]), dtype=np.int64)
        grown[:state.G.shape[0]] = state.G
        state.G = grown


def step(state: ModelState, params: Parameters | None = None,
         sampler: str = "skip") -> StepRecord:
    """Advance the histogram engine by one customer."""
    if state.mode != "histogram":
        raise ValueError("step requires a histogram-mode state; use step_naive")
    if sampler not in SAMPLERS:
        raise ValueError(f"sampler must be one of {SAMPLERS}")
    p = state.params if params is None else validate(params)
    _ensure_G(state)
    state.cnt, n_new, old = K.step_hist(
        state._st, state._fs, state.cnt, state.G, state.tag_k, state.tag_tau,
        p.alpha, p.beta, p.theta, p.w, p.iota, state.n_tagged,
        sampler == "binomial", state.rng)
    state.last_T = int(n_new + old)
    return StepRecord(state.t, state.last_T, int(n_new), int(old))


def step_naive(state: ModelState, params: Parameters | None = None) -> StepRecord:
    """Advance the per-dish reference engine by one customer."""
    if state.mode != "naive":
        raise ValueError("step_naive requires a naive-mode state")
    p = state.params if params is None else validate(params)
    state.cnt, state.G, n_new, old = K.step_naive(
        state._st, state._fs, state.cnt, state.G, p.alpha, p.beta, p.theta,
        p.w, p.iota, state.rng)
    state.last_T = int(n_new + old)
    return StepRecord(state.t, state.last_T, int(n_new), int(old))


def geometric_checkpoints(horizon: int, per_decade: int = 40) -> np.ndarray:
    """Strictly increasing grid of about ``per_decade`` points per decade.

    Contains ``floor(per_decade * log10(horizon)) + 1`` grid points starting at
    t = 1, plus ``horizon`` itself when it is not already the last one.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = int(math.floor(per_decade * math.log10(horizon) + 1e-9)) + 1
    pts = []
    prev = 0
    for i in range(n):
        v = max(int(round(10.0 ** (i / per_decade))), prev + 1)
        if v > horizon:
            break
        pts.append(v)
        prev = v
    if pts[-1] != horizon:
        pts.append(horizon)
    return np.asarray(pts, dtype=np.int64)


@dataclass
class Trajectory:
    """Observable series recorded at checkpoints of one replica."""

    params: Parameters
    seed: object
    n_tagged: int
    t: np.ndarray
    D: np.ndarray
    T: np.ndarray
    sum_counts: np.ndarray
    R: np.ndarray
    Lambda: np.ndarray
    tag_K: np.ndarray          # (rows, n_tagged), NaN before birth
    tag_tau: np.ndarray        # (rows, n_tagged), NaN before birth
    pbar_sum: np.ndarray | None = None
    S_direct: np.ndarray | None = None     # sum of P over dishes, summed dish by dish
    K_direct: np.ndarray | None = None     # sum of K over dishes, summed dish by dish
    mode: str = "histogram"

    def __len__(self) -> int:
        return self.t.size

    @property
    def theta_t(self) -> np.ndarray:
        return self.params.theta + self.t

    @property
    def Tbar(self) -> np.ndarray:
        return self.sum_counts / self.t

    @property
    def S(self) -> np.ndarray:
        return self.params.w * self.sum_counts / self.theta_t

    @property
    def lam(self) -> np.ndarray:
        return lambda_t(self.params, self.t)

    @property
    def Z(self) -> np.ndarray:
        return self.S + self.lam

    @property
    def Pbar(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.D > 0, self.S / self.D, np.nan)

    @property
    def Kbar(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.D > 0, self.sum_counts / self.D, np.nan)

    @property
    def tag_P(self) -> np.ndarray:
        p = self.params
        a = (p.w * (1.0 - p.iota) / self.theta_t)[:, None]
        c = (p.iota * self.Pbar)[:, None]
        return np.where(np.isnan(self.tag_K), np.nan, a * self.tag_K + c)

    def column(self, name: str) -> np.ndarray:
        aliases = {"lambda": "lam"}
        return np.asarray(getattr(self, aliases.get(name, name)), dtype=float)

    def at(self, t: int) -> int:
        """Row index of checkpoint ``t``."""
        idx = np.searchsorted(self.t, t)
        if idx >= self.t.size or self.t[idx] != t:
            raise KeyError(f"t={t} is not a checkpoint")
        return int(idx)

    def row(self, i: int):
        from .observables import AggregateRow

        tagged = []
        for j in range(self.n_tagged):
            if not np.isnan(self.tag_K[i, j]):
                tagged.append((j + 1, int(self.tag_tau[i, j]), int(self.tag_K[i, j]),
                               float(self.tag_P[i, j])))
        def opt(x):
            return None if np.isnan(x) else float(x)
        return AggregateRow(
            t=int(self.t[i]), D=int(self.D[i]), T=int(self.T[i]),
            Tbar=float(self.Tbar[i]), S=float(self.S[i]), Z=float(self.Z[i]),
            Pbar=opt(self.Pbar[i]), Kbar=opt(self.Kbar[i]), R=float(self.R[i]),
            lam=float(self.lam[i]), Lambda=float(self.Lambda[i]), tagged=tagged)


def _check_schedule(horizon: int, checkpoints) -> np.ndarray:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if checkpoints is None:
        return geometric_checkpoints(horizon)
    ck = np.asarray(checkpoints, dtype=np.int64)
    if ck.ndim != 1 or ck.size == 0:
        raise ValueError("checkpoints must be a non-empty list")
    if np.any(np.diff(ck) <= 0):
        raise ValueError("checkpoints must be strictly increasing")
    if ck[0] < 1 or ck[-1] > horizon:
        raise ValueError("checkpoints must lie in [1, horizon]")
    return ck


def simulate(params: Parameters, horizon: int, checkpoints=None, n_tagged: int = 8,
             seed=0, mode: str = "histogram", sampler: str = "skip") -> Trajectory:
    """Run customers 1..horizon and record observables at each checkpoint."""
    params = validate(params)
    ck = _check_schedule(horizon, checkpoints)
    state = init(params, seed, n_tagged=n_tagged, mode=mode)
    n = ck.size
    o_int = np.zeros((n, 5), dtype=np.int64)
    o_flt = np.zeros((n, 4))
    o_tk = np.zeros((n, max(n_tagged, 1)), dtype=np.int64)
    o_tt = np.zeros((n, max(n_tagged, 1)), dtype=np.int64)
    if mode == "histogram":
        state.G = np.zeros(horizon + 3, dtype=np.int64)
        state.G[0] = state.n_untagged
        p = params
        state.cnt, state.last_T = K.run_hist(
            state._st, state._fs, state.cnt, state.G, state.tag_k, state.tag_tau,
            p.alpha, p.beta, p.theta, p.w, p.iota, state.n_tagged,
            sampler == "binomial", horizon, ck, state.last_T,
            o_int, o_flt, o_tk, o_tt, state.rng)
    else:
        _run_naive_recorded(state, horizon, ck, o_int, o_flt, o_tk, o_tt)
    tk = o_tk[:, :n_tagged].astype(float)
    tt = o_tt[:, :n_tagged].astype(float)
    unborn = o_tk[:, :n_tagged] == 0
    tk[unborn] = np.nan
    tt[unborn] = np.nan
    return Trajectory(params=params, seed=seed, n_tagged=n_tagged, t=o_int[:, 0].copy(),
                      D=o_int[:, 1].copy(), T=o_int[:, 2].copy(),
                      sum_counts=o_int[:, 3].copy(), R=o_flt[:, 0].copy(),
                      Lambda=o_flt[:, 1].copy(), tag_K=tk, tag_tau=tt,
                      pbar_sum=o_flt[:, 2].copy(), S_direct=o_flt[:, 3].copy(),
                      K_direct=o_int[:, 4].copy(), mode=mode)


def _run_naive_recorded(state, horizon, ck, o_int, o_flt, o_tk, o_tt):
    p = state.params
    ci = 0

    def record():
        nonlocal ci
        d = state.d_total
        counts = state.cnt[:d]
        o_int[ci] = [state.t, d, state.last_T, state.sum_counts, int(counts.sum())]
        if d:
            theta_t = p.theta + state.t
            pbar = (p.w * state.sum_counts / theta_t) / d
            probs = p.w * (1 - p.iota) / theta_t * counts + p.iota * pbar
            o_flt[ci, 0] = float(np.sum(probs * probs))
            o_flt[ci, 3] = float(np.sum(probs))
        o_flt[ci, 1] = state.Lambda
        o_flt[ci, 2] = state._fs[K.PBS_]
        m = min(state.n_tagged, d)
        o_tk[ci, :m] = counts[:m]
        o_tt[ci, :m] = state.G[:m]
        ci += 1

    if ck[0] == state.t:
        record()
    while state.t < horizon:
        step_naive(state)
        if ci < ck.size and ck[ci] == state.t:
            record()
