"""Configuration files and deterministic text serialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .params import Parameters, validate

HEADER = ("t", "D", "T", "Tbar", "S", "Z", "Pbar", "Kbar", "R", "lambda", "Lambda")
TAG_FIELDS = ("K_tag", "P_tag", "tau_tag")


def build_id() -> str:
    import numba

    return f"ibplab-{__version__} numpy-{np.__version__} numba-{numba.__version__}"


class ConfigError(ValueError):
    """Invalid, unknown or missing configuration entry."""


@dataclass
class RunConfig:
    alpha: float = 1.0
    beta: float = 0.5
    theta: float = 1.0
    w: float = 1.0
    iota: float = 0.0
    horizon: int = 10_000
    checkpoints: tuple | None = None
    ppd: int = 40
    replicas: int = 20
    master_seed: int | None = None
    n_tagged: int = 8
    mode: str = "histogram"
    sampler: str = "skip"
    output: str | None = None
    table: str | None = None
    t_check: int | None = None
    t_max: int | None = None
    n_jobs: int = 1
    fit_lo: float | None = None
    fit_hi: float | None = None
    lil_c: float = 3.0
    skew_max: float = 0.15
    kurt_max: float = 0.3
    _set: set = field(default_factory=set, repr=False)

    @property
    def params(self) -> Parameters:
        return Parameters(self.alpha, self.beta, self.theta, self.w, self.iota)

    def resolved(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if not f.name.startswith("_")}

    def check(self) -> "RunConfig":
        try:
            validate(self.params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.n_tagged < 0:
            raise ConfigError("n_tagged must be >= 0")
        if self.mode not in ("histogram", "naive"):
            raise ConfigError("mode must be histogram or naive")
        if self.sampler not in ("skip", "binomial"):
            raise ConfigError("sampler must be skip or binomial")
        if self.ppd < 1:
            raise ConfigError("ppd must be >= 1")
        return self


_KEYS = {f.name: f for f in fields(RunConfig) if not f.name.startswith("_")}
_ALIASES = {"seed": "master_seed"}
_INT_KEYS = {"horizon", "ppd", "replicas", "master_seed", "n_tagged", "t_check", "t_max", "n_jobs"}
_FLOAT_KEYS = {"alpha", "beta", "theta", "w", "iota", "fit_lo", "fit_hi", "lil_c",
               "skew_max", "kurt_max"}


def _coerce(key: str, raw):
    if raw is None:
        return None
    try:
        if key in _INT_KEYS:
            if isinstance(raw, str):
                v = float(raw)
                if not v.is_integer():
                    raise ValueError
                return int(v)
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "checkpoints":
            if isinstance(raw, str):
                return tuple(int(float(x)) for x in raw.replace(" ", "").split(",") if x)
            return tuple(int(x) for x in raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None
    return str(raw)


def normalize_key(key: str) -> str:
    k = key.strip().replace("-", "_")
    k = _ALIASES.get(k, k)
    if k not in _KEYS:
        raise ConfigError(f"unknown key: {key}")
    return k


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[normalize_key(k)] = v.strip()
    return out


def parse_config(file=None, overrides: dict | None = None, require_seed: bool = True) -> RunConfig:
    """File values first, then non-None ``overrides`` on top."""
    merged = read_config_file(file) if file else {}
    for k, v in (overrides or {}).items():
        if v is not None:
            merged[normalize_key(k)] = v
    cfg = RunConfig()
    for k, v in merged.items():
        setattr(cfg, k, _coerce(k, v))
        cfg._set.add(k)
    if require_seed and cfg.master_seed is None:
        raise ConfigError("master_seed is required")
    return cfg.check()


# --- trajectory CSV ------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def trajectory_header(n_tagged: int) -> str:
    cols = list(HEADER)
    for i in range(1, n_tagged + 1):
        cols += [f"{name}{i}" for name in TAG_FIELDS]
    return ",".join(cols)


def _provenance(config: dict | None) -> list[str]:
    lines = [f"# build: {build_id()}"]
    for k, v in sorted((config or {}).items()):
        lines.append(f"# {k}={v}")
    return lines


def trajectory_rows(tr) -> list[str]:
    cols_int = {"t": tr.t, "D": tr.D, "T": tr.T}
    cols = {name: tr.column(name) for name in HEADER if name not in cols_int}
    tagP = tr.tag_P
    rows = []
    for i in range(len(tr)):
        vals = [_fmt(int(cols_int[n][i])) if n in cols_int else _fmt(cols[n][i]) for n in HEADER]
        for j in range(tr.n_tagged):
            k = tr.tag_K[i, j]
            if np.isnan(k):
                vals += ["", "", ""]
            else:
                vals += [str(int(k)), _fmt(tagP[i, j]), str(int(tr.tag_tau[i, j]))]
        rows.append(",".join(vals))
    return rows


def export_trajectory(tr, path, config: dict | None = None) -> None:
    lines = _provenance(config) + [trajectory_header(tr.n_tagged)] + trajectory_rows(tr)
    _write(path, "\n".join(lines) + "\n")


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def read_trajectory_csv(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    """Columns (float arrays, NaN for empty fields) and the embedded provenance."""
    meta: dict[str, str] = {}
    header = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("build:"):
                meta["build"] = body.split(":", 1)[1].strip()
            elif "=" in body:
                k, v = body.split("=", 1)
                meta[k] = v
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append([float(x) if x else math.nan for x in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: no header")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}, meta


# --- summaries ---------------------------------------------------------------

def export_summary(summary, path, table_path=None, config: dict | None = None) -> None:
    """Structured ``key: value`` text plus an optional per-replica CSV."""
    lines = _provenance(config)
    p = summary.params
    lines += ["[parameters]"] + [f"{k}: {v!r}" for k, v in p.as_dict().items()]
    r = summary.regime
    lines += ["", "[regime]", f"mean_case: {r.mean_case}", f"beta_zero: {r.beta_zero}",
              f"dish_case: {r.dish_case}", f"clt_mean_case: {r.clt_mean_case}",
              f"clt_dish_case: {r.clt_dish_case}"]
    lines += ["", "[run]", f"horizon: {summary.horizon}", f"replicas: {summary.replicas}",
              f"master_seed: {summary.master_seed}"]
    if summary.lil_violation is not None:
        lines.append(f"lil_violation_fraction: {summary.lil_violation!r}")
    if summary.zstar is not None:
        lines.append(f"zstar_proxy_mean: {float(np.mean(summary.zstar))!r}")
    if summary.rtilde is not None:
        lines.append(f"rR_mean: {float(np.mean(summary.rtilde))!r}")
    for q, rec in summary.records.items():
        lines += ["", f"[{q}]"]
        if rec.skipped:
            lines.append(f"skipped: {rec.skipped}")
            continue
        lines += [f"factor: {rec.factor}", f"limit_kind: {rec.limit_kind}",
                  f"limit_value: {rec.limit_value!r}", f"n: {rec.values.size}",
                  f"mean: {rec.mean!r}", f"se: {rec.se!r}", f"cv: {rec.cv!r}",
                  f"limit_estimate: {rec.limit_estimate!r}"]
        if rec.normality is not None:
            nr = rec.normality
            lines += [f"skewness: {nr.skewness!r}", f"excess_kurtosis: {nr.excess_kurtosis!r}",
                      f"ks_deviation: {nr.ks!r}"]
    _write(path, "\n".join(lines) + "\n")
    if table_path is not None:
        names, table = summary.terminal_table()
        out = _provenance(config) + [",".join(["replica"] + names)]
        for i, row in enumerate(table):
            out.append(",".join([str(i)] + [_fmt(v) for v in row]))
        _write(table_path, "\n".join(out) + "\n")
