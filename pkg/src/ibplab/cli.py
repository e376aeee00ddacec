"""Command line entry point: ``ibplab <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 acceptance gate failed.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
import warnings

import numpy as np

from . import io
from .ensemble import (clt_pipeline_dish, clt_pipeline_mean, estimate_parameters,
                       replica_seed, run_ensemble, run_replicas)
from .observables import (QUANTITIES, BoundaryWarning, RegimeError, classify_regime,
                          scaling_rule)
from .process import geometric_checkpoints, simulate
from .recursion import (RecursionPath, RecursionSpec, SAProblem, clt_residuals, noiseless_sa_gap,
                        positivity_fraction, run_recursion, run_sa)
from .stats import convergence_diagnostic, lil_band_check, normality_check

EXIT_OK, EXIT_USAGE, EXIT_GATE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="flat key=value configuration file")
    for name in ("alpha", "beta", "theta", "w", "iota"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--horizon", type=int)
    g.add_argument("--checkpoints", help="comma-separated explicit checkpoint list")
    g.add_argument("--ppd", type=int, help="geometric checkpoints per decade")
    g.add_argument("--replicas", type=int)
    g.add_argument("--master-seed", "--seed", dest="master_seed", type=int)
    g.add_argument("--n-tagged", type=int)
    g.add_argument("--mode", choices=["histogram", "naive"])
    g.add_argument("--sampler", choices=["skip", "binomial"])
    g.add_argument("--output", "-o")
    g.add_argument("--table", help="per-replica CSV path (ensemble)")
    g.add_argument("--t-check", type=int)
    g.add_argument("--t-max", type=int)
    g.add_argument("--n-jobs", type=int)
    g.add_argument("--fit-lo", type=float)
    g.add_argument("--fit-hi", type=float)
    g.add_argument("--lil-c", type=float)


_CFG_KEYS = ("alpha", "beta", "theta", "w", "iota", "horizon", "checkpoints", "ppd",
             "replicas", "master_seed", "n_tagged", "mode", "sampler", "output", "table",
             "t_check", "t_max", "n_jobs", "fit_lo", "fit_hi", "lil_c")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ibplab", description="Monte Carlo laboratory for the "
                     "interacting Indian buffet process.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [("simulate", "one trajectory as CSV"),
                       ("ensemble", "replica ensemble summary"),
                       ("estimate", "log-log parameter recovery"),
                       ("report", "regime, table cells and quick checks")]:
        _common(sub.add_parser(name, help=text))
    clt = sub.add_parser("clt", help="second-order (CLT) pipelines")
    clt.add_argument("target", choices=["mean", "dish"])
    clt.add_argument("--quantity", choices=["Tbar", "Z"], default="Tbar")
    _common(clt)
    rec = sub.add_parser("recursion-lab", help="synthetic recursions")
    rec.add_argument("experiment", choices=["sa", "positivity", "clt"])
    rec.add_argument("--delta", type=float, default=None)
    rec.add_argument("--epsilon", type=float, default=1e-3)
    rec.add_argument("--a", type=float, default=2.0)
    rec.add_argument("--b", type=float, default=0.5)
    _common(rec)
    return parser


def _config(args) -> io.RunConfig:
    overrides = {k: getattr(args, k, None) for k in _CFG_KEYS}
    return io.parse_config(args.config, overrides)


def _checkpoints(cfg: io.RunConfig):
    if cfg.checkpoints:
        return list(cfg.checkpoints)
    return geometric_checkpoints(cfg.horizon, cfg.ppd)


def _boundary_warning(params) -> None:
    regime = classify_regime(params)
    if regime.near_boundaries:
        print("warning: parameters within 1e-9 of regime boundary: "
              + ", ".join(regime.near_boundaries), file=sys.stderr)


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    _boundary_warning(cfg.params)
    tr = simulate(cfg.params, cfg.horizon, _checkpoints(cfg), n_tagged=cfg.n_tagged,
                  seed=cfg.master_seed, mode=cfg.mode, sampler=cfg.sampler)
    if cfg.output:
        io.export_trajectory(tr, cfg.output, cfg.resolved())
    else:
        lines = io._provenance(cfg.resolved()) + [io.trajectory_header(tr.n_tagged)]
        sys.stdout.write("\n".join(lines + io.trajectory_rows(tr)) + "\n")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = _config(args)
    _boundary_warning(cfg.params)
    if cfg.replicas < 2:
        raise UsageError("ensemble needs replicas >= 2")
    s = run_ensemble(cfg.params, cfg.horizon, cfg.replicas, cfg.master_seed,
                     n_tagged=cfg.n_tagged, checkpoints=_checkpoints(cfg), n_jobs=cfg.n_jobs,
                     lil_c=cfg.lil_c)
    out = cfg.output or "/dev/stdout"
    io.export_summary(s, out, cfg.table, cfg.resolved())
    return EXIT_OK


def _window(cfg):
    if cfg.fit_lo is None and cfg.fit_hi is None:
        return None
    hi = cfg.fit_hi if cfg.fit_hi is not None else cfg.horizon
    lo = cfg.fit_lo if cfg.fit_lo is not None else hi / 100
    return lo, hi


def cmd_estimate(args) -> int:
    cfg = _config(args)
    trs = run_replicas(cfg.params, cfg.horizon, cfg.replicas, cfg.master_seed,
                       _checkpoints(cfg), cfg.n_tagged, n_jobs=cfg.n_jobs)
    rep = estimate_parameters(trs, _window(cfg))
    lines = io._provenance(cfg.resolved()) + ["[estimates]"]
    for e in (rep.alpha_hat, rep.beta_hat, rep.w_hat, rep.iota_hat):
        val = "none" if e.value is None else repr(e.value)
        lines.append(f"{e.name}: {val}")
        lines.append(f"{e.name}_se: {e.se!r}")
        lines.append(f"{e.name}_assumption: {e.assumption}")
        if e.warning:
            lines.append(f"{e.name}_warning: {e.warning}")
    for name, f in rep.fits.items():
        lines += ["", f"[fit {name}]", f"slope: {f.slope!r}", f"intercept: {f.intercept!r}",
                  f"rss: {f.rss!r}", f"curvature_t: {f.curvature_t!r}", f"curved: {f.curved}"]
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK


def cmd_clt(args) -> int:
    cfg = _config(args)
    p = cfg.params
    regime = classify_regime(p)
    if args.target == "mean" and regime.clt_mean_case == "none":
        raise UsageError("clt mean requires β<w")
    if args.target == "dish" and (regime.dish_case != "low" or regime.clt_dish_case == "none"):
        raise UsageError("clt dish requires low interaction (ι=0 or ι<min(β/w,1))")
    t_max = cfg.t_max or cfg.horizon
    t_check = cfg.t_check or t_max // 100
    _boundary_warning(p)
    if args.target == "mean":
        r = clt_pipeline_mean(p, cfg.replicas, t_check, t_max, cfg.master_seed,
                              cfg.n_jobs, args.quantity)
    else:
        r = clt_pipeline_dish(p, cfg.replicas, t_check, t_max, cfg.master_seed,
                              cfg.n_tagged, cfg.n_jobs)
    lines = io._provenance(cfg.resolved()) + [f"case: {r.case}", f"n: {r.residuals.size}",
                                              f"variance_ratio: {r.variance_ratio!r}"]
    verdict = True
    if r.normality is not None:
        lines.append(f"normality: {r.normality.summary()}")
        verdict = r.passed
    else:
        lines.append("normality: not evaluated (sample < 500 or no Gaussian limit)")
    if r.shift is not None:
        ok = abs(r.shift_ratio - 1) <= 0.15
        lines += [f"shift_mean: {r.shift!r}", f"shift_se: {r.shift_se!r}",
                  f"shift_prediction: {r.shift_prediction!r}",
                  f"shift_ratio: {r.shift_ratio!r}"]
        verdict = verdict and ok if r.normality is not None else ok
    evaluated = r.normality is not None or r.shift is not None
    lines.append(f"verdict: {_verdict(verdict, evaluated)}")
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK if verdict else EXIT_GATE


def _verdict(ok: bool, evaluated: bool = True) -> str:
    if not evaluated:
        return "inconclusive"
    return "pass" if ok else "fail"


def cmd_recursion(args) -> int:
    cfg = io.parse_config(args.config, {k: getattr(args, k, None) for k in _CFG_KEYS})
    lines = io._provenance(cfg.resolved())
    ok = evaluated = True
    if args.experiment == "sa":
        prob = SAProblem(b=args.b, a_inf=args.a, theta=cfg.theta, x0=0.0)
        res = run_sa(prob, cfg.horizon, replica_seed(cfg.master_seed, 0))
        gap = abs(res.x_final - res.target)
        ok = gap <= 1e-3
        lines += [f"x_final: {res.x_final!r}", f"target: {res.target!r}", f"gap: {gap!r}",
                  f"closed_form_gap: {noiseless_sa_gap(prob, cfg.horizon)!r}"]
    elif args.experiment == "positivity":
        d = args.delta if args.delta is not None else 0.5
        spec = RecursionSpec(theta=cfg.theta, delta=d, form="nonneg", innovation="bernoulli",
                             x1=1 / (cfg.theta + 1))
        vals = []
        for r in range(cfg.replicas):
            path = run_recursion(spec, cfg.horizon, replica_seed(cfg.master_seed, r),
                                 [cfg.horizon])
            vals.append(path.rescaled(d)[-1])
        frac = positivity_fraction(vals, args.epsilon)
        ok = frac < 0.005
        lines += [f"replicas: {cfg.replicas}", f"fraction_below_epsilon: {frac!r}"]
    else:
        d = args.delta if args.delta is not None else 1.0
        t_max = cfg.t_max or cfg.horizon
        t_check = cfg.t_check or t_max // 100
        spec = RecursionSpec(theta=cfg.theta, delta=d, form="real", innovation="rademacher")
        xs = []
        for r in range(cfg.replicas):
            xs.append(run_recursion(spec, t_max, replica_seed(cfg.master_seed, r),
                                    [t_check, t_max]).x)
        paths = RecursionPath(np.array([t_check, t_max]), np.vstack(xs))
        res = clt_residuals(paths, spec, t_check, t_max)
        lines.append(f"variance: {float(np.var(res, ddof=1))!r}")
        if res.size >= 500:
            nr = normality_check(res)
            ok = nr.passed
            lines.append(f"normality: {nr.summary()}")
        else:
            lines.append("normality: not evaluated (sample < 500)")
            evaluated = False
    lines.append(f"verdict: {_verdict(ok, evaluated)}")
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK if ok else EXIT_GATE


def render_cell(cell: str) -> str:
    """ASCII table-cell formula to the usual Greek notation."""
    # "Z*beta" reads as Z* times beta
    s = cell.replace("Z*", "\0Z").replace("K*_j", "\0K")
    s = re.sub("\0Z(?=[A-Za-z(])", "\0Z*", s)
    for a, b in (("alpha", "α"), ("beta", "β"), ("iota", "ι"), ("-", "−"), ("*", "·")):
        s = s.replace(a, b)
    return s.replace("\0Z", "Z*∞").replace("\0K", "K*∞,j")


def cmd_report(args) -> int:
    cfg = _config(args)
    p = cfg.params
    regime = classify_regime(p)
    lines = io._provenance(cfg.resolved())
    lines += ["[regime]", f"mean_case: {regime.mean_case}" + (" (β=0)" if regime.beta_zero else ""),
              f"dish_case: {regime.dish_case}", f"clt_mean_case: {regime.clt_mean_case}",
              f"clt_dish_case: {regime.clt_dish_case}"]
    if regime.near_boundaries:
        lines.append("near_boundaries: " + ", ".join(regime.near_boundaries))
    lines += ["", "[table cells]"]
    for q in QUANTITIES:
        rule = scaling_rule(regime, q, p)
        val = f"{rule.value:.6g}"
        kind = {"deterministic": "limit", "random_proportional": "coefficient of Z*∞",
                "random_dish_specific": "coefficient of K*∞,j"}[rule.limit_kind]
        lines.append(f"{q}: {render_cell(rule.cell)}  [{kind} = {val}; "
                     f"factor {rule.factor_text}]")

    # quick checks on one short trajectory
    tr = simulate(p, cfg.horizon, _checkpoints(cfg), n_tagged=cfg.n_tagged, seed=cfg.master_seed)
    checks = []
    checks.append(("identities", _identity_ok(tr)))
    try:
        frac = lil_band_check(tr.t, tr.D, p, cfg.lil_c)
        checks.append((f"lil_band(c={cfg.lil_c:g}) violation={frac:.4f}", frac < 0.01))
    except ValueError:
        checks.append(("lil_band skipped (Lambda < e^2)", True))
    if p.iota == 1:
        born = np.isfinite(tr.tag_P)
        same = np.all(tr.tag_P[born] == np.broadcast_to(tr.Pbar[:, None], tr.tag_P.shape)[born])
        checks.append(("synchronization P_tag == Pbar", bool(same)))
    lines += ["", "[checks]"]
    for name, ok in checks:
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}")
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_GATE


def _identity_ok(tr, tol=1e-12) -> bool:
    from .validation import identity_violations

    return identity_violations(tr, tol) == 0


COMMANDS = {"simulate": cmd_simulate, "ensemble": cmd_ensemble, "estimate": cmd_estimate,
            "clt": cmd_clt, "recursion-lab": cmd_recursion, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", BoundaryWarning)
            return COMMANDS[args.command](args)
    except (UsageError, io.ConfigError, RegimeError, ValueError) as exc:
        print(f"ibplab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ibplab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
