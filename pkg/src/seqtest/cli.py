"""Command-line front end.

    seqtest design <family> --model gaussian:0.5 --alpha 1e-6 --beta 1e-6
    seqtest eval --plan plan.txt --model gaussian:0.5 --mu 0.3 [--method mc]
    seqtest sweep --plan plan.txt --model gaussian:0.5 --grid -0.6:0.6:100
    seqtest reproduce table1 --seed 7 --out-dir out/

Options may also come from a JSON config file (--config); unknown keys are
rejected.  Exit codes: 0 ok, 2 configuration error, 3 I/O error,
4 numerical non-convergence.  SEQTEST_THREADS caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .evaluate import GridConvergenceError, McConfig, eval_exact, eval_mc, sweep_mu
from .fsst import design_fsst
from .models import BernoulliOneSided, DomainError, GaussianMean
from .plans import (
    InfeasibleDesignError,
    SprtDesign,
    TestPlan,
    design_3st,
    design_gmt,
    design_mod_st,
    design_sprt,
    design_st,
    fsst_plan,
)
from . import reproduce

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

_FAMILIES = ("fsst", "3st", "gmt", "st", "modst", "sprt")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def parse_model(spec: str):
    try:
        kind, _, args = spec.partition(":")
        if kind == "gaussian":
            return GaussianMean(float(args))
        if kind == "bernoulli":
            p0, p1 = (float(x) for x in args.split(","))
            return BernoulliOneSided(p0, p1)
    except (ValueError, DomainError) as exc:
        raise CliError(f"bad model spec {spec!r}: {exc}", EXIT_CONFIG)
    raise CliError(f"bad model spec {spec!r} (use gaussian:<eta> or "
                   f"bernoulli:<p0>,<p1>)", EXIT_CONFIG)


def parse_grid(spec: str) -> list[float]:
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
        if n < 1:
            raise ValueError("empty grid")
        return [float(x) for x in np.linspace(lo, hi, n)]
    except ValueError as exc:
        raise CliError(f"bad grid spec {spec!r} (use lo:hi:n): {exc}", EXIT_CONFIG)


_CONFIG_KEYS = {
    "model", "alpha", "beta", "K", "seed", "reps", "grid", "out", "out_dir",
    "family", "mu", "method", "variant", "gamma_rule", "strict_cstar",
    "modst_rule", "points", "target",
}


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO)
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}", EXIT_CONFIG)
    if not isinstance(cfg, dict):
        raise CliError("config must be a JSON object", EXIT_CONFIG)
    unknown = set(cfg) - _CONFIG_KEYS
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", EXIT_CONFIG)
    return cfg


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        for key, val in cfg.items():
            if getattr(args, key, None) in (None, False):
                setattr(args, key, val)
    return args


def _write_out(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc}", EXIT_IO)


def cmd_design(args: argparse.Namespace) -> None:
    args = _merge_config(args)
    if args.alpha is None or args.beta is None:
        raise CliError("design needs --alpha and --beta", EXIT_CONFIG)
    alpha, beta = float(args.alpha), float(args.beta)
    family = args.family
    if family == "sprt":
        d = design_sprt(alpha, beta)
        _write_out(f"seqtest-sprt v1\nA {d.A:.11e}\nB {d.B:.11e}\n"
                   f"alpha {alpha:.11e}\nbeta {beta:.11e}\n", args.out)
        return
    model = parse_model(args.model)
    try:
        if family == "fsst":
            plan = fsst_plan(model, alpha, beta, strict_cstar=args.strict_cstar)
            d = design_fsst(model, alpha, beta, strict_cstar=args.strict_cstar)
            sys.stderr.write(f"# n={d.n_star} c={d.c_star:.6g}\n")
        elif family == "3st":
            plan = design_3st(model, alpha, beta, variant=args.variant or "lorden-markov")
        elif family == "gmt":
            plan = design_gmt(model, alpha, beta,
                              gamma_rule=args.gamma_rule or "optimize-ess-bound")
            sys.stderr.write(f"# K0={plan.meta['K0']} K1={plan.meta['K1']} "
                             f"stages={plan.stage_count}\n")
        elif family == "st":
            plan = design_st(model, alpha, beta, int(args.K or 1))
        elif family == "modst":
            plan = design_mod_st(model, alpha, beta, int(args.K or 1),
                                 rule=args.modst_rule or "marginal")
        else:
            raise CliError(f"unknown family {family!r}", EXIT_CONFIG)
    except (DomainError, InfeasibleDesignError) as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    _write_out(plan.serialize(), args.out)


def _load_plan(path: str):
    try:
        text = Path(path).read_text() if path != "-" else sys.stdin.read()
    except OSError as exc:
        raise CliError(f"cannot read plan {path}: {exc}", EXIT_IO)
    if text.startswith("seqtest-sprt"):
        fields = dict(ln.split() for ln in text.strip().splitlines()[1:])
        return SprtDesign(float(fields["A"]), float(fields["B"]),
                          float(fields["alpha"]), float(fields["beta"]))
    try:
        return TestPlan.parse(text)
    except DomainError as exc:
        raise CliError(f"bad plan file {path}: {exc}", EXIT_CONFIG)


def _report_text(rep) -> str:
    lines = [f"method {rep.method}", f"ess {rep.ess:.12g}", f"max_n {rep.max_n}",
             f"type1 {rep.type1:.12g}", f"type2 {rep.type2:.12g}"]
    if rep.se_ess is not None:
        lines.append(f"se_ess {rep.se_ess:.12g}")
    for n, a, r in zip(rep.stop_n, rep.accept_mass, rep.reject_mass):
        lines.append(f"stop {n} accept {a:.12g} reject {r:.12g}")
    return "\n".join(lines) + "\n"


def cmd_eval(args: argparse.Namespace) -> None:
    args = _merge_config(args)
    model = parse_model(args.model)
    plan = _load_plan(args.plan)
    if args.mu is None:
        raise CliError("eval needs --mu (true parameter)", EXIT_CONFIG)
    truth = float(args.mu)
    method = args.method or ("mc" if isinstance(plan, SprtDesign) else "exact")
    try:
        if method == "exact":
            if isinstance(plan, SprtDesign):
                raise CliError("the SPRT has no exact evaluator; use --method mc",
                               EXIT_CONFIG)
            rep = eval_exact(plan, model, truth, points=int(args.points or 4001))
        elif method == "mc":
            rep = eval_mc(plan, model, truth,
                          McConfig(reps=int(args.reps or 100000), seed=int(args.seed or 0)))
        else:
            raise CliError(f"unknown method {method!r}", EXIT_CONFIG)
    except GridConvergenceError as exc:
        raise CliError(str(exc), EXIT_NUMERIC)
    except DomainError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    _write_out(_report_text(rep), args.out)


def cmd_sweep(args: argparse.Namespace) -> None:
    args = _merge_config(args)
    model = parse_model(args.model)
    plan = _load_plan(args.plan)
    if not args.grid:
        raise CliError("sweep needs --grid lo:hi:n", EXIT_CONFIG)
    grid = parse_grid(args.grid)
    method = args.method or ("mc" if isinstance(plan, SprtDesign) else "exact")
    nstar = None
    meta = getattr(plan, "meta", None)
    if isinstance(plan, SprtDesign):
        nstar = design_fsst(model, plan.alpha, plan.beta).n_star
    elif meta and "alpha" in meta and "beta" in meta:
        nstar = design_fsst(model, meta["alpha"], meta["beta"]).n_star
    try:
        res = sweep_mu(plan, model, grid, method=method,
                       mc=McConfig(reps=int(args.reps or 100000), seed=int(args.seed or 0)),
                       n_star=nstar)
    except GridConvergenceError as exc:
        raise CliError(str(exc), EXIT_NUMERIC)
    except DomainError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    _write_out(res.to_csv(), args.out)


_TARGETS = ("table1", "fig1", "fig2", "fig3", "fig4", "fig5")


def cmd_reproduce(args: argparse.Namespace) -> None:
    args = _merge_config(args)
    target = args.target
    if target not in _TARGETS:
        raise CliError(f"unknown target {target!r} (choose from {_TARGETS})", EXIT_CONFIG)
    out_dir = Path(args.out_dir or ".")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out_dir}: {exc}", EXIT_IO)
    seed = int(args.seed or 0)
    reps = int(args.reps or 100000)

    def write(name: str, text: str) -> None:
        try:
            (out_dir / name).write_text(text)
        except OSError as exc:
            raise CliError(f"cannot write {out_dir / name}: {exc}", EXIT_IO)
        sys.stderr.write(f"# wrote {out_dir / name}\n")

    if target == "table1":
        write("table1.csv", reproduce.table1(seed=seed, reps=reps).to_csv())
    elif target == "fig1":
        write("fig1a.csv", reproduce.fig1_csv("symmetric", seed=seed, reps=reps))
        write("fig1b.csv", reproduce.fig1_csv("asymmetric", seed=seed, reps=reps))
    elif target == "fig2":
        write("fig2a.csv", reproduce.fig2_csv("symmetric", "st"))
        write("fig2b.csv", reproduce.fig2_csv("symmetric", "mod-st"))
        write("fig2c.csv", reproduce.fig2_csv("asymmetric", "st"))
        write("fig2d.csv", reproduce.fig2_csv("asymmetric", "mod-st"))
    elif target == "fig3":
        write("fig3a.csv", reproduce.highdim_csv("known-count", seed=seed, reps=reps))
        write("fig3b.csv", reproduce.highdim_csv("upper-bound", seed=seed, reps=reps))
    elif target == "fig4":
        write("fig4.csv", reproduce.highdim_csv("known-count", seed=seed, reps=reps))
    elif target == "fig5":
        write("fig5.csv", reproduce.highdim_csv("upper-bound", seed=seed, reps=reps))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqtest", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file; flags win")
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--reps", type=int, default=None)

    d = sub.add_parser("design", help="design a test plan")
    d.add_argument("family", choices=_FAMILIES)
    d.add_argument("--model", default="gaussian:0.5")
    d.add_argument("--alpha", type=float)
    d.add_argument("--beta", type=float)
    d.add_argument("--K", type=int)
    d.add_argument("--variant", choices=("lorden-markov", "gmt-k0"))
    d.add_argument("--gamma-rule", dest="gamma_rule",
                   choices=("optimize-ess-bound", "theta-sqrt-log"))
    d.add_argument("--modst-rule", dest="modst_rule", choices=("marginal", "joint"))
    d.add_argument("--strict-cstar", action="store_true")
    common(d)

    e = sub.add_parser("eval", help="evaluate a plan at one true parameter")
    e.add_argument("--plan", required=True, help="plan file ('-' for stdin)")
    e.add_argument("--model", default="gaussian:0.5")
    e.add_argument("--mu", type=float)
    e.add_argument("--method", choices=("exact", "mc"))
    e.add_argument("--points", type=int)
    common(e)

    s = sub.add_parser("sweep", help="evaluate a plan across a parameter grid")
    s.add_argument("--plan", required=True)
    s.add_argument("--model", default="gaussian:0.5")
    s.add_argument("--grid", help="lo:hi:n")
    s.add_argument("--method", choices=("exact", "mc"))
    common(s)

    r = sub.add_parser("reproduce", help="write study CSVs")
    r.add_argument("target", choices=_TARGETS)
    r.add_argument("--out-dir", dest="out_dir")
    common(r)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"design": cmd_design, "eval": cmd_eval, "sweep": cmd_sweep,
                "reproduce": cmd_reproduce}
    try:
        handlers[args.command](args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code
    except BrokenPipeError:
        return 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
