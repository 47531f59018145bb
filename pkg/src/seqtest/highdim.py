"""Per-stream level calibration for m-stream signal recovery.

With m independent streams, at most u signals and at least l (so at most
m - l noises), classical familywise error control at global levels
(alpha, beta) reduces to running each stream's test at per-stream levels
alpha_m = 1 - (1-alpha)^(1/(m-l)) and beta_m = 1 - (1-beta)^(1/u).
Generalized familywise control (at least kappa false positives / iota false
negatives) reduces likewise through binomial tail inversion.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import special as sc

from .models import DomainError, HypothesisModel, _check_level
from .plans import (
    choose_K_st,
    design_3st,
    design_gmt,
    design_mod_st,
    design_sprt,
    design_st,
    fsst_plan,
    hyp_truth,
)

__all__ = [
    "HighDimConfig",
    "CalibratedLevels",
    "HighdimSweepResult",
    "calibrate_fwe",
    "calibrate_gfwe",
    "binomial_tail",
    "asymptotic_optimal_ess",
    "highdim_sweep",
]


@dataclass(frozen=True)
class HighDimConfig:
    """Signal-recovery problem size and global error levels.

    m streams, between l and u of them signals; kappa/iota are the
    generalized familywise orders (kappa = iota = 1 is classical control).
    """

    m: int
    l: int
    u: int
    alpha: float
    beta: float
    kappa: int = 1
    iota: int = 1

    def __post_init__(self) -> None:
        if not (isinstance(self.m, int) and self.m >= 1):
            raise DomainError(f"m must be a positive integer, got {self.m}")
        if not (0 <= self.l <= self.u <= self.m):
            raise DomainError(f"need 0 <= l <= u <= m, got l={self.l}, u={self.u}, m={self.m}")
        if self.u == 0 or self.l >= self.m:
            raise DomainError("need u > 0 and l < m")
        _check_level(self.alpha, "alpha")
        _check_level(self.beta, "beta")
        if self.kappa < 1 or self.iota < 1:
            raise DomainError("kappa and iota must be >= 1")
        if self.kappa > 1 or self.iota > 1:
            if not (self.iota < self.u and self.kappa < self.m - self.l):
                raise DomainError(
                    "generalized orders need iota < u and kappa < m - l")


@dataclass(frozen=True)
class CalibratedLevels:
    alpha_stream: float
    beta_stream: float

    def __post_init__(self) -> None:
        _check_level(self.alpha_stream, "alpha_stream")
        _check_level(self.beta_stream, "beta_stream")


def calibrate_fwe(cfg: HighDimConfig) -> CalibratedLevels:
    """Classical familywise calibration: the largest per-stream levels whose
    worst-case union over m - l noises (resp. u signals) stays within the
    global budgets.  Computed via log1p/expm1 (relative error < 1e-12)."""
    a = -math.expm1(math.log1p(-cfg.alpha) / (cfg.m - cfg.l))
    b = -math.expm1(math.log1p(-cfg.beta) / cfg.u)
    return CalibratedLevels(a, b)


def binomial_tail(n: int, p: float, k: int) -> float:
    """B(n, p; k) = P(Binomial(n, p) >= k).

    Direct log-space summation for n <= 1e4, regularized incomplete beta
    for larger n; relative accuracy ~1e-12.
    """
    if not (isinstance(n, int) and n >= 1):
        raise DomainError(f"n must be a positive integer, got {n}")
    if not (0 <= k <= n):
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    _check_level(p, "p")
    if k == 0:
        return 1.0
    if n <= 10_000:
        j = np.arange(k, n + 1)
        logpmf = (sc.gammaln(n + 1) - sc.gammaln(j + 1) - sc.gammaln(n - j + 1)
                  + j * math.log(p) + (n - j) * math.log1p(-p))
        m = logpmf.max()
        return float(math.exp(m) * np.exp(logpmf - m).sum())
    return float(sc.betainc(k, n - k + 1, p))


def calibrate_gfwe(cfg: HighDimConfig) -> CalibratedLevels:
    """Generalized familywise calibration.

    Returns the largest per-stream levels p with B(m-l, p; kappa) <= alpha
    and B(u, p; iota) <= beta, by bisection in log p to relative tolerance
    1e-12 (the binomial tail is strictly increasing in p).
    """
    a = _invert_binomial_tail(cfg.m - cfg.l, cfg.kappa, cfg.alpha)
    b = _invert_binomial_tail(cfg.u, cfg.iota, cfg.beta)
    return CalibratedLevels(a, b)


def _invert_binomial_tail(n: int, k: int, level: float) -> float:
    lo, hi = math.log(1e-300), 0.0  # log p bracket
    if binomial_tail(n, 0.5, k) <= level:
        lo = math.log(0.5)
    else:
        hi = math.log(0.5)
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if binomial_tail(n, math.exp(mid), k) <= level:
            lo = mid
        else:
            hi = mid
    return math.exp(lo)


def asymptotic_optimal_ess(cfg: HighDimConfig, s: int, I0: float, I1: float) -> float:
    """Asymptotically optimal expected average sample size with s signals:
    (1 - s/m) log(u/iota)/I0 + (s/m) log((m-l)/kappa)/I1."""
    if not cfg.l <= s <= cfg.u:
        raise DomainError(f"s must lie in [l, u] = [{cfg.l}, {cfg.u}], got {s}")
    frac = s / cfg.m
    return ((1.0 - frac) * math.log(cfg.u / cfg.iota) / I0
            + frac * math.log((cfg.m - cfg.l) / cfg.kappa) / I1)


# ---------------------------------------------------------------------------
# Desk-scale sweep over the maximum number of signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HighdimSweepRow:
    u: int
    u_over_m: float
    family: str
    K: int                 # max stages (K for ST/mod-ST, 3+K0+K1 for GMT, 1 for FSST, 0 for SPRT)
    alpha_stream: float
    beta_stream: float
    ess_mixture: float
    max_stages: int


@dataclass(frozen=True)
class HighdimSweepResult:
    scenario: str
    rows: tuple[HighdimSweepRow, ...]

    def to_csv(self) -> str:
        lines = ["u,u_over_m,family,K,alpha_stream,beta_stream,ess_mixture,max_stages"]
        for r in self.rows:
            lines.append(",".join([
                str(r.u), f"{r.u_over_m:.12g}", r.family, str(r.K),
                f"{r.alpha_stream:.12g}", f"{r.beta_stream:.12g}",
                f"{r.ess_mixture:.12g}", str(r.max_stages),
            ]))
        return "\n".join(lines) + "\n"

    def series(self, family: str) -> list[HighdimSweepRow]:
        return [r for r in self.rows if r.family == family]


def _cell(model: HypothesisModel, cfg: HighDimConfig, pi: float, family: str,
          K_max: int, seed: int, reps: int) -> HighdimSweepRow:
    from .evaluate import McConfig, eval_exact, eval_mc, ess_mixture
    from .rng import derive_seed

    levels = calibrate_fwe(cfg) if cfg.kappa == cfg.iota == 1 else calibrate_gfwe(cfg)
    a, b = levels.alpha_stream, levels.beta_stream
    k_used = 0
    if family == "fsst":
        plan = fsst_plan(model, a, b)
        k_used = 1
    elif family == "gmt":
        plan = design_gmt(model, a, b)
        k_used = plan.stage_count
    elif family == "3st":
        plan = design_3st(model, a, b)
        k_used = plan.stage_count
    elif family == "st":
        k_used = choose_K_st(model, a, b, pi, K_max, variant="st")
        plan = design_st(model, a, b, k_used)
    elif family == "mod-st":
        k_used = choose_K_st(model, a, b, pi, K_max, variant="mod-st")
        plan = design_mod_st(model, a, b, k_used)
    elif family == "sprt":
        sprt = design_sprt(a, b)
        mc0 = McConfig(reps=reps, seed=derive_seed(seed, 2 * cfg.u))
        mc1 = McConfig(reps=reps, seed=derive_seed(seed, 2 * cfg.u + 1))
        r0 = eval_mc(sprt, model, hyp_truth(model, "H0"), mc0)
        r1 = eval_mc(sprt, model, hyp_truth(model, "H1"), mc1)
        mix = ess_mixture(r0, r1, pi)
        return HighdimSweepRow(cfg.u, cfg.u / cfg.m, family, 0, a, b, mix, 0)
    else:
        raise DomainError(f"unknown family {family!r}")
    r0 = eval_exact(plan, model, hyp_truth(model, "H0"), check_convergence=False)
    r1 = eval_exact(plan, model, hyp_truth(model, "H1"), check_convergence=False)
    mix = ess_mixture(r0, r1, pi)
    stages = plan.stage_count if family in ("gmt", "3st") else len(plan.checkpoints)
    return HighdimSweepRow(cfg.u, cfg.u / cfg.m, family, k_used, a, b, mix, stages)


def highdim_sweep(cfg_base: HighDimConfig, u_values: Sequence[int], scenario: str,
                  families: Sequence[str], K_max: int = 10,
                  model: Optional[HypothesisModel] = None,
                  seed: int = 0, reps: int = 100_000) -> HighdimSweepResult:
    """Calibrate, design and evaluate each family across a grid of u values.

    ``scenario`` is ``known-count`` (number of signals known: l = u, mixture
    weight pi = u/m) or ``upper-bound`` (only u known: l = 0, pi = u/2m,
    the average over the u+1 possible signal counts).  ST and mod-ST pick
    K <= K_max minimizing the scenario's mixture ESS.  SPRT cells are Monte
    Carlo (seed-derived per cell); all other cells are exact.
    """
    from .evaluate import thread_count

    if model is None:
        raise DomainError("highdim_sweep needs a model")
    if scenario not in ("known-count", "upper-bound"):
        raise DomainError(f"unknown scenario {scenario!r}")
    for u in u_values:
        if not (0 < u <= cfg_base.m):
            raise DomainError(f"u values must lie in (0, m], got {u}")
        if scenario == "known-count" and u >= cfg_base.m:
            raise DomainError("known-count scenario needs u < m (l = u < m)")

    def run_cell(args) -> HighdimSweepRow:
        u, family = args
        if scenario == "known-count":
            cfg = HighDimConfig(cfg_base.m, u, u, cfg_base.alpha, cfg_base.beta,
                                cfg_base.kappa, cfg_base.iota)
            pi = u / cfg_base.m
        else:
            cfg = HighDimConfig(cfg_base.m, 0, u, cfg_base.alpha, cfg_base.beta,
                                cfg_base.kappa, cfg_base.iota)
            pi = u / (2 * cfg_base.m)
        return _cell(model, cfg, pi, family, K_max, seed, reps)

    cells = [(u, f) for u in u_values for f in families]
    workers = min(thread_count(), len(cells))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]
    return HighdimSweepResult(scenario, tuple(rows))
