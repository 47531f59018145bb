"""Exact and Monte Carlo evaluation of plans and the SPRT.

``eval_exact`` computes the stopping distribution of a plan (stop mass per
checkpoint, total accept/reject probability, expected sample size) under an
arbitrary true parameter: by the survivor recursion for cumulative-average
plans and by products of independent stage probabilities for per-stage (ST)
plans.  ``eval_mc`` simulates plans or the SPRT with counter-based streams,
so results are reproducible for a given seed regardless of parallelism.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats as st

from .engine import BernoulliRecursion, DEFAULT_POINTS, GaussianRecursion
from numba import njit, prange
from .models import (
    BernoulliOneSided,
    DomainError,
    GaussianMean,
    HypothesisModel,
    stat_cdf,
)
from .plans import SprtDesign, TestPlan
from .rng import derive_seed, normals, seed_key, uniforms

__all__ = [
    "EvalReport",
    "McConfig",
    "SweepResult",
    "GridConvergenceError",
    "eval_exact",
    "eval_mc",
    "sweep_mu",
    "ess_mixture",
    "thread_count",
]


class GridConvergenceError(RuntimeError):
    """The doubled-resolution check disagreed with the base grid."""

    def __init__(self, ess_base: float, ess_fine: float):
        super().__init__(
            f"recursion grid did not converge: ess {ess_base!r} at base resolution "
            f"vs {ess_fine!r} at double resolution")
        self.ess_base = ess_base
        self.ess_fine = ess_fine


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings; replicate streams derive from (seed, replicate)."""

    reps: int = 100_000
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self) -> None:
        if self.reps < 100:
            raise DomainError(f"reps must be >= 100, got {self.reps}")
        if self.antithetic and self.reps % 2:
            raise DomainError("antithetic pairing needs an even replicate count")


@dataclass(frozen=True)
class EvalReport:
    """Stopping distribution of one plan under one true parameter.

    ``type1`` is the total reject probability and ``type2`` the total accept
    probability; they are error probabilities when the truth lies on the H0
    (resp. H1) side.  ``stop_n``/``accept_mass``/``reject_mass`` give the
    per-checkpoint stopping decomposition.
    """

    stop_n: tuple[int, ...]
    accept_mass: tuple[float, ...]
    reject_mass: tuple[float, ...]
    type1: float
    type2: float
    ess: float
    max_n: int
    method: str  # "exact-recursion" | "exact-product" | "monte-carlo"
    grid_converged: Optional[bool] = None
    se_ess: Optional[float] = None
    se_type1: Optional[float] = None
    se_type2: Optional[float] = None
    reps: Optional[int] = None
    seed: Optional[int] = None

    @property
    def total_mass(self) -> float:
        return sum(self.accept_mass) + sum(self.reject_mass)


def thread_count() -> int:
    """Worker cap for sweeps; honors the SEQTEST_THREADS environment variable."""
    env = os.environ.get("SEQTEST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError(f"SEQTEST_THREADS must be an integer, got {env!r}")
    return max(1, min(8, os.cpu_count() or 1))


# ---------------------------------------------------------------------------
# Exact evaluation
# ---------------------------------------------------------------------------


def _plan_bounds(plan: TestPlan, model: HypothesisModel, cp) -> tuple[float, float]:
    """Continue region (lo, hi] of a checkpoint on the running-sum scale."""
    gaussian = isinstance(model, GaussianMean)
    if cp.kind in ("accept", "both", "final"):
        if gaussian:
            lo = model.sum_threshold(cp.n, cp.c_acc)
        else:
            lo = model.reject_count(cp.n, cp.c_acc) - 1
    else:
        lo = -math.inf if gaussian else -1
    if cp.kind in ("reject", "both"):
        if gaussian:
            hi = model.sum_threshold(cp.n, cp.c_rej)
        else:
            hi = model.reject_count(cp.n, cp.c_rej) - 1
    else:
        hi = math.inf if gaussian else cp.n
    return lo, hi


def _eval_recursion(plan: TestPlan, model: HypothesisModel, truth: float,
                    points: int) -> tuple[list[float], list[float]]:
    gaussian = isinstance(model, GaussianMean)
    rec = (GaussianRecursion(truth, points=points) if gaussian
           else BernoulliRecursion(truth))
    acc_mass, rej_mass = [], []
    for cp in plan.checkpoints:
        lo, hi = _plan_bounds(plan, model, cp)
        if cp.kind == "final":
            a, r = rec.final(cp.n, lo)
        else:
            a, r = rec.checkpoint(cp.n, lo, hi)
        acc_mass.append(a)
        rej_mass.append(r)
    return acc_mass, rej_mass


def _eval_st_product(plan: TestPlan, model: HypothesisModel, truth: float
                     ) -> tuple[list[float], list[float]]:
    """Per-stage-average plans: stage statistics are independent."""
    acc_mass, rej_mass = [], []
    alive = 1.0
    prev_n = 0
    for cp in plan.checkpoints:
        m = cp.n - prev_n
        prev_n = cp.n
        p_acc = stat_cdf(model, truth, m, cp.c_acc) if cp.c_acc is not None else 0.0
        if cp.kind == "accept":
            acc_mass.append(alive * p_acc)
            rej_mass.append(0.0)
            alive *= 1.0 - p_acc
        elif cp.kind == "final":
            acc_mass.append(alive * p_acc)
            rej_mass.append(alive * (1.0 - p_acc))
        else:  # pragma: no cover - ST plans are accept-only before the final stage
            raise DomainError(f"per-stage plans cannot carry {cp.kind} checkpoints")
    return acc_mass, rej_mass


def _assemble(plan: TestPlan, acc_mass: Sequence[float], rej_mass: Sequence[float],
              method: str, grid_converged: Optional[bool] = None,
              conservation_guard: bool = True, **mc) -> EvalReport:
    ns = [cp.n for cp in plan.checkpoints]
    ess = float(sum(n * (a + r) for n, a, r in zip(ns, acc_mass, rej_mass)))
    total = sum(acc_mass) + sum(rej_mass)
    if conservation_guard and method.startswith("exact") and abs(total - 1.0) > 1e-6:
        raise RuntimeError(
            f"stopping masses sum to {total!r}, not 1; recursion grid too coarse")
    return EvalReport(
        stop_n=tuple(ns),
        accept_mass=tuple(float(a) for a in acc_mass),
        reject_mass=tuple(float(r) for r in rej_mass),
        type1=float(sum(rej_mass)),
        type2=float(sum(acc_mass)),
        ess=ess,
        max_n=ns[-1],
        method=method,
        grid_converged=grid_converged,
        **mc,
    )


def eval_exact(plan: TestPlan, model: HypothesisModel, truth: float,
               points: int = DEFAULT_POINTS, check_convergence: bool = True) -> EvalReport:
    """Exact stopping distribution, errors and ESS of ``plan`` under ``truth``.

    Cumulative plans use the survivor recursion on a ``points``-point grid
    per stage; with ``check_convergence`` the run is repeated at double
    resolution and must agree on the ESS to 1e-6 relative, else
    ``GridConvergenceError`` (carrying both values) is raised.  Per-stage
    plans are products of independent stage probabilities (no grid).
    """
    if plan.statistic_mode == "per-stage":
        acc, rej = _eval_st_product(plan, model, truth)
        return _assemble(plan, acc, rej, "exact-product", grid_converged=True)
    acc, rej = _eval_recursion(plan, model, truth, points)
    if not check_convergence or isinstance(model, BernoulliOneSided):
        # the lattice program is exact; nothing to converge
        converged = True if isinstance(model, BernoulliOneSided) else None
        return _assemble(plan, acc, rej, "exact-recursion", grid_converged=converged)
    report = _assemble(plan, acc, rej, "exact-recursion", conservation_guard=False)
    fine_acc, fine_rej = _eval_recursion(plan, model, truth, 2 * points - 1)
    fine = _assemble(plan, fine_acc, fine_rej, "exact-recursion", conservation_guard=False)
    if (abs(fine.ess - report.ess) >= 1e-6 * max(report.ess, 1.0)
            or abs(report.total_mass - 1.0) > 1e-6 or abs(fine.total_mass - 1.0) > 1e-6):
        raise GridConvergenceError(report.ess, fine.ess)
    return _assemble(plan, acc, rej, "exact-recursion", grid_converged=True)


# ---------------------------------------------------------------------------
# Monte Carlo evaluation
# ---------------------------------------------------------------------------


def _mc_plan_stats(plan: TestPlan, model: HypothesisModel, truth: float,
                   mc: McConfig) -> tuple[np.ndarray, np.ndarray]:
    """Simulated checkpoint statistics, shape (reps, n_checkpoints).

    Returns (stat, per_stage_stat_or_same); cumulative plans compare the
    cumulative average LLR, per-stage plans the stage average.
    """
    cps = plan.checkpoints
    j_count = len(cps)
    reps = mc.reps
    rep_idx = np.arange(reps, dtype=np.uint64)[:, None]
    draw_idx = np.arange(j_count, dtype=np.uint64)[None, :]
    gaps = np.diff([0] + [cp.n for cp in cps]).astype(float)
    if isinstance(model, GaussianMean):
        z = normals(mc.seed, rep_idx, draw_idx)
        if mc.antithetic:
            half = reps // 2
            z[half:] = -z[:half]
        # per-stage observation sums: N(truth*gap, gap)
        inc = truth * gaps[None, :] + np.sqrt(gaps)[None, :] * z
        if plan.statistic_mode == "per-stage":
            stat = 2.0 * model.eta * inc / gaps[None, :]
        else:
            stat = 2.0 * model.eta * np.cumsum(inc, axis=1) / np.array(
                [cp.n for cp in cps], dtype=float)[None, :]
    else:
        u = uniforms(mc.seed, rep_idx, draw_idx)
        if mc.antithetic:
            half = reps // 2
            u[half:] = 1.0 - u[:half]
        inc = st.binom.ppf(u, gaps[None, :].astype(int), truth)
        if plan.statistic_mode == "per-stage":
            counts = inc
            stat = np.empty_like(counts)
            for j, cp in enumerate(cps):
                stat[:, j] = model.lambda_of_count(counts[:, j], int(gaps[j]))
        else:
            counts = np.cumsum(inc, axis=1)
            stat = np.empty_like(counts)
            for j, cp in enumerate(cps):
                stat[:, j] = model.lambda_of_count(counts[:, j], cp.n)
    return stat, gaps


def _mc_plan(plan: TestPlan, model: HypothesisModel, truth: float,
             mc: McConfig) -> EvalReport:
    stat, _ = _mc_plan_stats(plan, model, truth, mc)
    cps = plan.checkpoints
    reps = mc.reps
    alive = np.ones(reps, dtype=bool)
    stop_n = np.zeros(reps)
    rejected = np.zeros(reps, dtype=bool)
    acc_counts, rej_counts = [], []
    for j, cp in enumerate(cps):
        s = stat[:, j]
        if cp.kind == "accept":
            acc_now = alive & (s <= cp.c_acc)
            rej_now = np.zeros_like(acc_now)
        elif cp.kind == "reject":
            rej_now = alive & (s > cp.c_rej)
            acc_now = np.zeros_like(rej_now)
        elif cp.kind == "both":
            acc_now = alive & (s <= cp.c_acc)
            rej_now = alive & (s > cp.c_rej)
        else:
            acc_now = alive & (s <= cp.c_acc)
            rej_now = alive & (s > cp.c_acc)
        stop_now = acc_now | rej_now
        stop_n[stop_now] = cp.n
        rejected |= rej_now
        alive &= ~stop_now
        acc_counts.append(int(acc_now.sum()))
        rej_counts.append(int(rej_now.sum()))
    assert not alive.any()
    acc_mass = [c / reps for c in acc_counts]
    rej_mass = [c / reps for c in rej_counts]
    p1 = rejected.mean()
    p2 = 1.0 - p1
    return _assemble(
        plan, acc_mass, rej_mass, "monte-carlo",
        se_ess=float(stop_n.std(ddof=1) / math.sqrt(reps)),
        se_type1=float(math.sqrt(max(p1 * (1 - p1), 1e-300) / reps)),
        se_type2=float(math.sqrt(max(p2 * (1 - p2), 1e-300) / reps)),
        reps=reps, seed=mc.seed,
    )


# SPRT paths: numba kernels with the rng.py mixing constants inlined.


@njit(inline="always")
def _mix64(h: np.uint64) -> np.uint64:
    h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return h ^ (h >> np.uint64(31))


@njit(inline="always")
def _u01(key: np.uint64, rep: np.uint64, draw: np.uint64) -> float:
    ctr = (rep << np.uint64(32)) + draw
    h = _mix64(key + (ctr + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15))
    return (float(h >> np.uint64(11)) + 0.5) * 2.0 ** -53


@njit(inline="always")
def _z01(key: np.uint64, rep: np.uint64, draw: np.uint64) -> float:
    # Acklam rational approximation (1.2e-9), enough for Monte Carlo.
    p = _u01(key, rep, draw)
    if p < 0.02425:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q
                   - 2.400758277161838e+00) * q - 2.549732539343734e+00) * q
                 + 4.374664141464968e+00) * q + 2.938163982698783e+00) / \
               ((((7.784695709041462e-03 * q + 3.224671290700398e-01) * q
                  + 2.445134137142996e+00) * q + 3.754408661907416e+00) * q + 1.0)
    if p > 1.0 - 0.02425:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q
                    - 2.400758277161838e+00) * q - 2.549732539343734e+00) * q
                  + 4.374664141464968e+00) * q + 2.938163982698783e+00) / \
               ((((7.784695709041462e-03 * q + 3.224671290700398e-01) * q
                  + 2.445134137142996e+00) * q + 3.754408661907416e+00) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((-3.969683028665376e+01 * r + 2.209460984245205e+02) * r
               - 2.759285104469687e+02) * r + 1.383577518672690e+02) * r
             - 3.066479806614716e+01) * r + 2.506628277459239e+00) * q / \
           (((((-5.447609879822406e+01 * r + 1.615858368580409e+02) * r
               - 1.556989798598866e+02) * r + 6.680131188771972e+01) * r
             - 1.328068155288572e+01) * r + 1.0)


@njit(parallel=True, cache=True)
def _sprt_gauss(key: np.uint64, reps: int, drift: float, scale: float,
                a: float, b: float, n_cap: int):
    stop_n = np.empty(reps, dtype=np.int64)
    rejected = np.empty(reps, dtype=np.uint8)
    for r in prange(reps):
        lam = 0.0
        n = 0
        rej = np.uint8(0)
        while n < n_cap:
            z = _z01(key, np.uint64(r), np.uint64(n))
            lam += drift + scale * z
            n += 1
            if lam >= a:
                rej = np.uint8(1)
                break
            if lam <= -b:
                break
        stop_n[r] = n
        rejected[r] = rej
    return stop_n, rejected


@njit(parallel=True, cache=True)
def _sprt_bern(key: np.uint64, reps: int, theta: float, inc_succ: float,
               inc_fail: float, a: float, b: float, n_cap: int):
    stop_n = np.empty(reps, dtype=np.int64)
    rejected = np.empty(reps, dtype=np.uint8)
    for r in prange(reps):
        lam = 0.0
        n = 0
        rej = np.uint8(0)
        while n < n_cap:
            u = _u01(key, np.uint64(r), np.uint64(n))
            lam += inc_succ if u < theta else inc_fail
            n += 1
            if lam >= a:
                rej = np.uint8(1)
                break
            if lam <= -b:
                break
        stop_n[r] = n
        rejected[r] = rej
    return stop_n, rejected


def _mc_sprt(sprt: SprtDesign, model: HypothesisModel, truth: float,
             mc: McConfig) -> EvalReport:
    key = np.uint64(seed_key(mc.seed))
    # Hard cap so degenerate drifts cannot loop forever; for thresholds in
    # scope the exit-time tail makes reaching it astronomically unlikely.
    n_cap = 1_000_000
    if isinstance(model, GaussianMean):
        drift = 2.0 * model.eta * truth
        scale = 2.0 * model.eta
        stop_n, rejected = _sprt_gauss(key, mc.reps, drift, scale,
                                       sprt.A, sprt.B, n_cap)
    else:
        if not (0.0 < truth < 1.0):
            raise DomainError(f"Bernoulli truth must lie in (0, 1), got {truth}")
        stop_n, rejected = _sprt_bern(key, mc.reps, truth, model.llr_success,
                                      model.llr_failure, sprt.A, sprt.B, n_cap)
    if (stop_n >= n_cap).any():
        raise RuntimeError("SPRT simulation hit the sample-size cap; "
                           "drift too close to degenerate")
    reps = mc.reps
    p1 = rejected.mean()
    ess = float(stop_n.mean())
    return EvalReport(
        stop_n=(int(stop_n.max()),),
        accept_mass=(float(1.0 - p1),),
        reject_mass=(float(p1),),
        type1=float(p1),
        type2=float(1.0 - p1),
        ess=ess,
        max_n=int(stop_n.max()),
        method="monte-carlo",
        se_ess=float(stop_n.std(ddof=1) / math.sqrt(reps)),
        se_type1=float(math.sqrt(max(p1 * (1 - p1), 1e-300) / reps)),
        se_type2=float(math.sqrt(max(p1 * (1 - p1), 1e-300) / reps)),
        reps=reps, seed=mc.seed,
    )


def eval_mc(plan_or_sprt: Union[TestPlan, SprtDesign], model: HypothesisModel,
            truth: float, mc: McConfig = McConfig()) -> EvalReport:
    """Monte Carlo stopping distribution; unbiased, with standard errors.

    Replicate r of a plan simulation draws its checkpoint increments from the
    counter-based stream at (seed, r); results do not depend on scheduling.
    """
    if isinstance(plan_or_sprt, SprtDesign):
        return _mc_sprt(plan_or_sprt, model, truth, mc)
    return _mc_plan(plan_or_sprt, model, truth, mc)


# ---------------------------------------------------------------------------
# Sweeps and mixtures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    """Evaluations of one plan across a grid of true parameters."""

    grid: tuple[float, ...]
    reports: tuple[EvalReport, ...]
    worst_index: int
    n_star: Optional[int] = None

    @property
    def worst(self) -> EvalReport:
        return self.reports[self.worst_index]

    def to_csv(self) -> str:
        lines = ["mu,ess,ess_over_nstar,type1,type2,se_ess,method"]
        for mu, rep in zip(self.grid, self.reports):
            ratio = "" if self.n_star is None else _csv_num(rep.ess / self.n_star)
            se = "" if rep.se_ess is None else _csv_num(rep.se_ess)
            lines.append(",".join([
                _csv_num(mu), _csv_num(rep.ess), ratio, _csv_num(rep.type1),
                _csv_num(rep.type2), se, rep.method,
            ]))
        return "\n".join(lines) + "\n"


def _csv_num(x: float) -> str:
    return f"{x:.12g}"


def sweep_mu(plan_or_sprt: Union[TestPlan, SprtDesign], model: HypothesisModel,
             grid: Sequence[float], method: str = "exact",
             mc: Optional[McConfig] = None, n_star: Optional[int] = None,
             points: int = DEFAULT_POINTS) -> SweepResult:
    """Evaluate a plan (or SPRT, Monte Carlo only) on each grid point.

    Exact sweeps skip the per-point double-resolution check and verify grid
    convergence once, at the worst-case (max-ESS) point.  Monte Carlo sweeps
    derive each point's stream from (seed, point index), so the sweep is
    reproducible under any thread count (SEQTEST_THREADS caps workers).
    """
    if len(grid) == 0:
        raise DomainError("sweep grid must be nonempty")
    is_sprt = isinstance(plan_or_sprt, SprtDesign)
    if is_sprt and method != "mc":
        raise DomainError("the SPRT has no exact evaluator; use method='mc'")
    if method not in ("exact", "mc"):
        raise DomainError(f"unknown method {method!r}")
    if method == "mc":
        base = mc if mc is not None else McConfig()

        def one(i: int) -> EvalReport:
            cfg = McConfig(reps=base.reps, seed=derive_seed(base.seed, i),
                           antithetic=base.antithetic)
            return eval_mc(plan_or_sprt, model, grid[i], cfg)
    else:
        def one(i: int) -> EvalReport:
            return eval_exact(plan_or_sprt, model, grid[i], points=points,
                              check_convergence=False)

    workers = min(thread_count(), len(grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, range(len(grid))))
    else:
        reports = [one(i) for i in range(len(grid))]
    worst = int(np.argmax([r.ess for r in reports]))
    if method == "exact":
        # one convergence check at the reported worst case
        eval_exact(plan_or_sprt, model, grid[worst], points=points,
                   check_convergence=True)
    return SweepResult(tuple(float(g) for g in grid), tuple(reports), worst, n_star)


def ess_mixture(report_h0: EvalReport, report_h1: EvalReport, pi: float) -> float:
    """(1 - pi) * ESS under H0 + pi * ESS under H1."""
    if not 0.0 <= pi <= 1.0:
        raise DomainError(f"pi must lie in [0, 1], got {pi}")
    exact = ("exact-recursion", "exact-product")
    if (report_h0.method in exact and report_h1.method in exact
            and report_h0.stop_n != report_h1.stop_n):
        raise DomainError("mixture requires two evaluations of the same plan")
    return (1.0 - pi) * report_h0.ess + pi * report_h1.ess
