"""Multistage test plan construction.

Families
--------
* ``design_3st``   -- one early accept, one early reject, forced final call.
* ``design_gmt``   -- the 3-stage skeleton plus K0 extra accept-only and K1
  extra reject-only checkpoints, sized so the per-checkpoint error budgets
  decay geometrically; K0/K1 are capped by the largest counts whose
  checkpoints still fit before the final stage.
* ``design_st``    -- accept-only interim stages on per-stage averages, reject
  possible only at the last stage.
* ``design_mod_st``-- like ST but on the cumulative average; look times and
  thresholds come from cumulative-scale designs (or, with rule="joint", from
  a recursion over joint survival probabilities).
* ``design_sprt``  -- conservative log-threshold pair.

All thresholds are expressed in nats on the average log-likelihood ratio
(per-stage average for ST, cumulative average otherwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy import special as sc

from .engine import BernoulliRecursion, GaussianRecursion
from .fsst import FsstDesign, design_fsst
from .models import (
    BernoulliOneSided,
    DomainError,
    GaussianMean,
    HypothesisModel,
    _check_level,
    _upper_quantile,
    single_stage_errors,
)

__all__ = [
    "Checkpoint",
    "TestPlan",
    "SprtDesign",
    "InfeasibleDesignError",
    "fsst_plan",
    "design_gmt",
    "design_3st",
    "design_st",
    "design_mod_st",
    "design_sprt",
    "choose_K_st",
    "hyp_truth",
]

_MODST_MARGIN = 1e-6  # relative safety on joint type-I targets, see design_mod_st


class InfeasibleDesignError(ValueError):
    """A requested design has no feasible parameters."""


# ---------------------------------------------------------------------------
# Plan data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Checkpoint:
    """A decision opportunity at cumulative sample count n.

    kinds: ``accept`` (stop-accept iff stat <= c_acc), ``reject`` (stop-reject
    iff stat > c_rej), ``both``, and ``final`` (accept iff stat <= c_acc,
    reject otherwise; c_acc == c_rej).
    """

    n: int
    kind: str
    c_acc: Optional[float] = None
    c_rej: Optional[float] = None

    def __post_init__(self) -> None:
        if self.n < 1 or self.n != int(self.n):
            raise DomainError(f"checkpoint n must be a positive integer, got {self.n}")
        if self.kind not in ("accept", "reject", "both", "final"):
            raise DomainError(f"unknown checkpoint kind {self.kind!r}")
        if self.kind in ("accept", "both", "final") and self.c_acc is None:
            raise DomainError(f"{self.kind} checkpoint needs c_acc")
        if self.kind in ("reject", "both", "final") and self.c_rej is None:
            raise DomainError(f"{self.kind} checkpoint needs c_rej")
        if self.kind == "both" and not self.c_acc <= self.c_rej:
            raise DomainError(
                f"overlapping regions at n={self.n}: c_acc={self.c_acc} > c_rej={self.c_rej}")
        if self.kind == "final" and self.c_acc != self.c_rej:
            raise DomainError("final checkpoint carries a single threshold")

    @staticmethod
    def accept(n: int, c: float) -> "Checkpoint":
        return Checkpoint(n, "accept", c_acc=c)

    @staticmethod
    def reject(n: int, c: float) -> "Checkpoint":
        return Checkpoint(n, "reject", c_rej=c)

    @staticmethod
    def both(n: int, c_acc: float, c_rej: float) -> "Checkpoint":
        return Checkpoint(n, "both", c_acc=c_acc, c_rej=c_rej)

    @staticmethod
    def final(n: int, c: float) -> "Checkpoint":
        return Checkpoint(n, "final", c_acc=c, c_rej=c)


@dataclass(frozen=True)
class TestPlan:
    """An ordered schedule of checkpoints plus its design record.

    ``statistic_mode`` is "cumulative" (thresholds on the cumulative average
    LLR) or "per-stage" (thresholds on the per-stage average; ST only).
    ``meta`` records the family, target levels, K values, gamma choices and
    the active error budget spent at each checkpoint.
    """

    checkpoints: tuple[Checkpoint, ...]
    statistic_mode: str = "cumulative"
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        cps = self.checkpoints
        if not cps:
            raise DomainError("a plan needs at least one checkpoint")
        ns = [cp.n for cp in cps]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise DomainError(f"checkpoint sample sizes must strictly increase: {ns}")
        if cps[-1].kind != "final" or any(cp.kind == "final" for cp in cps[:-1]):
            raise DomainError("exactly one final checkpoint, at the largest n")
        if self.statistic_mode not in ("cumulative", "per-stage"):
            raise DomainError(f"unknown statistic mode {self.statistic_mode!r}")
        if self.statistic_mode == "per-stage" and self.meta.get("family") not in ("st", None):
            raise DomainError("per-stage statistic is reserved for ST plans")
        budgets = self.meta.get("budgets")
        if budgets is not None:
            spent1 = sum(lvl for _, side, lvl in budgets if side == "type1")
            spent2 = sum(lvl for _, side, lvl in budgets if side == "type2")
            alpha = self.meta.get("alpha")
            beta = self.meta.get("beta")
            if alpha is not None and spent1 > alpha * (1 + 1e-9):
                raise DomainError(f"type-I budget overspent: {spent1} > {alpha}")
            if beta is not None and spent2 > beta * (1 + 1e-9):
                raise DomainError(f"type-II budget overspent: {spent2} > {beta}")

    @property
    def max_n(self) -> int:
        return self.checkpoints[-1].n

    @property
    def stage_count(self) -> int:
        """Number of decision opportunities; a ``both`` checkpoint counts as
        one accept plus one reject opportunity, the final stage as one."""
        total = 1
        for cp in self.checkpoints[:-1]:
            total += 2 if cp.kind == "both" else 1
        return total

    # -- serialization ------------------------------------------------------

    def serialize(self) -> str:
        lines = ["seqtest-plan v1", f"statistic {self.statistic_mode}"]
        for key in sorted(self.meta):
            if key == "budgets":
                continue
            lines.append(f"meta {key} {_fmt(self.meta[key])}")
        for n, side, lvl in self.meta.get("budgets", ()):
            lines.append(f"budget {n} {side} {_fmt(lvl)}")
        for cp in self.checkpoints:
            if cp.kind == "accept":
                lines.append(f"checkpoint {cp.n} accept {_fmt(cp.c_acc)}")
            elif cp.kind == "reject":
                lines.append(f"checkpoint {cp.n} reject {_fmt(cp.c_rej)}")
            elif cp.kind == "both":
                lines.append(f"checkpoint {cp.n} both {_fmt(cp.c_acc)} {_fmt(cp.c_rej)}")
            else:
                lines.append(f"checkpoint {cp.n} final {_fmt(cp.c_acc)}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse(text: str) -> "TestPlan":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines or lines[0] != "seqtest-plan v1":
            raise DomainError("not a seqtest plan record (missing 'seqtest-plan v1' header)")
        mode = "cumulative"
        meta: dict[str, Any] = {}
        budgets: list[tuple[int, str, float]] = []
        cps: list[Checkpoint] = []
        for ln in lines[1:]:
            parts = ln.split()
            if parts[0] == "statistic":
                mode = parts[1]
            elif parts[0] == "meta":
                meta[parts[1]] = _parse_value(" ".join(parts[2:]))
            elif parts[0] == "budget":
                budgets.append((int(parts[1]), parts[2], float(parts[3])))
            elif parts[0] == "checkpoint":
                n, kind = int(parts[1]), parts[2]
                if kind == "accept":
                    cps.append(Checkpoint.accept(n, float(parts[3])))
                elif kind == "reject":
                    cps.append(Checkpoint.reject(n, float(parts[3])))
                elif kind == "both":
                    cps.append(Checkpoint.both(n, float(parts[3]), float(parts[4])))
                elif kind == "final":
                    cps.append(Checkpoint.final(n, float(parts[3])))
                else:
                    raise DomainError(f"unknown checkpoint kind {kind!r}")
            else:
                raise DomainError(f"unrecognized plan line: {ln!r}")
        if budgets:
            meta["budgets"] = tuple(budgets)
        return TestPlan(tuple(cps), statistic_mode=mode, meta=meta)


def _fmt(x: Any) -> str:
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return f"{x:.11e}"
    return str(x)


def _parse_value(tok: str) -> Any:
    for cast in (int, float):
        try:
            return cast(tok)
        except ValueError:
            pass
    return tok


@dataclass(frozen=True)
class SprtDesign:
    """Sequential probability ratio test thresholds, in nats.

    Stops the first time the cumulative LLR leaves (-B, A); rejects iff it
    exits at or above A.  A = |log alpha|, B = |log beta| (conservative).
    """

    A: float
    B: float
    alpha: float
    beta: float


def design_sprt(alpha: float, beta: float) -> SprtDesign:
    _check_level(alpha, "alpha")
    _check_level(beta, "beta")
    return SprtDesign(abs(math.log(alpha)), abs(math.log(beta)), alpha, beta)


def hyp_truth(model: HypothesisModel, side: str) -> float:
    """True parameter value corresponding to H0 or H1."""
    if isinstance(model, GaussianMean):
        return -model.eta if side == "H0" else model.eta
    return model.p0 if side == "H0" else model.p1


# ---------------------------------------------------------------------------
# FSST as a one-checkpoint plan
# ---------------------------------------------------------------------------


def fsst_plan(model: HypothesisModel, alpha: float, beta: float,
              strict_cstar: bool = False) -> TestPlan:
    d = design_fsst(model, alpha, beta, strict_cstar=strict_cstar)
    meta = {
        "family": "fsst", "alpha": alpha, "beta": beta,
        "budgets": ((d.n_star, "type1", alpha), (d.n_star, "type2", beta)),
    }
    return TestPlan((Checkpoint.final(d.n_star, d.c_star),), meta=meta)


# ---------------------------------------------------------------------------
# General Multistage Test
# ---------------------------------------------------------------------------


def _k_hat(model: HypothesisModel, base: float, other_floor: float, n_final: int) -> int:
    """Largest j >= 0 with n*(base^j, base^j) <= n_final and base^j >= other_floor."""
    j = 0
    while True:
        nxt = base ** (j + 1)
        if nxt < other_floor:
            return j
        if design_fsst_cached(model, nxt, nxt).n_star > n_final:
            return j
        j += 1


_FSST_CACHE: dict[tuple, FsstDesign] = {}


def design_fsst_cached(model: HypothesisModel, alpha: float, beta: float) -> FsstDesign:
    key = (model, alpha, beta)
    hit = _FSST_CACHE.get(key)
    if hit is None:
        hit = design_fsst(model, alpha, beta)
        if len(_FSST_CACHE) > 100000:
            _FSST_CACHE.clear()
        _FSST_CACHE[key] = hit
    return hit


def _gamma_grid(lo: float, n_points: int = 200) -> list[float]:
    """Geometric grid on the open interval (lo, 1)."""
    ratio = (1.0 / lo) ** (1.0 / (n_points + 1))
    return [lo * ratio ** k for k in range(1, n_points + 1)]


def _optimize_gamma(model: HypothesisModel, first_beta_level: float, reject_side: bool,
                    lo: float, next_n: int) -> float:
    """Pick the first-opportunity inactive level minimizing the ESS bound.

    Only two terms of the bound depend on gamma: the first-stage size and
    gamma times the size of the following opportunity.
    """
    best_g, best_val = None, math.inf
    for g in _gamma_grid(lo):
        if reject_side:
            n1 = design_fsst_cached(model, first_beta_level, g).n_star
        else:
            n1 = design_fsst_cached(model, g, first_beta_level).n_star
        val = n1 + next_n * g
        if val < best_val:
            best_val, best_g = val, g
    return best_g


def design_gmt(model: HypothesisModel, alpha: float, beta: float,
               gamma_rule: str = "optimize-ess-bound",
               joint_k_search: bool = False,
               _force_k: Optional[tuple[int, int]] = None) -> TestPlan:
    """General multistage test at levels (alpha, beta).

    The final stage is the fixed-sample-size test at (alpha/4, beta/4).  The
    accept side gets K0 extra opportunities sized at geometrically decaying
    type-II budgets (beta/4)^j with matching inactive levels, and the first
    opportunity absorbs the remaining type-II budget; the reject side is
    symmetric.  K0/K1 default to their largest admissible values; with
    ``joint_k_search`` each is chosen in {0..K_hat} to minimize the
    expected-sample-size bound.  ``gamma_rule`` picks the first-opportunity
    inactive levels by bound minimization over a 200-point geometric grid
    ("optimize-ess-bound") or as 1/sqrt|log .| clipped to the admissible
    interval ("theta-sqrt-log").
    """
    _check_level(alpha, "alpha")
    _check_level(beta, "beta")
    if gamma_rule not in ("optimize-ess-bound", "theta-sqrt-log"):
        raise DomainError(f"unknown gamma rule {gamma_rule!r}")
    final = design_fsst_cached(model, alpha / 4, beta / 4)
    n_final = final.n_star

    k0_hat = _k_hat(model, beta / 4, 3 * alpha / 4, n_final)
    k1_hat = _k_hat(model, alpha / 4, 3 * beta / 4, n_final)

    lo0 = max(3 * alpha, beta) / 4
    lo1 = max(alpha, 3 * beta) / 4

    def accept_side(k0: int) -> tuple[list[tuple[int, float]], float, list, float]:
        first_level = 3 * beta / 4 - sum((beta / 4) ** j for j in range(1, k0 + 1))
        if first_level <= 0:
            raise InfeasibleDesignError("accept-side budget collapsed")
        next_n = (design_fsst_cached(model, beta / 4, beta / 4).n_star
                  if k0 >= 1 else n_final)
        if gamma_rule == "optimize-ess-bound":
            g0 = _optimize_gamma(model, first_level, False, lo0, next_n)
        else:
            g0 = min(max(1.0 / math.sqrt(abs(math.log(beta))), lo0 * (1 + 1e-9)), 1 - 1e-12)
        d0 = design_fsst_cached(model, g0, first_level)
        entries = [(d0.n_star, d0.c_star)]
        budgets = [(d0.n_star, "type2", first_level)]
        bound = d0.n_star
        prev_gamma = g0
        for j in range(1, k0 + 1):
            lvl = (beta / 4) ** j
            dj = design_fsst_cached(model, lvl, lvl)
            entries.append((dj.n_star, dj.c_star))
            budgets.append((dj.n_star, "type2", lvl))
            bound += dj.n_star * prev_gamma
            prev_gamma = lvl
        bound += n_final * prev_gamma
        return entries, g0, budgets, bound

    def reject_side(k1: int) -> tuple[list[tuple[int, float]], float, list, float]:
        first_level = 3 * alpha / 4 - sum((alpha / 4) ** j for j in range(1, k1 + 1))
        if first_level <= 0:
            raise InfeasibleDesignError("reject-side budget collapsed")
        next_n = (design_fsst_cached(model, alpha / 4, alpha / 4).n_star
                  if k1 >= 1 else n_final)
        if gamma_rule == "optimize-ess-bound":
            g1 = _optimize_gamma(model, first_level, True, lo1, next_n)
        else:
            g1 = min(max(1.0 / math.sqrt(abs(math.log(alpha))), lo1 * (1 + 1e-9)), 1 - 1e-12)
        d0 = design_fsst_cached(model, first_level, g1)
        entries = [(d0.n_star, d0.c_star)]
        budgets = [(d0.n_star, "type1", first_level)]
        bound = d0.n_star
        prev_gamma = g1
        for j in range(1, k1 + 1):
            lvl = (alpha / 4) ** j
            dj = design_fsst_cached(model, lvl, lvl)
            entries.append((dj.n_star, dj.c_star))
            budgets.append((dj.n_star, "type1", lvl))
            bound += dj.n_star * prev_gamma
            prev_gamma = lvl
        bound += n_final * prev_gamma
        return entries, g1, budgets, bound

    if _force_k is not None:
        k0, k1 = _force_k
        if k0 > k0_hat or k1 > k1_hat:
            raise InfeasibleDesignError(
                f"forced (K0={k0}, K1={k1}) exceeds admissible ({k0_hat}, {k1_hat})")
        acc = accept_side(k0)
        rej = reject_side(k1)
    elif joint_k_search:
        acc = min((accept_side(k) for k in range(k0_hat + 1)), key=lambda t: t[3])
        rej = min((reject_side(k) for k in range(k1_hat + 1)), key=lambda t: t[3])
        k0 = len(acc[0]) - 1
        k1 = len(rej[0]) - 1
    else:
        k0, k1 = k0_hat, k1_hat
        acc = accept_side(k0)
        rej = reject_side(k1)

    acc_entries, g0, acc_budgets, _ = acc
    rej_entries, g1, rej_budgets, _ = rej
    budgets = (tuple(acc_budgets) + ((n_final, "type2", beta / 4),)
               + tuple(rej_budgets) + ((n_final, "type1", alpha / 4),))
    meta = {
        "family": "gmt", "alpha": alpha, "beta": beta,
        "K0": k0, "K1": k1, "K0_hat": k0_hat, "K1_hat": k1_hat,
        "gamma00": g0, "gamma10": g1, "gamma_rule": gamma_rule,
        "budgets": budgets,
    }
    cps = _merge_checkpoints(acc_entries, rej_entries, n_final, final.c_star)
    return TestPlan(tuple(cps), meta=meta)


def _merge_checkpoints(acc_entries, rej_entries, n_final: int, c_final: float) -> list[Checkpoint]:
    """Apply the equal-n conventions: keep the max accept / min reject
    threshold per n, pair coincident accept+reject into a both-checkpoint,
    absorb anything at the final time into the final checkpoint."""
    acc: dict[int, float] = {}
    for n, c in acc_entries:
        if n < n_final:
            acc[n] = max(acc.get(n, -math.inf), c)
    rej: dict[int, float] = {}
    for n, c in rej_entries:
        if n < n_final:
            rej[n] = min(rej.get(n, math.inf), c)
    cps: list[Checkpoint] = []
    for n in sorted(set(acc) | set(rej)):
        if n in acc and n in rej:
            cps.append(Checkpoint.both(n, acc[n], rej[n]))
        elif n in acc:
            cps.append(Checkpoint.accept(n, acc[n]))
        else:
            cps.append(Checkpoint.reject(n, rej[n]))
    cps.append(Checkpoint.final(n_final, c_final))
    return cps


# ---------------------------------------------------------------------------
# 3-Stage Test
# ---------------------------------------------------------------------------


def design_3st(model: HypothesisModel, alpha: float, beta: float,
               variant: str = "lorden-markov") -> TestPlan:
    """3-Stage Test at levels (alpha, beta).

    ``gmt-k0`` delegates to the GMT construction with K0 = K1 = 0 (final
    stage at levels (alpha/4, beta/4); less conservative error accounting).
    ``lorden-markov`` uses the final stage at (alpha/2, beta/2) and sizes the
    first opportunities by scanning all n <= N for the minimizer of the
    expected-sample-size bound n + N * P(continue), with the first-opportunity
    thresholds tied to n through the Markov-inequality budget
    |log(alpha/2)| = C_rej * n  and  |log(beta/2)| = -C_acc * n.
    """
    _check_level(alpha, "alpha")
    _check_level(beta, "beta")
    if variant == "gmt-k0":
        plan = design_gmt(model, alpha, beta, _force_k=(0, 0))
        meta = dict(plan.meta)
        meta["family"] = "3st"
        meta["variant"] = "gmt-k0"
        return TestPlan(plan.checkpoints, meta=meta)
    if variant != "lorden-markov":
        raise DomainError(f"unknown 3st variant {variant!r}")

    final = design_fsst_cached(model, alpha / 2, beta / 2)
    n_cap = final.n_star
    la, lb = abs(math.log(alpha / 2)), abs(math.log(beta / 2))

    best_acc, best_acc_val = None, math.inf
    best_rej, best_rej_val = None, math.inf
    for n in range(1, n_cap + 1):
        # P0(continue past the accept look) = P0(avg LLR > c_acc)
        c_acc = -lb / n
        val = n + n_cap * single_stage_errors(model, "H0", n, c_acc)
        if val < best_acc_val:
            best_acc_val, best_acc = val, (n, c_acc)
        # P1(continue past the reject look) = P1(avg LLR <= c_rej)
        c_rej = la / n
        val = n + n_cap * single_stage_errors(model, "H1", n, c_rej)
        if val < best_rej_val:
            best_rej_val, best_rej = val, (n, c_rej)

    budgets = ((best_rej[0], "type1", alpha / 2), (n_cap, "type1", alpha / 2),
               (best_acc[0], "type2", beta / 2), (n_cap, "type2", beta / 2))
    meta = {
        "family": "3st", "variant": "lorden-markov", "alpha": alpha, "beta": beta,
        "K0": 0, "K1": 0, "budgets": budgets,
    }
    cps = _merge_checkpoints([best_acc], [best_rej], n_cap, final.c_star)
    return TestPlan(tuple(cps), meta=meta)


# ---------------------------------------------------------------------------
# Sequential Thresholding and its cumulative modification
# ---------------------------------------------------------------------------


def _st_budgets(alpha: float, beta: float, K: int) -> tuple[float, list[float]]:
    """(per-stage inactive type-I level, active type-II levels per stage)."""
    try:
        a_stage = alpha ** (1.0 / K)
        _check_level(a_stage, "alpha^(1/K)")
    except DomainError as exc:
        raise InfeasibleDesignError(f"K={K} collapses the type-I budget: {exc}") from exc
    tail = [(beta / 2) ** j for j in range(2, K + 1)]
    first = beta - sum(tail)
    if not 0.0 < first < 1.0:
        raise InfeasibleDesignError(f"K={K} collapses the first-stage type-II budget")
    return a_stage, [first] + tail


def design_st(model: HypothesisModel, alpha: float, beta: float, K: int) -> TestPlan:
    """Sequential Thresholding with K stages on per-stage averages.

    Stage j is the fixed-sample-size design at (alpha^(1/K), beta_j) where
    beta_1 absorbs the type-II budget left over by the geometric tail
    beta_j = (beta/2)^j, j >= 2.  K = 1 reduces to the FSST.
    """
    _check_level(alpha, "alpha")
    _check_level(beta, "beta")
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    if K == 1:
        plan = fsst_plan(model, alpha, beta)
        meta = dict(plan.meta)
        meta.update(family="st", K=1)
        return TestPlan(plan.checkpoints, meta=meta)
    a_stage, b_levels = _st_budgets(alpha, beta, K)
    cps: list[Checkpoint] = []
    budgets: list[tuple[int, str, float]] = []
    m_cum = 0
    sizes: list[int] = []
    for j, lvl in enumerate(b_levels, start=1):
        d = design_fsst_cached(model, a_stage, lvl)
        m_cum += d.n_star
        sizes.append(d.n_star)
        budgets.append((m_cum, "type2", lvl))
        if j < K:
            cps.append(Checkpoint.accept(m_cum, d.c_star))
        else:
            cps.append(Checkpoint.final(m_cum, d.c_star))
    budgets.append((m_cum, "type1", alpha))
    meta = {
        "family": "st", "alpha": alpha, "beta": beta, "K": K,
        "stage_sizes": tuple(sizes), "budgets": tuple(budgets),
    }
    return TestPlan(tuple(cps), statistic_mode="per-stage", meta=meta)


def design_mod_st(model: HypothesisModel, alpha: float, beta: float, K: int,
                  rule: str = "marginal", points: int = 4001) -> TestPlan:
    """Modified Sequential Thresholding: cumulative-average ST.

    Stage 1 matches ST.  For j >= 2 the look time M_j and threshold b_j are
    constrained by the cumulative type-I error at level alpha^(j/K) and the
    marginal type-II error at level (beta/2)^j.  Two instantiations:

    * ``rule="marginal"`` (default): the type-I constraint is imposed on the
      marginal P0(avg LLR > b at M_j), so (M_j, b_j) is the fixed-sample-size
      design at (alpha^(j/K), (beta/2)^j) on the cumulative scale.  This is
      the variant behind the published expected-sample-size tables.
    * ``rule="joint"``: the type-I constraint is imposed on the joint
      survival probability P0(all looks crossed), computed by the exact
      survivor recursion; m_j is the first feasible stage size and b_j the
      smallest feasible threshold (bisection to 1e-10 nats for the Gaussian,
      exact lattice search for the Bernoulli).  Never larger than the
      marginal design; joint targets carry a 1e-6 relative safety margin so
      realized error control is robust to quadrature error.
    """
    _check_level(alpha, "alpha")
    _check_level(beta, "beta")
    if K < 1:
        raise DomainError(f"K must be >= 1, got {K}")
    if rule not in ("marginal", "joint"):
        raise DomainError(f"unknown mod-ST rule {rule!r}")
    if K == 1:
        plan = fsst_plan(model, alpha, beta)
        meta = dict(plan.meta)
        meta.update(family="mod-st", K=1, rule=rule)
        return TestPlan(plan.checkpoints, meta=meta)
    a_stage, b_levels = _st_budgets(alpha, beta, K)
    d1 = design_fsst_cached(model, a_stage, b_levels[0])
    if rule == "marginal":
        return _mod_st_marginal(model, alpha, beta, K, d1, b_levels)
    sizes = [d1.n_star]
    thresholds = [d1.c_star]
    gaussian = isinstance(model, GaussianMean)
    if gaussian:
        rec = GaussianRecursion(hyp_truth(model, "H0"), points=points)
    else:
        rec = BernoulliRecursion(model.p0)
    m_cum = d1.n_star

    def survive_accept_look(n_abs: int, c_acc: float) -> None:
        if gaussian:
            rec.checkpoint(n_abs, model.sum_threshold(n_abs, c_acc), math.inf)
        else:
            rec.checkpoint(n_abs, model.reject_count(n_abs, c_acc) - 1, n_abs)

    survive_accept_look(m_cum, d1.c_star)
    cap = design_fsst_cached(model, alpha, (beta / 2) ** K).n_star + 2
    for j in range(2, K + 1):
        target = alpha ** (j / K) * (1.0 - _MODST_MARGIN)
        beta_j = (beta / 2) ** j
        found = None
        n = 1
        while m_cum + n <= cap + 1:
            n_abs = m_cum + n
            if gaussian:
                # largest threshold meeting the marginal type-II constraint
                b_hi = _gauss_beta_threshold(model, n_abs, beta_j)
                if rec.tail_above(n_abs, model.sum_threshold(n_abs, b_hi)) <= target:
                    b_j = _bisect_joint_threshold(rec, model, n_abs, target, b_hi)
                    found = (n_abs, b_j)
                    break
            else:
                k_hi = _bern_beta_count(model, n_abs, beta_j)
                if k_hi >= 0 and rec.tail_above(n_abs, k_hi) <= target:
                    k_j = _lattice_joint_count(rec, n_abs, target, k_hi)
                    found = (n_abs, float(model.lambda_of_count(k_j, n_abs)))
                    break
            n += 1
        if found is None:
            raise InfeasibleDesignError(
                f"mod-ST stage {j} of {K} infeasible at levels ({alpha}, {beta}): "
                f"no stage size up to {cap - m_cum} meets the joint type-I target "
                f"{target:.3e} and marginal type-II target {beta_j:.3e}")
        n_abs, b_j = found
        sizes.append(n_abs - m_cum)
        thresholds.append(b_j)
        m_cum = n_abs
        if j < K:
            survive_accept_look(m_cum, b_j)
    cps = [Checkpoint.accept(int(sum(sizes[:j])), thresholds[j - 1]) for j in range(1, K)]
    cps.append(Checkpoint.final(m_cum, thresholds[-1]))
    budgets = tuple((int(sum(sizes[:j])), "type2", b_levels[j - 1]) for j in range(1, K + 1)) \
        + ((m_cum, "type1", alpha),)
    meta = {
        "family": "mod-st", "alpha": alpha, "beta": beta, "K": K, "rule": "joint",
        "stage_sizes": tuple(sizes), "budgets": budgets,
    }
    return TestPlan(tuple(cps), meta=meta)


def _mod_st_marginal(model: HypothesisModel, alpha: float, beta: float, K: int,
                     d1: FsstDesign, b_levels: list[float]) -> TestPlan:
    looks = [d1.n_star]
    thresholds = [d1.c_star]
    for j in range(2, K + 1):
        dj = design_fsst_cached(model, alpha ** (j / K), (beta / 2) ** j)
        if dj.n_star > looks[-1]:
            looks.append(dj.n_star)
            thresholds.append(dj.c_star)
        else:
            # degenerate stage (m_j = 0): merge into the previous look,
            # keeping the larger accept threshold
            thresholds[-1] = max(thresholds[-1], dj.c_star)
    cps = [Checkpoint.accept(n, c) for n, c in zip(looks[:-1], thresholds[:-1])]
    cps.append(Checkpoint.final(looks[-1], thresholds[-1]))
    sizes = tuple(b - a for a, b in zip([0] + looks[:-1], looks))
    budgets = tuple((looks[min(j, len(looks)) - 1], "type2", b_levels[j - 1])
                    for j in range(1, K + 1)) + ((looks[-1], "type1", alpha),)
    meta = {
        "family": "mod-st", "alpha": alpha, "beta": beta, "K": K, "rule": "marginal",
        "stage_sizes": sizes, "budgets": budgets,
    }
    return TestPlan(tuple(cps), meta=meta)


def _gauss_beta_threshold(model: GaussianMean, n: int, beta_j: float) -> float:
    """Largest c with P1(avg LLR <= c) <= beta_j at time n."""
    return 2.0 * model.eta * (model.eta - _upper_quantile(beta_j) / math.sqrt(n))


def _bern_beta_count(model: BernoulliOneSided, n: int, beta_j: float) -> int:
    """Largest accept count k with P1(count <= k) <= beta_j; -1 if none."""
    cdf = sc.bdtr(np.arange(n + 1), n, model.p1)
    return int(np.searchsorted(cdf, beta_j, side="right")) - 1


def _bisect_joint_threshold(rec: GaussianRecursion, model: GaussianMean,
                            n_abs: int, target: float, b_hi: float) -> float:
    """Smallest b with P0(joint survival and avg LLR > b at n_abs) <= target."""
    lo = -2.0 * model.eta * (abs(hyp_truth(model, "H0")) + 10.0 / math.sqrt(n_abs)) - 1.0
    width = b_hi - lo
    while rec.tail_above(n_abs, model.sum_threshold(n_abs, lo)) <= target:
        lo -= max(width, 1.0)
        width *= 2.0
        if lo < -1e6:
            break
    hi = b_hi
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if rec.tail_above(n_abs, model.sum_threshold(n_abs, mid)) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def _lattice_joint_count(rec: BernoulliRecursion, n_abs: int, target: float,
                         k_hi: int) -> int:
    """Smallest accept count k with joint tail above k at or below target."""
    k = k_hi
    while k > 0 and rec.tail_above(n_abs, k - 1) <= target:
        k -= 1
    return k


def choose_K_st(model: HypothesisModel, alpha: float, beta: float, pi: float,
                K_max: int, variant: str = "st", rule: str = "marginal") -> int:
    """K in {1..K_max} minimizing the mixture ESS (1-pi) E0 + pi E1.

    Expected sample sizes are evaluated exactly; ties break toward smaller K.
    ``variant`` selects ST or mod-ST (with the given mod-ST rule).
    """
    from .evaluate import eval_exact  # local import: evaluate depends on plans

    if K_max < 1:
        raise DomainError(f"K_max must be >= 1, got {K_max}")
    if not 0.0 <= pi <= 1.0:
        raise DomainError(f"pi must lie in [0, 1], got {pi}")
    if variant not in ("st", "mod-st"):
        raise DomainError(f"unknown variant {variant!r}")
    best_k, best_val = 1, math.inf
    for k in range(1, K_max + 1):
        try:
            if variant == "st":
                plan = design_st(model, alpha, beta, k)
            else:
                plan = design_mod_st(model, alpha, beta, k, rule=rule)
        except InfeasibleDesignError:
            continue
        e0 = eval_exact(plan, model, hyp_truth(model, "H0"), check_convergence=False).ess
        e1 = eval_exact(plan, model, hyp_truth(model, "H1"), check_convergence=False).ess
        val = (1.0 - pi) * e0 + pi * e1
        if val < best_val - 1e-12:
            best_val, best_k = val, k
    return best_k
