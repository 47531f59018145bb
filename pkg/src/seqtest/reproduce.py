"""Desk-scale reproduction of the reference numerical studies.

Two binary-testing setups (Gaussian mean, eta = 0.5):

* symmetric:  alpha = beta = 1e-6   (GMT has 3 stages; ST/mod-ST use K = 3)
* asymmetric: alpha = 1e-12, beta = 1e-2  (GMT has 5 stages; K = 5)

and two signal-recovery scenarios at m = 1e6 streams, alpha = beta = 0.05,
with u swept on a ~30-point grid (the published studies sweep every u; the
desk-scale grid keeps runtime sane while preserving every qualitative
feature checked by the acceptance suite).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .evaluate import McConfig, eval_exact, eval_mc, sweep_mu
from .fsst import design_fsst
from .highdim import HighDimConfig, highdim_sweep
from .models import GaussianMean, HypothesisModel
from .plans import (
    SprtDesign,
    TestPlan,
    design_gmt,
    design_mod_st,
    design_sprt,
    design_st,
    fsst_plan,
)
from .rng import derive_seed

MU_GRID = tuple(np.linspace(-0.6, 0.6, 100))

SETUPS = {
    "symmetric": {"alpha": 1e-6, "beta": 1e-6, "K": 3},
    "asymmetric": {"alpha": 1e-12, "beta": 1e-2, "K": 5},
}

HIGHDIM_M = 1_000_000
HIGHDIM_LEVELS = 0.05
HIGHDIM_FAMILIES = ("fsst", "gmt", "st", "mod-st", "sprt")


def desk_u_grid(m: int = HIGHDIM_M, points: int = 30, include_m: bool = False) -> list[int]:
    """~30 log-spaced maximum-signal counts in (0, m]."""
    top = m if include_m else m - 1
    us = np.unique(np.round(np.geomspace(10, top, points)).astype(int))
    return [int(u) for u in us]


@dataclass(frozen=True)
class Table1Entry:
    setup: str
    family: str
    column: str  # "mu=-0.5" | "worst-case" | "mu=0.5"
    ratio: float
    se_ratio: Optional[float]  # Monte Carlo entries only
    method: str


@dataclass(frozen=True)
class Table1:
    entries: tuple[Table1Entry, ...]

    def lookup(self, setup: str, family: str, column: str) -> Table1Entry:
        for e in self.entries:
            if (e.setup, e.family, e.column) == (setup, family, column):
                return e
        raise KeyError((setup, family, column))

    def to_csv(self) -> str:
        lines = ["setup,family,column,ratio,se_ratio,method"]
        for e in self.entries:
            se = "" if e.se_ratio is None else f"{e.se_ratio:.12g}"
            lines.append(f"{e.setup},{e.family},{e.column},{e.ratio:.12g},{se},{e.method}")
        return "\n".join(lines) + "\n"


def _setup_plans(model: HypothesisModel, setup: str) -> dict[str, TestPlan | SprtDesign]:
    cfg = SETUPS[setup]
    a, b, k = cfg["alpha"], cfg["beta"], cfg["K"]
    return {
        "fsst": fsst_plan(model, a, b),
        "gmt": design_gmt(model, a, b),
        "st": design_st(model, a, b, k),
        "mod-st": design_mod_st(model, a, b, k),
        "sprt": design_sprt(a, b),
    }


def table1(model: Optional[HypothesisModel] = None, seed: int = 0,
           reps: int = 100_000, families: tuple[str, ...] = ("gmt", "st", "mod-st", "sprt"),
           ) -> Table1:
    """Expected-sample-size ratios over n*(alpha, beta) at mu = +/-0.5 and at
    the worst case over the 100-point mu grid; exact for the multistage
    plans, Monte Carlo (with standard errors) for the SPRT."""
    model = model or GaussianMean(0.5)
    entries: list[Table1Entry] = []
    for setup_tag, (setup, cfg) in enumerate(SETUPS.items()):
        nstar = design_fsst(model, cfg["alpha"], cfg["beta"]).n_star
        plans = _setup_plans(model, setup)
        for family in families:
            plan = plans[family]
            if isinstance(plan, SprtDesign):
                swp = sweep_mu(plan, model, MU_GRID, method="mc",
                               mc=McConfig(reps=reps, seed=derive_seed(seed, setup_tag)))
                r_lo = eval_mc(plan, model, -0.5, McConfig(reps=reps, seed=derive_seed(seed, 101)))
                r_hi = eval_mc(plan, model, 0.5, McConfig(reps=reps, seed=derive_seed(seed, 102)))
                worst = swp.worst
                rows = [("mu=-0.5", r_lo), ("worst-case", worst), ("mu=0.5", r_hi)]
                for col, rep in rows:
                    entries.append(Table1Entry(setup, family, col, rep.ess / nstar,
                                               rep.se_ess / nstar, "monte-carlo"))
            else:
                swp = sweep_mu(plan, model, MU_GRID, method="exact")
                r_lo = eval_exact(plan, model, -0.5)
                r_hi = eval_exact(plan, model, 0.5)
                rows = [("mu=-0.5", r_lo), ("worst-case", swp.worst), ("mu=0.5", r_hi)]
                for col, rep in rows:
                    entries.append(Table1Entry(setup, family, col, rep.ess / nstar,
                                               None, rep.method))
    return Table1(tuple(entries))


# Reference ratios from the reproduced study (family -> (mu=-0.5, worst-case, mu=0.5)).
TABLE1_REFERENCE = {
    "symmetric": {
        "gmt": (0.49, 1.05, 0.49),
        "st": (0.56, 2.98, 2.98),
        "mod-st": (0.56, 2.07, 2.07),
        "sprt": (0.32, 2.29, 0.32),
    },
    "asymmetric": {
        "gmt": (0.18, 0.98, 0.83),
        "st": (0.29, 3.39, 3.37),
        "mod-st": (0.29, 2.17, 2.16),
        "sprt": (0.12, 2.02, 0.64),
    },
}


# ---------------------------------------------------------------------------
# Figure data
# ---------------------------------------------------------------------------


def fig1_csv(setup: str, model: Optional[HypothesisModel] = None, seed: int = 0,
             reps: int = 100_000) -> str:
    """ESS vs true mean for all five families in one setup (fig1a/fig1b)."""
    model = model or GaussianMean(0.5)
    plans = _setup_plans(model, setup)
    lines = ["family,K,mu,ess,se_ess"]
    cfgK = SETUPS[setup]["K"]
    for family, plan in plans.items():
        if isinstance(plan, SprtDesign):
            swp = sweep_mu(plan, model, MU_GRID, method="mc",
                           mc=McConfig(reps=reps, seed=derive_seed(seed, 7)))
        else:
            swp = sweep_mu(plan, model, MU_GRID, method="exact")
        k = cfgK if family in ("st", "mod-st") else 0
        for mu, rep in zip(swp.grid, swp.reports):
            se = "" if rep.se_ess is None else f"{rep.se_ess:.12g}"
            lines.append(f"{family},{k},{mu:.12g},{rep.ess:.12g},{se}")
    return "\n".join(lines) + "\n"


def fig2_csv(setup: str, family: str, model: Optional[HypothesisModel] = None) -> str:
    """ESS vs true mean for one of ST/mod-ST across K (fig2a-d).

    K runs 1..4 in the symmetric setup and 1..6 in the asymmetric one; the
    K = 1 series is the flat FSST baseline.
    """
    model = model or GaussianMean(0.5)
    cfg = SETUPS[setup]
    k_max = 4 if setup == "symmetric" else 6
    lines = ["family,K,mu,ess,se_ess"]
    for k in range(1, k_max + 1):
        plan = (design_st(model, cfg["alpha"], cfg["beta"], k) if family == "st"
                else design_mod_st(model, cfg["alpha"], cfg["beta"], k))
        swp = sweep_mu(plan, model, MU_GRID, method="exact")
        for mu, rep in zip(swp.grid, swp.reports):
            lines.append(f"{family},{k},{mu:.12g},{rep.ess:.12g},")
    return "\n".join(lines) + "\n"


def _highdim_cfg() -> HighDimConfig:
    return HighDimConfig(HIGHDIM_M, 0, HIGHDIM_M, HIGHDIM_LEVELS, HIGHDIM_LEVELS)


def highdim_csv(scenario: str, model: Optional[HypothesisModel] = None,
                seed: int = 0, reps: int = 100_000, points: int = 30,
                families=HIGHDIM_FAMILIES, K_max: int = 10) -> str:
    """Signal-recovery sweep CSV (fig3/fig4 for known-count, fig5 for
    upper-bound): mixture ESS and stage counts per family across u."""
    model = model or GaussianMean(0.5)
    us = desk_u_grid(points=points, include_m=(scenario == "upper-bound"))
    res = highdim_sweep(_highdim_cfg(), us, scenario, families, K_max=K_max,
                        model=model, seed=seed, reps=reps)
    return res.to_csv()
