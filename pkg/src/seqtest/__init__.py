"""Design and exact evaluation of multistage sequential hypothesis tests.

Binary problems (Gaussian mean, one-sided Bernoulli) tested by fixed-sample,
3-stage, general multistage (GMT), Sequential Thresholding (ST / mod-ST) and
SPRT procedures; exact stopping-distribution recursions and reproducible
Monte Carlo; per-stream calibration for signal recovery across many
independent streams under classical and generalized familywise error control.
"""

from .models import (
    BernoulliOneSided,
    DomainError,
    GaussianMean,
    HypothesisModel,
    chernoff_information,
    g_inverse,
    h,
    kl_divergences,
    normal_cdf,
    normal_quantile,
    psi,
    single_stage_errors,
    stat_cdf,
)
from .fsst import FsstDesign, design_fsst, n_star_bounds
from .plans import (
    Checkpoint,
    InfeasibleDesignError,
    SprtDesign,
    TestPlan,
    choose_K_st,
    design_3st,
    design_gmt,
    design_mod_st,
    design_sprt,
    design_st,
    fsst_plan,
    hyp_truth,
)
from .evaluate import (
    EvalReport,
    GridConvergenceError,
    McConfig,
    SweepResult,
    ess_mixture,
    eval_exact,
    eval_mc,
    sweep_mu,
)
from .highdim import (
    CalibratedLevels,
    HighDimConfig,
    HighdimSweepResult,
    asymptotic_optimal_ess,
    binomial_tail,
    calibrate_fwe,
    calibrate_gfwe,
    highdim_sweep,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
