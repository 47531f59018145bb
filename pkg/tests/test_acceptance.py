"""Acceptance suite: one test per primary criterion, each printing a
PASS/FAIL line (run with `pytest tests/test_acceptance.py -s` to see them).

The table1 criterion asserts every reference ratio at the +/-0.02
tolerance.  Three asymmetric ST/mod-ST entries (worst-case and mu=0.5) are
known to sit 0.003-0.011 beyond that band: the reference values correspond
to stage sizes one below the exact ceiling at knife-edge designs (e.g. ST
stage 2: (z_a+z_b)^2 = 45.0147 taken as 45), which would break the per-stage
budget constraints; this build keeps the feasible ceiling.  See the failure
message for the exact deviations.
"""

import math
from contextlib import contextmanager

import numpy as np
import pytest

from seqtest.evaluate import McConfig, ess_mixture, eval_exact, eval_mc, sweep_mu
from seqtest.fsst import design_fsst, n_star_bounds
from seqtest.highdim import HighDimConfig, calibrate_fwe, calibrate_gfwe, highdim_sweep
from seqtest.models import h
from seqtest.plans import (
    choose_K_st,
    design_3st,
    design_gmt,
    design_mod_st,
    design_st,
    hyp_truth,
)
from seqtest.reproduce import MU_GRID, TABLE1_REFERENCE, table1

from test_evaluate import random_plan


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"[ACCEPTANCE] {name}: PASS")


def hyp_pair(model):
    return hyp_truth(model, "H0"), hyp_truth(model, "H1")


def test_fsst_exactness(gauss):
    with criterion("FSST exactness"):
        d1 = design_fsst(gauss, 1e-6, 1e-6)
        assert d1.as_tuple() == (91, 0.0)
        d2 = design_fsst(gauss, 1e-12, 1e-2)
        assert d2.n_star == 88
        assert abs(d2.c_star - 0.2509) <= 5e-5


def test_gmt_structure(gauss):
    with criterion("GMT structure"):
        sym = design_gmt(gauss, 1e-6, 1e-6)
        assert sym.meta["K0"] == sym.meta["K1"] == 0
        assert sym.stage_count == 3
        asym = design_gmt(gauss, 1e-12, 1e-2)
        assert asym.meta["K0"] == 2 and asym.meta["K1"] == 0
        assert len(asym.checkpoints) == 5
        accepts = [cp for cp in asym.checkpoints if cp.kind == "accept"]
        assert len(accepts) == 3  # first opportunity plus exactly two extra


def test_table1_reproduction(gauss):
    with criterion("Table I reproduction"):
        got = table1(model=gauss, seed=7, reps=100_000)
        failures = []
        for setup, rows in TABLE1_REFERENCE.items():
            for family, refs in rows.items():
                for col, ref in zip(("mu=-0.5", "worst-case", "mu=0.5"), refs):
                    e = got.lookup(setup, family, col)
                    if family == "sprt":
                        tol = 3 * e.se_ratio
                        # the printed values are rounded to 2 decimals; allow for that
                        ok = abs(e.ratio - ref) <= tol + 0.005
                    else:
                        ok = abs(e.ratio - ref) <= 0.02
                    if not ok:
                        failures.append(
                            f"{setup}/{family}/{col}: got {e.ratio:.4f}, printed {ref}"
                            + (f" (3SE={3 * e.se_ratio:.4f})" if e.se_ratio else ""))
        assert not failures, (
            "entries outside tolerance (see notes on knife-edge ceilings in the "
            "module docstring):\n  " + "\n  ".join(failures))


LEVELS_BY_MODEL = {
    "gauss": [(1e-6, 1e-6), (1e-12, 1e-2)],
    "bern": [(1e-4, 1e-4), (1e-6, 1e-2)],
}


def designed_plans(model, levels):
    plans = []
    for a, b in levels:
        plans.append((design_gmt(model, a, b), a, b))
        plans.append((design_3st(model, a, b, "lorden-markov"), a, b))
        plans.append((design_3st(model, a, b, "gmt-k0"), a, b))
        for k in (3, 5):
            plans.append((design_st(model, a, b, k), a, b))
            plans.append((design_mod_st(model, a, b, k, rule="marginal"), a, b))
        plans.append((design_mod_st(model, a, b, 3, rule="joint"), a, b))
    return plans


def test_error_control_suite(gauss, bern):
    with criterion("Error-control property suite"):
        for name, model in (("gauss", gauss), ("bern", bern)):
            t0, t1 = hyp_pair(model)
            for i, (plan, a, b) in enumerate(designed_plans(model, LEVELS_BY_MODEL[name])):
                r0 = eval_exact(plan, model, t0, check_convergence=False)
                r1 = eval_exact(plan, model, t1, check_convergence=False)
                assert r0.type1 <= a * (1 + 1e-9), (name, i, plan.meta, r0.type1, a)
                assert r1.type2 <= b * (1 + 1e-9), (name, i, plan.meta, r1.type2, b)
                # Monte Carlo confirmation within 3 SE
                m0 = eval_mc(plan, model, t0, McConfig(reps=100_000, seed=1000 + i))
                m1 = eval_mc(plan, model, t1, McConfig(reps=100_000, seed=2000 + i))
                assert m0.type1 <= a + 3 * max(m0.se_type1, math.sqrt(a * (1 - a) / 1e5))
                assert m1.type2 <= b + 3 * max(m1.se_type2, math.sqrt(b * (1 - b) / 1e5))


def test_oracle_equivalence(gauss, bern):
    with criterion("Oracle equivalence (exact vs Monte Carlo, 20 random plans)"):
        rng = np.random.default_rng(777)
        checked = 0
        for model in (gauss, bern):
            for i in range(10):
                per_stage = bool(i % 2)
                plan = random_plan(model, rng, per_stage=per_stage)
                truth = (float(rng.uniform(-0.55, 0.55)) if model is gauss
                         else float(rng.uniform(0.25, 0.75)))
                exact = eval_exact(plan, model, truth, check_convergence=False)
                mc = eval_mc(plan, model, truth, McConfig(reps=100_000, seed=100 + i))
                floor_p = math.sqrt(0.5 / 1e5) * 0.02  # guards p(1-p)=0 corners
                assert abs(mc.ess - exact.ess) <= 3 * max(mc.se_ess, 1e-3), (i, plan)
                assert abs(mc.type1 - exact.type1) <= 3 * max(mc.se_type1, floor_p)
                assert abs(mc.type2 - exact.type2) <= 3 * max(mc.se_type2, floor_p)
                checked += 1
        assert checked == 20


def test_sample_size_bounds_and_stage_caps(gauss, bern):
    with criterion("Sample-size bounds and stage-size caps"):
        rng = np.random.default_rng(4242)
        for model in (gauss, bern):
            for _ in range(100):
                a, b = np.exp(rng.uniform(math.log(1e-12), math.log(0.4), size=2))
                n = design_fsst(model, float(a), float(b)).n_star
                sharp, cher = n_star_bounds(model, float(a), float(b))
                assert n <= sharp and n <= cher
        # stage-size caps on all ST / mod-ST plans from the error-control suite
        for name, model in (("gauss", gauss), ("bern", bern)):
            for a, b in LEVELS_BY_MODEL[name]:
                for k in (3, 5):
                    st = design_st(model, a, b, k)
                    unit = abs(math.log(b / 2)) / h(model, 1, a ** (1 / k), b / 2)
                    for j, m in enumerate(st.meta["stage_sizes"], start=1):
                        assert m <= j * unit + 1
                    for rule in ("marginal", "joint"):
                        mod = design_mod_st(model, a, b, k, rule=rule)
                        looks = [cp.n for cp in mod.checkpoints]
                        for j, look in enumerate(looks, start=1):
                            jj = min(j, k)
                            cap = design_fsst(model, a ** (jj / k), (b / 2) ** jj).n_star
                            assert look <= cap
                        assert mod.max_n <= st.max_n


def test_highdim_calibration(gauss):
    with criterion("High-dimensional calibration"):
        rng = np.random.default_rng(99)
        # GFWE with kappa = iota = 1 equals FWE to 1e-10 relative
        for _ in range(50):
            m = int(rng.integers(3, 10**6))
            u = int(rng.integers(2, m + 1))
            l = int(rng.integers(0, min(u, m - 2) + 1))
            a, b = rng.uniform(0.005, 0.45, size=2)
            c = HighDimConfig(m, l, u, float(a), float(b))
            g, f = calibrate_gfwe(c), calibrate_fwe(c)
            assert abs(g.alpha_stream - f.alpha_stream) <= 1e-10 * f.alpha_stream
            assert abs(g.beta_stream - f.beta_stream) <= 1e-10 * f.beta_stream
        # sandwich bounds over 50 random generalized configs
        for _ in range(50):
            m = int(rng.integers(20, 30000))
            u = int(rng.integers(4, m + 1))
            l = int(rng.integers(0, min(u, m - 4) + 1))
            kappa = int(rng.integers(1, max(2, (m - l) // 2)))
            iota = int(rng.integers(1, max(2, u // 2)))
            a, b = rng.uniform(0.01, 0.49, size=2)
            c = HighDimConfig(m, l, u, float(a), float(b), kappa, iota)
            g = calibrate_gfwe(c)
            base_a = (kappa / (m - l)) * a ** (1 / kappa)
            base_b = (iota / u) * b ** (1 / iota)
            assert base_a / math.e <= g.alpha_stream <= base_a * math.e**2
            assert base_b / math.e <= g.beta_stream <= base_b * math.e**2
        # operational familywise control at desk scale (see test_highdim for
        # the simulation itself; here assert its summary statistic again)
        from test_highdim import TestFamilywiseSimulation
        TestFamilywiseSimulation().test_familywise_error_controlled_operationally(gauss)


def test_figure_level_checks(gauss):
    with criterion("Figure-level qualitative checks"):
        m = 10**6
        base = HighDimConfig(m, 0, m, 0.05, 0.05)
        us = [int(u) for u in np.unique(np.round(np.geomspace(10, m - 1, 30)))]
        # (a) GMT mixture ESS never beats FSST from below across all u
        for scenario in ("known-count", "upper-bound"):
            res = highdim_sweep(base, us, scenario, ("fsst", "gmt"), model=gauss)
            for rf, rg in zip(res.series("fsst"), res.series("gmt")):
                assert rg.ess_mixture <= rf.ess_mixture + 1e-9, (scenario, rf.u)
                assert 3 <= rg.max_stages <= 5  # fig-3 claim for the GMT
        # (b) chosen-K ST collapse thresholds vs the reported ~0.3 / ~0.55
        for scenario, reported in (("known-count", 0.3), ("upper-bound", 0.55)):
            ratios = np.linspace(0.08, 0.9, 42)
            collapse = None
            for r in ratios:
                u = int(round(r * m))
                if scenario == "known-count":
                    cfgu = HighDimConfig(m, u, u, 0.05, 0.05)
                    pi = u / m
                else:
                    cfgu = HighDimConfig(m, 0, u, 0.05, 0.05)
                    pi = u / (2 * m)
                lv = calibrate_fwe(cfgu)
                k = choose_K_st(gauss, lv.alpha_stream, lv.beta_stream, pi, 10)
                if k == 1 and collapse is None:
                    collapse = r
                if k > 1:
                    collapse = None
            assert collapse is not None, f"ST never collapses to K=1 ({scenario})"
            assert abs(collapse - reported) <= 0.1, (scenario, collapse)
        # (c) mod-ST dominates ST pointwise across the mu grid for K in 2..6
        for k in range(2, 7):
            st = design_st(gauss, 1e-12, 1e-2, k)
            mod = design_mod_st(gauss, 1e-12, 1e-2, k)
            st_sweep = sweep_mu(st, gauss, MU_GRID, method="exact")
            mod_sweep = sweep_mu(mod, gauss, MU_GRID, method="exact")
            worse = [
                (mu, rm.ess - rs.ess)
                for mu, rs, rm in zip(MU_GRID, st_sweep.reports, mod_sweep.reports)
                if rm.ess > rs.ess + 1e-6
            ]
            assert not worse, (k, worse[:3])
