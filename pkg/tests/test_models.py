"""Model-level quantities: KL numbers, rate functions, single-stage errors,
normal cdf/quantile.

Frozen expected values were computed with independent oracles (mpmath at 40
digits; brute-force grid suprema; exact binomial summation) and are quoted in
the comments next to each assertion.
"""

import math

import numpy as np
import pytest

from seqtest.models import (
    BernoulliOneSided,
    DomainError,
    GaussianMean,
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


class TestKlDivergences:
    def test_gaussian_closed_form(self, gauss):
        assert kl_divergences(gauss) == (0.5, 0.5)

    def test_gaussian_symmetry(self, rng):
        for eta in rng.uniform(0.05, 3.0, size=10):
            i0, i1 = kl_divergences(GaussianMean(eta))
            assert i0 == i1 == pytest.approx(2 * eta * eta, rel=1e-15)

    def test_bernoulli_value(self, bern):
        # 0.4*ln(7/3) = 0.33891914415488145 (mpmath); also re-derived below by
        # summing f_i * log(f_i/f_j) over the two atoms.
        i0, i1 = kl_divergences(bern)
        assert i0 == pytest.approx(0.33891914415488145, rel=1e-14)
        assert i1 == pytest.approx(0.33891914415488145, rel=1e-14)

    def test_bernoulli_matches_direct_summation(self, rng):
        for _ in range(20):
            p0, p1 = sorted(rng.uniform(0.02, 0.98, size=2))
            if p1 - p0 < 1e-3:
                continue
            m = BernoulliOneSided(p0, p1)
            i0 = p0 * math.log(p0 / p1) + (1 - p0) * math.log((1 - p0) / (1 - p1))
            i1 = p1 * math.log(p1 / p0) + (1 - p1) * math.log((1 - p1) / (1 - p0))
            got = kl_divergences(m)
            assert got[0] == pytest.approx(i0, rel=1e-13)
            assert got[1] == pytest.approx(i1, rel=1e-13)
            assert got[0] > 0 and got[1] > 0 and math.isfinite(got[0])


class TestRateFunctions:
    def test_gaussian_chernoff_point(self, gauss):
        # C = eta^2/2 = I/4
        assert psi(gauss, 0, 0.0) == pytest.approx(0.125, abs=1e-15)
        assert psi(gauss, 1, 0.0) == pytest.approx(0.125, abs=1e-15)

    def test_zero_at_left_endpoint(self, gauss, bern):
        for model in (gauss, bern):
            i0, _ = kl_divergences(model)
            assert psi(model, 0, -i0) == pytest.approx(0.0, abs=1e-12)

    def test_bernoulli_chernoff_information(self, bern):
        # brute-force grid over theta in [0,1] at step 1e-6 gives
        # 0.08717669357238888, equal to -ln(2*sqrt(0.21)) for this
        # symmetric pair (grid and closed form agree to 1e-12)
        assert psi(bern, 0, 0.0) == pytest.approx(0.08717669357238888, abs=1e-11)
        assert chernoff_information(bern) == pytest.approx(0.08717669357238888, abs=1e-11)

    def test_bernoulli_sup_against_grid(self, bern):
        # independent coarse-grid Legendre transform oracle
        a, b = bern.llr_success, bern.llr_failure
        thetas = np.linspace(0.0, 1.0, 200001)
        mgf = 0.3 ** (1 - thetas) * 0.7 ** thetas + 0.7 ** (1 - thetas) * 0.3 ** thetas
        for c in (-0.2, -0.05, 0.0, 0.1, 0.3):
            grid_sup = np.max(thetas * c - np.log(mgf))
            assert psi(bern, 0, c) == pytest.approx(grid_sup, abs=1e-9)

    def test_psi1_is_psi0_minus_c(self, gauss, bern, rng):
        # tilting identity on the common domain
        for model in (gauss, bern):
            i0, i1 = kl_divergences(model)
            for c in rng.uniform(-i0, i1, size=50):
                assert psi(model, 1, c) == pytest.approx(psi(model, 0, c) - c, abs=1e-10)

    def test_domain_errors(self, gauss):
        with pytest.raises(DomainError, match="rate function undefined"):
            psi(gauss, 0, -0.51)
        with pytest.raises(DomainError, match="rate function undefined"):
            psi(gauss, 1, 0.51)

    def test_monotone_convex_and_ratio_monotone(self, gauss, bern, rng):
        for model in (gauss, bern):
            i0, i1 = kl_divergences(model)
            c = np.sort(rng.uniform(-i0 + 1e-9, i1 - 1e-9, size=1000))
            p0 = np.array([psi(model, 0, x) for x in c])
            p1 = np.array([psi(model, 1, x) for x in c])
            assert np.all(np.diff(p0) > 0), "psi0 must strictly increase"
            assert np.all(np.diff(p1) < 0), "psi1 must strictly decrease"
            # convexity via midpoints
            mid0 = np.array([psi(model, 0, x) for x in (c[:-1] + c[1:]) / 2])
            mid1 = np.array([psi(model, 1, x) for x in (c[:-1] + c[1:]) / 2])
            assert np.all(mid0 <= (p0[:-1] + p0[1:]) / 2 + 1e-12)
            assert np.all(mid1 <= (p1[:-1] + p1[1:]) / 2 + 1e-12)
            g = p0 / p1
            assert np.all(np.diff(g) > 0), "g = psi0/psi1 must strictly increase"

    def test_chernoff_equality(self, gauss, bern):
        for model in (gauss, bern):
            c = chernoff_information(model)
            assert psi(model, 0, 0.0) == pytest.approx(c, abs=1e-10)
            assert psi(model, 1, 0.0) == pytest.approx(c, abs=1e-10)


class TestGInverse:
    def test_symmetric_models_at_one(self, gauss, bern):
        assert g_inverse(gauss, 1.0) == pytest.approx(0.0, abs=1e-9)
        assert g_inverse(bern, 1.0) == pytest.approx(0.0, abs=1e-9)

    def test_gaussian_closed_form(self, gauss):
        # g(c) = ((I+c)/(I-c))^2 = 4  =>  c = I/3
        assert g_inverse(gauss, 4.0) == pytest.approx(0.5 / 3, abs=1e-9)

    def test_roundtrip(self, gauss, bern):
        for model in (gauss, bern):
            i0, i1 = kl_divergences(model)
            for c in np.linspace(-i0 * 0.9, i1 * 0.9, 21):
                u = psi(model, 0, c) / psi(model, 1, c)
                assert g_inverse(model, u) == pytest.approx(c, abs=1e-8)


class TestH:
    def test_equal_levels(self, gauss):
        # ratio 1 gives I*(1+1)^-2 = I/4
        assert h(gauss, 1, 1e-3, 1e-3) == pytest.approx(0.125, rel=1e-12)

    def test_gaussian_closed_form_value(self, gauss):
        # I*(1+sqrt(|log b|/|log a|))^-2 at (1e-12, 1e-2): mpmath gives
        # h0 = 0.25212246173203726, h1 = 0.042020410288672876
        assert h(gauss, 0, 1e-12, 1e-2) == pytest.approx(0.25212246173203726, rel=1e-12)
        assert h(gauss, 1, 1e-12, 1e-2) == pytest.approx(0.042020410288672876, rel=1e-12)

    def test_closed_form_agrees_with_psi_route(self, gauss):
        for a, b in [(1e-12, 1e-2), (1e-4, 1e-6), (0.2, 0.01)]:
            u = abs(math.log(a)) / abs(math.log(b))
            via_psi = psi(gauss, 0, g_inverse(gauss, u))
            assert h(gauss, 0, a, b) == pytest.approx(via_psi, abs=1e-9)

    def test_minimax_identity(self, gauss, bern, rng):
        # |log b| / h1 = |log a| / h0
        for model in (gauss, bern):
            for _ in range(10):
                a, b = rng.uniform(1e-9, 0.4, size=2)
                lhs = abs(math.log(b)) / h(model, 1, a, b)
                rhs = abs(math.log(a)) / h(model, 0, a, b)
                assert lhs == pytest.approx(rhs, rel=1e-7)


class TestSingleStageErrors:
    def test_gaussian_symmetric_design_point(self, gauss):
        # P0(Xbar_91 > 0) = Phi(-0.5*sqrt(91)) = 9.225206981649109e-07 (mpmath)
        p = single_stage_errors(gauss, "H0", 91, 0.0)
        assert p == pytest.approx(9.225206981649109e-07, rel=1e-12)
        assert p <= 1e-6
        # symmetric threshold symmetric errors
        assert single_stage_errors(gauss, "H1", 91, 0.0) == pytest.approx(p, rel=1e-12)

    def test_infinite_threshold(self, gauss, bern):
        for model in (gauss, bern):
            assert single_stage_errors(model, "H0", 17, math.inf) == 0.0

    def test_bernoulli_lattice(self, bern):
        # rejection {>= 7 successes out of 10}: exact summation gives
        # B(10, 0.3; 7) = 0.0105920784
        c = float(bern.lambda_of_count(6, 10))
        assert single_stage_errors(bern, "H0", 10, c) == pytest.approx(0.0105920784, rel=1e-12)

    def test_chernoff_inequality(self, gauss, bern, rng):
        for model in (gauss, bern):
            i0, i1 = kl_divergences(model)
            for _ in range(200):
                n = int(rng.integers(1, 200))
                c = float(rng.uniform(-i0 * 0.95, i1 * 0.95))
                assert single_stage_errors(model, "H0", n, c) <= math.exp(-n * psi(model, 0, c)) * (1 + 1e-12)
                assert single_stage_errors(model, "H1", n, c) <= math.exp(-n * psi(model, 1, c)) * (1 + 1e-12)

    def test_stat_cdf_matches_h1_error(self, gauss, bern):
        assert stat_cdf(gauss, 0.5, 40, 0.1) == pytest.approx(
            single_stage_errors(gauss, "H1", 40, 0.1), rel=1e-13)
        c = float(bern.lambda_of_count(5, 12))
        assert stat_cdf(bern, 0.7, 12, c) == pytest.approx(
            single_stage_errors(bern, "H1", 12, c), rel=1e-13)


class TestNormalCdfQuantile:
    def test_quantile_median(self):
        assert normal_quantile(0.5) == 0.0

    def test_quantile_against_mpmath(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 40

        def oracle(p):
            return float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1))

        for p in [1e-16, 1e-12, 1e-9, 1e-6, 1e-3, 0.12345, 0.5 - 1e-10, 0.77]:
            assert normal_quantile(p) == pytest.approx(oracle(repr(p)), abs=1e-10)

    def test_quantile_lower_tail_value(self):
        # quantile(1e-12) = -7.034483825301132 (mpmath); the design codepath
        # (88, 0.2509) for (1e-12, 1e-2) rests on this value
        assert normal_quantile(1e-12) == pytest.approx(-7.034483825301132, abs=1e-10)

    def test_quantile_upper_tail_representation_limit(self):
        # p = 1 - 1e-12 as a double only pins the tail to ~1e-16 absolute, so
        # any correct quantile of the stored p lies within ~4e-5 of 7.03448.
        assert normal_quantile(1 - 1e-12) == pytest.approx(7.034483825301132, abs=5e-5)

    def test_quantile_domain(self):
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(DomainError):
                normal_quantile(bad)

    def test_cdf_symmetry_and_accuracy(self, rng):
        z = rng.uniform(-8, 8, size=200)
        total = normal_cdf(z) + normal_cdf(-z)
        assert np.allclose(total, 1.0, atol=1e-15)
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 30
        for x in (-5.5, -1.0, 0.3, 2.0, 6.25):
            exact = float(mp.erfc(-mp.mpf(x) / mp.sqrt(2)) / 2)
            assert abs(normal_cdf(x) - exact) < 1e-15

    def test_cdf_roundtrip(self, rng):
        p = rng.uniform(1e-12, 1 - 1e-12, size=50)
        assert np.allclose(normal_cdf(normal_quantile(p)), p, rtol=1e-9, atol=1e-13)


class TestModelValidation:
    def test_gaussian_eta_positive(self):
        with pytest.raises(DomainError):
            GaussianMean(0.0)

    def test_bernoulli_ordering(self):
        with pytest.raises(DomainError):
            BernoulliOneSided(0.7, 0.3)
        with pytest.raises(DomainError):
            BernoulliOneSided(0.0, 0.5)
