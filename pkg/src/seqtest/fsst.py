"""Optimal fixed-sample-size test design and its non-asymptotic bounds.

The fixed-sample-size test collects n samples and rejects the null iff the
average log-likelihood ratio exceeds a threshold c.  ``design_fsst`` returns
the smallest such n admitting a feasible threshold at levels (alpha, beta),
together with the smallest feasible threshold at that n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from .models import (
    BernoulliOneSided,
    DomainError,
    GaussianMean,
    HypothesisModel,
    _check_level,
    _upper_quantile,
    chernoff_information,
    h,
    single_stage_errors,
)

__all__ = ["FsstDesign", "design_fsst", "n_star_bounds"]


@dataclass(frozen=True)
class FsstDesign:
    """Minimal sample size and threshold meeting (alpha, beta)."""

    n_star: int
    c_star: float
    alpha: float
    beta: float

    def as_tuple(self) -> tuple[int, float]:
        return self.n_star, self.c_star


def design_fsst(model: HypothesisModel, alpha: float, beta: float,
                strict_cstar: bool = False) -> FsstDesign:
    """Smallest (n, c) with P0(avg LLR > c) <= alpha and P1(avg LLR <= c) <= beta.

    Gaussian model: n* = ceil((z_alpha + z_beta)^2 / (4 eta^2)) and
    c* = (z_alpha - z_beta) / (2 sqrt(n*)).  After the ceiling this c* still
    meets both constraints but need not be the literal smallest feasible
    threshold; ``strict_cstar=True`` recomputes the true minimum at n* by
    solving P1(avg LLR <= c) = beta.

    Bernoulli model: linear scan over n with a per-n feasibility check over
    the success-count lattice, returning the first feasible n and its
    smallest feasible lattice threshold.
    """
    _check_level(alpha, "alpha")
    _check_level(beta, "beta")
    if isinstance(model, GaussianMean):
        za = _upper_quantile(alpha)
        zb = _upper_quantile(beta)
        if za + zb <= 0.0:
            # levels so lax that a single sample with a +/-inf threshold works
            n = 1
        else:
            n = math.ceil((za + zb) ** 2 / (4.0 * model.eta * model.eta))
        if strict_cstar:
            # The feasible thresholds at n form [c_lo, c_hi] with c_lo binding
            # the type-I constraint; minimality picks c_lo.
            c = 2.0 * model.eta * (za / math.sqrt(n) - model.eta)
        else:
            c = model.eta * (za - zb) / math.sqrt(n)
        return FsstDesign(n, c, alpha, beta)
    return _design_scan(model, alpha, beta)


def _bern_feasible(model: BernoulliOneSided, n: int, alpha: float, beta: float):
    """Feasibility of sample size n for the Bernoulli lattice; returns the
    smallest feasible rejection count k, or None."""
    ks = np.arange(n + 2)
    # P0(S >= k), decreasing in k
    sf0 = np.empty(n + 2)
    sf0[0] = 1.0
    sf0[1:] = sc.bdtrc(ks[:-1][: n + 1], n, model.p0)
    # P1(S <= k-1), increasing in k
    cdf1 = np.empty(n + 2)
    cdf1[0] = 0.0
    cdf1[1:] = sc.bdtr(ks[: n + 1], n, model.p1)
    k0 = int(np.searchsorted(-sf0, -alpha, side="left"))  # first k with sf0 <= alpha
    while k0 <= n + 1 and sf0[k0] > alpha:  # guard against float ties
        k0 += 1
    if k0 > n + 1 or cdf1[k0] > beta:
        return None
    return k0


def _design_scan(model: BernoulliOneSided, alpha: float, beta: float) -> FsstDesign:
    # Feasibility is not monotone in n on a lattice, so scan from n = 1.
    # The Chernoff bound caps the scan: n* <= |log(alpha ^ beta)|/C + 1.
    cap = int(abs(math.log(min(alpha, beta))) / chernoff_information(model)) + 3
    for n in range(1, cap + 1):
        k0 = _bern_feasible(model, n, alpha, beta)
        if k0 is not None:
            if k0 == 0:
                raise DomainError("degenerate design: empty acceptance region")
            c = float(model.lambda_of_count(k0 - 1, n))
            return FsstDesign(n, c, alpha, beta)
    raise RuntimeError(
        f"no feasible fixed-sample-size design found up to n={cap}; "
        "this contradicts the Chernoff bound and indicates a numerical problem")


def _design_scan_gaussian(model: GaussianMean, alpha: float, beta: float) -> FsstDesign:
    """Generic scan specialized to the Gaussian model (cross-check path).

    Used by tests to validate the closed form; scans n upward and, at the
    first feasible n, returns the smallest feasible threshold (the one
    binding the type-I constraint).
    """
    za = _upper_quantile(alpha)
    n = 1
    while True:
        c = 2.0 * model.eta * (za / math.sqrt(n) - model.eta)
        if single_stage_errors(model, "H1", n, c) <= beta:
            return FsstDesign(n, c, alpha, beta)
        n += 1


def n_star_bounds(model: HypothesisModel, alpha: float, beta: float) -> tuple[float, float]:
    """Non-asymptotic upper bounds on n*(alpha, beta).

    Returns ``(sharp_bound, chernoff_bound)`` where the sharp bound is
    |log beta|/h1(alpha, beta) + 1 (equivalently |log alpha|/h0 + 1) and the
    Chernoff bound is |log(min(alpha, beta))|/C + 1.
    """
    _check_level(alpha, "alpha")
    _check_level(beta, "beta")
    sharp = abs(math.log(beta)) / h(model, 1, alpha, beta) + 1.0
    cher = abs(math.log(min(alpha, beta))) / chernoff_information(model) + 1.0
    return sharp, cher
