"""Equilibrium bidding machinery for the second round.

The pivotal window of a local bidder runs from the coalition's weighted
total up to the bidder's own bid: the coalition wins and the bidder is
pivotal exactly when the global's value lands inside it. H is that window's
probability under the global-value distribution, h the density at the
coalition total, and sigma = H/h scales the equilibrium bid shading.

Closed-form equilibrium bids:

  NVCG            phi = alpha - sigma * w * (q - 1)
  D-NVCG, prudent phi = alpha - sigma * w * (ell / W_down + (q - 1))

with ell the number of round-1 overbidders and W_down the prudent set's
total weight; overbidders shade like NVCG, and alpha <= 0 bids zero.
With perfectly correlated locals the interior optimum is truthful
(phi* = alpha): the window collapses, sigma -> 0.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ValueDistribution:
    """Global-value (or local-signal) distribution.

    kinds:
      power-law  F(v) = (v / upper)^shape on [0, upper], shape > 1
      uniform    on [lower, upper]
      empirical  rank CDF over a sample; density by central difference
                 with bandwidth range/sqrt(N)
    """

    kind: str
    upper: Optional[float] = None
    shape: Optional[float] = None
    lower: float = 0.0
    sample: Optional[tuple] = None

    def __post_init__(self):
        if self.kind == "power-law":
            if self.upper is None or self.upper <= 0:
                raise ValueError("power-law needs upper > 0")
            if self.shape is None or self.shape <= 1:
                raise ValueError("power-law needs shape > 1")
        elif self.kind == "uniform":
            if self.upper is None or self.upper <= self.lower:
                raise ValueError("uniform needs upper > lower")
        elif self.kind == "empirical":
            if not self.sample:
                raise ValueError("empirical needs a nonempty sample")
            object.__setattr__(self, "sample", tuple(sorted(float(x) for x in self.sample)))
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def power_law(cls, upper, shape):
        return cls(kind="power-law", upper=upper, shape=shape)

    @classmethod
    def uniform(cls, lower, upper):
        return cls(kind="uniform", lower=lower, upper=upper)

    @classmethod
    def empirical(cls, sample):
        return cls(kind="empirical", sample=tuple(sample))

    @property
    def support(self) -> tuple:
        if self.kind == "power-law":
            return (0.0, self.upper)
        if self.kind == "uniform":
            return (self.lower, self.upper)
        return (self.sample[0], self.sample[-1])

    def scaled(self, factor) -> "ValueDistribution":
        """The distribution of factor * X (unit changes, e.g. fraction<->bps)."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        f = float(factor)
        if self.kind == "power-law":
            return ValueDistribution.power_law(upper=self.upper * f, shape=self.shape)
        if self.kind == "uniform":
            return ValueDistribution.uniform(lower=self.lower * f, upper=self.upper * f)
        return ValueDistribution.empirical(tuple(x * f for x in self.sample))

    def cdf(self, x):
        lo, hi = self.support
        if x <= lo:
            return 0.0
        if x >= hi:
            return 1.0
        if self.kind == "power-law":
            return (x / self.upper) ** self.shape
        if self.kind == "uniform":
            return (x - self.lower) / (self.upper - self.lower)
        return bisect.bisect_right(self.sample, x) / len(self.sample)

    def pdf(self, x):
        lo, hi = self.support
        if self.kind == "power-law":
            if x < lo or x > hi:
                return 0.0
            return self.shape * x ** (self.shape - 1) / self.upper**self.shape
        if self.kind == "uniform":
            if x < lo or x > hi:
                return 0.0
            return 1.0 / (self.upper - self.lower)
        # Empirical: central-difference density at the documented bandwidth.
        bw = (hi - lo) / math.sqrt(len(self.sample))
        if bw <= 0:
            return 0.0
        return (self.cdf(x + bw / 2) - self.cdf(x - bw / 2)) / bw

    def quantile(self, u):
        """Inverse CDF; u in [0, 1]. Counter-friendly way to draw values."""
        if self.kind == "power-law":
            return self.upper * u ** (1.0 / self.shape)
        if self.kind == "uniform":
            return self.lower + u * (self.upper - self.lower)
        n = len(self.sample)
        return self.sample[min(int(u * n), n - 1)]

    def draw(self, rng: np.random.Generator, size=None):
        u = rng.random() if size is None else rng.random(size)
        if size is None:
            return self.quantile(u)
        if self.kind == "power-law":
            return self.upper * u ** (1.0 / self.shape)
        if self.kind == "uniform":
            return self.lower + u * (self.upper - self.lower)
        idx = np.minimum((u * len(self.sample)).astype(int), len(self.sample) - 1)
        return np.asarray(self.sample)[idx]


@dataclass(frozen=True)
class HazardPoint:
    """Win probability H over the pivotal window, its density h, and
    sigma = H/h. clamped marks evaluations outside the support."""

    H: float
    h: float
    sigma: float
    clamped: bool = False


def hazard_point(dist: ValueDistribution, own_bid, own_weight, others_weighted_sum) -> HazardPoint:
    """Evaluate the pivotal window [coalition total, own bid]."""
    total = own_weight * own_bid + others_weighted_sum
    lo, hi = dist.support
    clamped = not (lo <= own_bid <= hi and lo <= total <= hi)
    H = dist.cdf(own_bid) - dist.cdf(total)
    if H < 0.0:
        H = 0.0
        clamped = True
    h = dist.pdf(total)
    if h > 0:
        sigma = H / h
    else:
        sigma = 0.0 if H == 0 else math.inf
    return HazardPoint(H=H, h=h, sigma=sigma, clamped=clamped)


def equilibrium_bid(rule, alpha, sigma, weight, q, in_qdown=False, ell=0, sum_w_qdown=None):
    """Closed-form round-2 equilibrium bid for a local broker."""
    if q < 1:
        raise ValueError("q must be at least 1")
    if weight <= 0:
        raise ValueError("weight must be positive")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if rule not in ("nvcg", "dnvcg"):
        raise ValueError(f"unknown rule {rule!r}")
    if alpha <= 0:
        return 0
    if rule == "dnvcg" and in_qdown:
        if not sum_w_qdown or sum_w_qdown <= 0:
            raise ValueError("prudent-set weight must be positive")
        return alpha - sigma * weight * (ell / sum_w_qdown + (q - 1))
    return alpha - sigma * weight * (q - 1)


def _shading_coefficient(rule, own_weight, q, ell, sum_w_qdown, in_qdown):
    if rule == "dnvcg" and in_qdown:
        if not sum_w_qdown or sum_w_qdown <= 0:
            raise ValueError("prudent-set weight must be positive")
        return own_weight * (ell / sum_w_qdown + (q - 1))
    return own_weight * (q - 1)


def optimality_residual(
    rule,
    phi,
    alpha,
    own_weight,
    others_weighted_sum,
    dist: ValueDistribution,
    q,
    ell=0,
    sum_w_qdown=None,
    in_qdown=False,
):
    """LHS - RHS of the first-order optimality condition at the bid phi.

    (alpha - phi) f(total) - coef [F(phi) - F(total)], total the coalition's
    weighted sum at phi; zero at an interior optimum, positive below it.
    """
    coef = _shading_coefficient(rule, own_weight, q, ell, sum_w_qdown, in_qdown)
    total = own_weight * phi + others_weighted_sum
    return (alpha - phi) * dist.pdf(total) - coef * (dist.cdf(phi) - dist.cdf(total))


@dataclass(frozen=True)
class EquilibriumSolution:
    bid: float
    residual: float
    converged: bool
    at_boundary: bool
    iterations: int


def _bisect_root(f, lo, hi, tol=1e-12, max_iter=200):
    """Bracketing bisection; returns (root, hit_boundary)."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo, False
    if fhi == 0:
        return hi, False
    if flo * fhi > 0:
        # No sign change: the optimum sits on the nearer boundary.
        return (hi, True) if flo > 0 else (lo, True)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0 or (hi - lo) < tol:
            return mid, False
        if flo * fm < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi), False


def solve_symmetric_equilibrium(
    dist: ValueDistribution,
    alpha,
    weights: Sequence,
    rule: str = "nvcg",
    round1_cap=None,
    ell=0,
    sum_w_qdown=None,
    in_qdown=False,
    tol=1e-9,
    max_outer=100,
) -> EquilibriumSolution:
    """Symmetric-equilibrium bid under perfectly correlated local values.

    Iterates best responses: each broker's bid solves its optimality
    condition by bisection with the others held fixed, until the bid
    vector stops moving. For the power-law family the fixed point is
    truthful (alpha), which the solver recovers rather than assumes.
    """
    if alpha <= 0:
        return EquilibriumSolution(bid=0.0, residual=0.0, converged=True,
                                   at_boundary=False, iterations=0)
    w = tuple(float(x) for x in weights)
    hi_support = dist.support[1]
    hi = min(float(round1_cap), hi_support) if round1_cap is not None else hi_support
    bids = [0.5 * hi] * len(w)

    boundary = False
    for it in range(1, max_outer + 1):
        new_bids = []
        for i, wi in enumerate(w):
            others = sum(wj * bj for j, (wj, bj) in enumerate(zip(w, bids)) if j != i)

            def f(phi, _wi=wi, _others=others):
                return optimality_residual(
                    rule, phi, alpha, _wi, _others, dist, len(w),
                    ell=ell, sum_w_qdown=sum_w_qdown, in_qdown=in_qdown,
                )

            root, hit = _bisect_root(f, 0.0, hi)
            boundary = boundary or hit
            new_bids.append(root)
        move = max(abs(a - b) for a, b in zip(new_bids, bids))
        bids = new_bids
        if move < tol:
            break
    converged = move < tol
    bid = bids[0] if len(set(bids)) == 1 else sum(bids) / len(bids)
    others0 = sum(wj * bj for wj, bj in zip(w[1:], bids[1:]))
    residual = optimality_residual(
        rule, bid, alpha, w[0], others0, dist, len(w),
        ell=ell, sum_w_qdown=sum_w_qdown, in_qdown=in_qdown,
    )
    return EquilibriumSolution(
        bid=bid,
        residual=residual,
        converged=converged,
        at_boundary=boundary,
        iterations=it,
    )


def expected_vcg_fee(
    dist: ValueDistribution,
    own_weight,
    others_weighted_sum,
    round1_global_cap=None,
    n: int = 100_000,
    seed: int = 0,
):
    """Monte Carlo expectation of a local's VCG fee over the global's value.

    The global is assumed to play its dominant strategy, bidding its value
    capped at its own round-1 bid.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(9,)))
    values = dist.draw(rng, size=n)
    if round1_global_cap is not None:
        values = np.minimum(values, float(round1_global_cap))
    fees = np.maximum(0.0, (values - float(others_weighted_sum)) / float(own_weight))
    return float(fees.mean())


def expected_qdown_membership(
    round1_bid,
    dist: ValueDistribution,
    own_weight,
    others_weighted_sum,
    round1_global_cap=None,
    n: int = 100_000,
    seed: int = 0,
) -> bool:
    """Interim membership test: is the round-1 bid at or below the expected
    VCG fee? The realized test (against the realized fee) lives with the
    pricing rules; this is the expectation-based alternative."""
    return round1_bid <= expected_vcg_fee(
        dist, own_weight, others_weighted_sum, round1_global_cap, n=n, seed=seed
    )
