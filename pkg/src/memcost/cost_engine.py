"""Asymptotic quantities of constrained-training-error regression as
functions of (gamma, sigma2, eps2, population spectrum).

The central objects are spectral integrals against the Marchenko-Pastur
law H:

    train(rho) = int sigma2^2 / ((1 - rho s)^2 (s + sigma2)) dH(s)
    cost(rho)  = (rho^2 / gamma) int sigma2^2 s / ((1 - rho s)^2 (s + sigma2)) dH(s)

train(0) is the memorization threshold; above it, the multiplier rho(eps2)
solving train(rho) = eps2 determines the asymptotic cost of not fitting.
All rho searches are bracketed in [0, (1 - 1e-8)/lambda_plus]: requests
that would push rho past that cap fail loudly, because the constraint
integral diverges at the upper spectral edge.

Everything is exposed in eps^2 units (squared training error).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .deformed import DeformedLaw, PopulationSpectrum, deformed_threshold
from .errors import (
    ConsistencyError,
    DomainError,
    NearDivergenceError,
    RegimeError,
)
from .numerics import Interval, ToleranceSpec, bisect
from .spectra import (
    MAX_NODE_COUNT,
    MPLaw,
    mp_integrate,
    mp_integrate_edge,
    mp_stieltjes_neg,
)

__all__ = [
    "NoiseLevel",
    "Regime",
    "RhoSolution",
    "CostPoint",
    "ThresholdReport",
    "BoundConstants",
    "RHO_CAP_MARGIN",
    "memorization_threshold",
    "threshold_approx",
    "solve_rho",
    "asymptotic_cost",
    "cost_curve",
    "cost_linear_bound",
    "ols_gap",
    "solve_rho_ols",
    "ols_threshold",
    "solve_rho_def",
    "anisotropic_cost_lower_bound",
    "threshold_report",
]

RHO_CAP_MARGIN = 1e-8
_RHO_TOL = ToleranceSpec(abs_tol=1e-24, rel_tol=4e-16, max_iter=200)
# Constraint values at or above this fraction of the capped-integral probe
# are rejected so the root stays strictly inside the search bracket.
_CAP_GUARD = 1.0 - 1e-6


@dataclass(frozen=True)
class NoiseLevel:
    """Label noise variance sigma2 > 0."""

    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")


class Regime(str, Enum):
    BELOW_THRESHOLD = "below_threshold"
    ABOVE_THRESHOLD = "above_threshold"


@dataclass(frozen=True)
class RhoSolution:
    """A solved training-error multiplier.

    ``rho`` is 0 exactly when the constraint is inactive (at or below the
    threshold); ``residual`` is the plugged-back defining-equation mismatch,
    0 by convention when the constraint is inactive; ``target_eps2`` echoes
    the squared training error the solve was aimed at.
    """

    rho: float
    regime: Regime
    residual: float
    target_eps2: float

    def __post_init__(self):
        if self.rho < 0:
            raise DomainError(f"rho must be nonnegative, got {self.rho}")
        if (self.rho == 0.0) != (self.regime is Regime.BELOW_THRESHOLD):
            raise DomainError("regime is below_threshold exactly when rho == 0")


@dataclass(frozen=True)
class CostPoint:
    """One point of the cost curve at squared training error eps2.

    ``cost`` is the excess over the best unconstrained estimator (0 below
    the threshold); ``costbar`` measures against the minimum-norm
    interpolant instead, i.e. cost minus the interpolation gap.
    """

    eps2: float
    rho: float
    cost: float
    costbar: float


@dataclass(frozen=True)
class ThresholdReport:
    """The threshold family at one (gamma, sigma2) point."""

    eps_sigma2: float
    eps_sigma2_approx: float
    eps_ols2: float
    eps_def2: Optional[float] = None


@dataclass(frozen=True)
class BoundConstants:
    """Constants (c, C) of the linear cost growth guarantee.

    The cost is at least C * eps2 whenever eps2 >= c * sigma2^2.
    """

    c_small: float
    C_growth: float
    kappa: float = 1.0

    def __post_init__(self):
        if self.c_small <= 0 or self.C_growth <= 0:
            raise DomainError("bound constants must be positive")


def _rho_cap(law: MPLaw) -> float:
    return (1.0 - RHO_CAP_MARGIN) / law.lambda_plus


def _train_integral(law: MPLaw, sigma2: float, rho: float, *, fixed_nodes=None) -> float:
    s4 = sigma2 * sigma2
    return mp_integrate_edge(law, rho, lambda s: s4 / (s + sigma2), fixed_nodes=fixed_nodes)


def _cost_integral(law: MPLaw, sigma2: float, rho: float) -> float:
    s4 = sigma2 * sigma2
    return mp_integrate_edge(law, rho, lambda s: s4 * s / (s + sigma2))


def memorization_threshold(gamma: float, noise: NoiseLevel) -> float:
    """Largest eps2 whose constraint is asymptotically free: train(0).

    Evaluated in closed form as sigma2^2 * int 1/(s + sigma2) dH(s).
    """
    law = MPLaw(gamma)
    return noise.sigma2**2 * mp_stieltjes_neg(law, noise.sigma2)


def threshold_approx(gamma: float, noise: NoiseLevel) -> float:
    """Small-noise approximation sigma2^2 / (sigma2 + 1 - 1/gamma)."""
    if not gamma > 1:
        raise RegimeError(f"requires gamma > 1, got {gamma}")
    s2 = noise.sigma2
    return s2 * s2 / (s2 + 1.0 - 1.0 / gamma)


def solve_rho(gamma: float, noise: NoiseLevel, eps2: float) -> RhoSolution:
    """Multiplier rho(eps2) solving train(rho) = eps2 above the threshold.

    Returns rho = 0 (constraint inactive) for eps2 at or below the
    threshold; otherwise bisects the monotone residual over
    [0, (1 - 1e-8)/lambda_plus] and reports the plugged-back residual.

    Raises
    ------
    DomainError
        If eps2 < 0.
    NearDivergenceError
        If even the capped rho cannot reach eps2.
    """
    if eps2 < 0:
        raise DomainError(f"eps2 must be nonnegative, got {eps2}")
    law = MPLaw(gamma)
    sigma2 = noise.sigma2
    if eps2 <= memorization_threshold(gamma, noise):
        return RhoSolution(0.0, Regime.BELOW_THRESHOLD, 0.0, eps2)

    cap = _rho_cap(law)
    cap_value = _train_integral(law, sigma2, cap, fixed_nodes=MAX_NODE_COUNT)
    if eps2 >= _CAP_GUARD * cap_value:
        raise NearDivergenceError(
            f"eps2={eps2} requires rho within {RHO_CAP_MARGIN}/lambda_plus of the "
            "upper spectral edge, where the constraint integral diverges"
        )

    def f(rho: float) -> float:
        if rho == cap:
            return cap_value - eps2
        return _train_integral(law, sigma2, rho) - eps2

    if f(0.0) >= 0.0:
        # eps2 is within quadrature precision of the threshold
        return RhoSolution(0.0, Regime.BELOW_THRESHOLD, 0.0, eps2)
    rho = bisect(f, Interval(0.0, cap), _RHO_TOL)
    return RhoSolution(rho, Regime.ABOVE_THRESHOLD, abs(f(rho)), eps2)


def asymptotic_cost(gamma: float, noise: NoiseLevel, eps2: float) -> CostPoint:
    """Asymptotic cost of not fitting at eps2, plus the interpolant-relative cost.

    cost = (rho^2/gamma) * int sigma2^2 s /((1 - rho s)^2 (s + sigma2)) dH
    with rho = rho(eps2), and 0 below the threshold;
    costbar = cost - ols_gap(gamma, sigma2).
    """
    sol = solve_rho(gamma, noise, eps2)
    if sol.regime is Regime.BELOW_THRESHOLD:
        cost = 0.0
    else:
        law = MPLaw(gamma)
        cost = sol.rho**2 / gamma * _cost_integral(law, noise.sigma2, sol.rho)
    return CostPoint(eps2=eps2, rho=sol.rho, cost=cost, costbar=cost - ols_gap(gamma, noise))


def cost_curve(gamma: float, noise: NoiseLevel, eps2_grid) -> list[CostPoint]:
    """Evaluate the cost curve over a grid of eps2 values (deterministic per point)."""
    return [asymptotic_cost(gamma, noise, float(e)) for e in eps2_grid]


def cost_linear_bound(
    gamma: float, noise: NoiseLevel, kappa: float = 1.0, anisotropic: Optional[bool] = None
) -> BoundConstants:
    """Constants of the linear growth guarantee cost >= C * eps2 for eps2 >= c * sigma2^2.

    Two families are implemented.  The isotropic family (default at
    kappa = 1) has c = 2/(lambda_minus^2 + sigma2); the condition-number-
    mitigated family has c = 2 kappa/(lambda_minus + kappa sigma2), which
    differs from the isotropic one even at kappa = 1 (linear rather than
    quadratic in the lower edge).  Pass ``anisotropic=True`` to force the
    mitigated family at kappa = 1.
    """
    if kappa < 1:
        raise DomainError(f"kappa must be >= 1, got {kappa}")
    law = MPLaw(gamma)
    lm, lp = law.lambda_minus, law.lambda_plus
    shrink = (1.0 - 1.0 / math.sqrt(2.0)) ** 2
    if anisotropic is None:
        anisotropic = kappa != 1.0
    if anisotropic:
        c = 2.0 * kappa / (lm + kappa * noise.sigma2)
        C = lm * shrink / (kappa * lp**2 * gamma)
    else:
        c = 2.0 / (lm * lm + noise.sigma2)
        C = shrink * lm / (lp**2 * gamma)
    return BoundConstants(c_small=c, C_growth=C, kappa=kappa)


def ols_gap(gamma: float, noise: NoiseLevel) -> float:
    """Asymptotic prediction-error gap of the minimum-norm interpolant over ridge.

    Two independent routes are evaluated and cross-checked: the quadrature
    of (sigma2^2/gamma) / (s (s + sigma2)) against H, and the partial-
    fraction form (sigma2/gamma) (1/(1 - 1/gamma) - int 1/(s+sigma2) dH).
    The small-noise limit of gap/sigma2^2 is 1/(gamma (1 - 1/gamma)^3).
    """
    law = MPLaw(gamma)
    s2 = noise.sigma2
    quad = s2 * s2 / gamma * mp_integrate(law, lambda s: 1.0 / (s * (s + s2)))
    closed = s2 / gamma * (1.0 / (1.0 - 1.0 / gamma) - mp_stieltjes_neg(law, s2))
    if abs(quad - closed) > 1e-10 * max(abs(closed), 1e-300):
        raise ConsistencyError(
            f"interpolant-gap routes disagree: quadrature {quad!r} vs closed {closed!r}"
        )
    return closed


def solve_rho_ols(gamma: float, noise: NoiseLevel) -> RhoSolution:
    """Multiplier rho_ols at which the interpolant-relative cost changes sign.

    Solves rho^2 int s/((1 - rho s)^2 (s + sigma2)) dH =
    int 1/(s (s + sigma2)) dH, which has a unique root in
    (1/(2 lambda_plus), 1/lambda_plus) for any sigma2 > 0.  The solution's
    ``target_eps2`` carries the induced interpolation threshold.
    """
    law = MPLaw(gamma)
    s2 = noise.sigma2
    rhs = mp_integrate(law, lambda s: 1.0 / (s * (s + s2)))
    cap = _rho_cap(law)
    cap_value = cap * cap * mp_integrate_edge(
        law, cap, lambda s: s / (s + s2), fixed_nodes=MAX_NODE_COUNT
    )
    if cap_value - rhs < 0.0:
        raise NearDivergenceError(
            "interpolation multiplier would exceed the cap below the spectral edge"
        )

    def f(rho: float) -> float:
        if rho == cap:
            return cap_value - rhs
        lhs = rho * rho * mp_integrate_edge(law, rho, lambda s: s / (s + s2))
        return lhs - rhs

    rho = bisect(f, Interval(0.0, cap), _RHO_TOL)
    eps_ols2 = _train_integral(law, s2, rho)
    return RhoSolution(rho, Regime.ABOVE_THRESHOLD, abs(f(rho)), eps_ols2)


def ols_threshold(gamma: float, noise: NoiseLevel) -> float:
    """Squared interpolation threshold: train(rho_ols)."""
    return solve_rho_ols(gamma, noise).target_eps2


def solve_rho_def(
    gamma: float, pop: PopulationSpectrum, noise: NoiseLevel, eps2: float
) -> RhoSolution:
    """Multiplier rho_def for anisotropic covariance with spectrum ``pop``.

    Solves, with kappa the population condition number and all integrals
    against the isotropic law H,

        kappa sigma2^2 (int 1/((1 - rho s)^2 (s + kappa sigma2)) dH
                        - int 1/(s + kappa sigma2) dH)
        = eps2 - deformed_threshold.

    Below the deformed threshold the cost is zero and this raises a
    regime error; exactly at it, rho_def = 0.
    """
    law = MPLaw(gamma)
    s2 = noise.sigma2
    kappa = pop.kappa
    ks2 = kappa * s2
    thresh = deformed_threshold(DeformedLaw(gamma, pop), s2)
    rhs = eps2 - thresh
    if rhs < 0:
        raise RegimeError(
            f"eps2={eps2} is below the deformed threshold {thresh}; no cost there"
        )
    if rhs == 0.0:
        return RhoSolution(0.0, Regime.BELOW_THRESHOLD, 0.0, eps2)
    scale = kappa * s2 * s2
    j0 = mp_integrate(law, lambda s: 1.0 / (s + ks2))
    cap = _rho_cap(law)
    cap_lhs = scale * (
        mp_integrate_edge(law, cap, lambda s: 1.0 / (s + ks2), fixed_nodes=MAX_NODE_COUNT)
        - j0
    )
    if rhs >= _CAP_GUARD * cap_lhs:
        raise NearDivergenceError(
            f"eps2={eps2} requires rho_def beyond the cap below the spectral edge"
        )

    def f(rho: float) -> float:
        if rho == cap:
            return cap_lhs - rhs
        j = mp_integrate_edge(law, rho, lambda s: 1.0 / (s + ks2))
        return scale * (j - j0) - rhs

    if f(0.0) >= 0.0:
        return RhoSolution(0.0, Regime.BELOW_THRESHOLD, 0.0, eps2)
    rho = bisect(f, Interval(0.0, cap), _RHO_TOL)
    return RhoSolution(rho, Regime.ABOVE_THRESHOLD, abs(f(rho)), eps2)


def anisotropic_cost_lower_bound(
    gamma: float, pop: PopulationSpectrum, noise: NoiseLevel, eps2: float
) -> float:
    """Proved lower bound on the anisotropic cost of not fitting at eps2.

    Returns (rho_def^2/gamma) int sigma2^2 s/((1 - rho_def s)^2 (s + sigma2)) dH.
    Only the lower bound is exposed: the exact anisotropic limit is not
    available, and reporting one would overstate what is known.
    """
    sol = solve_rho_def(gamma, pop, noise, eps2)
    if sol.rho == 0.0:
        return 0.0
    law = MPLaw(gamma)
    return sol.rho**2 / gamma * _cost_integral(law, noise.sigma2, sol.rho)


def threshold_report(
    gamma: float, noise: NoiseLevel, pop: Optional[PopulationSpectrum] = None
) -> ThresholdReport:
    """Assemble the threshold family, checking the expected ordering."""
    eps_sigma2 = memorization_threshold(gamma, noise)
    eps_ols2 = ols_threshold(gamma, noise)
    law = MPLaw(gamma)
    ratio = (2.0 * law.lambda_plus / law.lambda_minus) ** 2
    if not (eps_sigma2 < eps_ols2 <= ratio * eps_sigma2 * (1.0 + 1e-12)):
        raise ConsistencyError(
            f"threshold ordering violated: {eps_sigma2}, {eps_ols2}, cap {ratio * eps_sigma2}"
        )
    eps_def2 = None
    if pop is not None:
        eps_def2 = deformed_threshold(DeformedLaw(gamma, pop), noise.sigma2)
    return ThresholdReport(
        eps_sigma2=eps_sigma2,
        eps_sigma2_approx=threshold_approx(gamma, noise),
        eps_ols2=eps_ols2,
        eps_def2=eps_def2,
    )
