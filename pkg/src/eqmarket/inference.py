"""Gradient estimation from one day of locally perturbed payments.

The cross-sectional regression of activation on the payment perturbation
sign recovers the marginal response of a single supplier against the fixed
market; the mean-field correction then converts it into the equilibrium
supply derivative and finally into a platform utility gradient, using only
aggregate observables and the known allocation and revenue curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import DomainError, MarketConfig
from .simulator import DayOutcome

__all__ = [
    "DegenerateDesignError",
    "GradientEstimate",
    "estimate_marginal_response",
    "estimate_utility_gradient",
    "estimate_utility_gradient_surge",
    "estimate_gradient",
]

# Plug-in load ratios with allocation this close to saturation leave the
# supply derivative unidentified (the curve carries no local information).
_SATURATION_MARGIN = 1e-9


class DegenerateDesignError(ValueError):
    """The perturbation design carries no cross-sectional contrast."""


@dataclass(frozen=True)
class GradientEstimate:
    """Marginal response, supply gradient, and utility gradient for one day."""

    delta_hat: float
    upsilon_hat: float
    gamma_hat: float
    dbar: float
    zbar: float
    valid: bool = True

    @classmethod
    def invalid(cls, dbar: float = math.nan, zbar: float = math.nan) -> "GradientEstimate":
        return cls(math.nan, math.nan, math.nan, dbar, zbar, valid=False)


def estimate_marginal_response(outcome: DayOutcome) -> float:
    """Regression slope of activation on the perturbation sign, over zeta.

    Requires a non-empty supply day, a strictly positive zeta, and both
    perturbation signs present in the design.
    """
    if outcome.zeta <= 0:
        raise DomainError("marginal response requires zeta > 0")
    if outcome.empty_supply:
        raise DegenerateDesignError("empty-supply day carries no signal")
    eps = outcome.epsilon.astype(float)
    de = eps - eps.mean()
    denom = float(de @ de)
    if denom == 0.0:
        raise DegenerateDesignError("all perturbation signs equal")
    z = outcome.active.astype(float)
    dz = z - z.mean()
    return float(dz @ de) / denom / outcome.zeta


def _design_ok(outcome: DayOutcome) -> bool:
    if outcome.empty_supply or outcome.zeta <= 0 or outcome.dbar <= 0:
        return False
    eps = outcome.epsilon
    return bool((eps > 0).any() and (eps < 0).any())


def estimate_utility_gradient(
    outcome: DayOutcome, p: float, model: MarketConfig
) -> GradientEstimate:
    """Utility-gradient estimate for the plain (identity-earning) market.

    The supply-gradient correction divides the regression coefficient by
    one plus the estimated interference term, with every curve evaluated at
    the observed demand/supply ratio; the utility gradient then combines the
    revenue and payment margins with the direct payment-cost slope.
    Degenerate days (empty supply, one-signed design) yield an invalid
    estimate rather than an error.
    """
    if not _design_ok(outcome):
        return GradientEstimate.invalid(outcome.dbar, outcome.zbar)
    delta_hat = estimate_marginal_response(outcome)
    dbar, zbar = outcome.dbar, outcome.zbar
    x = dbar / zbar
    w = model.allocation.omega(x)
    wp = model.allocation.omega_prime(x)
    r = model.revenue.rate(x)
    rp = model.revenue.rate_deriv(x)
    upsilon_hat = delta_hat / (1.0 + p * dbar * delta_hat * wp / (zbar**2 * w))
    gamma_hat = upsilon_hat * (r - p * w - (rp - p * wp) * x) - w * zbar
    return GradientEstimate(delta_hat, upsilon_hat, gamma_hat, dbar, zbar)


def estimate_utility_gradient_surge(
    outcome: DayOutcome, p: float, model: MarketConfig
) -> GradientEstimate:
    """Utility-gradient estimate when a committed surge multiplier is active.

    The interference correction runs through the generalized earning map
    (its two partials enter as a ratio), and the utility gradient carries
    the two extra terms from the multiplier scaling the payment bill and
    shifting with the ratio.
    """
    if model.earning.variant != "surge":
        raise DomainError("surge estimator requires the surge earning variant")
    if not _design_ok(outcome):
        return GradientEstimate.invalid(outcome.dbar, outcome.zbar)
    dbar, zbar = outcome.dbar, outcome.zbar
    x = dbar / zbar
    alloc = model.allocation
    w = alloc.omega(x)
    if w >= alloc.saturation - _SATURATION_MARGIN:
        return GradientEstimate.invalid(dbar, zbar)
    delta_hat = estimate_marginal_response(outcome)
    wp = alloc.omega_prime(x)
    coupling = model.earning.coupling(p, x, alloc)
    mu_prime_hat = delta_hat / (1.0 + coupling * (dbar / zbar**2) * delta_hat)
    gamma = model.revenue.gamma
    s = model.earning.surge_rule.multiplier(x)
    sp = model.earning.surge_rule.multiplier_deriv(x)
    gamma_hat = (
        (gamma - p * s) * (w - wp * x) * mu_prime_hat
        - s * w * zbar
        + p * sp * x * w * mu_prime_hat
    )
    return GradientEstimate(delta_hat, mu_prime_hat, gamma_hat, dbar, zbar)


def estimate_gradient(outcome: DayOutcome, p: float, model: MarketConfig) -> GradientEstimate:
    """Variant-aware dispatcher used by the payment optimizers.

    Identity earning uses the plain estimator; surge uses the multiplier-
    aware one.  Risk aversion reuses the identity utility margin (the
    platform still pays the raw per-unit payment) with the supply-gradient
    correction run through the risk transform, which the platform is
    assumed to know, as it knows the allocation curve.
    """
    variant = model.earning.variant
    if variant == "surge":
        return estimate_utility_gradient_surge(outcome, p, model)
    if variant == "identity":
        return estimate_utility_gradient(outcome, p, model)
    if not _design_ok(outcome):
        return GradientEstimate.invalid(outcome.dbar, outcome.zbar)
    delta_hat = estimate_marginal_response(outcome)
    dbar, zbar = outcome.dbar, outcome.zbar
    x = dbar / zbar
    alloc = model.allocation
    w = alloc.omega(x)
    wp = alloc.omega_prime(x)
    r = model.revenue.rate(x)
    rp = model.revenue.rate_deriv(x)
    coupling = model.earning.coupling(p, x, alloc)
    mu_prime_hat = delta_hat / (1.0 + coupling * (dbar / zbar**2) * delta_hat)
    gamma_hat = mu_prime_hat * (r - p * w - (rp - p * wp) * x) - w * zbar
    return GradientEstimate(delta_hat, mu_prime_hat, gamma_hat, dbar, zbar)
