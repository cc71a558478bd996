"""Supplier-activation fixed point and mean-field analytics.

The active fraction mu solves the balance equation
    mu = E_B[ (f_B(theta(p + zeta, q)) + f_B(theta(p - zeta, q))) / 2 ],
with q the allocation rate at load ratio d / mu.  The right side is
non-increasing in mu (more active suppliers means a lower allocation rate,
lower anticipated earnings, and fewer willing suppliers), so mu - psi(mu)
is strictly increasing and bisection is unconditionally convergent to the
unique root.

All analytics (activation derivative, interference factor, utility and its
payment derivative) are computed here on top of that fixed point, in both
scalar and batched form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .market import DomainError, MarketConfig

__all__ = [
    "NumericalError",
    "EquilibriumPoint",
    "MeanFieldReport",
    "solve_mu",
    "solve_mu_batch",
    "mean_field_report",
    "mean_field_curves",
    "mean_field_utility",
    "mean_field_utility_batch",
    "finite_n_q",
    "stein_dq",
    "ConcavityReport",
    "concavity_diagnostic",
]

_MU_FLOOR = 1e-9
_RESIDUAL_TOL = 1e-12


class NumericalError(RuntimeError):
    """A solver failed to reach its required tolerance."""


@dataclass(frozen=True)
class EquilibriumPoint:
    """Solution of the activation balance equation at one (p, zeta, d)."""

    mu: float
    q: float
    residual: float
    iterations: int
    degenerate: bool = False


@dataclass(frozen=True)
class MeanFieldReport:
    """All limiting market quantities at a payment p and scaled demand d.

    ``delta`` is the per-supplier payment sensitivity holding the market
    fixed; ``mu_prime`` is the equilibrium supply derivative, attenuated by
    the interference factor 1 + R with R = sigma_delta * sigma_omega.
    """

    p: float
    d: float
    mu: float
    q: float
    u: float
    delta: float
    mu_prime: float
    u_prime: float
    interference: float
    sigma_delta: float
    sigma_omega: float


def _psi_batch(
    mu: np.ndarray,
    p: np.ndarray,
    zeta: np.ndarray,
    d: np.ndarray,
    model: MarketConfig,
) -> np.ndarray:
    """Average activation probability if everyone believes fraction mu is active."""
    x = d / mu
    earning, choice = model.earning, model.choice
    if np.all(zeta == 0.0):
        theta = earning.value_at_ratio(p, x, model.allocation)
        return choice.expected_prob(theta)
    theta = earning.value_at_ratio(
        np.stack([p + zeta, p - zeta]), np.stack([x, x]), model.allocation
    )
    probs = choice.expected_prob(theta)
    return 0.5 * (probs[0] + probs[1])


def solve_mu_batch(
    p,
    zeta,
    d,
    model: MarketConfig,
    lo=_MU_FLOOR,
    hi=1.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, np.ndarray]:
    """Vectorized bisection for the activation fixed point.

    Parameters broadcast to a common shape; ``lo``/``hi`` may be scalars or
    per-problem bracket arrays.  Returns arrays ``(mu, q, residual,
    iterations, degenerate)``; problems whose root lies below the lower
    bracket are flagged degenerate and pinned at ``lo``.
    """
    p, zeta, d = np.broadcast_arrays(
        np.asarray(p, dtype=float), np.asarray(zeta, dtype=float), np.asarray(d, dtype=float)
    )
    if np.any(zeta < 0) or np.any(p <= zeta):
        raise DomainError("payments must satisfy p > zeta >= 0")
    if np.any(d <= 0):
        raise DomainError("scaled demand must be positive")
    shape = p.shape
    los = np.broadcast_to(np.asarray(lo, dtype=float), shape).copy()
    his = np.broadcast_to(np.asarray(hi, dtype=float), shape).copy()
    lo0 = los.copy()

    h_lo = los - _psi_batch(los, p, zeta, d, model)
    h_hi = his - _psi_batch(his, p, zeta, d, model)
    degenerate = h_lo > 0.0  # activation too weak: root sits below the bracket
    if np.any(h_hi < 0.0):
        raise NumericalError("upper bracket does not bound the fixed point")

    # 55 halvings shrink the bracket below 1e-15, after which the residual
    # is solver-noise limited; a short refinement pass then polishes any
    # stragglers down to the 1e-12 residual contract.
    iterations = 55
    for _ in range(iterations):
        mid = 0.5 * (los + his)
        h = mid - _psi_batch(mid, p, zeta, d, model)
        above = h > 0.0
        his = np.where(above, mid, his)
        los = np.where(above, los, mid)
    mu = 0.5 * (los + his)
    residual = np.abs(mu - _psi_batch(mu, p, zeta, d, model))
    for _ in range(25):
        unresolved = (residual > _RESIDUAL_TOL) & ~degenerate & (his - los > 0)
        if not unresolved.any():
            break
        iterations += 1
        mid = 0.5 * (los + his)
        h = mid - _psi_batch(mid, p, zeta, d, model)
        above = h > 0.0
        his = np.where(unresolved & above, mid, his)
        los = np.where(unresolved & ~above, mid, los)
        mu = 0.5 * (los + his)
        residual = np.where(
            unresolved, np.abs(mu - _psi_batch(mu, p, zeta, d, model)), residual
        )
    mu = np.where(degenerate, lo0, mu)
    residual = np.where(degenerate, np.abs(h_lo), residual)
    if np.any((residual > _RESIDUAL_TOL) & ~degenerate):
        raise NumericalError("balance-equation residual exceeded 1e-12")
    q = model.allocation.omega(d / mu)
    return mu, q, residual, iterations, degenerate


def solve_mu(
    p: float,
    zeta: float,
    d: float,
    model: MarketConfig,
    bracket: tuple[float, float] | None = None,
) -> EquilibriumPoint:
    """Solve the activation balance equation at one payment/demand point.

    ``bracket`` optionally restricts the bisection to a sub-interval of
    (0, 1]; it must contain the fixed point, except that a root below the
    lower end is reported as a degenerate equilibrium rather than an error.
    """
    lo, hi = bracket if bracket is not None else (_MU_FLOOR, 1.0)
    mu, q, res, iters, dgn = solve_mu_batch(p, zeta, d, model, lo=lo, hi=hi)
    return EquilibriumPoint(
        mu=float(mu), q=float(q), residual=float(res), iterations=iters, degenerate=bool(dgn)
    )


def mean_field_curves(p, d, model: MarketConfig) -> dict[str, np.ndarray]:
    """Batched mean-field analytics; arrays broadcast over (p, d).

    Returns a dict with keys mu, q, u, delta, mu_prime, u_prime,
    interference, sigma_delta, sigma_omega (plus p, d broadcast copies).
    """
    p, d = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(d, dtype=float))
    mu, q, _, _, _ = solve_mu_batch(p, 0.0, d, model)
    x = d / mu
    alloc = model.allocation
    earning = model.earning
    qp = alloc.omega_prime(x)

    theta = earning.value_at_ratio(p, x, alloc)
    delta = earning.partial1_at_ratio(p, x, alloc) * model.choice.expected_prob_deriv(theta)
    interference = earning.coupling(p, x, alloc) * (d / mu**2) * delta
    mu_prime = delta / (1.0 + interference)
    sigma_omega = x * qp / q
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_delta = np.where(sigma_omega > 0, interference / sigma_omega, np.inf)

    if earning.variant == "surge":
        gamma = model.revenue.gamma
        s = earning.surge_rule.multiplier(x)
        sp = earning.surge_rule.multiplier_deriv(x)
        u = (gamma - p * s) * q * mu
        u_prime = (
            (gamma - p * s) * (q - qp * x) * mu_prime
            - s * q * mu
            + p * sp * x * q * mu_prime
        )
    else:
        r = model.revenue.rate(x)
        rp = model.revenue.rate_deriv(x)
        u = (r - p * q) * mu
        u_prime = mu_prime * (r - p * q - (rp - p * qp) * x) - q * mu
    return {
        "p": p, "d": d, "mu": mu, "q": q, "u": u, "delta": delta,
        "mu_prime": mu_prime, "u_prime": u_prime, "interference": interference,
        "sigma_delta": sigma_delta, "sigma_omega": sigma_omega,
    }


def mean_field_report(p: float, d: float, model: MarketConfig) -> MeanFieldReport:
    """Mean-field analytics at a single (p, d); see :class:`MeanFieldReport`."""
    c = mean_field_curves(float(p), float(d), model)
    return MeanFieldReport(**{k: float(v) for k, v in c.items()})


def mean_field_utility_batch(p, d, model: MarketConfig, zeta=0.0) -> np.ndarray:
    """Limiting platform utility per supplier, optionally under perturbed pay.

    With ``zeta > 0`` the payment term averages the two perturbed branches,
    weighting each by its own activation propensity; suppliers on the higher
    payment are more likely active, which is what makes randomization cost
    money.
    """
    p, d, zeta = np.broadcast_arrays(
        np.asarray(p, dtype=float), np.asarray(d, dtype=float), np.asarray(zeta, dtype=float)
    )
    mu, q, _, _, _ = solve_mu_batch(p, zeta, d, model)
    x = d / mu
    earning, choice = model.earning, model.choice
    m_hi = choice.expected_prob(earning.value_at_ratio(p + zeta, x, model.allocation))
    m_lo = choice.expected_prob(earning.value_at_ratio(p - zeta, x, model.allocation))
    pay_rate = 0.5 * ((p + zeta) * m_hi + (p - zeta) * m_lo)
    if earning.variant == "surge":
        pay_rate = pay_rate * earning.surge_rule.multiplier(x)
    return model.revenue.rate(x) * mu - q * pay_rate


def mean_field_utility(p: float, d: float, model: MarketConfig, zeta: float = 0.0) -> float:
    return float(mean_field_utility_batch(float(p), float(d), model, float(zeta)))


def _prelimit_allocation(d: float, counts: np.ndarray, model: MarketConfig) -> np.ndarray:
    """Allocation rate Omega(d, t) over integer supply counts, with the
    t = 0 slot pinned at saturation so binomial expectations are total."""
    out = np.empty(counts.shape, dtype=float)
    zero = counts == 0
    out[zero] = model.allocation.saturation
    out[~zero] = model.allocation.omega(d / counts[~zero])
    return out


def finite_n_q(mu: float, d: float, n: int, model: MarketConfig) -> float:
    """Expected allocation rate when the active count is Binomial(n, mu).

    Exact enumeration over all n + 1 outcomes; refuses n > 10_000, where the
    caller should be using the mean-field limit instead.
    """
    if not 0.0 < mu < 1.0:
        raise DomainError("mu must lie strictly in (0, 1)")
    if n > 10_000:
        raise DomainError("exact mode supports n <= 10_000; use the mean-field limit")
    counts = np.arange(n + 1)
    pmf = binom.pmf(counts, n, mu)
    return float(pmf @ _prelimit_allocation(d, counts, model))


def stein_dq(mu: float, d: float, n: int, model: MarketConfig) -> float:
    """Derivative in mu of :func:`finite_n_q` via the exponential-family
    covariance identity: eta'(mu) * Cov(Omega(d, X), X) with
    eta'(mu) = 1 / (mu (1 - mu)) the binomial natural-parameter slope."""
    if mu in (0.0, 1.0):
        raise DomainError("derivative undefined at mu in {0, 1}")
    if not 0.0 < mu < 1.0:
        raise DomainError("mu must lie strictly in (0, 1)")
    if n > 10_000:
        raise DomainError("exact mode supports n <= 10_000")
    counts = np.arange(n + 1)
    pmf = binom.pmf(counts, n, mu)
    omega_vals = _prelimit_allocation(d, counts, model)
    cov = float(pmf @ (omega_vals * (counts - n * mu)))
    return cov / (mu * (1.0 - mu))


@dataclass(frozen=True)
class ConcavityReport:
    """Grid evidence that the limiting utility is concave on an interval."""

    interval: tuple[float, float]
    grid_size: int
    passed: bool
    worst_u_second_diff: float
    choice_concave: bool | None
    worst_choice_second_diff: float | None
    choice_anchor_margin: float | None
    allocation_concave: bool | None
    worst_allocation_second_diff: float | None
    earnings_range: tuple[float, float] | None
    ratio_range: tuple[float, float] | None


def concavity_diagnostic(
    model: MarketConfig,
    interval: tuple[float, float] | None = None,
    grid_size: int = 50,
    context_nodes: int = 64,
) -> ConcavityReport:
    """Check second differences of the expected utility over a payment grid.

    Also verifies, for the identity/risk earning variants, the structural
    conditions that guarantee concavity: the average choice function is
    concave over the induced earnings range with a non-negative tangent
    anchor at its left end, and the allocation curve is concave over the
    induced load-ratio range.  The overall verdict is driven by the utility
    grid itself; the structural margins are reported for diagnosis.
    """
    lo, hi = interval if interval is not None else model.interval
    ps = np.linspace(lo, hi, grid_size)
    d_nodes, d_w = model.context.quadrature(context_nodes)
    P = np.repeat(ps, d_nodes.size)
    D = np.tile(d_nodes, ps.size)
    curves = mean_field_curves(P, D, model)
    u = (curves["u"].reshape(ps.size, d_nodes.size) * d_w).sum(axis=1)
    d2u = u[2:] - 2.0 * u[1:-1] + u[:-2]
    worst = float(d2u.max())
    passed = bool(worst < 0.0)

    if model.earning.variant == "surge":
        return ConcavityReport(
            interval=(lo, hi), grid_size=grid_size, passed=passed,
            worst_u_second_diff=worst, choice_concave=None,
            worst_choice_second_diff=None, choice_anchor_margin=None,
            allocation_concave=None, worst_allocation_second_diff=None,
            earnings_range=None, ratio_range=None,
        )

    # Structural premises are checked at the representative (mean) context;
    # they concern the ranges induced at one context value, not the pooled
    # extremes across the whole context distribution.
    d_rep = model.context.demand_mean.mean
    rep_curves = mean_field_curves(ps, np.full(ps.shape, d_rep), model)
    theta = model.earning.value_at_ratio(
        rep_curves["p"], rep_curves["d"] / rep_curves["mu"], model.allocation
    )
    x_lo, x_hi = float(np.min(theta)), float(np.max(theta))
    xs = np.linspace(x_lo, x_hi, grid_size)
    f_avg = model.choice.expected_prob(xs)
    d2f = f_avg[2:] - 2.0 * f_avg[1:-1] + f_avg[:-2]
    anchor = float(f_avg[0] - model.choice.expected_prob_deriv(x_lo) * x_lo)

    ratios = rep_curves["d"] / rep_curves["mu"]
    r_lo, r_hi = float(np.min(ratios)), float(np.max(ratios))
    rs = np.linspace(r_lo, r_hi, grid_size)
    w = model.allocation.omega(rs)
    d2w = w[2:] - 2.0 * w[1:-1] + w[:-2]

    return ConcavityReport(
        interval=(lo, hi),
        grid_size=grid_size,
        passed=passed,
        worst_u_second_diff=worst,
        choice_concave=bool(d2f.max() <= 1e-9),
        worst_choice_second_diff=float(d2f.max()),
        choice_anchor_margin=anchor,
        allocation_concave=bool(d2w.max() <= 1e-9),
        worst_allocation_second_diff=float(d2w.max()),
        earnings_range=(x_lo, x_hi),
        ratio_range=(r_lo, r_hi),
    )
