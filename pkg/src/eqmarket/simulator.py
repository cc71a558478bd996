"""Finite-market day simulation and the discrete-event queue validator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import EquilibriumPoint, solve_mu
from .market import DomainError, MarketConfig

__all__ = ["SeedSpec", "DayOutcome", "run_day", "simulate_queue_allocation"]

_ROLES = {
    "context": 0,
    "demand": 1,
    "features": 2,
    "perturbations": 3,
    "activations": 4,
    "policy": 5,
}


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus a deterministic stream per (replication, day, role).

    Streams are derived through seed-sequence spawn keys, so any subset of
    days or replications can be simulated in any order, on any number of
    workers, and reproduce bit-identical draws.
    """

    master: int = 0

    def rng(self, rep: int, day: int, role: str) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.master, spawn_key=(rep, day, _ROLES[role]))
        return np.random.default_rng(seq)


@dataclass(frozen=True)
class DayOutcome:
    """One simulated market day at finite n."""

    n: int
    d: float
    demand: int
    p: float
    zeta: float
    epsilon: np.ndarray
    features: np.ndarray
    active: np.ndarray
    active_count: int
    dbar: float
    zbar: float
    utility: float
    utility_per_supplier: float
    mu_belief: float
    q_belief: float
    empty_supply: bool = False
    surge_multiplier: float = 1.0


def run_day(
    model: MarketConfig,
    p: float,
    zeta: float,
    seeds: SeedSpec,
    rep: int = 0,
    day: int = 0,
    d: float | None = None,
    belief: str = "mean-field",
    eq: EquilibriumPoint | None = None,
) -> DayOutcome:
    """Simulate one market day: context, demand, perturbed payments,
    activation, allocation, and realized platform utility.

    Suppliers activate against the mean-field belief by default; the exact
    finite-count belief (``belief="finite-n"``) is available for small-n
    cross-checks.  ``eq`` may inject a pre-solved fixed point (as produced
    by :func:`eqmarket.equilibrium.solve_mu` for the same (p, zeta, d)) so
    batched callers can share solver work; it is trusted as-is.

    Activations compare per-supplier uniform draws against activation
    probabilities, so runs with common seeds and increasing payments are
    montonically coupled.  An empty supply day is flagged and carries zero
    utility; downstream estimators must skip it.
    """
    n = model.n
    if zeta < 0 or p <= zeta:
        raise DomainError("payments must satisfy p > zeta >= 0")
    if d is None:
        d = model.context.sample_mean_demand(seeds.rng(rep, day, "context"))
    demand = model.context.sample_demand(seeds.rng(rep, day, "demand"), n, d)
    features = model.choice.sample_features(seeds.rng(rep, day, "features"), n)
    epsilon = (seeds.rng(rep, day, "perturbations").integers(0, 2, n) * 2 - 1).astype(np.int8)

    if eq is None:
        if belief == "mean-field":
            eq = solve_mu(p, zeta, d, model)
        elif belief == "finite-n":
            eq = _solve_mu_finite_n(p, zeta, d, model)
        else:
            raise DomainError(f"unknown belief mode: {belief!r}")
    ratio = d / eq.mu
    th_hi = model.earning.value_at_ratio(p + zeta, ratio, model.allocation)
    th_lo = model.earning.value_at_ratio(p - zeta, ratio, model.allocation)
    probs = np.where(
        epsilon > 0,
        model.choice.prob(features, th_hi),
        model.choice.prob(features, th_lo),
    )
    active = seeds.rng(rep, day, "activations").random(n) < probs
    count = int(active.sum())

    if count == 0:
        return DayOutcome(
            n=n, d=d, demand=demand, p=p, zeta=zeta, epsilon=epsilon,
            features=features, active=active, active_count=0,
            dbar=demand / n, zbar=0.0, utility=0.0, utility_per_supplier=0.0,
            mu_belief=eq.mu, q_belief=eq.q, empty_supply=True,
        )

    per_server = model.allocation.omega(demand / count) if demand > 0 else 0.0
    multiplier = 1.0
    if model.earning.variant == "surge":
        multiplier = float(model.earning.surge_rule.multiplier(demand / count))
    paid = multiplier * per_server * (p * count + zeta * float(epsilon[active].sum()))
    utility = model.revenue.total(demand, count) - paid
    return DayOutcome(
        n=n, d=d, demand=demand, p=p, zeta=zeta, epsilon=epsilon,
        features=features, active=active, active_count=count,
        dbar=demand / n, zbar=count / n, utility=utility,
        utility_per_supplier=utility / n, mu_belief=eq.mu, q_belief=eq.q,
        surge_multiplier=multiplier,
    )


def _solve_mu_finite_n(p: float, zeta: float, d: float, model: MarketConfig) -> EquilibriumPoint:
    """Balance equation against the exact binomial allocation expectation.

    Demand is held at its conditional mean (rounded), so this isolates the
    finite-supply-count effect; supported for n <= 10_000.
    """
    from .equilibrium import finite_n_q

    n = model.n
    demand = round(n * d)

    def psi(mu: float) -> float:
        q = finite_n_q(mu, demand, n, model)
        x = model.allocation.omega_inverse(q) if 0 < q < model.allocation.saturation else d / mu
        th_hi = model.earning.value_at_ratio(p + zeta, x, model.allocation)
        th_lo = model.earning.value_at_ratio(p - zeta, x, model.allocation)
        return 0.5 * float(
            model.choice.expected_prob(th_hi) + model.choice.expected_prob(th_lo)
        )

    lo, hi = 1e-9, 1.0 - 1e-12
    if lo - psi(lo) > 0:
        return EquilibriumPoint(mu=lo, q=psi(lo), residual=abs(lo - psi(lo)),
                                iterations=0, degenerate=True)
    iterations = 0
    for iterations in range(1, 80):
        mid = 0.5 * (lo + hi)
        if mid - psi(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-14:
            break
    mu = 0.5 * (lo + hi)
    from .equilibrium import finite_n_q as _q

    return EquilibriumPoint(
        mu=mu, q=_q(mu, demand, n, model), residual=abs(mu - psi(mu)),
        iterations=iterations, degenerate=False,
    )


def simulate_queue_allocation(
    arrival_rate: float,
    servers: int,
    capacity: int,
    horizon: int = 1_000_000,
    seed: int = 0,
    warmup_fraction: float = 0.1,
) -> float:
    """Discrete-event service rate of parallel finite-capacity queues.

    Jobs arrive in an aggregate Poisson stream of rate ``arrival_rate`` and
    are routed to one of ``servers`` unit-rate exponential servers uniformly
    at random; a server already holding ``capacity - 1`` jobs drops the
    arrival.  Returns completed jobs per server per unit time, measured
    after a warm-up window; this converges to the allocation curve at load
    ``arrival_rate / servers``.
    """
    if arrival_rate < 1 or servers < 1:
        raise DomainError("need arrival_rate >= 1 and servers >= 1")
    if horizon < 10_000:
        raise DomainError("horizon too short for a stable rate estimate")
    rng = np.random.default_rng(seed)
    u_kind = rng.random(horizon)
    u_pick = rng.random(horizon)
    dts = rng.standard_exponential(horizon)

    occupancy = np.zeros(servers, dtype=np.int64)
    busy = np.empty(servers, dtype=np.int64)  # ids of busy servers, first n_busy slots
    slot_of = np.full(servers, -1, dtype=np.int64)
    n_busy = 0
    max_jobs = capacity - 1

    t = 0.0
    warmup_events = int(horizon * warmup_fraction)
    t_start = 0.0
    completed = 0
    for i in range(horizon):
        rate = arrival_rate + n_busy
        t += dts[i] / rate
        if i == warmup_events:
            t_start = t
            completed = 0
        if u_kind[i] * rate < arrival_rate:
            j = int(u_pick[i] * servers)
            if occupancy[j] < max_jobs:
                if occupancy[j] == 0:
                    busy[n_busy] = j
                    slot_of[j] = n_busy
                    n_busy += 1
                occupancy[j] += 1
        elif n_busy > 0:
            j = int(busy[int(u_pick[i] * n_busy)])
            occupancy[j] -= 1
            completed += 1
            if occupancy[j] == 0:
                slot = slot_of[j]
                n_busy -= 1
                busy[slot] = busy[n_busy]
                slot_of[busy[n_busy]] = slot
                slot_of[j] = -1
    elapsed = t - t_start
    if elapsed <= 0:
        raise DomainError("no post-warmup time elapsed; increase the horizon")
    return completed / (servers * elapsed)
