"""Payment-setting policies: the local-perturbation first-order learner,
the explore-then-exploit global baseline, and the mean-field oracle."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .equilibrium import (
    ConcavityReport,
    concavity_diagnostic,
    mean_field_curves,
    solve_mu_batch,
)
from .inference import estimate_gradient
from .market import DomainError, MarketConfig
from .simulator import SeedSpec, run_day

__all__ = [
    "OptimizerState",
    "mirror_descent_step",
    "averaged_payment",
    "DayRecord",
    "LearnerRun",
    "run_local_learner",
    "GlobalPolicy",
    "fit_payment_curve",
    "global_explore_exploit",
    "OracleResult",
    "expected_utility",
    "oracle_optimal_payment",
    "measured_gradient_bound",
]


@dataclass(frozen=True)
class OptimizerState:
    """Accumulators of the weighted-proximal payment update.

    The deployed payment for period t + 1 minimizes
        (1 / 2 eta) * sum_s s (p - p_s)^2 - p * sum_s s * g_s
    over the working interval, where g_s are the per-period gradient
    estimates.  Without the interval constraint this reproduces the
    recursion p_{t+1} = p_t + 2 eta g_t / (t + 1).
    """

    eta: float
    lo: float
    hi: float
    p_current: float
    t: int = 0
    sum_sp: float = 0.0
    sum_s: int = 0
    theta: float = 0.0

    @classmethod
    def start(
        cls, p1: float, eta: float = 20.0, interval: tuple[float, float] | None = None
    ) -> "OptimizerState":
        lo, hi = interval if interval is not None else (-math.inf, math.inf)
        if not lo <= p1 <= hi:
            raise DomainError("initial payment must lie in the interval")
        return cls(eta=eta, lo=lo, hi=hi, p_current=p1)

    @property
    def pbar_numerator(self) -> float:
        """Running sum of t * p_t over deployed payments."""
        return self.sum_sp


def mirror_descent_step(state: OptimizerState, gamma_hat: float | None) -> OptimizerState:
    """Advance one period: record the deployed payment, then update it.

    ``gamma_hat=None`` (or a non-finite value) marks a period without a
    usable gradient; the payment is carried forward unchanged while the
    trajectory accumulators still advance.
    """
    t = state.t + 1
    sum_sp = state.sum_sp + t * state.p_current
    sum_s = state.sum_s + t
    if gamma_hat is None or not math.isfinite(gamma_hat):
        return replace(state, t=t, sum_sp=sum_sp, sum_s=sum_s)
    theta = state.theta + t * gamma_hat
    p_next = (sum_sp + state.eta * theta) / sum_s
    p_next = min(max(p_next, state.lo), state.hi)
    return replace(state, t=t, sum_sp=sum_sp, sum_s=sum_s, theta=theta, p_current=p_next)


def averaged_payment(state: OptimizerState) -> float:
    """Triangularly weighted average of the deployed payments."""
    if state.t < 1:
        raise DomainError("no periods recorded yet")
    return 2.0 * state.sum_sp / (state.t * (state.t + 1))


@dataclass(frozen=True)
class DayRecord:
    """One row of a learning trajectory; simulation fields are None when the
    period was evaluated in the mean-field limit rather than simulated."""

    t: int
    d: float
    p: float
    zeta: float
    demand: int | None = None
    active_count: int | None = None
    utility: float | None = None
    dbar: float | None = None
    zbar: float | None = None
    delta_hat: float | None = None
    upsilon_hat: float | None = None
    gamma_hat: float | None = None
    valid: bool = True


@dataclass(frozen=True)
class LearnerRun:
    """Trajectory plus the learned payment(s) of one replication."""

    days: list[DayRecord]
    p_learned: float
    state: OptimizerState | None = None
    p_hat: float | None = None
    explore_t: int | None = None


def _draw_contexts(model: MarketConfig, seeds: SeedSpec, rep: int, horizon: int) -> np.ndarray:
    return np.array(
        [model.context.sample_mean_demand(seeds.rng(rep, t, "context")) for t in range(1, horizon + 1)]
    )


def _solve_points(ps: np.ndarray, ds: np.ndarray, model: MarketConfig):
    """Batch-solve fixed points and wrap them as EquilibriumPoint objects."""
    from .equilibrium import EquilibriumPoint

    mus, qs, res, iters, dgn = solve_mu_batch(ps, 0.0, ds, model)
    return [
        EquilibriumPoint(mu=float(m), q=float(q), residual=float(r),
                         iterations=iters, degenerate=bool(g))
        for m, q, r, g in zip(mus, qs, res, dgn)
    ]


def run_local_learner(
    model: MarketConfig,
    seeds: SeedSpec,
    rep: int = 0,
    horizon: int = 200,
    p1: float | None = None,
    eta: float = 20.0,
    interval: tuple[float, float] | None = None,
    zeta: float | None = None,
    mean_field: bool = False,
    init_range: tuple[float, float] = (10.0, 30.0),
) -> LearnerRun:
    """Run the local-perturbation learner for ``horizon`` periods.

    Each period deploys symmetric payment perturbations around the current
    payment, estimates the utility gradient from the realized cross-section,
    and applies the weighted-proximal update.  ``p1=None`` draws the initial
    payment uniformly from ``init_range``.  ``mean_field=True`` replaces the
    simulated gradient with the exact limiting one (useful for bound checks
    and as the infinite-market reference).
    """
    if zeta is None:
        zeta = model.zeta_at()
    if p1 is None:
        lo, hi = init_range
        p1 = float(lo + (hi - lo) * seeds.rng(rep, 0, "policy").random())
    state = OptimizerState.start(p1, eta=eta, interval=interval)
    days: list[DayRecord] = []
    for t in range(1, horizon + 1):
        d = model.context.sample_mean_demand(seeds.rng(rep, t, "context"))
        p = state.p_current
        if mean_field:
            curves = mean_field_curves(p, d, model)
            gamma = float(curves["u_prime"])
            days.append(DayRecord(t=t, d=d, p=p, zeta=zeta, gamma_hat=gamma, valid=True))
            state = mirror_descent_step(state, gamma)
        else:
            outcome = run_day(model, p, zeta, seeds, rep=rep, day=t, d=d)
            est = estimate_gradient(outcome, p, model)
            days.append(
                DayRecord(
                    t=t, d=d, p=p, zeta=zeta, demand=outcome.demand,
                    active_count=outcome.active_count, utility=outcome.utility,
                    dbar=outcome.dbar, zbar=outcome.zbar,
                    delta_hat=est.delta_hat if est.valid else None,
                    upsilon_hat=est.upsilon_hat if est.valid else None,
                    gamma_hat=est.gamma_hat if est.valid else None,
                    valid=est.valid,
                )
            )
            state = mirror_descent_step(state, est.gamma_hat if est.valid else None)
    return LearnerRun(days=days, p_learned=averaged_payment(state), state=state)


@dataclass(frozen=True)
class GlobalPolicy:
    """Explore-then-exploit summary: the fitted curve's best payment."""

    explore_t: int
    price_range: tuple[float, float]
    p_hat: float
    smoother: str


def fit_payment_curve(
    payments: np.ndarray,
    utilities: np.ndarray,
    price_range: tuple[float, float] = (10.0, 30.0),
    smoother: str = "spline",
    bandwidth: float = 2.0,
    grid_points: int = 1000,
) -> tuple[float, np.ndarray, np.ndarray, str]:
    """Smooth utility against payment and locate the maximizing payment.

    Fits a cross-validated cubic smoothing spline; if that fails (too few
    distinct points, degenerate design) falls back to Gaussian-kernel
    regression with the given bandwidth.  Returns (p_hat, grid, fitted
    values, smoother used); p_hat is the grid argmax inside ``price_range``.
    """
    payments = np.asarray(payments, dtype=float)
    utilities = np.asarray(utilities, dtype=float)
    grid = np.linspace(price_range[0], price_range[1], grid_points)
    used = smoother
    fitted = None
    if smoother == "spline":
        try:
            from scipy.interpolate import make_smoothing_spline

            order = np.argsort(payments)
            xs, ys = payments[order], utilities[order]
            keep = np.concatenate([[True], np.diff(xs) > 1e-12])
            spl = make_smoothing_spline(xs[keep], ys[keep])
            fitted = spl(grid)
        except Exception:
            used = "kernel"
    if fitted is None:
        z = (grid[:, None] - payments[None, :]) / bandwidth
        w = np.exp(-0.5 * z * z)
        fitted = (w @ utilities) / np.maximum(w.sum(axis=1), 1e-300)
        used = "kernel"
    p_hat = float(grid[int(np.argmax(fitted))])
    return p_hat, grid, fitted, used


def global_explore_exploit(
    model: MarketConfig,
    seeds: SeedSpec,
    rep: int = 0,
    explore_t: int = 80,
    horizon: int = 200,
    price_range: tuple[float, float] = (10.0, 30.0),
    smoother: str = "spline",
) -> tuple[LearnerRun, GlobalPolicy]:
    """Global experimentation: uniform payment draws, then deploy the fit.

    For the first ``explore_t`` periods the payment is drawn uniformly from
    ``price_range`` and the realized per-supplier utility is recorded; a
    smoothed utility-versus-payment curve then fixes the payment for the
    remaining periods.  Requires at least 10 exploration periods.
    """
    if explore_t < 10:
        raise DomainError("need at least 10 exploration periods")
    if explore_t > horizon:
        raise DomainError("exploration cannot exceed the horizon")
    lo, hi = price_range
    ds = _draw_contexts(model, seeds, rep, horizon)
    ps_explore = np.array(
        [lo + (hi - lo) * seeds.rng(rep, t, "policy").random() for t in range(1, explore_t + 1)]
    )
    days: list[DayRecord] = []
    utilities = np.empty(explore_t)
    eqs = _solve_points(ps_explore, ds[:explore_t], model)
    for t in range(1, explore_t + 1):
        outcome = run_day(model, float(ps_explore[t - 1]), 0.0, seeds, rep=rep, day=t,
                          d=float(ds[t - 1]), eq=eqs[t - 1])
        utilities[t - 1] = outcome.utility_per_supplier
        days.append(
            DayRecord(
                t=t, d=outcome.d, p=outcome.p, zeta=0.0, demand=outcome.demand,
                active_count=outcome.active_count, utility=outcome.utility,
                dbar=outcome.dbar, zbar=outcome.zbar, valid=True,
            )
        )
    p_hat, _, _, used = fit_payment_curve(ps_explore, utilities, price_range, smoother)
    if horizon > explore_t:
        eqs = _solve_points(np.full(horizon - explore_t, p_hat), ds[explore_t:], model)
        for t in range(explore_t + 1, horizon + 1):
            outcome = run_day(model, p_hat, 0.0, seeds, rep=rep, day=t, d=float(ds[t - 1]),
                              eq=eqs[t - explore_t - 1])
            days.append(
                DayRecord(
                    t=t, d=outcome.d, p=outcome.p, zeta=0.0, demand=outcome.demand,
                    active_count=outcome.active_count, utility=outcome.utility,
                    dbar=outcome.dbar, zbar=outcome.zbar, valid=True,
                )
            )
    policy = GlobalPolicy(explore_t=explore_t, price_range=price_range, p_hat=p_hat, smoother=used)
    run = LearnerRun(days=days, p_learned=p_hat, p_hat=p_hat, explore_t=explore_t)
    return run, policy


@dataclass(frozen=True)
class OracleResult:
    p_star: float
    u_star: float
    method: str
    diagnostic: ConcavityReport


def expected_utility(p, model: MarketConfig, quad_nodes: int = 256) -> float:
    """Context-averaged limiting utility at payment p."""
    d_nodes, d_w = model.context.quadrature(quad_nodes)
    curves = mean_field_curves(np.full(d_nodes.shape, float(p)), d_nodes, model)
    return float(curves["u"] @ d_w)


def _golden_section_max(f, lo: float, hi: float, tol: float = 1e-6) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def oracle_optimal_payment(
    model: MarketConfig,
    interval: tuple[float, float] | None = None,
    quad_nodes: int = 256,
    tol: float = 1e-6,
    grid_fallback_points: int = 10_000,
) -> OracleResult:
    """Payment maximizing the context-averaged limiting utility.

    Golden-section search is used when the concavity diagnostic passes on
    the interval (it is then globally valid); otherwise a dense grid search
    is used and a warning is emitted.
    """
    lo, hi = interval if interval is not None else model.interval
    diag = concavity_diagnostic(model, (lo, hi))
    if diag.passed:
        p_star, u_star = _golden_section_max(
            lambda p: expected_utility(p, model, quad_nodes), lo, hi, tol
        )
        return OracleResult(p_star=p_star, u_star=u_star, method="golden-section", diagnostic=diag)
    warnings.warn(
        "utility not concave on the interval; falling back to grid search",
        RuntimeWarning,
        stacklevel=2,
    )
    # Coarse scan at reduced context resolution, then a local refinement at
    # full resolution around the best grid cell.
    coarse_points = min(grid_fallback_points, 1024)
    ps = np.linspace(lo, hi, coarse_points)
    d_nodes, d_w = model.context.quadrature(min(quad_nodes, 64))
    u = np.empty(coarse_points)
    chunk = max(1, 65_536 // max(1, d_nodes.size))
    for start in range(0, coarse_points, chunk):
        block = ps[start : start + chunk]
        P = np.repeat(block, d_nodes.size)
        D = np.tile(d_nodes, block.size)
        u[start : start + block.size] = (
            mean_field_curves(P, D, model)["u"].reshape(block.size, d_nodes.size) * d_w
        ).sum(axis=1)
    i = int(np.argmax(u))
    h = ps[1] - ps[0]
    p_star, u_star = _golden_section_max(
        lambda p: expected_utility(p, model, quad_nodes),
        max(lo, ps[i] - 2 * h),
        min(hi, ps[i] + 2 * h),
        tol,
    )
    return OracleResult(p_star=p_star, u_star=u_star, method="grid", diagnostic=diag)


def measured_gradient_bound(
    model: MarketConfig,
    interval: tuple[float, float] | None = None,
    p_points: int = 64,
    context_nodes: int = 32,
) -> float:
    """Empirical bound on |du/dp| over the interval, across contexts."""
    lo, hi = interval if interval is not None else model.interval
    ps = np.linspace(lo, hi, p_points)
    d_nodes, _ = model.context.quadrature(context_nodes)
    P = np.repeat(ps, d_nodes.size)
    D = np.tile(d_nodes, ps.size)
    return float(np.abs(mean_field_curves(P, D, model)["u_prime"]).max())
