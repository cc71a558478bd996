"""Experiment configuration, replication fan-out, regret metrics, and files.

An experiment is a JSON-serializable configuration (market, method, horizon,
replications, seeds) executed into a run log (CSV, one row per day per
replication), a summary (JSON), and a regret report.  Regret is accounted
against the cached context-averaged optimal payment, evaluating the limiting
utility at each day's realized context.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .equilibrium import mean_field_curves, mean_field_utility_batch
from .market import MarketConfig
from .policy import (
    DayRecord,
    LearnerRun,
    expected_utility,
    oracle_optimal_payment,
    run_local_learner,
)
from .simulator import SeedSpec

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESETS",
    "preset_config",
    "RegretReport",
    "ExperimentResult",
    "run_experiment",
    "run_global_sweep",
    "ComparisonResult",
    "run_comparison",
    "emit_curves",
    "CURVE_COLUMNS",
    "RUNLOG_COLUMNS",
]

SCHEMA_VERSION = 1

RUNLOG_COLUMNS = [
    "rep", "t", "d", "D", "p", "zeta", "T", "U", "Dbar", "Zbar",
    "DeltaHat", "UpsilonHat", "GammaHat", "valid", "u_mf", "u_star_mf", "regret",
]

CURVE_COLUMNS = ["p", "d", "mu", "q", "u", "Delta", "muPrime", "uPrime", "R", "sigmaDelta", "sigmaOmega"]


class ConfigError(ValueError):
    """The experiment configuration is malformed."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment run."""

    method: str = "local"  # local | global | oracle
    model: MarketConfig = field(default_factory=MarketConfig.default)
    horizon: int = 200
    replications: int = 200
    explore_t: int = 80
    seed: int = 0
    eta: float = 20.0
    p1: float | None = None  # None: drawn uniformly from price_range
    price_range: tuple[float, float] = (10.0, 30.0)
    mean_field: bool = False
    regret_mode: str = "mean-field"  # mean-field | zeta-inclusive
    oracle_interval: tuple[float, float] = (10.0, 30.0)
    workers: int = 1
    out_dir: str | None = None
    smoother: str = "spline"

    def __post_init__(self) -> None:
        if self.method not in ("local", "global", "oracle"):
            raise ConfigError(f"unknown method: {self.method!r}")
        if self.regret_mode not in ("mean-field", "zeta-inclusive"):
            raise ConfigError(f"unknown regret mode: {self.regret_mode!r}")
        if self.horizon < 1 or self.replications < 1:
            raise ConfigError("horizon and replications must be >= 1")
        if self.method == "global" and not 1 <= self.explore_t <= self.horizon:
            raise ConfigError("explore_t must lie in [1, horizon]")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "model": self.model.to_dict(),
            "horizon": self.horizon,
            "replications": self.replications,
            "explore_t": self.explore_t,
            "seed": self.seed,
            "eta": self.eta,
            "p1": self.p1,
            "price_range": list(self.price_range),
            "mean_field": self.mean_field,
            "regret_mode": self.regret_mode,
            "oracle_interval": list(self.oracle_interval),
            "workers": self.workers,
            "out_dir": self.out_dir,
            "smoother": self.smoother,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version: {version}")
        allowed = {
            "method", "model", "horizon", "replications", "explore_t", "seed",
            "eta", "p1", "price_range", "mean_field", "regret_mode",
            "oracle_interval", "workers", "out_dir", "smoother",
        }
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            model = MarketConfig.from_dict(data.pop("model", {}))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        kwargs = dict(data)
        if "price_range" in kwargs:
            kwargs["price_range"] = tuple(kwargs["price_range"])
        if "oracle_interval" in kwargs:
            kwargs["oracle_interval"] = tuple(kwargs["oracle_interval"])
        return cls(model=model, **kwargs)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def preset_config(name: str, **overrides) -> ExperimentConfig:
    """Named experiment presets for the benchmark marketplace."""
    if name == "base":
        cfg = ExperimentConfig()
    elif name == "surge":
        cfg = ExperimentConfig(model=MarketConfig.default(surge=True))
    elif name == "anchored":
        cfg = ExperimentConfig(p1=30.0)
    elif name == "fixed-demand":
        cfg = ExperimentConfig(model=MarketConfig.default(fixed_demand=0.4), p1=30.0)
    else:
        raise ConfigError(f"unknown preset: {name!r} (have {sorted(PRESETS)})")
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


PRESETS = ("base", "surge", "anchored", "fixed-demand")


@dataclass(frozen=True)
class RegretReport:
    """Regret summaries across replications for one method."""

    method: str
    p_star: float
    u_star: float
    in_sample_mean: float
    in_sample_median: float
    in_sample_q25: float
    in_sample_q75: float
    future_mean: float
    future_median: float
    future_q25: float
    future_q75: float
    in_sample_per_rep: list[float]
    future_per_rep: list[float]
    p_learned_per_rep: list[float]
    explore_t: int | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "explore_t": self.explore_t,
            "p_star": self.p_star,
            "u_star": self.u_star,
            "in_sample_regret": {
                "mean": self.in_sample_mean, "median": self.in_sample_median,
                "q25": self.in_sample_q25, "q75": self.in_sample_q75,
            },
            "future_regret": {
                "mean": self.future_mean, "median": self.future_median,
                "q25": self.future_q25, "q75": self.future_q75,
            },
            "p_learned": {
                "mean": float(np.mean(self.p_learned_per_rep)),
                "values": self.p_learned_per_rep,
            },
            "in_sample_per_rep": self.in_sample_per_rep,
            "future_per_rep": self.future_per_rep,
        }


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    report: RegretReport
    runlog_path: str | None
    summary_path: str | None


def _model_hash(model: MarketConfig, interval: tuple[float, float], quad_nodes: int) -> str:
    payload = json.dumps(
        {"model": model.to_dict(), "interval": list(interval), "quad_nodes": quad_nodes},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


_ORACLE_MEMORY: dict[str, tuple[float, float]] = {}


def cached_oracle(
    model: MarketConfig,
    interval: tuple[float, float],
    out_dir: str | None = None,
    quad_nodes: int = 256,
) -> tuple[float, float]:
    """Optimal payment and utility, cached in memory and on disk by model hash."""
    key = _model_hash(model, interval, quad_nodes)
    if key in _ORACLE_MEMORY:
        return _ORACLE_MEMORY[key]
    cache_path = os.path.join(out_dir, "oracle_cache.json") if out_dir else None
    if cache_path and os.path.exists(cache_path):
        with open(cache_path) as fh:
            disk = json.load(fh)
        if key in disk:
            entry = (float(disk[key]["p_star"]), float(disk[key]["u_star"]))
            _ORACLE_MEMORY[key] = entry
            return entry
    result = oracle_optimal_payment(model, interval, quad_nodes=quad_nodes)
    entry = (result.p_star, result.u_star)
    _ORACLE_MEMORY[key] = entry
    if cache_path:
        disk = {}
        if os.path.exists(cache_path):
            with open(cache_path) as fh:
                disk = json.load(fh)
        disk[key] = {"p_star": result.p_star, "u_star": result.u_star, "method": result.method}
        with open(cache_path, "w") as fh:
            json.dump(disk, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return entry


def _score_days(
    days: list[DayRecord],
    model: MarketConfig,
    p_star: float,
    regret_mode: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-day limiting utilities (u_mf, u_star_mf) at realized contexts."""
    ps = np.array([day.p for day in days])
    ds = np.array([day.d for day in days])
    if regret_mode == "zeta-inclusive":
        zs = np.array([day.zeta for day in days])
    else:
        zs = 0.0
    u = mean_field_utility_batch(ps, ds, model, zs)
    u_star = mean_field_utility_batch(p_star, ds, model, 0.0)
    return u, u_star


def _run_replication(
    config: ExperimentConfig, rep: int, p_star: float, explore_t: int | None = None
) -> dict:
    """Execute one replication and return rows plus regret summaries."""
    model = config.model
    seeds = SeedSpec(config.seed)
    if config.method == "local":
        run = run_local_learner(
            model, seeds, rep=rep, horizon=config.horizon, p1=config.p1,
            eta=config.eta, interval=model.interval,
            mean_field=config.mean_field, init_range=config.price_range,
        )
    elif config.method == "global":
        from .policy import global_explore_exploit

        run, _ = global_explore_exploit(
            model, seeds, rep=rep,
            explore_t=explore_t if explore_t is not None else config.explore_t,
            horizon=config.horizon, price_range=config.price_range,
            smoother=config.smoother,
        )
    else:  # oracle: deploy p_star every period, evaluated in the mean field
        ds = [
            model.context.sample_mean_demand(seeds.rng(rep, t, "context"))
            for t in range(1, config.horizon + 1)
        ]
        run = LearnerRun(
            days=[DayRecord(t=t, d=d, p=p_star, zeta=0.0) for t, d in enumerate(ds, start=1)],
            p_learned=p_star,
        )
    u, u_star = _score_days(run.days, model, p_star, config.regret_mode)
    regret = u_star - u
    return {
        "rep": rep,
        "days": run.days,
        "u": u,
        "u_star": u_star,
        "regret": regret,
        "in_sample": float(regret.mean()),
        "p_learned": run.p_learned,
    }


def _replication_worker(payload: tuple) -> dict:
    config_dict, rep, p_star, explore_t = payload
    config = ExperimentConfig.from_dict(config_dict)
    out = _run_replication(config, rep, p_star, explore_t)
    out["days"] = [_day_row(day) for day in out["days"]]
    for key in ("u", "u_star", "regret"):
        out[key] = out[key].tolist()
    return out


def _day_row(day: DayRecord) -> dict:
    return {
        "t": day.t, "d": day.d, "D": day.demand, "p": day.p, "zeta": day.zeta,
        "T": day.active_count, "U": day.utility, "Dbar": day.dbar, "Zbar": day.zbar,
        "DeltaHat": day.delta_hat, "UpsilonHat": day.upsilon_hat,
        "GammaHat": day.gamma_hat, "valid": int(day.valid),
    }


def _summarize(
    config: ExperimentConfig,
    p_star: float,
    u_star: float,
    rep_results: list[dict],
    explore_t: int | None,
) -> RegretReport:
    in_sample = [r["in_sample"] for r in rep_results]
    p_learned = [r["p_learned"] for r in rep_results]
    u_at_learned = _expected_utility_many(np.array(p_learned), config.model)
    future = (u_star - u_at_learned).tolist()
    q = lambda a, t: float(np.quantile(a, t))
    return RegretReport(
        method=config.method,
        p_star=p_star,
        u_star=u_star,
        in_sample_mean=float(np.mean(in_sample)),
        in_sample_median=q(in_sample, 0.5),
        in_sample_q25=q(in_sample, 0.25),
        in_sample_q75=q(in_sample, 0.75),
        future_mean=float(np.mean(future)),
        future_median=q(future, 0.5),
        future_q25=q(future, 0.25),
        future_q75=q(future, 0.75),
        in_sample_per_rep=[float(v) for v in in_sample],
        future_per_rep=[float(v) for v in future],
        p_learned_per_rep=[float(v) for v in p_learned],
        explore_t=explore_t,
    )


def _expected_utility_many(ps: np.ndarray, model: MarketConfig, quad_nodes: int = 256) -> np.ndarray:
    """Context-averaged limiting utility for several payments at once."""
    d_nodes, d_w = model.context.quadrature(quad_nodes)
    P = np.repeat(ps, d_nodes.size)
    D = np.tile(d_nodes, ps.size)
    u = mean_field_curves(P, D, model)["u"].reshape(ps.size, d_nodes.size)
    return u @ d_w


def _fan_out(config: ExperimentConfig, p_star: float, explore_t: int | None = None) -> list[dict]:
    reps = range(config.replications)
    if config.workers <= 1:
        return [_run_replication(config, rep, p_star, explore_t) for rep in reps]
    payloads = [(config.to_dict(), rep, p_star, explore_t) for rep in reps]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        results = list(pool.map(_replication_worker, payloads, chunksize=4))
    for r in results:
        for key in ("u", "u_star", "regret"):
            r[key] = np.asarray(r[key])
    results.sort(key=lambda r: r["rep"])
    return results


def _write_runlog(path: str, rep_results: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUNLOG_COLUMNS)
        for r in rep_results:
            rows = r["days"] if isinstance(r["days"][0], dict) else [_day_row(d) for d in r["days"]]
            for i, row in enumerate(rows):
                writer.writerow(
                    [r["rep"], row["t"], _fmt(row["d"]), _fmt(row["D"]), _fmt(row["p"]),
                     _fmt(row["zeta"]), _fmt(row["T"]), _fmt(row["U"]), _fmt(row["Dbar"]),
                     _fmt(row["Zbar"]), _fmt(row["DeltaHat"]), _fmt(row["UpsilonHat"]),
                     _fmt(row["GammaHat"]), row["valid"], _fmt(r["u"][i]),
                     _fmt(r["u_star"][i]), _fmt(r["regret"][i])]
                )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else repr(v)
    return str(value)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every replication of the configured method and write outputs.

    Deterministic given the seed: identical configurations produce
    byte-identical run logs and summaries, regardless of worker count.
    """
    model = config.model
    p_star, u_star = cached_oracle(model, config.oracle_interval, config.out_dir)
    rep_results = _fan_out(config, p_star)
    report = _summarize(config, p_star, u_star, rep_results,
                        config.explore_t if config.method == "global" else None)
    runlog_path = summary_path = None
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        runlog_path = os.path.join(config.out_dir, f"{config.method}_runlog.csv")
        _write_runlog(runlog_path, rep_results)
        summary_path = os.path.join(config.out_dir, f"{config.method}_summary.json")
        with open(summary_path, "w") as fh:
            json.dump(
                {"config": config.to_dict(), "report": report.to_dict()},
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")
    return ExperimentResult(config=config, report=report,
                            runlog_path=runlog_path, summary_path=summary_path)


def run_global_sweep(
    config: ExperimentConfig,
    explore_values: tuple[int, ...] = (40, 60, 80, 100, 120, 140, 160, 180, 200),
) -> dict[int, RegretReport]:
    """Global experimentation across exploration budgets, sharing exploration.

    For each replication the exploration days are simulated once (payment
    draws do not depend on the budget), each budget fits its own curve on
    the prefix it is allowed to see, and only the deployment tails are
    simulated per budget.
    """
    model = config.model
    p_star, u_star = cached_oracle(model, config.oracle_interval, config.out_dir)
    max_t = max(explore_values)
    if max_t > config.horizon:
        raise ConfigError("explore budgets cannot exceed the horizon")
    per_budget: dict[int, list[dict]] = {T: [] for T in explore_values}
    if config.workers <= 1:
        sweeps = [_sweep_one_rep(config, rep, p_star, explore_values)
                  for rep in range(config.replications)]
    else:
        payloads = [
            (config.to_dict(), rep, p_star, tuple(explore_values))
            for rep in range(config.replications)
        ]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            sweeps = list(pool.map(_sweep_worker, payloads, chunksize=2))
        sweeps.sort(key=lambda s: s["rep"])
    for sweep in sweeps:
        for T in explore_values:
            per_budget[T].append(sweep["budgets"][T])
    reports = {}
    for T in explore_values:
        reports[T] = _summarize(
            replace(config, method="global", explore_t=T), p_star, u_star, per_budget[T], T
        )
    return reports


def _sweep_one_rep(
    config: ExperimentConfig, rep: int, p_star: float, explore_values
) -> dict:
    from .policy import fit_payment_curve, global_explore_exploit
    from .equilibrium import EquilibriumPoint
    from .policy import _solve_points
    from .simulator import run_day

    model = config.model
    seeds = SeedSpec(config.seed)
    horizon = config.horizon
    max_t = max(explore_values)
    lo, hi = config.price_range
    ds = np.array(
        [model.context.sample_mean_demand(seeds.rng(rep, t, "context"))
         for t in range(1, horizon + 1)]
    )
    ps_explore = np.array(
        [lo + (hi - lo) * seeds.rng(rep, t, "policy").random() for t in range(1, max_t + 1)]
    )
    eqs = _solve_points(ps_explore, ds[:max_t], model)
    explore_util = np.empty(max_t)
    for t in range(1, max_t + 1):
        outcome = run_day(model, float(ps_explore[t - 1]), 0.0, seeds, rep=rep, day=t,
                          d=float(ds[t - 1]), eq=eqs[t - 1])
        explore_util[t - 1] = outcome.utility_per_supplier
    u_star_all = mean_field_utility_batch(p_star, ds, model, 0.0)
    u_explore = mean_field_utility_batch(ps_explore, ds[:max_t], model, 0.0)

    budgets = {}
    for T in explore_values:
        p_hat, _, _, _ = fit_payment_curve(
            ps_explore[:T], explore_util[:T], config.price_range, config.smoother
        )
        if horizon > T:
            u_deploy = mean_field_utility_batch(p_hat, ds[T:], model, 0.0)
            u_all = np.concatenate([u_explore[:T], u_deploy])
        else:
            u_all = u_explore[:T]
        regret = u_star_all - u_all
        budgets[T] = {
            "rep": rep,
            "days": [],  # sweep mode keeps summaries only
            "u": u_all,
            "u_star": u_star_all,
            "regret": regret,
            "in_sample": float(regret.mean()),
            "p_learned": p_hat,
        }
    return {"rep": rep, "budgets": budgets}


def _sweep_worker(payload: tuple) -> dict:
    config_dict, rep, p_star, explore_values = payload
    config = ExperimentConfig.from_dict(config_dict)
    out = _sweep_one_rep(config, rep, p_star, explore_values)
    for T, data in out["budgets"].items():
        for key in ("u", "u_star", "regret"):
            data[key] = np.asarray(data[key])
    return out


@dataclass(frozen=True)
class ComparisonResult:
    local: RegretReport
    global_by_budget: dict[int, RegretReport]
    best_global_in_sample: float
    best_global_future: float

    def to_dict(self) -> dict:
        return {
            "local": self.local.to_dict(),
            "global": {str(T): r.to_dict() for T, r in self.global_by_budget.items()},
            "best_global_in_sample": self.best_global_in_sample,
            "best_global_future": self.best_global_future,
        }


def run_comparison(
    config: ExperimentConfig,
    explore_values: tuple[int, ...] = (40, 60, 80, 100, 120, 140, 160, 180, 200),
) -> ComparisonResult:
    """Local learner versus the exploration-budget sweep of the global one."""
    local = run_experiment(replace(config, method="local", out_dir=None)).report
    sweep = run_global_sweep(replace(config, method="global"), explore_values)
    best_in = min(r.in_sample_mean for r in sweep.values())
    best_future = min(r.future_mean for r in sweep.values())
    result = ComparisonResult(
        local=local, global_by_budget=sweep,
        best_global_in_sample=best_in, best_global_future=best_future,
    )
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
        with open(os.path.join(config.out_dir, "comparison.json"), "w") as fh:
            json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result


def emit_curves(
    model: MarketConfig,
    p_grid,
    d_values,
    path: str | None = None,
) -> list[dict]:
    """Mean-field curves over a payment grid at each context value.

    Returns the rows and optionally writes them as CSV with columns
    ``p,d,mu,q,u,Delta,muPrime,uPrime,R,sigmaDelta,sigmaOmega``.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    d_values = np.asarray(d_values, dtype=float)
    P = np.repeat(p_grid, d_values.size)
    D = np.tile(d_values, p_grid.size)
    c = mean_field_curves(P, D, model)
    rows = []
    for i in range(P.size):
        rows.append({
            "p": float(P[i]), "d": float(D[i]), "mu": float(c["mu"][i]),
            "q": float(c["q"][i]), "u": float(c["u"][i]), "Delta": float(c["delta"][i]),
            "muPrime": float(c["mu_prime"][i]), "uPrime": float(c["u_prime"][i]),
            "R": float(c["interference"][i]), "sigmaDelta": float(c["sigma_delta"][i]),
            "sigmaOmega": float(c["sigma_omega"][i]),
        })
    if path:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    return rows
