"""Command-line surface for the marketplace experimentation toolkit.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .equilibrium import NumericalError
from .harness import (
    ConfigError,
    ExperimentConfig,
    PRESETS,
    emit_curves,
    preset_config,
    run_comparison,
    run_experiment,
)
from .market import DomainError, MarketConfig
from .policy import oracle_optimal_payment
from .simulator import SeedSpec, run_day, simulate_queue_allocation

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="experiment config JSON")
    parser.add_argument("--preset", choices=PRESETS, help="named configuration preset")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--replications", type=int, help="number of replications")
    parser.add_argument("--out", metavar="DIR", help="output directory for CSV/JSON")
    parser.add_argument("--surge", action="store_true", help="use the surge earning variant")
    parser.add_argument("--risk-beta", metavar="NAME", help="risk-averse earning transform name")
    parser.add_argument("--mean-field", action="store_true",
                        help="evaluate the learner against exact limiting gradients")
    parser.add_argument("--workers", type=int, help="replication worker processes")
    parser.add_argument("--n", type=int, help="market size override")


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        config = ExperimentConfig.from_json(args.config)
    else:
        config = preset_config(args.preset or "base")
    model = config.model
    if args.surge or args.risk_beta or args.n:
        try:
            model = MarketConfig.default(
                n=args.n or model.n,
                surge=bool(args.surge),
                risk_beta=args.risk_beta,
                fixed_demand=(
                    model.context.demand_mean.d
                    if type(model.context.demand_mean).__name__ == "FixedContext"
                    else None
                ),
                zeta=model.zeta,
                demand_sampler=model.context.demand_sampler,
            )
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        config = replace(config, model=model)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.replications is not None:
        updates["replications"] = args.replications
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.mean_field:
        updates["mean_field"] = True
    if args.workers is not None:
        updates["workers"] = args.workers
    if updates:
        config = replace(config, **updates)
    return config


def _cmd_curves(args) -> int:
    config = _build_config(args)
    p_grid = np.linspace(args.p_min, args.p_max, args.p_points)
    d_values = args.d if args.d else [0.4]
    path = os.path.join(args.out, "curves.csv") if args.out else None
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    rows = emit_curves(config.model, p_grid, d_values, path)
    if path:
        print(f"wrote {len(rows)} rows to {path}")
    else:
        from .harness import CURVE_COLUMNS

        print(",".join(CURVE_COLUMNS))
        for row in rows:
            print(",".join(repr(row[c]) for c in CURVE_COLUMNS))
    return EXIT_OK


def _cmd_simulate_day(args) -> int:
    config = _build_config(args)
    outcome = run_day(config.model, args.p, args.zeta, SeedSpec(config.seed),
                      rep=args.rep, day=args.day)
    summary = {
        "d": outcome.d, "D": outcome.demand, "p": outcome.p, "zeta": outcome.zeta,
        "T": outcome.active_count, "U": outcome.utility, "Dbar": outcome.dbar,
        "Zbar": outcome.zbar, "mu_belief": outcome.mu_belief, "q_belief": outcome.q_belief,
        "empty_supply": outcome.empty_supply, "surge_multiplier": outcome.surge_multiplier,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_optimize_local(args) -> int:
    config = replace(_build_config(args), method="local")
    result = run_experiment(config)
    print(json.dumps(result.report.to_dict() | {"runlog": result.runlog_path},
                     indent=2, sort_keys=True, default=float))
    return EXIT_OK


def _cmd_optimize_global(args) -> int:
    config = replace(_build_config(args), method="global", explore_t=args.explore_t)
    result = run_experiment(config)
    print(json.dumps(result.report.to_dict() | {"runlog": result.runlog_path},
                     indent=2, sort_keys=True, default=float))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    config = _build_config(args)
    interval = tuple(args.interval) if args.interval else config.oracle_interval
    result = oracle_optimal_payment(config.model, interval)
    print(json.dumps({
        "p_star": result.p_star, "u_star": result.u_star, "method": result.method,
        "concave": result.diagnostic.passed,
        "worst_second_difference": result.diagnostic.worst_u_second_diff,
    }, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = _build_config(args)
    explore_values = tuple(args.explore_t) if args.explore_t else (40, 60, 80, 100, 120, 140, 160, 180, 200)
    result = run_comparison(config, explore_values)
    lines = {
        "local": {
            "in_sample": result.local.in_sample_mean,
            "future": result.local.future_mean,
        },
        "global": {
            str(T): {"in_sample": r.in_sample_mean, "future": r.future_mean}
            for T, r in result.global_by_budget.items()
        },
        "best_global_in_sample": result.best_global_in_sample,
        "best_global_future": result.best_global_future,
    }
    print(json.dumps(lines, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_validate_queue(args) -> int:
    config = _build_config(args)
    allocation = config.model.allocation
    capacity = args.capacity or allocation.capacity
    worst = 0.0
    for ratio in args.ratio:
        rate = simulate_queue_allocation(
            arrival_rate=ratio * args.servers, servers=args.servers,
            capacity=capacity, horizon=args.events, seed=config.seed,
        )
        from dataclasses import replace as _r

        target = _r(allocation, capacity=capacity).omega(ratio)
        rel = abs(rate - target) / target if target > 0 else abs(rate - target)
        worst = max(worst, rel)
        print(f"ratio={ratio:g} simulated={rate:.6f} curve={target:.6f} rel_err={rel:.4%}")
    if worst > args.tolerance:
        print(f"worst relative error {worst:.4%} exceeds tolerance {args.tolerance:.4%}")
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqmarket",
        description="Marketplace payment experimentation: equilibrium curves, "
                    "day simulation, local/global payment optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curves", help="emit mean-field curves as CSV")
    _add_common(p)
    p.add_argument("--p-min", type=float, default=5.0)
    p.add_argument("--p-max", type=float, default=60.0)
    p.add_argument("--p-points", type=int, default=100)
    p.add_argument("--d", type=float, action="append", help="context value (repeatable)")
    p.set_defaults(func=_cmd_curves)

    p = sub.add_parser("simulate-day", help="simulate a single market day")
    _add_common(p)
    p.add_argument("--p", type=float, default=20.0)
    p.add_argument("--zeta", type=float, default=0.5)
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--day", type=int, default=1)
    p.set_defaults(func=_cmd_simulate_day)

    p = sub.add_parser("optimize-local", help="run the local-perturbation learner")
    _add_common(p)
    p.set_defaults(func=_cmd_optimize_local)

    p = sub.add_parser("optimize-global", help="run the explore-then-exploit baseline")
    _add_common(p)
    p.add_argument("--explore-t", type=int, default=80)
    p.set_defaults(func=_cmd_optimize_global)

    p = sub.add_parser("oracle", help="compute the optimal payment")
    _add_common(p)
    p.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("compare", help="local learner versus global sweep")
    _add_common(p)
    p.add_argument("--explore-t", type=int, action="append",
                   help="exploration budget (repeatable; default sweep 40..200)")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("validate-queue", help="discrete-event check of the allocation curve")
    _add_common(p)
    p.add_argument("--ratio", type=float, action="append", default=None,
                   help="demand/supply ratio (repeatable)")
    p.add_argument("--servers", type=int, default=20)
    p.add_argument("--capacity", type=int, default=None)
    p.add_argument("--events", type=int, default=1_000_000)
    p.add_argument("--tolerance", type=float, default=0.01)
    p.set_defaults(func=_cmd_validate_queue)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "validate-queue" and not args.ratio:
        args.ratio = [0.5, 0.8, 1.0, 2.0]
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
