"""Command line entry point for experiment runs and episode-budget sweeps."""

from __future__ import annotations

import argparse
import sys

from .harness import config_from_values, parse_config_file, run, sweep


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asvl",
        description="Stage-based V-learning experiments on aggregative Markov games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one configuration over one or more seeds")
    _add_common(run_p)
    run_p.add_argument("--episodes", type=int, default=None, help="episodes per seed")
    run_p.add_argument("--checkpoints", default=None,
                       help="comma-separated episode counts at which to certify")

    sweep_p = sub.add_parser("sweep", help="certify gaps over a grid of episode budgets")
    _add_common(sweep_p)
    sweep_p.add_argument("--grid", required=True,
                         help="comma-separated episode budgets, e.g. 2500,5000,10000,20000")
    return parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key = value config file; flags override it")
    p.add_argument("--env", default=None, help="'fishermen' or a path to a game json file")
    p.add_argument("--seed", type=int, default=None, help="single seed")
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--algo", default=None, choices=("asvl", "centralized-q", "independent-q"))
    p.add_argument("--fluctuation", default=None, choices=("cv", "mad", "none"))
    p.add_argument("--lambda-min", dest="lambda_min", type=float, default=None)
    p.add_argument("--cv-max", dest="cv_max", type=float, default=None)
    p.add_argument("--mad-max", dest="mad_max", type=float, default=None)
    p.add_argument("--iota", type=float, default=None,
                   help="log-confidence constant; defaults to the standard formula")
    p.add_argument("--p", type=float, default=None, help="failure probability for the default iota")
    p.add_argument("--bonus-scale", dest="bonus_scale", type=float, default=None)
    p.add_argument("--out", default=None, help="output directory (default: runs)")
    p.add_argument("--compact-store", dest="compact_store", action="store_true", default=None,
                   help="keep stage-final policies only (certificates lose per-visit detail)")
    p.add_argument("--log-samples", dest="log_samples", action="store_true", default=None,
                   help="record realized actions and rewards (enables lower estimates)")
    p.add_argument("--save-store", dest="save_store", action="store_true", default=None,
                   help="dump the snapshot store to snapshots_<seed>.json")
    p.add_argument("--initial-state", dest="initial_state", default=None,
                   help="fishermen initial stock state, s_h or s_l")
    p.add_argument("--ma-window", dest="ma_window", type=int, default=None)
    p.add_argument("--workers", type=int, default=None, help="seed-parallel worker processes")


def _collect(args: argparse.Namespace) -> dict:
    if getattr(args, "seed", None) is not None and getattr(args, "seeds", None) is not None:
        raise ValueError("invalid value for 'seed': give either --seed or --seeds, not both")
    values: dict = {}
    if args.config is not None:
        values.update(parse_config_file(args.config))
    for key in ("env", "episodes", "seed", "seeds", "algo", "fluctuation",
                "lambda_min", "cv_max", "mad_max", "iota", "p", "bonus_scale",
                "checkpoints", "out", "compact_store", "log_samples",
                "save_store", "initial_state", "ma_window", "workers"):
        given = getattr(args, key, None)
        if given is not None:
            values[key] = given
            if key == "seed":
                values.pop("seeds", None)
            elif key == "seeds":
                values.pop("seed", None)
    return values


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        values = _collect(args)
        if args.command == "sweep":
            grid = [int(x) for x in str(args.grid).split(",") if x.strip()]
            config = config_from_values(values)
            rows, exponent = sweep(config, grid)
            for K, gap in rows:
                print(f"K={K} median_gap={gap!r}")
            print(f"fitted_exponent={exponent!r}")
        else:
            config = config_from_values(values)
            result = run(config)
            for res in result.seed_results:
                print(f"seed {res.seed}: rewards -> {res.rewards_path}")
            if result.certificates_path is not None:
                print(f"certificates -> {result.certificates_path}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
