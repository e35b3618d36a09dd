"""Command-line interface.

Subcommands:
  baseline  — train and score the policy for the initial distribution
  optimize  — full bilevel run (outer optimizer over the phi space)
  evaluate  — score a saved policy file against a parameterization
  report    — summarize a record file

Exit codes: 0 success, 2 config error, 3 training diverged, 4 outer
optimization failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .config import ExperimentConfig, config_snapshot, default_config, parse_config_file
from .envsim import make_real_params, make_spec
from .errors import (
    ConfigError,
    OptimizationFailedError,
    RecordParseError,
    TrainingDivergedError,
)
from .harness import evaluate_real, report, run_baseline, run_experiment
from .policy import PolicySpec, load_policy, save_policy
from .records import RecordWriter

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_OUTER_FAILED = 4


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config_file(args.config) if args.config else default_config(args.env)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seeds"] = (args.seed,)
    if getattr(args, "out", None):
        updates["output_path"] = args.out
    if getattr(args, "parallel", None) is not None:
        updates["parallel_candidates"] = args.parallel
    if getattr(args, "outer", None):
        updates["outer_method"] = {"cem": "cem", "sf": "score_function"}[args.outer]
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
        cfg.validate()
    return cfg


def _cmd_baseline(args) -> int:
    cfg = _load_config(args)
    writer = RecordWriter(cfg.output_path, config_snapshot(cfg)) if args.out else None
    try:
        for i, seed in enumerate(cfg.seeds):
            result = run_baseline(cfg, seed, writer)
            print(f"seed {seed}: baseline score {result.score:.3f} "
                  f"(stderr {result.stderr:.3f})")
            if args.save_policy and i == 0:
                env_spec = make_spec(cfg.env_id)
                save_policy(args.save_policy,
                            PolicySpec(env_spec.state_dim, env_spec.action_dim),
                            result.policy)
                print(f"policy saved to {args.save_policy}")
    finally:
        if writer is not None:
            writer.close()
    return EXIT_OK


def _cmd_optimize(args) -> int:
    cfg = _load_config(args)
    summary = run_experiment(cfg)
    print(report(summary.record_path))
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    spec = make_spec(cfg.env_id)
    _, params = load_policy(args.policy)
    multipliers = (
        np.array([float(x) for x in args.multipliers.split(",")])
        if args.multipliers else cfg.real_gap_multipliers
    )
    m_real = make_real_params(spec, multipliers)
    episodes = args.episodes if args.episodes is not None else cfg.eval_episodes
    mean, stderr = evaluate_real(
        params, spec, m_real, episodes, cfg.eval_discount, cfg.eval_gamma,
        args.seed if args.seed is not None else 0,
    )
    print(f"mean return {mean:.3f} +/- {stderr:.3f} (stderr, {episodes} episodes)")
    return EXIT_OK


def _cmd_report(args) -> int:
    print(report(args.record, plot_path=args.out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drtune",
        description="Bilevel tuning of domain-randomization distributions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_outer=True):
        p.add_argument("--config", help="experiment config file (key = value lines)")
        p.add_argument("--env", default="cartpole", choices=("cartpole", "pointmass"),
                       help="environment when no config file is given")
        p.add_argument("--seed", type=int, help="override: run this single master seed")
        p.add_argument("--out", help="override: record output path")
        p.add_argument("--parallel", type=int, help="override: concurrent candidate evaluations")
        if with_outer:
            p.add_argument("--outer", choices=("cem", "sf"), help="override: outer method")

    p = sub.add_parser("baseline", help="train/evaluate the initial distribution")
    add_common(p)
    p.add_argument("--save-policy", help="write the first seed's trained policy (.npz)")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("optimize", help="full bilevel optimization run")
    add_common(p)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("evaluate", help="score a saved policy against a parameterization")
    add_common(p)
    p.add_argument("--policy", required=True, help="policy file from --save-policy")
    p.add_argument("--episodes", type=int, help="override: evaluation episodes")
    p.add_argument("--multipliers", help="comma-separated parameter multipliers")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="summarize a record file")
    p.add_argument("record", help="record file from an optimize run")
    p.add_argument("--out", help="path for the best-so-far plot data")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RecordParseError as exc:
        print(f"record error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OptimizationFailedError as exc:
        print(f"outer optimization failed: {exc}", file=sys.stderr)
        return EXIT_OUTER_FAILED


if __name__ == "__main__":
    sys.exit(main())
