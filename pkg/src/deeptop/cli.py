"""Command line entry point: ``deeptop <command> ...``.

Commands
    train-mdp    --env {ev|inventory|mts|ev-grid}
    train-rmab   --env {onedim|recovering} --arms N --activate V
    train-arm    single isolated one-dimensional arm, writes learned vs exact indices
    oracle       grad-check-mdp | grad-check-rmab | whittle
    aggregate    <dir>, recompute aggregate.csv from run_*.csv

Failures print one JSON line ``{"error": ..., "message": ...}`` to stderr and
exit with status 2 (bad input) or 1 (anything else).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness, oracle
from .agent_rmab import index_table
from .envs import MDP_ENVS, RMAB_ENVS
from .envs.rmab import OneDimArm

SEED_ENV_VAR = "DEEPTOP_SEED"

# flag name -> config key for the shared training options
_TRAIN_FLAGS = {
    "timesteps": int,
    "runs": int,
    "seed": int,
    "hidden": str,
    "actor_lr": float,
    "critic_lr": float,
    "gamma": float,
    "epsilon": float,
    "tau": float,
    "batch_size": int,
    "warmup": int,
    "capacity": int,
    "reward_scale": float,
    "agent": str,
    "out_dir": str,
    "jobs": int,
}


def _add_train_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    for key, typ in _TRAIN_FLAGS.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deeptop", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-mdp", help="threshold actor-critic on a single MDP")
    p.add_argument("--env", choices=sorted(MDP_ENVS), default=None)
    _add_train_options(p)

    p = sub.add_parser("train-rmab", help="per-arm index learning on a restless bandit")
    p.add_argument("--env", choices=sorted(RMAB_ENVS), default=None)
    p.add_argument("--arms", type=int, default=None)
    p.add_argument("--activate", type=int, default=None)
    p.add_argument("--M", dest="M", type=float, default=None)
    p.add_argument("--n-states", dest="n_states", type=int, default=None)
    _add_train_options(p)

    p = sub.add_parser("train-arm", help="learn the index of one isolated one-dimensional arm")
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--n-states", dest="n_states", type=int, default=None)
    p.add_argument("--M", dest="M", type=float, default=None)
    _add_train_options(p)

    p = sub.add_parser("oracle", help="exact tabular checks")
    osub = p.add_subparsers(dest="mode", required=True)
    for mode in ("grad-check-mdp", "grad-check-rmab"):
        g = osub.add_parser(mode)
        g.add_argument("--specs", type=int, default=100)
        g.add_argument("--seed", type=int, default=0)
        g.add_argument("--gamma", type=float, default=0.9)
        g.add_argument("--M", dest="M", type=float, default=None)
    w = osub.add_parser("whittle")
    w.add_argument("--env", choices=["onedim"], default="onedim")
    w.add_argument("--p", type=float, required=True)
    w.add_argument("--q", type=float, default=None)
    w.add_argument("--gamma", type=float, default=0.99)
    w.add_argument("--M", dest="M", type=float, default=1.0)
    w.add_argument("--n-states", dest="n_states", type=int, default=100)

    p = sub.add_parser("aggregate", help="recompute aggregate.csv from per-run logs")
    p.add_argument("directory")
    return parser


def resolve_config(args: argparse.Namespace, extra_keys=()) -> harness.ExperimentConfig:
    overrides = {key: getattr(args, key) for key in (*_TRAIN_FLAGS, *extra_keys)}
    if overrides["seed"] is None and os.environ.get(SEED_ENV_VAR):
        overrides["seed"] = os.environ[SEED_ENV_VAR]
    return harness.load_config(args.config, overrides)


def _summary(cfg: harness.ExperimentConfig, logs) -> str:
    final = np.array([log.avg_reward[-1] for log in logs])
    return f"env={cfg.env} agent={cfg.agent} runs={len(logs)} final_avg_reward_100={final.mean():.6g} std={final.std():.6g} out_dir={cfg.out_dir}"


def cmd_train_mdp(args) -> int:
    cfg = resolve_config(args, ("env",))
    if cfg.env not in MDP_ENVS:
        raise harness.ConfigError(f"train-mdp needs an MDP env, got {cfg.env!r}")
    print(_summary(cfg, harness.run_experiment(cfg)))
    return 0


def cmd_train_rmab(args) -> int:
    cfg = resolve_config(args, ("env", "arms", "activate", "M", "n_states"))
    if cfg.env not in RMAB_ENVS:
        raise harness.ConfigError(f"train-rmab needs a bandit env, got {cfg.env!r}")
    print(_summary(cfg, harness.run_experiment(cfg)))
    return 0


def cmd_train_arm(args) -> int:
    """Writes ``run_<i>.csv`` (rewards) and ``index_<i>.csv`` (state, learned, exact)."""
    args.env = "onedim"
    cfg = resolve_config(args, ("env", "M", "n_states"))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(harness.format_config(cfg))
    q = args.p if args.q is None else args.q
    ref = OneDimArm(args.p, q, n_states=cfg.n_states)
    P, R = ref.tabular()
    exact = oracle.whittle_indices(oracle.TabularSpec(P, R, cfg.activation_bound, cfg.gamma))
    errors = []
    for run in range(cfg.runs):
        learner, arm, rewards = harness.single_arm_run(cfg, run, args.p, q)
        (out / f"run_{run}.csv").write_text(harness.RunLog.from_rewards(run, rewards).to_csv())
        learned = np.array([v for _, v in index_table(learner, arm)])
        with open(out / f"index_{run}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("state", "learned_index", "whittle_index"))
            for s, (lv, ev) in enumerate(zip(learned, exact)):
                w.writerow((s, repr(float(lv)), repr(float(ev))))
        errors.append(np.abs(learned - exact).mean())
    print(f"runs={cfg.runs} mean_abs_error={np.mean(errors):.6g} out_dir={cfg.out_dir}")
    return 0


def cmd_oracle(args) -> int:
    if args.mode == "whittle":
        q = args.p if args.q is None else args.q
        P, R = OneDimArm(args.p, q, n_states=args.n_states).tabular()
        idx = oracle.whittle_indices(oracle.TabularSpec(P, R, args.M, args.gamma))
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(("state", "index"))
        for s, v in enumerate(idx):
            w.writerow((s, repr(float(v))))
        return 0
    if args.mode == "grad-check-mdp":
        report = oracle.grad_check_mdp(args.specs, args.seed, args.gamma, 1.0 if args.M is None else args.M)
    else:
        report = oracle.grad_check_rmab(args.specs, args.seed, args.gamma, 10.0 if args.M is None else args.M)
    print(report.line())
    return 0 if report.passed else 1


def cmd_aggregate(args) -> int:
    table = harness.aggregate_dir(args.directory)
    print(f"aggregated timesteps={len(table)} out={Path(args.directory) / 'aggregate.csv'}")
    return 0


COMMANDS = {
    "train-mdp": cmd_train_mdp,
    "train-rmab": cmd_train_rmab,
    "train-arm": cmd_train_arm,
    "oracle": cmd_oracle,
    "aggregate": cmd_aggregate,
}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _fail("UsageError", "invalid command line (see usage above)", 2)
    try:
        return COMMANDS[args.command](args)
    except (harness.ConfigError, oracle.NonIndexableError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except (OSError, RuntimeError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
