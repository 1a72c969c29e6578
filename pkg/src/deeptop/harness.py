"""Experiment driver: config files, seeded runs, CSV logs and aggregation.

Run ``i`` of an experiment with base seed ``b`` draws all of its randomness
from ``SeedSequence(b + i)``. That sequence is split with ``spawn`` into
independent Philox streams (environment, network init, behaviour, and one
per arm for bandits), so runs are reproducible whether they execute in
sequence or in parallel worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import agent_mdp, agent_rmab
from .envs import MDP_ENVS, RMAB_ENVS, make_mdp_env, make_rmab_env
from .envs.rmab import OneDimArm

RUN_HEADER = ("run", "timestep", "reward", "avg_reward_100")
AGGREGATE_HEADER = ("timestep", "mean", "std")
TRAILING_WINDOW = 100
AGENTS = ("deeptop", "random")

# range [-M, M] of the scalar state / activation cost; thresholds are squashed into it
DEFAULT_M = {"onedim": 1.0, "recovering": 10.0, "ev": 2.0, "ev-grid": 2.0, "inventory": 1.0, "mts": 1.0}
# rewards fed to the MDP critic are multiplied by this; logged rewards stay raw
DEFAULT_REWARD_SCALE = {"ev": 1.0, "ev-grid": 1.0, "inventory": 1e-3, "mts": 1e-2}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "ev"
    agent: str = "deeptop"
    timesteps: int = 20_000
    runs: int = 1
    seed: int = 0
    hidden: tuple[int, ...] = (128, 128)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    gamma: float = 0.99
    epsilon: float = 0.05
    tau: float = 0.001
    batch_size: int = 64
    warmup: int = 1000
    capacity: int = 100_000
    arms: int = 10
    activate: int = 3
    M: float | None = None
    n_states: int = 100
    reward_scale: float | None = None
    out_dir: str = "runs"
    jobs: int = 1

    def __post_init__(self):
        if self.env not in MDP_ENVS and self.env not in RMAB_ENVS:
            raise ConfigError(f"unknown env {self.env!r}; choose from {sorted([*MDP_ENVS, *RMAB_ENVS])}")
        if self.agent not in AGENTS:
            raise ConfigError(f"unknown agent {self.agent!r}; choose from {list(AGENTS)}")
        for name in ("timesteps", "runs", "batch_size", "capacity", "arms", "activate", "n_states", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.is_rmab and not 1 <= self.activate <= self.arms:
            raise ConfigError(f"activate must lie in 1..arms, got activate={self.activate}, arms={self.arms}")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError(f"hidden sizes must be positive, got {self.hidden}")

    @property
    def is_rmab(self) -> bool:
        return self.env in RMAB_ENVS

    @property
    def activation_bound(self) -> float:
        if self.M is not None:
            return float(self.M)
        return DEFAULT_M.get(self.env, 1.0)

    @property
    def effective_reward_scale(self) -> float:
        if self.reward_scale is not None:
            return float(self.reward_scale)
        return DEFAULT_REWARD_SCALE.get(self.env, 1.0)

    def learner_kwargs(self) -> dict:
        return dict(
            hidden=self.hidden,
            actor_lr=self.actor_lr,
            critic_lr=self.critic_lr,
            capacity=self.capacity,
            gamma=self.gamma,
            tau=self.tau,
            batch_size=self.batch_size,
            warmup=self.warmup,
        )


def _parse_hidden(text: str) -> tuple[int, ...]:
    parts = [p for p in text.replace("[", "").replace("]", "").replace(" ", "").split(",") if p]
    return tuple(int(p) for p in parts)


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("none", "") else float(text)


_PARSERS = {
    "str": str,
    "int": int,
    "float": float,
    "tuple[int, ...]": _parse_hidden,
    "float | None": _optional_float,
}
FIELD_PARSERS = {f.name: _PARSERS[f.type] for f in dataclasses.fields(ExperimentConfig)}


def parse_value(key: str, text) -> object:
    if key not in FIELD_PARSERS:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(text, str):
        return text
    try:
        return FIELD_PARSERS[key](text.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {text!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = parse_value(key, value)
    return values


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """File values, then ``overrides`` on top; anything missing keeps its default.

    Override values may be strings (parsed like file values) or already typed.
    ``None`` overrides are ignored so unset CLI flags fall through.
    """
    values = parse_config_text(Path(path).read_text()) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = parse_value(key, value)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "hidden":
            value = ",".join(str(h) for h in value)
        elif value is None:
            value = "none"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ seeding


def run_streams(seed: int, run: int, n: int) -> list[np.random.Generator]:
    """``n`` independent Philox generators for run ``run`` of base seed ``seed``."""
    children = np.random.SeedSequence(seed + run).spawn(n)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


# ------------------------------------------------------------------ logs


@dataclass
class RunLog:
    run: int
    timesteps: np.ndarray
    rewards: np.ndarray
    avg_reward: np.ndarray

    @classmethod
    def from_rewards(cls, run: int, rewards: Sequence[float]) -> "RunLog":
        rewards = np.asarray(rewards, dtype=np.float64)
        return cls(run, np.arange(1, len(rewards) + 1), rewards, trailing_mean(rewards))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RUN_HEADER)
        for t, r, m in zip(self.timesteps, self.rewards, self.avg_reward):
            w.writerow((self.run, int(t), repr(float(r)), repr(float(m))))
        return buf.getvalue()

    @classmethod
    def read_csv(cls, path) -> "RunLog":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no rows")
        runs = {int(r["run"]) for r in rows}
        if len(runs) != 1:
            raise ValueError(f"{path}: mixes runs {sorted(runs)}")
        return cls(
            runs.pop(),
            np.array([int(r["timestep"]) for r in rows]),
            np.array([float(r["reward"]) for r in rows]),
            np.array([float(r["avg_reward_100"]) for r in rows]),
        )


def trailing_mean(rewards: np.ndarray, window: int = TRAILING_WINDOW) -> np.ndarray:
    """Mean of the last ``window`` rewards up to each step (fewer at the start)."""
    cs = np.concatenate([[0.0], np.cumsum(rewards)])
    t = np.arange(1, len(rewards) + 1)
    start = np.maximum(t - window, 0)
    return (cs[t] - cs[start]) / (t - start)


def aggregate_runs(logs: Sequence[RunLog]) -> np.ndarray:
    """Rows ``(timestep, mean, std)`` of the trailing average across runs.

    ``std`` is the population standard deviation (``ddof=0``).
    """
    if not logs:
        raise ValueError("no runs to aggregate")
    steps = logs[0].timesteps
    for log in logs[1:]:
        if not np.array_equal(log.timesteps, steps):
            raise ValueError(f"run {log.run} timesteps do not align with run {logs[0].run}")
    stacked = np.stack([log.avg_reward for log in logs])
    return np.column_stack([steps, stacked.mean(axis=0), stacked.std(axis=0)])


def aggregate_csv(table: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_HEADER)
    for t, m, s in table:
        w.writerow((int(t), repr(float(m)), repr(float(s))))
    return buf.getvalue()


# ------------------------------------------------------------------ runs


def train_mdp_run(cfg: ExperimentConfig, run: int) -> np.ndarray:
    env_rng, init_rng, act_rng = run_streams(cfg.seed, run, 3)
    env = make_mdp_env(cfg.env, env_rng)
    rewards = np.empty(cfg.timesteps)
    if cfg.agent == "random":
        for t in range(cfg.timesteps):
            rewards[t] = agent_mdp.random_step(env, act_rng)[0]
        return rewards
    agent = agent_mdp.MdpAgent.create(
        env.vector_dim,
        init_rng,
        hidden=cfg.hidden,
        actor_lr=cfg.actor_lr,
        critic_lr=cfg.critic_lr,
        capacity=cfg.capacity,
        gamma=cfg.gamma,
        epsilon=cfg.epsilon,
        tau=cfg.tau,
        batch_size=cfg.batch_size,
        warmup=cfg.warmup,
        reward_scale=cfg.effective_reward_scale,
        bound=cfg.activation_bound,
    )
    for t in range(cfg.timesteps):
        rewards[t] = agent_mdp.train_step(agent, env, act_rng)[0]
    return rewards


def make_learners(cfg: ExperimentConfig, rngs: Sequence[np.random.Generator]) -> list[agent_rmab.ArmLearner]:
    return [agent_rmab.ArmLearner.create(cfg.activation_bound, rng, **cfg.learner_kwargs()) for rng in rngs]


def train_rmab(cfg: ExperimentConfig, run: int):
    """One bandit run; returns ``(learners, env, rewards)``, learners ``None`` for the random agent."""
    n = cfg.arms
    streams = run_streams(cfg.seed, run, 1 + 2 * n)
    act_rng, arm_rngs, learner_rngs = streams[0], streams[1 : 1 + n], streams[1 + n :]
    kw = {"n_states": cfg.n_states} if cfg.env == "onedim" else {}
    env = make_rmab_env(cfg.env, n, cfg.activate, arm_rngs, **kw)
    rewards = np.empty(cfg.timesteps)
    if cfg.agent == "random":
        for t in range(cfg.timesteps):
            rewards[t] = agent_rmab.random_step_rmab(env, act_rng)[0]
        return None, env, rewards
    learners = make_learners(cfg, learner_rngs)
    for t in range(cfg.timesteps):
        rewards[t] = agent_rmab.train_step_rmab(learners, env, cfg.epsilon, act_rng)[0]
    return learners, env, rewards


def train_rmab_run(cfg: ExperimentConfig, run: int) -> np.ndarray:
    return train_rmab(cfg, run)[2]


def run_once(cfg: ExperimentConfig, run: int) -> RunLog:
    rewards = train_rmab_run(cfg, run) if cfg.is_rmab else train_mdp_run(cfg, run)
    return RunLog.from_rewards(run, rewards)


INDEX_HEADER = ("arm", "state", "index")


def index_csv(learners, env) -> str:
    """Learned index of every state of every arm, one row per ``(arm, state)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INDEX_HEADER)
    for i, (ln, arm) in enumerate(zip(learners, env.arms)):
        for s, v in agent_rmab.index_table(ln, arm):
            w.writerow((i, s, repr(v)))
    return buf.getvalue()


def _run_and_write(cfg: ExperimentConfig, run: int) -> RunLog:
    """Write ``run_<i>.csv``; trained bandit runs also write ``index_<i>.csv``."""
    out = Path(cfg.out_dir)
    if cfg.is_rmab:
        learners, env, rewards = train_rmab(cfg, run)
        if learners is not None:
            (out / f"index_{run}.csv").write_text(index_csv(learners, env))
        log = RunLog.from_rewards(run, rewards)
    else:
        log = run_once(cfg, run)
    (out / f"run_{run}.csv").write_text(log.to_csv())
    return log


def run_experiment(cfg: ExperimentConfig) -> list[RunLog]:
    """Execute all runs, write ``run_<i>.csv``, ``aggregate.csv`` and ``config.txt``.

    Trained bandit runs also write ``index_<i>.csv`` with the learned index per arm and state.
    """
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(format_config(cfg))
    except OSError as exc:
        raise ConfigError(f"cannot write to output directory {out}: {exc}") from None
    runs = range(cfg.runs)
    if cfg.jobs > 1 and cfg.runs > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, cfg.runs)) as pool:
            logs = list(pool.map(_run_and_write, [cfg] * cfg.runs, runs))
    else:
        logs = [_run_and_write(cfg, r) for r in runs]
    (out / "aggregate.csv").write_text(aggregate_csv(aggregate_runs(logs)))
    return logs


def aggregate_dir(directory) -> np.ndarray:
    """Recompute ``aggregate.csv`` from the ``run_*.csv`` files in ``directory``."""
    d = Path(directory)
    files = sorted(d.glob("run_*.csv"))
    if not files:
        raise ValueError(f"no run_*.csv files in {d}")
    table = aggregate_runs([RunLog.read_csv(f) for f in files])
    (d / "aggregate.csv").write_text(aggregate_csv(table))
    return table


# ------------------------------------------------------------------ single arm


def single_arm_run(cfg: ExperimentConfig, run: int, p: float = 0.5, q: float | None = None):
    """Train one isolated one-dimensional arm; returns ``(learner, arm, rewards)``."""
    arm_rng, learner_rng = run_streams(cfg.seed, run, 2)
    arm = OneDimArm(p, q, state=int(arm_rng.integers(cfg.n_states)), n_states=cfg.n_states, rng=arm_rng)
    learner = make_learners(cfg, [learner_rng])[0]
    rewards = agent_rmab.train_arm(learner, arm, cfg.timesteps)
    return learner, arm, rewards
