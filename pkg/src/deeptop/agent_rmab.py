"""Per-arm threshold actor-critic that learns Whittle-index functions.

Each arm owns an actor (state -> index in ``(-M, M)``), a critic over
``(activation cost, state)`` with both action values as outputs, a target
critic, a replay memory and an rng stream. Arms interact only through the
joint top-V activation decision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .envs.rmab import Arm, RmabEnv
from .replay import Batch, ReplayMemory
from .types import ScalarVectorState, Transition
from .updates import critic_gradient, greedy_target, threshold_actor_gradient, threshold_value


@dataclass
class ArmLearner:
    actor: nn.MlpParams
    critic: nn.MlpParams
    target_critic: nn.MlpParams
    actor_opt: nn.AdamState
    critic_opt: nn.AdamState
    memory: ReplayMemory
    M: float
    rng: np.random.Generator
    gamma: float = 0.99
    tau: float = 0.001
    batch_size: int = 64
    warmup: int = 1000

    @classmethod
    def create(
        cls,
        M: float,
        rng: np.random.Generator,
        hidden: Sequence[int] = (128, 128),
        actor_lr: float = 1e-4,
        critic_lr: float = 1e-3,
        capacity: int = 100_000,
        **kw,
    ) -> "ArmLearner":
        actor = nn.init_params([1, *hidden, 1], rng)
        critic = nn.init_params([2, *hidden, 2], rng)
        return cls(
            actor,
            critic,
            critic.copy(),
            nn.AdamState.for_params(actor, actor_lr),
            nn.AdamState.for_params(critic, critic_lr),
            ReplayMemory(capacity),
            M,
            rng,
            **kw,
        )

    def index(self, s_enc) -> np.ndarray:
        """Learned index for encoded states (array in, array out)."""
        return threshold_value(self.actor, np.asarray(s_enc, dtype=np.float64).reshape(-1, 1), self.M)

    def critic_input(self, lam, s_enc) -> np.ndarray:
        return np.column_stack([np.asarray(lam) / self.M, s_enc])

    @property
    def learning(self) -> bool:
        return len(self.memory) >= max(self.warmup, self.batch_size)


def index_values(learners: Sequence[ArmLearner], states_enc: Sequence[float]) -> np.ndarray:
    return np.array([ln.index([s])[0] for ln, s in zip(learners, states_enc)])


def select_arms(values, V: int, epsilon: float, rng: np.random.Generator) -> list[int]:
    """Top-V arms (ties to the lower index), or a uniform V-subset with prob. epsilon."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if not 1 <= V <= n:
        raise ValueError(f"cannot activate {V} of {n} arms")
    if rng.random() < epsilon:
        return sorted(int(i) for i in rng.choice(n, size=V, replace=False))
    order = np.argsort(-values, kind="stable")
    return sorted(int(i) for i in order[:V])


def rmab_td_targets(learner: ArmLearner, batch: Batch, lambdas: np.ndarray) -> np.ndarray:
    """``r - lam * a + gamma * max_a' Q'_lam(s', a')`` with the target critic at the same cost."""
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(np.abs(lambdas) > learner.M):
        raise ValueError(f"activation costs must lie in [-{learner.M}, {learner.M}]")
    x_next = learner.critic_input(lambdas, batch.next_v[:, 0])
    return batch.reward - lambdas * batch.action + learner.gamma * greedy_target(learner.target_critic, x_next)


def critic_update_rmab(learner: ArmLearner, batch: Batch, lambdas: np.ndarray) -> np.ndarray:
    """Descent step on the per-cost TD error with net reward ``r - lam * a``."""
    y = rmab_td_targets(learner, batch, lambdas)
    grad, err = critic_gradient(learner.critic, learner.critic_input(lambdas, batch.v[:, 0]), batch.action, y)
    learner.critic, learner.critic_opt = nn.adam_step(learner.critic, learner.critic_opt, grad)
    return err


def arm_gaps(learner: ArmLearner, s_enc: np.ndarray, index: np.ndarray | None = None) -> np.ndarray:
    """Critic action gap at the arm's own index, ``Q_mu(s)(s, 1) - Q_mu(s)(s, 0)``."""
    m = learner.index(s_enc) if index is None else index
    q = nn.mlp_forward(learner.critic, learner.critic_input(m, s_enc))
    return q[:, 1] - q[:, 0]


def actor_update_rmab(learner: ArmLearner, batch: Batch) -> np.ndarray:
    s = batch.v[:, :1]
    trace = nn.forward_trace(learner.actor, s)
    gaps = arm_gaps(learner, s[:, 0], learner.M * np.tanh(trace[-1][:, 0]))
    grad = threshold_actor_gradient(learner.actor, s, gaps, bound=learner.M, trace=trace)
    learner.actor, learner.actor_opt = nn.adam_step(learner.actor, learner.actor_opt, grad, ascend=True)
    return gaps


def update_arm(learner: ArmLearner) -> None:
    """Critic, actor and target updates from one minibatch and a fresh cost batch."""
    batch = learner.memory.sample(learner.batch_size, learner.rng)
    lambdas = learner.rng.uniform(-learner.M, learner.M, learner.batch_size)
    critic_update_rmab(learner, batch, lambdas)
    actor_update_rmab(learner, batch)
    learner.target_critic = nn.soft_update(learner.target_critic, learner.critic, learner.tau)


def _arm_state(enc: float) -> ScalarVectorState:
    # arms have no scalar state of their own; the cost is sampled at update time
    return ScalarVectorState(0.0, np.array([enc]))


def train_step_rmab(
    learners: Sequence[ArmLearner], env: RmabEnv, epsilon: float, rng: np.random.Generator
) -> tuple[float, list[int]]:
    """One joint step: choose V arms, step all arms, store and update each arm."""
    enc = env.encoded()
    if all(ln.learning for ln in learners):
        act = select_arms(index_values(learners, enc), env.activate, epsilon, rng)
    else:
        act = select_arms(np.zeros(env.n_arms), env.activate, 1.0, rng)
    actions, rewards = env.step(act)
    enc_next = env.encoded()
    for ln, s, a, r, s2 in zip(learners, enc, actions, rewards, enc_next):
        ln.memory.push(Transition(_arm_state(s), int(a), float(r), _arm_state(s2)))
        if ln.learning:
            update_arm(ln)
    return float(rewards.sum()), act


def random_step_rmab(env: RmabEnv, rng: np.random.Generator) -> tuple[float, list[int]]:
    act = select_arms(np.zeros(env.n_arms), env.activate, 1.0, rng)
    _, rewards = env.step(act)
    return float(rewards.sum()), act


def train_arm(learner: ArmLearner, arm: Arm, steps: int) -> np.ndarray:
    """Train one arm in isolation under a uniformly random behaviour policy.

    With a single arm the top-V rule would always activate it and the
    resting action would never be observed, so actions are drawn uniformly
    from the learner's rng instead. Returns the per-step rewards.
    """
    rewards = np.empty(steps)
    for t in range(steps):
        s = arm.encode()
        a = int(learner.rng.integers(2))
        rewards[t] = arm.step(a)
        learner.memory.push(Transition(_arm_state(s), a, float(rewards[t]), _arm_state(arm.encode())))
        if learner.learning:
            update_arm(learner)
    return rewards


def index_table(learner: ArmLearner, arm: Arm) -> list[tuple[int, float]]:
    """``(state, learned index)`` for every state of ``arm``."""
    if hasattr(arm, "z_max"):
        states = list(range(1, arm.n_states + 1))
    else:
        states = list(range(arm.n_states))
    vals = learner.index([arm.encode(s) for s in states])
    return list(zip(states, (float(v) for v in vals)))
