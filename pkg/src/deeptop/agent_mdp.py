"""Threshold actor-critic for MDPs whose state splits into a scalar and a vector part.

The actor maps the vector part to a threshold; the policy activates when the
threshold exceeds the scalar part. The critic maps ``(scalar, vector)`` to
both action values at once. With a ``bound`` M the threshold is squashed to
``M * tanh``; thresholds beyond the scalar's range ``[-M, M]`` all act alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nn
from .replay import Batch, ReplayMemory
from .types import ScalarVectorState, Transition
from .updates import critic_gradient, greedy_target, threshold_actor_gradient, threshold_value


@dataclass
class MdpAgent:
    actor: nn.MlpParams
    critic: nn.MlpParams
    target_critic: nn.MlpParams
    actor_opt: nn.AdamState
    critic_opt: nn.AdamState
    memory: ReplayMemory
    gamma: float = 0.99
    epsilon: float = 0.05
    tau: float = 0.001
    batch_size: int = 64
    warmup: int = 1000
    reward_scale: float = 1.0
    bound: float | None = None

    @classmethod
    def create(
        cls,
        vector_dim: int,
        rng: np.random.Generator,
        hidden: Sequence[int] = (128, 128),
        actor_lr: float = 1e-4,
        critic_lr: float = 1e-3,
        capacity: int = 100_000,
        **kw,
    ) -> "MdpAgent":
        actor = nn.init_params([vector_dim, *hidden, 1], rng)
        critic = nn.init_params([1 + vector_dim, *hidden, 2], rng)
        return cls(
            actor,
            critic,
            critic.copy(),
            nn.AdamState.for_params(actor, actor_lr),
            nn.AdamState.for_params(critic, critic_lr),
            ReplayMemory(capacity),
            **kw,
        )

    def threshold(self, v) -> np.ndarray:
        return threshold_value(self.actor, np.atleast_2d(v), self.bound)

    def q_values(self, lam, v) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
        return nn.mlp_forward(self.critic, np.column_stack([lam, np.atleast_2d(v)]))

    @property
    def learning(self) -> bool:
        return len(self.memory) >= max(self.warmup, self.batch_size)


def select_action(agent: MdpAgent, s: ScalarVectorState, rng: np.random.Generator) -> int:
    """Epsilon-greedy around the threshold rule ``1(mu(v) > lam)``."""
    if rng.random() < agent.epsilon:
        return int(rng.integers(2))
    return int(agent.threshold(s.v)[0] > s.lam)


def critic_update(agent: MdpAgent, batch: Batch) -> np.ndarray:
    """One Adam descent step on the squared TD error; returns the TD errors."""
    x = np.column_stack([batch.lam, batch.v])
    x_next = np.column_stack([batch.next_lam, batch.next_v])
    y = batch.reward + agent.gamma * greedy_target(agent.target_critic, x_next)
    grad, err = critic_gradient(agent.critic, x, batch.action, y)
    agent.critic, agent.critic_opt = nn.adam_step(agent.critic, agent.critic_opt, grad)
    return err


def actor_gaps(agent: MdpAgent, v: np.ndarray, thresholds: np.ndarray | None = None) -> np.ndarray:
    """Critic ``Q(mu(v), v, 1) - Q(mu(v), v, 0)`` for each row of ``v``."""
    m = agent.threshold(v) if thresholds is None else thresholds
    q = nn.mlp_forward(agent.critic, np.column_stack([m, v]))
    return q[:, 1] - q[:, 0]


def actor_update(agent: MdpAgent, batch: Batch) -> np.ndarray:
    """One Adam ascent step along the sampled threshold policy gradient."""
    trace = nn.forward_trace(agent.actor, batch.v)
    z = trace[-1][:, 0]
    gaps = actor_gaps(agent, batch.v, z if agent.bound is None else agent.bound * np.tanh(z))
    grad = threshold_actor_gradient(agent.actor, batch.v, gaps, bound=agent.bound, trace=trace)
    agent.actor, agent.actor_opt = nn.adam_step(agent.actor, agent.actor_opt, grad, ascend=True)
    return gaps


def train_step(agent: MdpAgent, env, rng: np.random.Generator) -> tuple[float, int]:
    """Act once, store the transition and, after warmup, update critic, actor, target.

    Returns the raw environment reward and the action taken.
    """
    s = env.observe()
    if agent.learning:
        a = select_action(agent, s, rng)
    else:
        a = int(rng.integers(2))
    r = env.step(a)
    agent.memory.push(Transition(s, a, r * agent.reward_scale, env.observe()))
    if agent.learning:
        batch = agent.memory.sample(agent.batch_size, rng)
        critic_update(agent, batch)
        actor_update(agent, batch)
        agent.target_critic = nn.soft_update(agent.target_critic, agent.critic, agent.tau)
    return r, a


def random_step(env, rng: np.random.Generator) -> tuple[float, int]:
    """Baseline: uniformly random action."""
    a = int(rng.integers(2))
    return env.step(a), a
