"""Restless arms (one-dimensional chain, recovering) and the joint top-V environment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# (theta0, theta1) per recovering-arm class A-D
RECOVERING_CLASSES = {
    "A": (10.0, 0.2),
    "B": (8.5, 0.4),
    "C": (7.0, 0.6),
    "D": (5.5, 0.8),
}
RECOVERING_Z_MAX = 100
ONEDIM_STATES = 100


def onedim_reward(s: int, n_states: int = ONEDIM_STATES, target: int | None = None) -> float:
    """``1 - ((s - target) / target)^2``; ``target`` defaults to the top state.

    A chain truncated to fewer states keeps ``target = 99`` so rewards match
    the first states of the full chain.
    """
    if not 0 <= s < n_states:
        raise ValueError(f"state must be in 0..{n_states - 1}, got {s}")
    target = n_states - 1 if target is None else target
    return 1.0 - ((s - target) / target) ** 2


def evenly_spaced_p(n: int, low: float = 0.2, high: float = 0.8) -> list[float]:
    if n < 2:
        raise ValueError("need at least two arms to space probabilities")
    return [low + i * (high - low) / (n - 1) for i in range(n)]


def recovering_reward(z: int, theta0: float, theta1: float, z_max: int = RECOVERING_Z_MAX) -> float:
    if not 1 <= z <= z_max:
        raise ValueError(f"waiting time must be in 1..{z_max}, got {z}")
    return theta0 * (1.0 - np.exp(-theta1 * z))


class Arm:
    """One restless arm with its own state and rng stream."""

    n_states: int
    state: int

    def step(self, a: int) -> float:
        raise NotImplementedError

    def encode(self, s: int | None = None) -> float:
        raise NotImplementedError

    def tabular(self) -> tuple[np.ndarray, np.ndarray]:
        """``(P[a, s, s'], R[s, a])`` indexed by ``state_index``."""
        raise NotImplementedError

    def state_index(self, s: int | None = None) -> int:
        raise NotImplementedError


@dataclass
class OneDimArm(Arm):
    """Birth-death chain on ``0..n_states-1``; activation pushes the state up.

    Failed moves leave the state unchanged. Reward depends on the current
    state only.
    """

    p: float
    q: float | None = None
    state: int = 0
    n_states: int = ONEDIM_STATES
    rng: np.random.Generator | None = None
    reward_target: int = ONEDIM_STATES - 1

    def __post_init__(self):
        if self.q is None:
            self.q = self.p
        if not 0 <= self.state < self.n_states:
            raise ValueError(f"state {self.state} outside 0..{self.n_states - 1}")

    def step(self, a: int) -> float:
        self.state, r = onedim_step(self.state, a, self.p, self.q, self.rng, self.n_states, self.reward_target)
        return r

    def encode(self, s=None) -> float:
        s = self.state if s is None else s
        return s / (self.n_states - 1)

    def state_index(self, s=None) -> int:
        return self.state if s is None else s

    def tabular(self):
        n = self.n_states
        P = np.zeros((2, n, n))
        R = np.zeros((n, 2))
        for s in range(n):
            R[s, :] = onedim_reward(s, n, self.reward_target)
            up, down = min(s + 1, n - 1), max(s - 1, 0)
            P[1, s, up] += self.p
            P[1, s, s] += 1.0 - self.p
            P[0, s, down] += self.q
            P[0, s, s] += 1.0 - self.q
        return P, R


def onedim_step(
    s: int, a: int, p: float, q: float, rng: np.random.Generator, n_states: int = ONEDIM_STATES, target: int | None = None
):
    reward = onedim_reward(s, n_states, target)
    if a == 1:
        nxt = min(s + 1, n_states - 1) if rng.random() < p else s
    else:
        nxt = max(s - 1, 0) if rng.random() < q else s
    return nxt, reward


@dataclass
class RecoveringArm(Arm):
    """State is the waiting time since the last activation, saturating at ``z_max``."""

    theta0: float
    theta1: float
    state: int = 1
    z_max: int = RECOVERING_Z_MAX
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if not 1 <= self.state <= self.z_max:
            raise ValueError(f"state {self.state} outside 1..{self.z_max}")

    @property
    def n_states(self) -> int:
        return self.z_max

    def step(self, a: int) -> float:
        self.state, r = recovering_step(self.state, a, self.theta0, self.theta1, self.z_max)
        return r

    def encode(self, s=None) -> float:
        s = self.state if s is None else s
        return s / self.z_max

    def state_index(self, s=None) -> int:
        return (self.state if s is None else s) - 1

    def tabular(self):
        n = self.z_max
        P = np.zeros((2, n, n))
        R = np.zeros((n, 2))
        for i in range(n):
            z = i + 1
            R[i, 1] = recovering_reward(z, self.theta0, self.theta1, self.z_max)
            P[1, i, 0] = 1.0
            P[0, i, min(z + 1, n) - 1] = 1.0
        return P, R


def recovering_step(z: int, a: int, theta0: float, theta1: float, z_max: int = RECOVERING_Z_MAX):
    if a == 1:
        return 1, recovering_reward(z, theta0, theta1, z_max)
    return min(z + 1, z_max), 0.0


class RmabEnv:
    """N independent arms of which exactly ``V`` are activated per step."""

    def __init__(self, arms: Sequence[Arm], activate: int):
        if not 1 <= activate <= len(arms):
            raise ValueError(f"need 1 <= V <= N, got V={activate}, N={len(arms)}")
        self.arms = list(arms)
        self.activate = int(activate)

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def states(self) -> list[int]:
        return [arm.state for arm in self.arms]

    def encoded(self) -> np.ndarray:
        return np.array([arm.encode() for arm in self.arms])

    def action_vector(self, activations) -> np.ndarray:
        idx = np.asarray(sorted(set(int(i) for i in activations)), dtype=np.int64)
        if len(idx) != len(list(activations)) or len(idx) != self.activate:
            raise ValueError(f"need exactly {self.activate} distinct arms, got {list(activations)}")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.n_arms):
            raise ValueError(f"arm index out of range in {list(activations)}")
        a = np.zeros(self.n_arms, dtype=np.int64)
        a[idx] = 1
        return a

    def step(self, activations) -> tuple[np.ndarray, np.ndarray]:
        """Apply the activation set; returns per-arm ``(actions, rewards)``."""
        a = self.action_vector(activations)
        rewards = np.array([arm.step(int(ai)) for arm, ai in zip(self.arms, a)])
        return a, rewards


def rmab_joint_step(env: RmabEnv, activations) -> tuple[np.ndarray, list[int]]:
    """Step every arm; returns per-arm rewards and next states."""
    _, rewards = env.step(activations)
    return rewards, env.states()


def make_onedim_env(n_arms: int, activate: int, rngs: Sequence[np.random.Generator], n_states: int = ONEDIM_STATES):
    ps = evenly_spaced_p(n_arms) if n_arms > 1 else [0.5]
    arms = [
        OneDimArm(p, p, state=int(rng.integers(n_states)), n_states=n_states, rng=rng)
        for p, rng in zip(ps, rngs)
    ]
    return RmabEnv(arms, activate)


def make_recovering_env(n_arms: int, activate: int, rngs: Sequence[np.random.Generator]):
    names = sorted(RECOVERING_CLASSES)
    arms = []
    for i, rng in enumerate(rngs[:n_arms]):
        theta0, theta1 = RECOVERING_CLASSES[names[i % len(names)]]
        arms.append(RecoveringArm(theta0, theta1, state=int(rng.integers(1, RECOVERING_Z_MAX + 1)), rng=rng))
    return RmabEnv(arms, activate)


RMAB_ENVS = {"onedim": make_onedim_env, "recovering": make_recovering_env}


def make_rmab_env(name: str, n_arms: int, activate: int, rngs: Sequence[np.random.Generator], **kw) -> RmabEnv:
    """Build a bandit; extra keywords (e.g. ``n_states`` for onedim) go to the factory."""
    try:
        factory = RMAB_ENVS[name]
    except KeyError:
        raise ValueError(f"unknown RMAB environment {name!r}; choose from {sorted(RMAB_ENVS)}") from None
    if len(rngs) < n_arms:
        raise ValueError("need one rng stream per arm")
    return factory(n_arms, activate, rngs, **kw)
