"""Fixed-capacity ring buffer of transitions with uniform minibatch sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import ScalarVectorState, Transition


@dataclass
class Batch:
    """Column view of sampled transitions; ``lam``/``v`` describe ``s_t``."""

    lam: np.ndarray
    v: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_lam: np.ndarray
    next_v: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.action)


class ReplayMemory:
    """Ring buffer; once full, each push overwrites the oldest transition.

    Storage is columnar and allocated on the first push, when the vector
    dimension becomes known.
    """

    def __init__(self, capacity: int = 100_000):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.write_cursor = 0
        self._size = 0
        self._cols: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return self._size

    def _allocate(self, dim: int) -> None:
        c = self.capacity
        self._cols = {
            "lam": np.zeros(c),
            "v": np.zeros((c, dim)),
            "action": np.zeros(c, dtype=np.int64),
            "reward": np.zeros(c),
            "next_lam": np.zeros(c),
            "next_v": np.zeros((c, dim)),
        }

    def push(self, t: Transition) -> None:
        if self._cols is None:
            self._allocate(t.state.v.size)
        cols = self._cols
        i = self.write_cursor
        cols["lam"][i] = t.state.lam
        cols["v"][i] = t.state.v
        cols["action"][i] = t.action
        cols["reward"][i] = t.reward
        cols["next_lam"][i] = t.next_state.lam
        cols["next_v"][i] = t.next_state.v
        self.write_cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _slot(self, k: int) -> int:
        # k-th oldest stored transition
        start = self.write_cursor if self._size == self.capacity else 0
        return (start + k) % self.capacity

    def __getitem__(self, k: int) -> Transition:
        if not -self._size <= k < self._size:
            raise IndexError(k)
        i = self._slot(k % self._size)
        c = self._cols
        return Transition(
            ScalarVectorState(float(c["lam"][i]), c["v"][i].copy()),
            int(c["action"][i]),
            float(c["reward"][i]),
            ScalarVectorState(float(c["next_lam"][i]), c["next_v"][i].copy()),
        )

    def __iter__(self):
        return (self[k] for k in range(self._size))

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Draw ``batch_size`` transitions uniformly with replacement."""
        if batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self._size < batch_size:
            raise RuntimeError(f"memory holds {self._size} transitions, cannot sample {batch_size}")
        idx = rng.integers(0, self._size, size=batch_size)
        c = self._cols
        return Batch(
            c["lam"][idx], c["v"][idx], c["action"][idx], c["reward"][idx],
            c["next_lam"][idx], c["next_v"][idx], idx,
        )
