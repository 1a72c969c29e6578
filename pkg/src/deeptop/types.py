"""Value types shared by environments, replay memory and agents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScalarVectorState:
    """Network-facing state: scalar part ``lam`` and encoded vector part ``v``.

    Environments apply a positive affine rescaling to the scalar before it
    lands here, so a threshold learned in encoded units induces the same
    policy as one in raw units.
    """

    lam: float
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "v", v)
        if not (np.isfinite(self.lam) and np.all(np.isfinite(v))):
            raise ValueError("state entries must be finite")


@dataclass(frozen=True)
class Transition:
    state: ScalarVectorState
    action: int
    reward: float
    next_state: ScalarVectorState

    def __post_init__(self):
        if self.action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {self.action}")
        if not np.isfinite(self.reward):
            raise ValueError("reward must be finite")
