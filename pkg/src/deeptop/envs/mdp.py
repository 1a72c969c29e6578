"""EV charging, seasonal inventory and make-to-stock environments.

Each environment has a pure ``*_step(state, action, rng)`` transition
function and a small stateful wrapper exposing ``observe()`` /
``step(action)`` for the training loop. Wrappers own their rng stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..types import ScalarVectorState

# EV charging
EV_MAX_CHARGE = 8
EV_MAX_DEADLINE = 12
EV_PENALTY_COEF = 0.2
OU_THETA = 0.15
OU_MEAN = 0.0
OU_SIGMA = 0.2

# inventory
INV_CAPACITY = 1000
INV_ORDER_SIZE = 500
INV_PRICE = 20.0
INV_HOLDING_COST = 1.0
INV_SEASONS = 10
INV_PEAK_DEMAND = 300.0

# make-to-stock
MTS_SERVERS = 50
MTS_BUFFER = 50
MTS_CLASSES = 50
MTS_MEAN_SERVICE = 4.0
MTS_HOLDING_COEF = 0.1
MTS_REWARD_HIGH = 200.0
MTS_REWARD_LOW = 10.0


def ou_step(x: float, rng: np.random.Generator, theta=OU_THETA, mean=OU_MEAN, sigma=OU_SIGMA) -> float:
    """Unit-time Ornstein-Uhlenbeck update ``x + theta(mean - x) + sigma n``."""
    return ou_update(x, rng.standard_normal(), theta, mean, sigma)


def ou_update(x: float, noise: float, theta=OU_THETA, mean=OU_MEAN, sigma=OU_SIGMA) -> float:
    return x + theta * (mean - x) + sigma * noise


# ---------------------------------------------------------------- EV charging


@dataclass(frozen=True)
class EvState:
    price: float
    charge: int
    deadline: int

    def __post_init__(self):
        if not (0 <= self.charge <= EV_MAX_CHARGE and 0 <= self.deadline <= EV_MAX_DEADLINE):
            raise ValueError(f"EV state out of bounds: C={self.charge}, D={self.deadline}")


def ev_penalty(charge: int) -> float:
    return EV_PENALTY_COEF * charge**2


def ev_arrival(rng: np.random.Generator) -> tuple[int, int]:
    return int(rng.integers(1, EV_MAX_CHARGE + 1)), int(rng.integers(1, EV_MAX_DEADLINE + 1))


def ev_transition(s: EvState, a: int, next_price: float, arrival: tuple[int, int]) -> tuple[EvState, float]:
    """Deterministic core of :func:`ev_step` given the random draws.

    ``arrival`` is used only if the current vehicle leaves this step.
    """
    charge, reward = s.charge, 0.0
    if a == 1 and charge > 0:
        reward = 1.0 - s.price
        charge -= 1
    deadline = s.deadline - 1
    if deadline <= 0:
        reward -= ev_penalty(charge)
        charge, deadline = arrival
    return EvState(next_price, charge, deadline), reward


def ev_step(s: EvState, a: int, rng: np.random.Generator) -> tuple[EvState, float]:
    next_price = ou_step(s.price, rng)
    arrival = ev_arrival(rng)
    return ev_transition(s, a, next_price, arrival)


def ev_encode(s: EvState) -> ScalarVectorState:
    return ScalarVectorState(s.price, np.array([s.charge / EV_MAX_CHARGE, s.deadline / EV_MAX_DEADLINE]))


# ------------------------------------------------------ EV charging, price grid


def tauchen_grid(n_levels: int = 21, width: float = 3.0, theta=OU_THETA, mean=OU_MEAN, sigma=OU_SIGMA):
    """Quantize the unit-step OU recurrence to a finite Markov chain.

    Levels span ``mean +- width`` stationary standard deviations; transition
    mass is the normal probability of the cell around each target level.
    Returns ``(levels, P)`` with ``P[i, j] = Pr(next = levels[j] | levels[i])``.
    """
    from scipy.stats import norm

    rho = 1.0 - theta
    sd = sigma / np.sqrt(1.0 - rho**2)
    levels = mean + np.linspace(-width * sd, width * sd, n_levels)
    step = levels[1] - levels[0]
    cond_mean = mean + rho * (levels - mean)
    upper = (levels[None, :] + step / 2 - cond_mean[:, None]) / sigma
    lower = (levels[None, :] - step / 2 - cond_mean[:, None]) / sigma
    P = norm.cdf(upper) - norm.cdf(lower)
    P[:, 0] = norm.cdf(upper[:, 0])
    P[:, -1] = 1.0 - norm.cdf(lower[:, -1])
    return levels, P


def ev_grid_tabular(levels: np.ndarray, price_P: np.ndarray):
    """Exact tabular model of the price-grid EV problem.

    State index ``(i, C, D)`` flattens price level ``i``, charge ``0..8`` and
    deadline ``1..12``. Returns ``(P, R)`` with ``P[a, s, s']`` and ``R[s, a]``.
    """
    n_p = len(levels)
    nc, nd = EV_MAX_CHARGE + 1, EV_MAX_DEADLINE
    n = n_p * nc * nd

    def idx(i, c, d):
        return (i * nc + c) * nd + (d - 1)

    arrival_p = 1.0 / (EV_MAX_CHARGE * EV_MAX_DEADLINE)
    P = np.zeros((2, n, n))
    R = np.zeros((n, 2))
    for i in range(n_p):
        for c in range(nc):
            for d in range(1, nd + 1):
                s = idx(i, c, d)
                for a in (0, 1):
                    charge, r = c, 0.0
                    if a == 1 and c > 0:
                        r = 1.0 - levels[i]
                        charge -= 1
                    dn = d - 1
                    if dn == 0:
                        r -= ev_penalty(charge)
                    R[s, a] = r
                    for j in range(n_p):
                        pj = price_P[i, j]
                        if dn > 0:
                            P[a, s, idx(j, charge, dn)] += pj
                        else:
                            for c2 in range(1, EV_MAX_CHARGE + 1):
                                for d2 in range(1, EV_MAX_DEADLINE + 1):
                                    P[a, s, idx(j, c2, d2)] += pj * arrival_p
    return P, R


# ------------------------------------------------------------------ inventory


@dataclass(frozen=True)
class InventoryState:
    inventory: int
    season: int

    def __post_init__(self):
        if not (0 <= self.inventory <= INV_CAPACITY and 0 <= self.season < INV_SEASONS):
            raise ValueError(f"inventory state out of bounds: {self}")


def inventory_demand_rate(b: int) -> float:
    if not 0 <= b < INV_SEASONS:
        raise ValueError(f"season must be in 0..{INV_SEASONS - 1}, got {b}")
    return float(np.sin(b * np.pi / INV_SEASONS) * INV_PEAK_DEMAND)


def inventory_transition(s: InventoryState, a: int, demand: int) -> tuple[InventoryState, float]:
    sold = min(s.inventory, demand)
    unsold = s.inventory - sold
    reward = INV_PRICE * sold - INV_HOLDING_COST * unsold
    stock = min(unsold + INV_ORDER_SIZE * a, INV_CAPACITY)
    return InventoryState(stock, (s.season + 1) % INV_SEASONS), float(reward)


def inventory_step(s: InventoryState, a: int, rng: np.random.Generator) -> tuple[InventoryState, float]:
    demand = int(rng.poisson(inventory_demand_rate(s.season)))
    return inventory_transition(s, a, demand)


def inventory_encode(s: InventoryState) -> ScalarVectorState:
    v = np.zeros(INV_SEASONS)
    v[s.season] = 1.0
    return ScalarVectorState(s.inventory / INV_CAPACITY, v)


# -------------------------------------------------------------- make-to-stock


@dataclass(frozen=True)
class MtsState:
    queue: int
    order_class: int

    def __post_init__(self):
        if not (0 <= self.queue <= MTS_SERVERS + MTS_BUFFER and 1 <= self.order_class <= MTS_CLASSES):
            raise ValueError(f"make-to-stock state out of bounds: {self}")


def mts_class_reward(v: int) -> float:
    """Order rewards evenly spaced from 200 (class 1) down to 10 (class W)."""
    return MTS_REWARD_HIGH - (v - 1) * (MTS_REWARD_HIGH - MTS_REWARD_LOW) / (MTS_CLASSES - 1)


def mts_holding(queue: int) -> float:
    return -MTS_HOLDING_COEF * queue**2


def mts_accept(s: MtsState, a: int) -> tuple[int, float]:
    """Queue length after the admission decision and the step reward."""
    if a == 1 and s.queue < MTS_SERVERS + MTS_BUFFER:
        return s.queue + 1, mts_class_reward(s.order_class) + mts_holding(s.queue)
    return s.queue, mts_holding(s.queue)


def mts_step(s: MtsState, a: int, rng: np.random.Generator) -> tuple[MtsState, float]:
    queue, reward = mts_accept(s, a)
    done = int(rng.binomial(min(queue, MTS_SERVERS), 1.0 / MTS_MEAN_SERVICE))
    next_class = int(rng.integers(1, MTS_CLASSES + 1))
    return MtsState(queue - done, next_class), reward


def mts_encode(s: MtsState) -> ScalarVectorState:
    return ScalarVectorState(
        s.queue / (MTS_SERVERS + MTS_BUFFER), np.array([mts_class_reward(s.order_class) / MTS_REWARD_HIGH])
    )


# ------------------------------------------------------------------ wrappers


class MdpEnv:
    """Stateful wrapper: holds the raw state and one rng stream."""

    name = ""
    vector_dim = 0

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.state = self.initial_state()

    def initial_state(self):
        raise NotImplementedError

    def observe(self) -> ScalarVectorState:
        raise NotImplementedError

    def step(self, a: int) -> float:
        raise NotImplementedError


class EvEnv(MdpEnv):
    name = "ev"
    vector_dim = 2

    def initial_state(self) -> EvState:
        c, d = ev_arrival(self.rng)
        return EvState(OU_MEAN, c, d)

    def observe(self):
        return ev_encode(self.state)

    def step(self, a):
        self.state, r = ev_step(self.state, a, self.rng)
        return r


class EvGridEnv(MdpEnv):
    """EV charging with the price restricted to a quantized OU chain."""

    name = "ev-grid"
    vector_dim = 2

    def __init__(self, rng, n_levels: int = 21):
        self.levels, self.price_P = tauchen_grid(n_levels)
        self._cdf = np.cumsum(self.price_P, axis=1)
        self.level = len(self.levels) // 2
        super().__init__(rng)

    def initial_state(self) -> EvState:
        c, d = ev_arrival(self.rng)
        return EvState(float(self.levels[self.level]), c, d)

    def observe(self):
        return ev_encode(self.state)

    def step(self, a):
        u = self.rng.random()
        self.level = min(int(np.searchsorted(self._cdf[self.level], u, side="right")), len(self.levels) - 1)
        arrival = ev_arrival(self.rng)
        self.state, r = ev_transition(self.state, a, float(self.levels[self.level]), arrival)
        return r

    def state_index(self) -> int:
        return (self.level * (EV_MAX_CHARGE + 1) + self.state.charge) * EV_MAX_DEADLINE + self.state.deadline - 1


class InventoryEnv(MdpEnv):
    name = "inventory"
    vector_dim = INV_SEASONS

    def initial_state(self):
        return InventoryState(0, 0)

    def observe(self):
        return inventory_encode(self.state)

    def step(self, a):
        self.state, r = inventory_step(self.state, a, self.rng)
        return r


class MtsEnv(MdpEnv):
    name = "mts"
    vector_dim = 1

    def initial_state(self):
        return MtsState(0, int(self.rng.integers(1, MTS_CLASSES + 1)))

    def observe(self):
        return mts_encode(self.state)

    def step(self, a):
        self.state, r = mts_step(self.state, a, self.rng)
        return r


MDP_ENVS = {cls.name: cls for cls in (EvEnv, EvGridEnv, InventoryEnv, MtsEnv)}


def make_mdp_env(name: str, rng: np.random.Generator) -> MdpEnv:
    try:
        return MDP_ENVS[name](rng)
    except KeyError:
        raise ValueError(f"unknown MDP environment {name!r}; choose from {sorted(MDP_ENVS)}") from None
