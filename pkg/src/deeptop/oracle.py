"""Exact small-instance computations for threshold policies.

Two families are covered.

*Uniform-lambda MDPs*: a finite set of vector states ``v``, a scalar state
redrawn i.i.d. uniform on ``[-M, M]`` every step, rewards affine in the
scalar. Expectations over the scalar split at the threshold and integrate in
closed form, so values, the objective and its gradient are exact.

*Single arms with an activation cost*: a finite arm whose net reward is
``r(s, a) - lam * a``. For a fixed threshold vector the policy is constant
between consecutive thresholds, and there the value is affine in ``lam``.

Arrays follow one layout throughout: ``P[a, s, s']`` and ``R[s, a]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonIndexableError(ValueError):
    """The action gap at a state does not cross zero exactly once on [-M, M]."""


@dataclass
class TabularSpec:
    """Finite model with rewards ``reward[s, a] + reward_slope[s, a] * lam``.

    For the uniform-lambda MDP family ``lam`` is the i.i.d. scalar state; for
    arms ``reward_slope`` is zero and ``lam`` enters only as activation cost.
    """

    P: np.ndarray
    reward: np.ndarray
    M: float
    gamma: float
    reward_slope: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        n = self.P.shape[1]
        if self.P.shape != (2, n, n) or self.reward.shape != (n, 2):
            raise ValueError(f"inconsistent shapes P{self.P.shape} R{self.reward.shape}")
        if self.reward_slope is None:
            self.reward_slope = np.zeros_like(self.reward)
        self.reward_slope = np.asarray(self.reward_slope, dtype=np.float64)
        if not np.allclose(self.P.sum(axis=2), 1.0, atol=1e-12, rtol=0) or (self.P < 0).any():
            raise ValueError("transition rows must be stochastic")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.M <= 0:
            raise ValueError("M must be positive")

    @property
    def n_states(self) -> int:
        return self.P.shape[1]


# Uniform-lambda MDP family and the arm family share the container.
UniformLambdaFamily = TabularSpec


def random_stochastic(n: int, rng: np.random.Generator, size=()) -> np.ndarray:
    return rng.dirichlet(np.ones(n), size=(*size, n))


def random_family(n: int, rng: np.random.Generator, gamma: float = 0.9, M: float = 1.0) -> TabularSpec:
    """Random uniform-lambda MDP with affine rewards."""
    P = random_stochastic(n, rng, size=(2,))
    return TabularSpec(P, rng.uniform(-1, 1, (n, 2)), M, gamma, rng.uniform(-1, 1, (n, 2)))


def random_arm(n: int, rng: np.random.Generator, gamma: float = 0.9, M: float = 10.0) -> TabularSpec:
    P = random_stochastic(n, rng, size=(2,))
    return TabularSpec(P, rng.uniform(0, 1, (n, 2)), M, gamma)


def perturb_distinct(mu: np.ndarray, gap: float = 1e-3) -> np.ndarray:
    """Spread values so every pair differs by at least ``gap``, keeping order."""
    mu = np.asarray(mu, dtype=np.float64).copy()
    order = np.argsort(mu, kind="stable")
    for k in range(1, len(order)):
        lo = mu[order[k - 1]] + gap
        if mu[order[k]] < lo:
            mu[order[k]] = lo
    return mu


def _check_distinct(mu: np.ndarray) -> None:
    if len(np.unique(mu)) != len(mu):
        raise ValueError("thresholds must be pairwise distinct")


def _solve(P_pi: np.ndarray, gamma: float, rhs: np.ndarray) -> np.ndarray:
    return np.linalg.solve(np.eye(P_pi.shape[0]) - gamma * P_pi, rhs)


def discounted_visits(P_pi: np.ndarray, gamma: float) -> np.ndarray:
    """``sum_t gamma^(t-1) Pr(s_t = s)`` from a uniform initial state."""
    n = P_pi.shape[0]
    return np.linalg.solve((np.eye(n) - gamma * P_pi).T, np.full(n, 1.0 / n))


# ------------------------------------------------------- uniform-lambda MDPs


@dataclass
class ThresholdEvaluation:
    spec: TabularSpec
    mu: np.ndarray
    W: np.ndarray  # E over lam of the value at (lam, v)
    P_pi: np.ndarray  # lam-averaged transition matrix under the policy

    def q(self, lam, v, a):
        """``Q(lam, v, a)`` for scalar or array arguments (broadcast)."""
        s = self.spec
        v = np.asarray(v)
        a = np.asarray(a)
        cont = np.einsum("...j,j->...", s.P[a, v], self.W)
        return s.reward[v, a] + s.reward_slope[v, a] * lam + s.gamma * cont

    def gap(self, lam, v):
        return self.q(lam, v, 1) - self.q(lam, v, 0)


def _clip_thresholds(spec: TabularSpec, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (spec.n_states,):
        raise ValueError(f"need one threshold per state, got shape {mu.shape}")
    return np.clip(mu, -spec.M, spec.M)


def policy_eval_threshold(spec: TabularSpec, mu) -> ThresholdEvaluation:
    """Evaluate ``a = 1(mu(v) > lam)`` on a uniform-lambda family in closed form."""
    mu = _clip_thresholds(spec, mu)
    M = spec.M
    frac_on = (mu + M) / (2 * M)
    c, b = spec.reward, spec.reward_slope
    # (1/2M) * integral of (c + b lam) over [-M, mu) for a=1 and [mu, M] for a=0
    mean_on = (c[:, 1] * (mu + M) + b[:, 1] * (mu**2 - M**2) / 2) / (2 * M)
    mean_off = (c[:, 0] * (M - mu) + b[:, 0] * (M**2 - mu**2) / 2) / (2 * M)
    P_pi = frac_on[:, None] * spec.P[1] + (1 - frac_on)[:, None] * spec.P[0]
    W = _solve(P_pi, spec.gamma, mean_on + mean_off)
    return ThresholdEvaluation(spec, mu, W, P_pi)


def objective_K(spec: TabularSpec, mu) -> float:
    """Sum over ``v`` of the integral over ``lam`` of the threshold-policy value."""
    return float(2 * spec.M * policy_eval_threshold(spec, mu).W.sum())


def exact_gradient_thm1(spec: TabularSpec, mu) -> np.ndarray:
    """Per-threshold partials of :func:`objective_K`.

    ``2M |V| rho(mu(v), v) * (Q(mu(v), v, 1) - Q(mu(v), v, 0))`` where the
    discounted density factors as ``visits(v) / 2M`` because the scalar is
    redrawn uniformly every step.
    """
    mu = np.asarray(mu, dtype=np.float64)
    _check_distinct(mu)
    ev = policy_eval_threshold(spec, mu)
    n = spec.n_states
    density = discounted_visits(ev.P_pi, spec.gamma) / (2 * spec.M)
    v = np.arange(n)
    return 2 * spec.M * n * density * ev.gap(ev.mu, v)


def objective_K_quadrature(spec: TabularSpec, mu, n_points: int = 10_000) -> float:
    """Same objective with every lambda-integral done by midpoint quadrature.

    Grid points are split across the smooth pieces ``[-M, mu(v)]`` and
    ``[mu(v), M]`` of each state in proportion to their length.
    """
    mu = _clip_thresholds(spec, mu)
    M, n = spec.M, spec.n_states
    mean_r = np.zeros(n)
    frac_on = np.zeros(n)
    pieces = []
    for v in range(n):
        segs = [(-M, mu[v], 1), (mu[v], M, 0)]
        row = []
        for lo, hi, a in segs:
            k = max(1, int(round(n_points * (hi - lo) / (2 * M))))
            h = (hi - lo) / k
            lam = lo + h * (np.arange(k) + 0.5)
            r = spec.reward[v, a] + spec.reward_slope[v, a] * lam
            mean_r[v] += r.sum() * h / (2 * M)
            if a == 1:
                frac_on[v] = h * k / (2 * M)
            row.append((lam, h, a))
        pieces.append(row)
    P_pi = frac_on[:, None] * spec.P[1] + (1 - frac_on)[:, None] * spec.P[0]
    W = _solve(P_pi, spec.gamma, mean_r)
    total = 0.0
    for v, row in enumerate(pieces):
        for lam, h, a in row:
            q = spec.reward[v, a] + spec.reward_slope[v, a] * lam + spec.gamma * spec.P[a, v] @ W
            total += q.sum() * h
    return float(total)


def monte_carlo_threshold_value(
    spec: TabularSpec, mu, v0: int, n_episodes: int, rng: np.random.Generator, horizon: int | None = None
) -> tuple[float, float]:
    """Mean and standard error of the discounted return from ``v0`` (scalar uniform)."""
    mu = _clip_thresholds(spec, mu)
    if horizon is None:
        horizon = int(np.ceil(np.log(1e-12) / np.log(max(spec.gamma, 1e-3)))) + 1
    cdf = np.cumsum(spec.P, axis=2)
    v = np.full(n_episodes, v0)
    ret = np.zeros(n_episodes)
    disc = 1.0
    for _ in range(horizon):
        lam = rng.uniform(-spec.M, spec.M, n_episodes)
        a = (mu[v] > lam).astype(np.int64)
        ret += disc * (spec.reward[v, a] + spec.reward_slope[v, a] * lam)
        u = rng.random(n_episodes)
        v = np.minimum((cdf[a, v] < u[:, None]).sum(axis=1), spec.n_states - 1)
        disc *= spec.gamma
        if disc < 1e-14:
            break
    return float(ret.mean()), float(ret.std(ddof=1) / np.sqrt(n_episodes))


# -------------------------------------------------------------- tabular MDPs


@dataclass
class ValueIterationResult:
    Q: np.ndarray
    V: np.ndarray
    iterations: int
    residuals: list[float]

    @property
    def policy(self) -> np.ndarray:
        return np.argmax(self.Q, axis=1)


def value_iteration(P, R, gamma: float, tol: float = 1e-10, max_iter: int = 1_000_000) -> ValueIterationResult:
    """Bellman optimality iteration on ``Q(s, a)`` until the sup-norm change is below ``tol``."""
    P = np.asarray(P, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    V = np.zeros(P.shape[1])
    residuals = []
    for it in range(1, max_iter + 1):
        Q = R + gamma * np.einsum("asj,j->sa", P, V)
        V_new = Q.max(axis=1)
        diff = float(np.max(np.abs(V_new - V)))
        residuals.append(diff)
        V = V_new
        if diff < tol:
            break
    Q = R + gamma * np.einsum("asj,j->sa", P, V)
    return ValueIterationResult(Q, Q.max(axis=1), it, residuals)


def policy_q(P, R, policy: np.ndarray, gamma: float) -> np.ndarray:
    n = P.shape[1]
    rows = np.arange(n)
    V = _solve(P[policy, rows], gamma, R[rows, policy])
    return R + gamma * np.einsum("asj,j->sa", P, V)


def policy_iteration(P, R, gamma: float, max_iter: int = 1000) -> np.ndarray:
    """Exact optimal ``Q`` by Howard policy iteration (ties keep the passive action)."""
    policy = np.zeros(P.shape[1], dtype=np.int64)
    for _ in range(max_iter):
        Q = policy_q(P, R, policy, gamma)
        better = Q[:, 1] - Q[:, 0] > 1e-12 * (1 + np.abs(Q).max())
        new = np.where(better, 1, 0)
        if np.array_equal(new, policy):
            return Q
        policy = new
    raise RuntimeError("policy iteration did not converge")


def simulate_policy_average(P, R, policy: np.ndarray, steps: int, rng: np.random.Generator, start: int = 0) -> float:
    """Average reward along one long trajectory of a stationary deterministic policy."""
    cdf = np.cumsum(P, axis=2)
    s, total = start, 0.0
    u = rng.random(steps)
    for t in range(steps):
        a = policy[s]
        total += R[s, a]
        s = min(int(np.searchsorted(cdf[a, s], u[t], side="right")), P.shape[1] - 1)
    return total / steps


# ---------------------------------------------------------------------- arms


def _net_reward(spec: TabularSpec, lam: float) -> np.ndarray:
    return spec.reward + spec.reward_slope * lam - lam * np.array([0.0, 1.0])


def arm_value_iteration(spec: TabularSpec, lam: float, tol: float = 1e-10) -> np.ndarray:
    """Optimal ``Q_lam(s, a)`` for net reward ``r(s, a) - lam * a`` by value iteration."""
    return value_iteration(spec.P, _net_reward(spec, lam), spec.gamma, tol).Q


def arm_optimal_q(spec: TabularSpec, lam: float) -> np.ndarray:
    """Same fixed point as :func:`arm_value_iteration`, solved exactly."""
    return policy_iteration(spec.P, _net_reward(spec, lam), spec.gamma)


def arm_gap(spec: TabularSpec, lam: float) -> np.ndarray:
    Q = arm_optimal_q(spec, lam)
    return Q[:, 1] - Q[:, 0]


def _gap_scan(spec: TabularSpec, grid_points: int) -> tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(-spec.M, spec.M, grid_points)
    return grid, np.array([arm_gap(spec, lam) for lam in grid])


def _bracket(grid: np.ndarray, gaps: np.ndarray, s: int) -> tuple[float, float]:
    g = gaps[:, s]
    pos = g > 0
    if not pos[0] or pos[-1]:
        raise NonIndexableError(f"state {s}: action gap does not change sign on [{grid[0]}, {grid[-1]}]")
    flips = np.flatnonzero(pos[:-1] != pos[1:])
    if len(flips) != 1:
        raise NonIndexableError(f"state {s}: action gap changes sign {len(flips)} times")
    k = flips[0]
    return float(grid[k]), float(grid[k + 1])


def _bisect(spec: TabularSpec, s: int, lo: float, hi: float, tol: float) -> float:
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = arm_gap(spec, mid)[s]
        if abs(g) <= tol or hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            return mid
        if g > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def whittle_bisection(spec: TabularSpec, s: int, tol: float = 1e-8, grid_points: int = 512) -> float:
    """Activation cost at which resting and activating state ``s`` are equally good."""
    grid, gaps = _gap_scan(spec, grid_points)
    lo, hi = _bracket(grid, gaps, s)
    return _bisect(spec, s, lo, hi, tol)


def whittle_indices(spec: TabularSpec, tol: float = 1e-8, grid_points: int = 512) -> np.ndarray:
    """All indices of an arm; the pre-scan grid is shared across states."""
    grid, gaps = _gap_scan(spec, grid_points)
    out = np.empty(spec.n_states)
    for s in range(spec.n_states):
        lo, hi = _bracket(grid, gaps, s)
        out[s] = _bisect(spec, s, lo, hi, tol)
    return out


def threshold_is_optimal(spec: TabularSpec, mu, lambdas, atol: float = 1e-9) -> bool:
    """Whether ``1(mu(s) > lam)`` attains the optimal value at every ``lam`` given."""
    mu = np.asarray(mu)
    for lam in lambdas:
        R = _net_reward(spec, lam)
        V_opt = arm_optimal_q(spec, lam).max(axis=1)
        pol = (mu > lam).astype(np.int64)
        V_thr = policy_q(spec.P, R, pol, spec.gamma)[np.arange(spec.n_states), pol]
        if np.any(V_thr < V_opt - atol * (1 + np.abs(V_opt))):
            return False
    return True


def _affine_value(spec: TabularSpec, active: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value ``A + lam * B`` of a fixed activation set; also returns ``(I - gamma P)^-1``."""
    n = spec.n_states
    rows = np.arange(n)
    a = active.astype(np.int64)
    P_pi = spec.P[a, rows]
    G = np.linalg.inv(np.eye(n) - spec.gamma * P_pi)
    A = G @ spec.reward[rows, a]
    B = G @ (spec.reward_slope[rows, a] - a)
    return A, B, G


def objective_Ki(spec: TabularSpec, mu) -> float:
    return objective_Ki_and_gradient_thm2(spec, mu, gradient=False)[0]


def objective_Ki_and_gradient_thm2(spec: TabularSpec, mu, gradient: bool = True) -> tuple[float, np.ndarray | None]:
    """Arm objective (integral over ``lam`` of the summed values) and its gradient.

    At ``lam = mu(s)`` two policies meet: one rests ``s`` (the strict
    indicator) and one activates it. The derivative with respect to ``mu(s)``
    is the summed value difference between them, which factors exactly as
    ``|S| * visits_rest(s) * gap_active(s)``: discounted visits from a
    uniform start under the resting policy times the action gap computed with
    the activating policy's values.
    """
    mu = np.asarray(mu, dtype=np.float64)
    n, M = spec.n_states, spec.M
    if mu.shape != (n,):
        raise ValueError(f"need one threshold per state, got shape {mu.shape}")
    _check_distinct(mu)
    if np.any(np.abs(mu) >= M):
        raise ValueError("thresholds must lie strictly inside (-M, M)")
    order = np.argsort(-mu)
    bounds = np.concatenate([[M], mu[order], [-M]])
    total = 0.0
    active = np.zeros(n, dtype=bool)
    for k in range(n + 1):
        hi, lo = bounds[k], bounds[k + 1]
        A, B, _ = _affine_value(spec, active)
        total += (hi - lo) * A.sum() + 0.5 * (hi**2 - lo**2) * B.sum()
        if k < n:
            active[order[k]] = True
    if not gradient:
        return float(total), None

    grad = np.empty(n)
    for s in range(n):
        rest = mu > mu[s]
        act = rest.copy()
        act[s] = True
        lam = mu[s]
        _, _, G_rest = _affine_value(spec, rest)
        A, B, _ = _affine_value(spec, act)
        V = A + lam * B
        R = _net_reward(spec, lam)
        q = R[s] + spec.gamma * spec.P[:, s, :] @ V
        visits = G_rest[:, s].sum() / n
        grad[s] = n * visits * (q[1] - q[0])
    return float(total), grad


def arm_threshold_q(spec: TabularSpec, mu, lam: float) -> np.ndarray:
    """``Q_lam(s, a)`` under the threshold policy ``1(mu(s) > lam)``."""
    pol = (np.asarray(mu) > lam).astype(np.int64)
    return policy_q(spec.P, _net_reward(spec, lam), pol, spec.gamma)


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def relative_errors(exact: np.ndarray, approx: np.ndarray, small: float = 1e-5) -> tuple[float, float]:
    """Max relative error over large components and max absolute error over small ones."""
    exact = np.asarray(exact)
    approx = np.asarray(approx)
    big = np.abs(approx) >= small
    rel = np.abs(exact - approx)[big] / np.abs(approx)[big]
    ab = np.abs(exact - approx)[~big]
    return (float(rel.max()) if rel.size else 0.0, float(ab.max()) if ab.size else 0.0)


# ------------------------------------------------------------ check sweeps


@dataclass
class GradCheckReport:
    kind: str
    n_specs: int
    max_rel_err: float
    max_abs_err: float
    rel_tol: float = 1e-3
    abs_tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.rel_tol and self.max_abs_err <= self.abs_tol

    def line(self) -> str:
        return (
            f"{self.kind} specs={self.n_specs} max_rel_err={self.max_rel_err:.3e} "
            f"max_abs_err={self.max_abs_err:.3e} result={'PASS' if self.passed else 'FAIL'}"
        )


def random_thresholds(n: int, M: float, rng: np.random.Generator) -> np.ndarray:
    """Distinct thresholds strictly inside ``(-M, M)``."""
    return perturb_distinct(rng.uniform(-0.9 * M, 0.85 * M, n), gap=1e-3 * M)


def grad_check_mdp(n_specs: int = 100, seed: int = 0, gamma: float = 0.9, M: float = 1.0, h: float = 1e-5):
    """Exact policy gradient against central differences of ``objective_K``."""
    rng = np.random.default_rng(seed)
    worst_rel = worst_abs = 0.0
    for _ in range(n_specs):
        spec = random_family(int(rng.integers(2, 5)), rng, gamma, M)
        mu = random_thresholds(spec.n_states, M, rng)
        fd = central_difference(lambda m: objective_K(spec, m), mu, h)
        rel, ab = relative_errors(exact_gradient_thm1(spec, mu), fd)
        worst_rel, worst_abs = max(worst_rel, rel), max(worst_abs, ab)
    return GradCheckReport("grad-check-mdp", n_specs, worst_rel, worst_abs)


def grad_check_rmab(n_specs: int = 100, seed: int = 0, gamma: float = 0.9, M: float = 10.0, h: float = 1e-5):
    """Per-arm exact gradient against central differences of the arm objective."""
    rng = np.random.default_rng(seed)
    worst_rel = worst_abs = 0.0
    for _ in range(n_specs):
        spec = random_arm(int(rng.integers(2, 5)), rng, gamma, M)
        mu = random_thresholds(spec.n_states, M, rng)
        fd = central_difference(lambda m: objective_Ki(spec, m), mu, h)
        rel, ab = relative_errors(objective_Ki_and_gradient_thm2(spec, mu)[1], fd)
        worst_rel, worst_abs = max(worst_rel, rel), max(worst_abs, ab)
    return GradCheckReport("grad-check-rmab", n_specs, worst_rel, worst_abs)


def random_indexable_arm(n: int, rng: np.random.Generator, gamma: float = 0.9, M: float = 10.0, max_tries: int = 1000):
    """Draw random arms until one has a single gap crossing per state inside ``(-M, M)``.

    Returns ``(spec, indices)``; indices are also required to be pairwise
    distinct so the arm objective is differentiable at them.
    """
    for _ in range(max_tries):
        spec = random_arm(n, rng, gamma, M)
        try:
            idx = whittle_indices(spec)
        except NonIndexableError:
            continue
        if np.min(np.diff(np.sort(idx))) > 1e-6 and np.all(np.abs(idx) < M):
            return spec, idx
    raise RuntimeError(f"no indexable arm found in {max_tries} draws")
