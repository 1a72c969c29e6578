"""Gradient estimators shared by the MDP and bandit agents."""

from __future__ import annotations

import numpy as np

from .nn import Gradient, MlpParams, backward_from_trace, forward_trace, mlp_forward


def threshold_value(actor: MlpParams, x: np.ndarray, bound: float | None = None) -> np.ndarray:
    """Actor output per row; squashed into ``(-bound, bound)`` when a bound is given."""
    z = mlp_forward(actor, x)[..., 0]
    return z if bound is None else bound * np.tanh(z)


def critic_gradient(critic: MlpParams, x: np.ndarray, actions: np.ndarray, targets: np.ndarray) -> tuple[Gradient, np.ndarray]:
    """Gradient of ``mean((Q(x, a) - y)^2)`` with the targets held fixed.

    Returns the gradient and the TD errors ``Q(x, a) - y``.
    """
    acts = forward_trace(critic, x)
    rows = np.arange(len(actions))
    err = acts[-1][rows, actions] - targets
    g = np.zeros_like(acts[-1])
    g[rows, actions] = 2.0 * err / len(actions)
    return backward_from_trace(critic, acts, g), err


def threshold_actor_gradient(
    actor: MlpParams,
    x: np.ndarray,
    gaps: np.ndarray,
    bound: float | None = None,
    weights: np.ndarray | None = None,
    trace: list[np.ndarray] | None = None,
) -> Gradient:
    """``sum_k w_k * gap_k * grad mu(x_k)`` with ``w_k = 1/B`` by default.

    ``gaps`` are critic action-value differences at ``lam = mu(x_k)``; they
    enter as constants, the critic is not differentiated. A ``trace`` from
    :func:`forward_trace` on the same ``x`` skips the forward pass.
    """
    acts = forward_trace(actor, x) if trace is None else trace
    w = np.full(len(gaps), 1.0 / len(gaps)) if weights is None else np.asarray(weights, dtype=np.float64)
    coef = w * gaps
    if bound is not None:
        coef = coef * bound * (1.0 - np.tanh(acts[-1][:, 0]) ** 2)
    return backward_from_trace(actor, acts, coef[:, None])


def greedy_target(target_critic: MlpParams, x_next: np.ndarray) -> np.ndarray:
    return mlp_forward(target_critic, x_next).max(axis=1)
