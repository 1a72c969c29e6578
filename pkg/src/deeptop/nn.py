"""Dense ReLU networks in float64 with hand-written backprop and Adam.

Parameters are plain data (:class:`MlpParams`); every operation returns new
arrays instead of mutating its inputs, so a params object can be shared
between a network and a snapshot without defensive copies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_MAGIC = "DEEPTOP-NN-1"


class MlpParams:
    """Weights ``(out, in)`` and biases ``(out,)`` for each dense layer.

    Hidden layers use ReLU, the final layer is linear. All entries live in
    one contiguous float64 vector (``flat``); ``weights`` and ``biases`` are
    views into it. The same container holds gradients and Adam moments.
    """

    __slots__ = ("flat", "weights", "biases", "_sizes")

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(weights, biases)):
            w, b = np.asarray(w), np.asarray(b)
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and w.shape[1] != np.shape(weights[k - 1])[0]:
                raise ValueError(f"layer {k} input {w.shape[1]} != previous output {np.shape(weights[k - 1])[0]}")
        sizes = [np.shape(weights[0])[1]] + [np.shape(w)[0] for w in weights]
        flat = np.concatenate([np.ravel(a) for pair in zip(weights, biases) for a in pair]).astype(np.float64)
        self._bind(sizes, flat)

    def _bind(self, sizes: list[int], flat: np.ndarray) -> None:
        self._sizes = sizes
        self.flat = flat
        self.weights, self.biases = [], []
        pos = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(flat[pos : pos + n_in * n_out].reshape(n_out, n_in))
            pos += n_in * n_out
            self.biases.append(flat[pos : pos + n_out])
            pos += n_out

    @classmethod
    def from_flat(cls, layer_sizes: Sequence[int], flat: np.ndarray) -> "MlpParams":
        sizes = [int(n) for n in layer_sizes]
        expected = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (expected,):
            raise ValueError(f"flat vector of length {flat.size} does not fit layers {sizes}")
        obj = cls.__new__(cls)
        obj._bind(sizes, flat)
        return obj

    @property
    def layer_sizes(self) -> list[int]:
        return list(self._sizes)

    @property
    def in_dim(self) -> int:
        return self._sizes[0]

    @property
    def out_dim(self) -> int:
        return self._sizes[-1]

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def map(self, fn, *others: "MlpParams") -> "MlpParams":
        """Apply an elementwise ``fn`` across this and ``others`` (same shapes)."""
        for o in others:
            if o._sizes != self._sizes:
                raise ValueError(f"shape mismatch {o._sizes} vs {self._sizes}")
        return MlpParams.from_flat(self._sizes, fn(self.flat, *(o.flat for o in others)))

    def copy(self) -> "MlpParams":
        return MlpParams.from_flat(self._sizes, self.flat.copy())

    def zeros_like(self) -> "MlpParams":
        return MlpParams.from_flat(self._sizes, np.zeros_like(self.flat))

    def allclose(self, other: "MlpParams", **kw) -> bool:
        return self._sizes == other._sizes and np.allclose(self.flat, other.flat, **kw)

    def equal(self, other: "MlpParams") -> bool:
        return self._sizes == other._sizes and np.array_equal(self.flat, other.flat)

    def __repr__(self) -> str:
        return f"MlpParams(layer_sizes={self._sizes})"


# Gradients have exactly the parameter layout.
Gradient = MlpParams


@dataclass
class AdamState:
    first_moment: MlpParams
    second_moment: MlpParams
    learning_rate: float
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, learning_rate: float, **kw) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), learning_rate, **kw)


def init_params(layer_sizes: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    sizes = list(layer_sizes)
    if len(sizes) < 2 or any(int(n) <= 0 for n in sizes):
        raise ValueError(f"need at least two positive layer sizes, got {sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights, biases)


def _as_batch(params: MlpParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"input shape {x.shape} does not match network input size {params.in_dim}")
    return x, single


def _trace(params: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    # activations[k] is the input to layer k; the last entry is the output
    acts = [x]
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if k == last else np.maximum(z, 0.0))
    return acts


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Evaluate the network on one input ``(in,)`` or a batch ``(B, in)``."""
    xb, single = _as_batch(params, x)
    out = _trace(params, xb)[-1]
    return out[0] if single else out


def mlp_backward(params: MlpParams, x, output_grad) -> Gradient:
    """Gradient of ``sum(output * output_grad)`` w.r.t. every parameter.

    For a batch input the contributions are summed over rows. ReLU uses
    subgradient 0 at exactly zero pre-activation.
    """
    xb, single = _as_batch(params, x)
    g = np.asarray(output_grad, dtype=np.float64)
    if single:
        g = g[None, :]
    if g.shape != (xb.shape[0], params.out_dim):
        raise ValueError(f"output_grad shape {g.shape} != {(xb.shape[0], params.out_dim)}")
    return backward_from_trace(params, _trace(params, xb), g)


def forward_trace(params: MlpParams, x) -> list[np.ndarray]:
    """Per-layer activations for a batch; reuse with :func:`backward_from_trace`."""
    return _trace(params, _as_batch(params, x)[0])


def backward_from_trace(params: MlpParams, acts: list[np.ndarray], g: np.ndarray) -> Gradient:
    grad = params.zeros_like()
    delta = g
    for k in range(len(params.weights) - 1, -1, -1):
        np.matmul(delta.T, acts[k], out=grad.weights[k])
        np.sum(delta, axis=0, out=grad.biases[k])
        if k:
            delta = (delta @ params.weights[k]) * (acts[k] > 0.0)
    return grad


def adam_step(
    params: MlpParams, state: AdamState, grad: Gradient, ascend: bool = False
) -> tuple[MlpParams, AdamState]:
    """One Adam update; ``ascend=True`` climbs the gradient instead of descending."""
    if grad.layer_sizes != params.layer_sizes:
        raise ValueError(f"gradient shape {grad.layer_sizes} != params {params.layer_sizes}")
    g = -grad.flat if ascend else grad.flat
    b1, b2 = state.beta1, state.beta2
    t = state.step_count + 1
    m = state.first_moment.flat * b1
    m += (1.0 - b1) * g
    v = state.second_moment.flat * b2
    v += (1.0 - b2) * (g * g)
    denom = np.sqrt(v)
    denom *= 1.0 / np.sqrt(1.0 - b2**t)
    denom += state.epsilon
    step = m / denom
    step *= state.learning_rate / (1.0 - b1**t)
    sizes = params.layer_sizes
    return MlpParams.from_flat(sizes, params.flat - step), AdamState(
        MlpParams.from_flat(sizes, m),
        MlpParams.from_flat(sizes, v),
        state.learning_rate,
        t,
        b1,
        b2,
        state.epsilon,
    )


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> MlpParams:
    """Return ``tau * source + (1 - tau) * target``; ``tau = 0`` is a no-op."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if tau == 1.0:
        return source.copy()
    return target.map(lambda t, s: tau * s + (1.0 - tau) * t, source)


def save_params(params: MlpParams, path) -> None:
    """Write a versioned JSON checkpoint (row-major weights then biases per layer)."""
    doc = {
        "magic": CHECKPOINT_MAGIC,
        "layer_sizes": params.layer_sizes,
        "layers": [
            {"weight": w.ravel(order="C").tolist(), "bias": b.tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path) -> MlpParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    sizes = doc["layer_sizes"]
    weights, biases = [], []
    for (n_in, n_out), layer in zip(zip(sizes[:-1], sizes[1:]), doc["layers"]):
        weights.append(np.asarray(layer["weight"], dtype=np.float64).reshape(n_out, n_in))
        biases.append(np.asarray(layer["bias"], dtype=np.float64))
    return MlpParams(weights, biases)
