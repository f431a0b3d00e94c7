"""Dense Q-network (d_in -> 64 -> 32 -> n_actions) with hand-written backprop and Adam.

All parameters live in one flat float64 vector; the per-layer arrays are views
into it, so the optimizer can update everything with a handful of vector ops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

HIDDEN = (64, 32)


@lru_cache(maxsize=None)
def _layout(d_in: int, n_actions: int) -> tuple[int, tuple[tuple[int, int, tuple[int, ...]], ...]]:
    """Total size and (start, stop, shape) of each layer array in the flat vector."""
    h1, h2 = HIDDEN
    shapes = [(h1, d_in), (h1,), (h2, h1), (h2,), (n_actions, h2), (n_actions,)]
    slots, offset = [], 0
    for shape in shapes:
        n = math.prod(shape)
        slots.append((offset, offset + n, shape))
        offset += n
    return offset, tuple(slots)


class MLPParameters:
    """Weights of the Q-network, stored as views into ``flat``."""

    names = ("W1", "b1", "W2", "b2", "W3", "b3")

    def __init__(self, d_in: int, n_actions: int, flat: np.ndarray | None = None):
        if d_in < 1 or n_actions < 1:
            raise ValueError("d_in and n_actions must be positive")
        self.d_in = d_in
        self.n_actions = n_actions
        size, slots = _layout(d_in, n_actions)
        if flat is None:
            flat = np.zeros(size)
        elif flat.shape != (size,):
            raise ValueError(f"flat vector has shape {flat.shape}, expected ({size},)")
        self.flat = flat
        for name, (start, stop, shape) in zip(self.names, slots):
            setattr(self, name, flat[start:stop].reshape(shape))

    def __repr__(self) -> str:
        return f"MLPParameters(d_in={self.d_in}, n_actions={self.n_actions})"

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.names}

    def like(self, flat: np.ndarray) -> MLPParameters:
        return MLPParameters(self.d_in, self.n_actions, flat)


def zero_params(d_in: int, n_actions: int) -> MLPParameters:
    return MLPParameters(d_in, n_actions)


def init_params(d_in: int, n_actions: int, rng: np.random.Generator) -> MLPParameters:
    """Glorot-uniform weights, zero biases."""
    params = MLPParameters(d_in, n_actions)
    for name in ("W1", "W2", "W3"):
        w = getattr(params, name)
        fan_out, fan_in = w.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return params


def copy_params(src: MLPParameters) -> MLPParameters:
    return src.like(src.flat.copy())


def _check_input(params: MLPParameters, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.d_in or x.ndim not in (1, 2):
        raise ValueError(f"input shape {x.shape} does not match d_in={params.d_in}")
    return x


def _forward_all(params: MLPParameters, x: np.ndarray):
    z1 = x @ params.W1.T + params.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ params.W2.T + params.b2
    h2 = np.maximum(z2, 0.0)
    q = h2 @ params.W3.T + params.b3
    return z1, h1, z2, h2, q


def forward(params: MLPParameters, x: np.ndarray) -> np.ndarray:
    """Q-values for one input vector (shape (n_actions,)) or a batch (shape (B, n_actions))."""
    x = _check_input(params, x)
    return _forward_all(params, x)[-1]


def loss_and_grad(params: MLPParameters, x: np.ndarray, actions, targets) -> tuple[float, MLPParameters]:
    """Mean squared TD error and the batch-mean gradient of 0.5 * (y - Q(s, a))**2.

    ``x`` may be a single input or a batch; ``actions``/``targets`` match it.
    """
    x = _check_input(params, x)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    actions = np.atleast_1d(np.asarray(actions, dtype=np.intp))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    batch = x.shape[0]
    if actions.shape != (batch,) or targets.shape != (batch,):
        raise ValueError("actions and targets must have one entry per input row")
    if actions.min() < 0 or actions.max() >= params.n_actions:
        raise ValueError("action index out of range")

    z1, h1, z2, h2, q = _forward_all(params, x)
    rows = np.arange(batch)
    residual = q[rows, actions] - targets

    dq = np.zeros_like(q)
    dq[rows, actions] = residual / batch
    grad = params.like(np.empty_like(params.flat))
    grad.W3[...] = dq.T @ h2
    grad.b3[...] = dq.sum(axis=0)
    dz2 = (dq @ params.W3) * (z2 > 0)
    grad.W2[...] = dz2.T @ h1
    grad.b2[...] = dz2.sum(axis=0)
    dz1 = (dz2 @ params.W2) * (z1 > 0)
    grad.W1[...] = dz1.T @ x
    grad.b1[...] = dz1.sum(axis=0)

    loss = float(residual[0] ** 2) if single else float(np.mean(residual ** 2))
    return loss, grad


def backward(params: MLPParameters, x: np.ndarray, action, td_target) -> MLPParameters:
    """Gradient of 0.5 * (td_target - Q(x, action))**2 w.r.t. every parameter."""
    return loss_and_grad(params, x, action, td_target)[1]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MLPParameters, **hyper) -> AdamState:
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat), **hyper)


def adam_step(params: MLPParameters, grads: MLPParameters, state: AdamState) -> tuple[MLPParameters, AdamState]:
    """One bias-corrected Adam update. Mutates ``params`` and ``state`` in place and returns them."""
    if grads.flat.shape != params.flat.shape or state.m.shape != params.flat.shape:
        raise ValueError("parameter, gradient and optimizer shapes disagree")
    g = grads.flat
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    params.flat -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
