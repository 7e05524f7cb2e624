"""Loss, gradient clipping, and the Adam update rule.

adam_step operates on flat float64 vectors: the training loop extracts the
model parameters into one flat vector (the same layout the parameter-vector
serialization uses), updates it, and writes it back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractViolationError
from .layers import GradientBundle


def mse_loss(predictions: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over every element, plus its gradient.

    The gradient has the shape of ``predictions``: 2 * (p - t) / N where N
    is the total element count.
    """
    if predictions.shape != targets.shape:
        raise ContractViolationError(
            f"prediction shape {predictions.shape} != target shape {targets.shape}"
        )
    if predictions.size == 0:
        raise ContractViolationError("cannot take the loss of an empty batch")
    diff = predictions - targets
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad


def gradient_global_norm(grads: GradientBundle) -> float:
    total = 0.0
    for arr in grads.arrays():
        total += float(np.sum(arr * arr))
    return math.sqrt(total)


def clip_gradient_norm(grads: GradientBundle, max_norm: float) -> GradientBundle:
    """Scale all gradients together so their global L2 norm is <= max_norm."""
    if max_norm <= 0.0:
        raise ContractViolationError(f"max_norm must be positive, got {max_norm}")
    norm = gradient_global_norm(grads)
    if norm <= max_norm:
        return grads
    return grads.scaled(max_norm / norm)


@dataclass(frozen=True)
class AdamState:
    """Immutable Adam accumulator; each step returns a fresh state."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    learning_rate: float
    weight_decay: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def initial(
        cls,
        size: int,
        learning_rate: float,
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> "AdamState":
        return cls(
            first_moment=np.zeros(size, dtype=np.float64),
            second_moment=np.zeros(size, dtype=np.float64),
            step_count=0,
            learning_rate=learning_rate,
            weight_decay=weight_decay,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState
) -> tuple[np.ndarray, AdamState]:
    """One Adam update on a flat parameter vector.

    Weight decay is folded into the gradient (decoupled decay is not used):
    g <- g + wd * theta.
    """
    if params.shape != grads.shape or params.ndim != 1:
        raise ContractViolationError(
            f"params {params.shape} and grads {grads.shape} must be flat and equal"
        )
    if params.shape[0] != state.first_moment.shape[0]:
        raise ContractViolationError(
            f"optimizer state sized {state.first_moment.shape[0]} cannot update "
            f"{params.shape[0]} parameters"
        )
    g = grads + state.weight_decay * params
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)
