"""Central finite-difference gradients for checking analytic backprop."""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_difference_gradient(
    loss_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    step: float = 1e-5,
) -> np.ndarray:
    """Estimate d loss / d params by central differences.

    loss_fn must be a pure function of the flat parameter vector it is
    handed; it is called 2 * len(params) times.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    probe = params.copy()
    for i in range(params.size):
        original = probe[i]
        probe[i] = original + step
        up = loss_fn(probe)
        probe[i] = original - step
        down = loss_fn(probe)
        probe[i] = original
        grad[i] = (up - down) / (2.0 * step)
    return grad
