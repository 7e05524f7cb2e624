"""Layer primitives with hand-derived forward and backward passes.

Two trainable layer kinds exist: spline layers whose per-edge activation is
``w_base * silu(x) + sum_m c_m * B_m(x)``, and plain affine layers.  All
arithmetic is float64 and every backward consumes the cache produced by the
matching forward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, ContractViolationError
from .splines import SplineGrid, basis_and_derivative, basis_matrix

MODE_TRAIN = "train"
MODE_EVAL = "eval"


@dataclass(frozen=True)
class KanLayerParams:
    """Parameters of one spline layer.

    spline_coeffs has shape (in_width, out_width, num_bases) and
    base_weights has shape (in_width, out_width).
    """

    spline_coeffs: np.ndarray
    base_weights: np.ndarray
    grid: SplineGrid

    @classmethod
    def initialized(
        cls, in_width: int, out_width: int, grid: SplineGrid, rng: np.random.Generator
    ) -> "KanLayerParams":
        """Draw fresh parameters; spline coefficients start near zero."""
        if in_width < 1 or out_width < 1:
            raise ConfigurationError(
                f"layer widths must be >= 1, got {in_width}x{out_width}"
            )
        coeffs = rng.uniform(
            -0.1, 0.1, size=(in_width, out_width, grid.num_bases)
        ) / np.sqrt(in_width)
        bound = np.sqrt(6.0 / in_width)
        base = rng.uniform(-bound, bound, size=(in_width, out_width))
        return cls(coeffs, base, grid)

    @property
    def in_width(self) -> int:
        return self.base_weights.shape[0]

    @property
    def out_width(self) -> int:
        return self.base_weights.shape[1]


@dataclass(frozen=True)
class LinearLayerParams:
    """Affine layer: out = x @ weights.T + biases."""

    weights: np.ndarray
    biases: np.ndarray

    @classmethod
    def initialized(
        cls, in_width: int, out_width: int, rng: np.random.Generator
    ) -> "LinearLayerParams":
        if in_width < 1 or out_width < 1:
            raise ConfigurationError(
                f"layer widths must be >= 1, got {in_width}x{out_width}"
            )
        bound = np.sqrt(6.0 / in_width)
        weights = rng.uniform(-bound, bound, size=(out_width, in_width))
        biases = np.zeros(out_width, dtype=np.float64)
        return cls(weights, biases)

    @property
    def in_width(self) -> int:
        return self.weights.shape[1]

    @property
    def out_width(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class KanLayerGrads:
    spline_coeffs: np.ndarray
    base_weights: np.ndarray


@dataclass(frozen=True)
class LinearLayerGrads:
    weights: np.ndarray
    biases: np.ndarray


@dataclass(frozen=True)
class GradientBundle:
    """Per-layer gradients in model order."""

    layers: tuple

    def arrays(self) -> Iterator[np.ndarray]:
        """Yield every gradient array in a fixed canonical order."""
        for layer in self.layers:
            if isinstance(layer, KanLayerGrads):
                yield layer.spline_coeffs
                yield layer.base_weights
            elif isinstance(layer, LinearLayerGrads):
                yield layer.weights
                yield layer.biases
            else:
                raise ContractViolationError(f"unknown gradient entry {type(layer)!r}")

    def scaled(self, factor: float) -> "GradientBundle":
        out = []
        for layer in self.layers:
            if isinstance(layer, KanLayerGrads):
                out.append(
                    KanLayerGrads(layer.spline_coeffs * factor, layer.base_weights * factor)
                )
            else:
                out.append(LinearLayerGrads(layer.weights * factor, layer.biases * factor))
        return GradientBundle(tuple(out))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def kan_layer_forward(
    inputs: np.ndarray, params: KanLayerParams
) -> tuple[np.ndarray, dict]:
    """Forward pass of a spline layer.

    inputs has shape (batch, in_width); the result has shape
    (batch, out_width).  The returned cache feeds kan_layer_backward.
    """
    if inputs.ndim != 2 or inputs.shape[1] != params.in_width:
        raise ContractViolationError(
            f"expected inputs of shape (batch, {params.in_width}), got {inputs.shape}"
        )
    flat = inputs.reshape(-1)
    bases_flat, dbases_flat = basis_and_derivative(flat, params.grid)
    n, w = inputs.shape
    bases = bases_flat.reshape(n, w, params.grid.num_bases)
    dbases = dbases_flat.reshape(n, w, params.grid.num_bases)
    sig = sigmoid(inputs)
    silu_x = inputs * sig
    out = silu_x @ params.base_weights
    out = out + np.einsum("bim,iom->bo", bases, params.spline_coeffs)
    cache = {
        "inputs": inputs,
        "sigmoid": sig,
        "silu": silu_x,
        "bases": bases,
        "dbases": dbases,
    }
    return out, cache


def kan_layer_backward(
    upstream: np.ndarray, params: KanLayerParams, cache: dict
) -> tuple[np.ndarray, KanLayerGrads]:
    """Backward pass; returns (input gradient, parameter gradients)."""
    if upstream.shape != (cache["inputs"].shape[0], params.out_width):
        raise ContractViolationError(
            f"upstream shape {upstream.shape} does not match layer output "
            f"({cache['inputs'].shape[0]}, {params.out_width})"
        )
    x = cache["inputs"]
    sig = cache["sigmoid"]
    bases = cache["bases"]
    dbases = cache["dbases"]

    d_base = cache["silu"].T @ upstream
    d_coeffs = np.einsum("bo,bim->iom", upstream, bases)

    # d silu(x) / dx = sigmoid(x) * (1 + x * (1 - sigmoid(x)))
    silu_prime = sig * (1.0 + x * (1.0 - sig))
    d_inputs = (upstream @ params.base_weights.T) * silu_prime
    d_inputs = d_inputs + np.einsum("bo,iom,bim->bi", upstream, params.spline_coeffs, dbases)
    return d_inputs, KanLayerGrads(d_coeffs, d_base)


def linear_forward(
    inputs: np.ndarray, params: LinearLayerParams
) -> tuple[np.ndarray, dict]:
    if inputs.ndim != 2 or inputs.shape[1] != params.in_width:
        raise ContractViolationError(
            f"expected inputs of shape (batch, {params.in_width}), got {inputs.shape}"
        )
    out = inputs @ params.weights.T + params.biases
    return out, {"inputs": inputs}


def linear_backward(
    upstream: np.ndarray, params: LinearLayerParams, cache: dict
) -> tuple[np.ndarray, LinearLayerGrads]:
    x = cache["inputs"]
    if upstream.shape != (x.shape[0], params.out_width):
        raise ContractViolationError(
            f"upstream shape {upstream.shape} does not match layer output "
            f"({x.shape[0]}, {params.out_width})"
        )
    d_weights = upstream.T @ x
    d_biases = upstream.sum(axis=0)
    d_inputs = upstream @ params.weights
    return d_inputs, LinearLayerGrads(d_weights, d_biases)


def relu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (output, mask); the mask is reused by the backward pass."""
    mask = x > 0
    return x * mask, mask


def relu_backward(upstream: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return upstream * mask


def dropout(
    inputs: np.ndarray, drop_prob: float, mode: str, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Inverted dropout.  Eval mode is the identity with an all-ones mask."""
    if not 0.0 <= drop_prob < 1.0:
        raise ConfigurationError(f"dropout probability must be in [0, 1), got {drop_prob}")
    if mode == MODE_EVAL or drop_prob == 0.0:
        mask = np.ones_like(inputs)
        return inputs, mask
    if mode != MODE_TRAIN:
        raise ConfigurationError(f"unknown mode {mode!r}")
    keep = 1.0 - drop_prob
    mask = (rng.random(inputs.shape) < keep).astype(np.float64) / keep
    return inputs * mask, mask


def dropout_backward(upstream: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return upstream * mask
