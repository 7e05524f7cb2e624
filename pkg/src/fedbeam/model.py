"""Model construction, forward/backward, and weight export.

Two architectures share one config type.  ``fed_kan`` stacks spline layers
over [input] + kan_hidden_widths, then a fully connected head (ReLU and
dropout after every head layer except the last).  ``fed_mlp`` is a plain
multilayer perceptron with ReLU and dropout after each hidden layer.  Both
end in a linear readout of ``output_width`` traffic shares.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import ConfigurationError, ContractViolationError
from .layers import (
    MODE_EVAL,
    MODE_TRAIN,
    GradientBundle,
    KanLayerGrads,
    KanLayerParams,
    LinearLayerGrads,
    LinearLayerParams,
    dropout,
    dropout_backward,
    kan_layer_backward,
    kan_layer_forward,
    linear_backward,
    linear_forward,
    relu,
    relu_backward,
)
from .params import ParameterVector
from .splines import SplineGrid

KIND_FED_KAN = "fed_kan"
KIND_FED_MLP = "fed_mlp"


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and regularization settings for one model."""

    kind: str
    input_width: int = 10
    kan_hidden_widths: tuple[int, ...] = (2, 4, 8)
    mlp_hidden_widths: tuple[int, ...] = (8, 16, 48)
    fc_head_widths: tuple[int, ...] = (8, 4)
    output_width: int = 4
    grid_intervals: int = 5
    spline_order: int = 3
    dropout_p: float = 0.5

    @classmethod
    def fed_kan(cls, **overrides) -> "ModelConfig":
        return cls(kind=KIND_FED_KAN, **overrides)

    @classmethod
    def fed_mlp(cls, **overrides) -> "ModelConfig":
        return cls(kind=KIND_FED_MLP, **overrides)

    def validate(self) -> None:
        if self.kind not in (KIND_FED_KAN, KIND_FED_MLP):
            raise ConfigurationError(
                f"kind must be {KIND_FED_KAN!r} or {KIND_FED_MLP!r}, got {self.kind!r}"
            )
        if self.input_width < 1:
            raise ConfigurationError(f"input_width must be >= 1, got {self.input_width}")
        if self.output_width < 1:
            raise ConfigurationError(f"output_width must be >= 1, got {self.output_width}")
        for name, widths in (
            ("kan_hidden_widths", self.kan_hidden_widths),
            ("mlp_hidden_widths", self.mlp_hidden_widths),
            ("fc_head_widths", self.fc_head_widths),
        ):
            if any(w < 1 for w in widths):
                raise ConfigurationError(f"{name} entries must be >= 1, got {widths}")
        if self.kind == KIND_FED_KAN and self.fc_head_widths:
            if self.fc_head_widths[-1] != self.output_width:
                raise ConfigurationError(
                    f"fc_head_widths must end in output_width "
                    f"({self.output_width}), got {self.fc_head_widths}"
                )
        if self.grid_intervals < 1:
            raise ConfigurationError(
                f"grid_intervals must be >= 1, got {self.grid_intervals}"
            )
        if self.spline_order < 0:
            raise ConfigurationError(
                f"spline_order must be >= 0, got {self.spline_order}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError(
                f"dropout_p must be in [0, 1), got {self.dropout_p}"
            )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_width": self.input_width,
            "kan_hidden_widths": list(self.kan_hidden_widths),
            "mlp_hidden_widths": list(self.mlp_hidden_widths),
            "fc_head_widths": list(self.fc_head_widths),
            "output_width": self.output_width,
            "grid_intervals": self.grid_intervals,
            "spline_order": self.spline_order,
            "dropout_p": self.dropout_p,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        known = {
            "kind",
            "input_width",
            "kan_hidden_widths",
            "mlp_hidden_widths",
            "fc_head_widths",
            "output_width",
            "grid_intervals",
            "spline_order",
            "dropout_p",
        }
        extra = set(raw) - known
        if extra:
            raise ConfigurationError(f"unknown model config keys: {sorted(extra)}")
        if "kind" not in raw:
            raise ConfigurationError("model config must name a kind")
        kwargs = dict(raw)
        for key in ("kan_hidden_widths", "mlp_hidden_widths", "fc_head_widths"):
            if key in kwargs:
                kwargs[key] = tuple(int(w) for w in kwargs[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


# Layer plan entries: ("kan", in, out) or ("linear", in, out, relu, dropout).
def layer_plan(config: ModelConfig) -> list[tuple]:
    """Expand a config into the ordered list of concrete layers."""
    config.validate()
    plan: list[tuple] = []
    if config.kind == KIND_FED_KAN:
        widths = [config.input_width, *config.kan_hidden_widths]
        for a, b in zip(widths[:-1], widths[1:]):
            plan.append(("kan", a, b))
        head_in = widths[-1]
        head = list(config.fc_head_widths)
        if not head:
            # Degenerate config: no head means a single plain readout.
            plan.append(("linear", head_in, config.output_width, False, False))
            return plan
        for i, w in enumerate(head):
            last = i == len(head) - 1
            plan.append(("linear", head_in, w, not last, not last))
            head_in = w
    else:
        widths = [config.input_width, *config.mlp_hidden_widths, config.output_width]
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            last = i == len(widths) - 2
            plan.append(("linear", a, b, not last, not last))
    return plan


def count_parameters(config: ModelConfig) -> int:
    """Trainable scalar count.

    Spline layers carry in*out*(grid_intervals + spline_order) coefficients
    plus in*out base weights; affine layers carry in*out weights plus out
    biases.
    """
    bases = config.grid_intervals + config.spline_order
    total = 0
    for entry in layer_plan(config):
        if entry[0] == "kan":
            _, a, b = entry
            total += a * b * bases + a * b
        else:
            _, a, b, _, _ = entry
            total += a * b + b
    return total


@dataclass(frozen=True)
class KanBlock:
    params: KanLayerParams


@dataclass(frozen=True)
class LinearBlock:
    params: LinearLayerParams
    apply_relu: bool
    apply_dropout: bool


Block = Union[KanBlock, LinearBlock]


@dataclass(frozen=True)
class Model:
    """A built network: config plus concrete layer parameters."""

    config: ModelConfig
    blocks: tuple[Block, ...]


def build_model(config: ModelConfig, seed: int) -> Model:
    """Initialize a model deterministically from a seed."""
    rng = np.random.default_rng(seed)
    grid = SplineGrid.uniform(config.grid_intervals, config.spline_order)
    blocks: list[Block] = []
    for entry in layer_plan(config):
        if entry[0] == "kan":
            _, a, b = entry
            blocks.append(KanBlock(KanLayerParams.initialized(a, b, grid, rng)))
        else:
            _, a, b, use_relu, use_dropout = entry
            blocks.append(
                LinearBlock(LinearLayerParams.initialized(a, b, rng), use_relu, use_dropout)
            )
    return Model(config, tuple(blocks))


def forward(
    model: Model,
    batch: np.ndarray,
    mode: str = MODE_EVAL,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Plain forward pass; training mode needs an rng for dropout."""
    out, _ = forward_with_caches(model, batch, mode, rng)
    return out


def forward_with_caches(
    model: Model,
    batch: np.ndarray,
    mode: str = MODE_EVAL,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list[dict]]:
    if batch.ndim != 2 or batch.shape[1] != model.config.input_width:
        raise ContractViolationError(
            f"expected batch of shape (n, {model.config.input_width}), got {batch.shape}"
        )
    if mode == MODE_TRAIN and model.config.dropout_p > 0.0 and rng is None:
        raise ContractViolationError("training mode with dropout needs an rng")
    x = np.asarray(batch, dtype=np.float64)
    caches: list[dict] = []
    for block in model.blocks:
        if isinstance(block, KanBlock):
            x, cache = kan_layer_forward(x, block.params)
            caches.append({"kind": "kan", "layer": cache})
        else:
            x, cache = linear_forward(x, block.params)
            entry = {"kind": "linear", "layer": cache, "relu_mask": None, "drop_mask": None}
            if block.apply_relu:
                x, mask = relu(x)
                entry["relu_mask"] = mask
            if block.apply_dropout:
                x, mask = dropout(x, model.config.dropout_p, mode, rng or np.random.default_rng(0))
                entry["drop_mask"] = mask
            caches.append(entry)
    return x, caches


def model_backward(
    model: Model, caches: list[dict], upstream: np.ndarray
) -> tuple[np.ndarray, GradientBundle]:
    """Backpropagate the loss gradient through every block."""
    if len(caches) != len(model.blocks):
        raise ContractViolationError(
            f"cache list of length {len(caches)} does not match {len(model.blocks)} blocks"
        )
    grads: list = [None] * len(model.blocks)
    u = upstream
    for i in range(len(model.blocks) - 1, -1, -1):
        block = model.blocks[i]
        entry = caches[i]
        if isinstance(block, KanBlock):
            u, g = kan_layer_backward(u, block.params, entry["layer"])
        else:
            if entry["drop_mask"] is not None:
                u = dropout_backward(u, entry["drop_mask"])
            if entry["relu_mask"] is not None:
                u = relu_backward(u, entry["relu_mask"])
            u, g = linear_backward(u, block.params, entry["layer"])
        grads[i] = g
    return u, GradientBundle(tuple(grads))


def _segment_names(index: int, block: Block) -> list[str]:
    if isinstance(block, KanBlock):
        return [f"layer{index:02d}.spline_coeffs", f"layer{index:02d}.base_weights"]
    return [f"layer{index:02d}.weights", f"layer{index:02d}.biases"]


def export_weights(model: Model) -> ParameterVector:
    """Snapshot all trainable arrays as a named parameter vector."""
    named: list[tuple[str, np.ndarray]] = []
    for i, block in enumerate(model.blocks):
        names = _segment_names(i, block)
        if isinstance(block, KanBlock):
            named.append((names[0], block.params.spline_coeffs))
            named.append((names[1], block.params.base_weights))
        else:
            named.append((names[0], block.params.weights))
            named.append((names[1], block.params.biases))
    return ParameterVector.from_arrays(named)


def import_weights(model: Model, vector: ParameterVector) -> Model:
    """Return a copy of the model carrying the vector's values."""
    expected = export_weights(model)
    expected.require_same_layout(vector)
    blocks: list[Block] = []
    seg = 0
    for block in model.blocks:
        if isinstance(block, KanBlock):
            coeffs = vector.segments[seg].reshaped()
            base = vector.segments[seg + 1].reshaped()
            blocks.append(KanBlock(replace(block.params, spline_coeffs=coeffs, base_weights=base)))
        else:
            weights = vector.segments[seg].reshaped()
            biases = vector.segments[seg + 1].reshaped()
            blocks.append(
                LinearBlock(
                    replace(block.params, weights=weights, biases=biases),
                    block.apply_relu,
                    block.apply_dropout,
                )
            )
        seg += 2
    return Model(model.config, tuple(blocks))


def gradient_vector(model: Model, grads: GradientBundle) -> ParameterVector:
    """Name-align a gradient bundle with the model's weight layout."""
    if len(grads.layers) != len(model.blocks):
        raise ContractViolationError(
            f"gradient bundle of length {len(grads.layers)} does not match "
            f"{len(model.blocks)} blocks"
        )
    named: list[tuple[str, np.ndarray]] = []
    for i, (block, layer) in enumerate(zip(model.blocks, grads.layers)):
        names = _segment_names(i, block)
        if isinstance(block, KanBlock):
            if not isinstance(layer, KanLayerGrads):
                raise ContractViolationError(f"block {i} expected spline gradients")
            named.append((names[0], layer.spline_coeffs))
            named.append((names[1], layer.base_weights))
        else:
            if not isinstance(layer, LinearLayerGrads):
                raise ContractViolationError(f"block {i} expected affine gradients")
            named.append((names[0], layer.weights))
            named.append((names[1], layer.biases))
    return ParameterVector.from_arrays(named)
