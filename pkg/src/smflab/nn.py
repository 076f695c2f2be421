"""Parameter containers: linear layers and plain GELU MLPs.

Weights are stored as (fan_in, fan_out) so the forward pass is
``x @ W + b``.  Initialization is Glorot-normal for weights and zeros for
biases, drawn from a caller-supplied generator so that construction is
reproducible from a seed.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor


def glorot_normal(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.standard_normal((fan_in, fan_out)) * std


class Linear:
    """Affine map ``x @ weight + bias`` with weight shape (fan_in, fan_out)."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.weight = Tensor(glorot_normal(rng, fan_in, fan_out), grad_enabled=True)
        self.bias = Tensor(np.zeros(fan_out), grad_enabled=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.fan_in:
            raise DimensionError(
                f"linear layer expects width {self.fan_in}, got input {x.data.shape}"
            )
        return T.linear(x, self.weight, self.bias)

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class Mlp:
    """Stack of linear layers with GELU on every hidden layer, linear output."""

    def __init__(self, widths: Sequence[int], rng: np.random.Generator):
        if len(widths) < 2:
            raise DimensionError("an MLP needs at least an input and an output width")
        self.widths = tuple(int(w) for w in widths)
        self.layers = [
            Linear(self.widths[i], self.widths[i + 1], rng)
            for i in range(len(self.widths) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i != last:
                x = T.gelu(x)
        return x

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.parameters().items():
                params[f"fc{i}.{name}"] = p
        return params


def prefixed(prefix: str, params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {f"{prefix}.{name}": p for name, p in params.items()}
