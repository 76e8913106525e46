"""Dense layers, SELU, softmax and the MLP forward/backward pair.

Parameters live in a flat ``dict[str, ndarray]`` owned by the model; the
functions here read and write it by prefix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

ACTIVATIONS = ("selu", "identity", "softmax")


def selu(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths including the input width, e.g. (16, 512, 512)."""

    widths: tuple[int, ...]
    activation: str = "selu"
    final_activation: str = "selu"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least one layer")
        for a in (self.activation, self.final_activation):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.activation == "softmax":
            raise ValueError("softmax is only allowed as the final activation")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]

    def activation_of(self, layer: int) -> str:
        return self.final_activation if layer == self.n_layers - 1 else self.activation

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "activation": self.activation,
                "final_activation": self.final_activation}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(tuple(d["widths"]), d["activation"], d["final_activation"])


def init_mlp(spec: MlpSpec, prefix: str, rng: np.random.Generator, params: dict) -> None:
    """LeCun-normal weights (std = 1/sqrt(fan_in)), zero biases."""
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        params[f"{prefix}.{i}.W"] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        params[f"{prefix}.{i}.b"] = np.zeros(fan_out)


def mlp_forward(spec: MlpSpec, params: dict, x: np.ndarray, prefix: str = "mlp",
                keep: bool = False):
    """Dense forward pass.  Returns the output, plus a cache when `keep`."""
    if x.shape[-1] != spec.in_width:
        raise ValueError(f"{prefix}: expected input width {spec.in_width}, got {x.shape[-1]}")
    cache = []
    h = x
    for i in range(spec.n_layers):
        z = h @ params[f"{prefix}.{i}.W"] + params[f"{prefix}.{i}.b"]
        act = spec.activation_of(i)
        if act == "selu":
            out = selu(z)
        elif act == "softmax":
            out = softmax(z)
        else:
            out = z
        if keep:
            cache.append((h, z))
        h = out
    return (h, cache) if keep else h


def mlp_backward(spec: MlpSpec, params: dict, cache, dout: np.ndarray, grads: dict,
                 prefix: str = "mlp") -> np.ndarray:
    """Accumulate parameter gradients into `grads`; return d(input).

    A softmax final layer is not differentiated here; callers pass the
    gradient with respect to its logits instead.
    """
    g = dout
    for i in reversed(range(spec.n_layers)):
        h, z = cache[i]
        if spec.activation_of(i) == "selu":
            g = g * selu_grad(z)
        grads[f"{prefix}.{i}.W"] = grads.get(f"{prefix}.{i}.W", 0.0) + h.T @ g
        grads[f"{prefix}.{i}.b"] = grads.get(f"{prefix}.{i}.b", 0.0) + g.sum(axis=0)
        g = g @ params[f"{prefix}.{i}.W"].T
    return g
