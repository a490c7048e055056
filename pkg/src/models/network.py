"""Feedforward network shape and flat parameter vectors."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from src.models.errors import DimensionMismatch, NonFiniteResult, SchemaError

Activation = Literal["tanh", "identity"]


@dataclass(frozen=True)
class MlpArch:
    """Fully connected network shape. The output layer is always linear."""

    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int
    activation: Activation = "tanh"
    use_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        sizes = (self.input_dim, *self.hidden_sizes, self.output_dim)
        if any(s < 1 for s in sizes):
            raise ValueError(f"All layer sizes must be positive, got {sizes}")
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"Unsupported activation: {self.activation}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, self.output_dim)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) of each weight matrix."""
        sizes = self.layer_sizes
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    @property
    def param_count(self) -> int:
        bias = 1 if self.use_bias else 0
        return sum((fan_in + bias) * fan_out for fan_out, fan_in in self.layer_shapes)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_sizes": list(self.hidden_sizes),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "use_bias": self.use_bias,
        }


@dataclass(frozen=True)
class ParamVector:
    """Flat parameters: per layer the weights (fan_out × fan_in, row-major), then the bias."""

    values: np.ndarray
    arch: MlpArch = field(compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.shape[0] != self.arch.param_count:
            raise DimensionMismatch(
                f"Expected {self.arch.param_count} parameters, got {v.shape[0]}"
            )
        if not np.all(np.isfinite(v)):
            raise NonFiniteResult("Parameter vector contains NaN or Inf")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]

    def replace(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values=values, arch=self.arch)

    def layers(self) -> list[tuple[np.ndarray, np.ndarray | None]]:
        """Views of (W, b) per layer; b is None for bias-free networks."""
        out = []
        offset = 0
        for fan_out, fan_in in self.arch.layer_shapes:
            w = self.values[offset : offset + fan_out * fan_in].reshape(fan_out, fan_in)
            offset += fan_out * fan_in
            b = None
            if self.arch.use_bias:
                b = self.values[offset : offset + fan_out]
                offset += fan_out
            out.append((w, b))
        return out

    def save(self, path: str | Path) -> None:
        payload = {"arch": self.arch.to_dict(), "values": [float(v) for v in self.values]}
        Path(path).write_text(json.dumps(payload, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "ParamVector":
        try:
            payload = json.loads(Path(path).read_text())
            arch = MlpArch(
                input_dim=payload["arch"]["input_dim"],
                hidden_sizes=tuple(payload["arch"]["hidden_sizes"]),
                output_dim=payload["arch"]["output_dim"],
                activation=payload["arch"]["activation"],
                use_bias=payload["arch"].get("use_bias", True),
            )
            return cls(values=np.asarray(payload["values"], dtype=float), arch=arch)
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise SchemaError(f"Invalid parameter file {path}: {e}") from e
