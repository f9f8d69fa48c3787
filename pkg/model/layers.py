"""
Layer variants of the 1-D CNN.

Parameters use the SSCB (spatial, spatial, channel, batch) layout:

  Conv1D          W: 1×k×in×out   B: 1×1×out
  PointwiseConv   W: 1×1×in×out   B: 1×1×out
  FullyConnected  W: out×in       B: out
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, ClassVar, Dict, Optional, Tuple

import numpy as np

from fxp import QFormat, QTensor

from .config import POOL_SIZE, LayerKind


class ShapeMismatchError(ValueError):
    """Raised when a layer cannot accept the activation produced before it."""

    def __init__(self, layer: str, expected: Any, got: Any, detail: str = ""):
        self.layer = layer
        self.expected = expected
        self.got = got
        message = f"layer '{layer}': expected {expected}, got {got}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


@dataclass(frozen=True)
class TensorShape:
    s1: int
    s2: int
    c: int
    b: int = 1

    def __post_init__(self):
        for axis in ("s1", "s2", "c", "b"):
            if getattr(self, axis) < 1:
                raise ValueError(f"TensorShape.{axis} must be >= 1")

    def __str__(self) -> str:
        return f"{self.s1}×{self.s2}×{self.c}×{self.b}"


def _dims(shape: Tuple[int, ...]) -> str:
    return "×".join(str(d) for d in shape)


# ──────────────────────────────────────────────────────────────────────────────
# Base classes
# ──────────────────────────────────────────────────────────────────────────────


@dataclass(kw_only=True)
class LayerSpec:
    name: str
    kind: ClassVar[LayerKind]

    @property
    def learnables(self) -> int:
        return 0

    @property
    def is_weighted(self) -> bool:
        return False

    def propagate(self, channels: int, length: int) -> Tuple[int, int]:
        """Output (channels, length) for an input of (channels, length)."""
        return channels, length

    def as_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "name": self.name}


@dataclass(kw_only=True, eq=False)
class WeightedLayer(LayerSpec):
    weight: np.ndarray
    bias: np.ndarray
    qweight: Optional[QTensor] = None
    qbias: Optional[QTensor] = None
    out_format: Optional[QFormat] = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        raise NotImplementedError

    @property
    def is_weighted(self) -> bool:
        return True

    @property
    def is_quantized(self) -> bool:
        return self.qweight is not None and self.qbias is not None and self.out_format is not None

    @property
    def learnables(self) -> int:
        return int(self.weight.size + self.bias.size)

    def clear_quantization(self) -> None:
        self.qweight = None
        self.qbias = None
        self.out_format = None

    def as_dict(self) -> Dict[str, Any]:
        data = super().as_dict()
        data.update({"W": _dims(self.weight.shape), "B": _dims(self.bias.shape)})
        return data


# ──────────────────────────────────────────────────────────────────────────────
# Variants
# ──────────────────────────────────────────────────────────────────────────────


@dataclass(kw_only=True, eq=False)
class Conv1D(WeightedLayer):
    kind: ClassVar[LayerKind] = LayerKind.CONV1D
    stride: int = 1
    padding: int = 0

    def validate(self) -> None:
        if self.weight.ndim != 4 or self.weight.shape[0] != 1:
            raise ShapeMismatchError(self.name, "W of shape 1×k×in×out", _dims(self.weight.shape))
        if self.bias.shape != (1, 1, self.out_ch):
            raise ShapeMismatchError(self.name, f"B of shape 1×1×{self.out_ch}", _dims(self.bias.shape))
        if self.stride != 1:
            raise ShapeMismatchError(self.name, "stride 1", self.stride)

    @property
    def kernel_len(self) -> int:
        return int(self.weight.shape[1])

    @property
    def in_ch(self) -> int:
        return int(self.weight.shape[2])

    @property
    def out_ch(self) -> int:
        return int(self.weight.shape[3])

    def output_length(self, length: int) -> int:
        return length + 2 * self.padding - self.kernel_len + 1

    def propagate(self, channels: int, length: int) -> Tuple[int, int]:
        if channels != self.in_ch:
            raise ShapeMismatchError(self.name, f"{self.in_ch} input channels", channels)
        out_len = self.output_length(length)
        if out_len < 1:
            raise ShapeMismatchError(self.name, f"input length >= {self.kernel_len - 2 * self.padding}", length)
        return self.out_ch, out_len

    def as_dict(self) -> Dict[str, Any]:
        data = super().as_dict()
        data["padding"] = self.padding
        return data


@dataclass(kw_only=True, eq=False)
class PointwiseConv(WeightedLayer):
    kind: ClassVar[LayerKind] = LayerKind.POINTWISE

    def validate(self) -> None:
        if self.weight.ndim != 4 or self.weight.shape[:2] != (1, 1):
            raise ShapeMismatchError(self.name, "W of shape 1×1×in×out", _dims(self.weight.shape))
        if self.bias.shape != (1, 1, self.out_ch):
            raise ShapeMismatchError(self.name, f"B of shape 1×1×{self.out_ch}", _dims(self.bias.shape))

    @property
    def in_ch(self) -> int:
        return int(self.weight.shape[2])

    @property
    def out_ch(self) -> int:
        return int(self.weight.shape[3])

    @property
    def matrix(self) -> np.ndarray:
        """in×out mixing matrix."""
        return self.weight[0, 0]

    def propagate(self, channels: int, length: int) -> Tuple[int, int]:
        if channels != self.in_ch:
            raise ShapeMismatchError(self.name, f"{self.in_ch} input channels", channels)
        return self.out_ch, length


@dataclass(kw_only=True, eq=False)
class FullyConnected(WeightedLayer):
    kind: ClassVar[LayerKind] = LayerKind.FC

    def validate(self) -> None:
        if self.weight.ndim != 2:
            raise ShapeMismatchError(self.name, "W of shape out×in", _dims(self.weight.shape))
        if self.bias.shape != (self.out_dim,):
            raise ShapeMismatchError(self.name, f"B of shape {self.out_dim}", _dims(self.bias.shape))

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weight.shape[0])

    def propagate(self, channels: int, length: int) -> Tuple[int, int]:
        if channels * length != self.in_dim:
            raise ShapeMismatchError(
                self.name, f"{self.in_dim} inputs", channels * length, f"{channels} channels × {length}"
            )
        return self.out_dim, 1


@dataclass(kw_only=True)
class ReLU(LayerSpec):
    kind: ClassVar[LayerKind] = LayerKind.RELU


@dataclass(kw_only=True)
class MaxPool1D(LayerSpec):
    kind: ClassVar[LayerKind] = LayerKind.MAXPOOL
    pool: int = POOL_SIZE
    stride: int = POOL_SIZE

    def propagate(self, channels: int, length: int) -> Tuple[int, int]:
        if self.pool != self.stride:
            raise ShapeMismatchError(self.name, "pool == stride", (self.pool, self.stride))
        if length < self.pool:
            raise ShapeMismatchError(self.name, f"length >= {self.pool}", length)
        return channels, length // self.pool

    def as_dict(self) -> Dict[str, Any]:
        data = super().as_dict()
        data.update({"pool": self.pool, "stride": self.stride})
        return data


@dataclass(kw_only=True)
class Dropout(LayerSpec):
    kind: ClassVar[LayerKind] = LayerKind.DROPOUT
    rate: float = 0.5

    def as_dict(self) -> Dict[str, Any]:
        data = super().as_dict()
        data["rate"] = self.rate
        return data


LAYER_TYPES = {
    LayerKind.CONV1D: Conv1D,
    LayerKind.POINTWISE: PointwiseConv,
    LayerKind.FC: FullyConnected,
    LayerKind.RELU: ReLU,
    LayerKind.MAXPOOL: MaxPool1D,
    LayerKind.DROPOUT: Dropout,
}


def conv_weight(kernel: np.ndarray) -> np.ndarray:
    """Lift a k×in×out kernel array to the 1×k×in×out layout."""
    return np.asarray(kernel, dtype=np.float64)[None, ...]


def channel_bias(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float64).reshape(1, 1, -1)


__all__ = [
    "Conv1D",
    "Dropout",
    "FullyConnected",
    "LAYER_TYPES",
    "LayerSpec",
    "MaxPool1D",
    "PointwiseConv",
    "ReLU",
    "ShapeMismatchError",
    "TensorShape",
    "WeightedLayer",
    "channel_bias",
    "conv_weight",
]
