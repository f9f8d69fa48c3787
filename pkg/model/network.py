"""
NetworkModel and the two reference topologies.

``build_original`` is the uncompressed classifier (17,553 learnables);
``build_optimized`` is its pruned and projected counterpart (419 learnables).
Both are returned with randomly initialised parameters; shapes are what
matter for bookkeeping, training fills in the values.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from fxp import QFormat

from .config import (
    CLASS_COUNT,
    DROPOUT_RATE,
    FC_BIAS_INIT,
    FIRST_CONV_PADDING,
    INPUT_LENGTH,
    KERNEL_LEN,
    OPTIMIZED_FILTERS,
    OPTIMIZED_RANKS,
    ORIGINAL_FILTERS,
    POOL_SIZE,
)
from .layers import (
    Conv1D,
    Dropout,
    FullyConnected,
    LayerSpec,
    MaxPool1D,
    PointwiseConv,
    ReLU,
    ShapeMismatchError,
    WeightedLayer,
)


@dataclass(eq=False)
class NetworkModel:
    layers: List[LayerSpec]
    class_count: int = CLASS_COUNT
    input_length: int = INPUT_LENGTH
    input_channels: int = 1
    input_format: Optional[QFormat] = None
    name: str = "cnn"
    meta: Dict[str, Any] = field(default_factory=dict)

    # ── structure ─────────────────────────────────────────────────────────

    def check_shapes(self) -> List[Tuple[int, int]]:
        """Propagate (channels, length) through every layer; returns each layer's output."""
        channels, length = self.input_channels, self.input_length
        shapes = []
        for layer in self.layers:
            channels, length = layer.propagate(channels, length)
            shapes.append((channels, length))
        if channels * length != self.class_count:
            last = self.layers[-1].name if self.layers else "<input>"
            raise ShapeMismatchError(last, f"{self.class_count} class scores", channels * length)
        return shapes

    def weighted_layers(self) -> Iterator[WeightedLayer]:
        for layer in self.layers:
            if layer.is_weighted:
                yield layer

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def index_of(self, name: str) -> int:
        for i, layer in enumerate(self.layers):
            if layer.name == name:
                return i
        raise KeyError(name)

    # ── bookkeeping ───────────────────────────────────────────────────────

    @property
    def learnables(self) -> int:
        return sum(layer.learnables for layer in self.layers)

    @property
    def is_quantized(self) -> bool:
        weighted = list(self.weighted_layers())
        return self.input_format is not None and bool(weighted) and all(layer.is_quantized for layer in weighted)

    @property
    def precision(self) -> str:
        return "fixed" if self.is_quantized else "real"

    @property
    def weight_bits(self) -> int:
        """Parameter width: the quantized width when uniform, else 32 (float)."""
        if not self.is_quantized:
            return 32
        widths = {layer.qweight.bits for layer in self.weighted_layers()} | {
            layer.qbias.bits for layer in self.weighted_layers()
        }
        if len(widths) != 1:
            raise ValueError(f"mixed parameter widths {sorted(widths)}")
        return widths.pop()

    def memory_bytes(self, bits: Optional[int] = None) -> int:
        return memory_bytes(self.learnables, self.weight_bits if bits is None else bits)

    def copy(self) -> "NetworkModel":
        return copy.deepcopy(self)

    def shape_table(self) -> List[Dict[str, Any]]:
        """Per-layer W/B dims and output activation shape (SSCB)."""
        rows = []
        for layer, (channels, length) in zip(self.layers, self.check_shapes()):
            row = layer.as_dict()
            row["A"] = f"1×{length}×{channels}"
            rows.append(row)
        return rows

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "class_count": self.class_count,
            "input_length": self.input_length,
            "precision": self.precision,
            "learnables": self.learnables,
            "memory_bytes": self.memory_bytes(),
            "layers": self.shape_table(),
        }


def memory_bytes(learnables: int, bits: int) -> int:
    return math.ceil(learnables * bits / 8)


# ──────────────────────────────────────────────────────────────────────────────
# Builders
# ──────────────────────────────────────────────────────────────────────────────


def _he(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, math.sqrt(2.0 / max(fan_in, 1)), size=shape)


def conv_layer(name: str, in_ch: int, out_ch: int, rng: np.random.Generator, padding: int = 0) -> Conv1D:
    return Conv1D(
        name=name,
        weight=_he(rng, (1, KERNEL_LEN, in_ch, out_ch), KERNEL_LEN * in_ch),
        bias=np.zeros((1, 1, out_ch)),
        padding=padding,
    )


def pointwise_layer(name: str, in_ch: int, out_ch: int, rng: np.random.Generator) -> PointwiseConv:
    return PointwiseConv(
        name=name,
        weight=_he(rng, (1, 1, in_ch, out_ch), in_ch),
        bias=np.zeros((1, 1, out_ch)),
    )


def fc_layer(name: str, in_dim: int, out_dim: int, rng: np.random.Generator, bias: float = 0.0) -> FullyConnected:
    return FullyConnected(
        name=name,
        weight=_he(rng, (out_dim, in_dim), in_dim),
        bias=np.full(out_dim, bias),
    )


def _fc_width(filters: int, input_length: int) -> int:
    length = input_length + 2 * FIRST_CONV_PADDING - KERNEL_LEN + 1
    length = (length - KERNEL_LEN + 1) // POOL_SIZE
    length = (length - KERNEL_LEN + 1) // POOL_SIZE
    return filters * length


def build_network(
    filters: Sequence[int] = (ORIGINAL_FILTERS,) * 3,
    class_count: int = CLASS_COUNT,
    input_length: int = INPUT_LENGTH,
    dropout_rate: float = DROPOUT_RATE,
    seed: int = 0,
    name: str = "cnn",
) -> NetworkModel:
    """Three-convolution classifier with the given filter counts."""
    f1, f2, f3 = filters
    rng = np.random.default_rng(seed)
    layers: List[LayerSpec] = [
        conv_layer("conv1", 1, f1, rng, padding=FIRST_CONV_PADDING),
        ReLU(name="relu1"),
        conv_layer("conv2", f1, f2, rng),
        ReLU(name="relu2"),
        MaxPool1D(name="pool2"),
        conv_layer("conv3", f2, f3, rng),
        ReLU(name="relu3"),
        MaxPool1D(name="pool3"),
        Dropout(name="dropout", rate=dropout_rate),
        fc_layer("fc", _fc_width(f3, input_length), class_count, rng, bias=FC_BIAS_INIT),
        ReLU(name="relu_fc"),
    ]
    model = NetworkModel(layers=layers, class_count=class_count, input_length=input_length, name=name)
    model.check_shapes()
    return model


def build_original(seed: int = 0, class_count: int = CLASS_COUNT) -> NetworkModel:
    return build_network(class_count=class_count, seed=seed, name="original")


def build_projected(
    filters: int = OPTIMIZED_FILTERS,
    ranks: Optional[Dict[str, Tuple[Optional[int], int]]] = None,
    class_count: int = CLASS_COUNT,
    input_length: int = INPUT_LENGTH,
    dropout_rate: float = DROPOUT_RATE,
    seed: int = 0,
    name: str = "projected",
) -> NetworkModel:
    """Projected topology: every convolution and the classifier wrapped in
    projection-in / core / projection-out sublayers of the given ranks."""
    ranks = dict(OPTIMIZED_RANKS if ranks is None else ranks)
    rng = np.random.default_rng(seed)
    layers: List[LayerSpec] = []

    def conv_stage(label: str, in_ch: int, padding: int) -> None:
        rank_in, rank_out = ranks[label]
        core_in = in_ch
        if rank_in is not None and in_ch > 1:
            layers.append(pointwise_layer(f"{label}.proj_in", in_ch, rank_in, rng))
            core_in = rank_in
        layers.append(conv_layer(f"{label}.core", core_in, rank_out, rng, padding=padding))
        layers.append(pointwise_layer(f"{label}.proj_out", rank_out, filters, rng))

    conv_stage("conv1", 1, FIRST_CONV_PADDING)
    layers.append(ReLU(name="relu1"))
    conv_stage("conv2", filters, 0)
    layers.extend([ReLU(name="relu2"), MaxPool1D(name="pool2")])
    conv_stage("conv3", filters, 0)
    layers.extend([ReLU(name="relu3"), MaxPool1D(name="pool3"), Dropout(name="dropout", rate=dropout_rate)])
    fc_rank = ranks["fc"][1]
    layers.append(fc_layer("fc.proj_in", _fc_width(filters, input_length), fc_rank, rng))
    layers.append(fc_layer("fc.proj_out", fc_rank, class_count, rng, bias=FC_BIAS_INIT))
    layers.append(ReLU(name="relu_fc"))

    model = NetworkModel(layers=layers, class_count=class_count, input_length=input_length, name=name)
    model.check_shapes()
    return model


def build_optimized(seed: int = 0) -> NetworkModel:
    return build_projected(seed=seed, name="optimized")
