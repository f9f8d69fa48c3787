"""
Hardware blocks of the classification pipeline.

Every block owns its layers' quantized parameters and computes with
``model.forward.fixed_affine``, the same integer datapath the model's
quantized forward uses, so block outputs are bit-identical to the layer
sequence they replace. Cycle counts depend only on shapes and resources.

    SignalMemoryBlock   quantizes and holds the input segment (1 cycle)
    ConvBlock           core convolution on chained 3-MAC engines
    FusedBlock          proj-out → ReLU → (maxpool) → proj-in, one mapper per output
    ClassifierBlock     final fully connected layer (+ ReLU)
    ScoreboardBlock     argmax over class scores
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import ClassVar, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fxp import QFormat, quantize_array
from model.forward import fixed_affine, fixed_matrix
from model.layers import Conv1D, Dropout, FullyConnected, LayerSpec, MaxPool1D, PointwiseConv, ReLU

from .config import KERNEL_TAPS, MACS_PER_ENGINE, BlockConfig, BlockKind

logger = logging.getLogger(__name__)


class BlockConfigError(ValueError):
    """Resources or parameters a block cannot run with."""


@dataclass
class BlockOutput:
    raw: np.ndarray
    frac: int
    cycles: int
    label: Optional[int] = None


def _require_quantized(layers: Sequence[LayerSpec]) -> None:
    for layer in layers:
        if layer.is_weighted and not layer.is_quantized:
            raise BlockConfigError(f"{layer.name}: block needs quantized parameters")


def _as_channels(x_raw: np.ndarray) -> np.ndarray:
    x = np.asarray(x_raw, dtype=np.int64)
    return x[None, :] if x.ndim == 1 else x


# ──────────────────────────────────────────────────────────────────────────────
# Cycle formulas
# ──────────────────────────────────────────────────────────────────────────────


def conv_cycles(in_ch: int, out_ch: int, outputs: int, mac_count: int) -> int:
    """out·in·⌈N/e⌉ with e = mac_count / 3 engines."""
    if mac_count < MACS_PER_ENGINE or mac_count % MACS_PER_ENGINE:
        raise BlockConfigError(f"conv mac_count must be a positive multiple of {MACS_PER_ENGINE}, got {mac_count}")
    engines = mac_count // MACS_PER_ENGINE
    return out_ch * in_ch * math.ceil(outputs / engines)


def fused_cycles(items: int, rows: int, in_ch: int, mappers: int, has_maxpool: bool) -> int:
    """⌈items/p⌉·m·k_in, plus one comparator cycle when a maxpool is fused."""
    if mappers < 1:
        raise BlockConfigError(f"mapper count must be >= 1, got {mappers}")
    return math.ceil(items / mappers) * rows * in_ch + (1 if has_maxpool else 0)


def classifier_cycles(in_dim: int, out_dim: int, mac_count: int) -> int:
    if mac_count < 1:
        raise BlockConfigError(f"classifier mac_count must be >= 1, got {mac_count}")
    return math.ceil(out_dim / mac_count) * in_dim


# ──────────────────────────────────────────────────────────────────────────────
# Functional simulators
# ──────────────────────────────────────────────────────────────────────────────


def simulate_conv_block(x_raw: np.ndarray, in_frac: int, layer: Conv1D, mac_count: int = MACS_PER_ENGINE) -> BlockOutput:
    """Convolution on ``mac_count / 3`` engines.

    The (padded) input is split into contiguous chunks of ⌈N/e⌉ outputs;
    each engine shifts its chunk (chunk + 2 samples) through three MACs.
    Chunk results are concatenated, so the output does not depend on the
    engine count.
    """
    _require_quantized([layer])
    if layer.kernel_len != KERNEL_TAPS or layer.stride != 1:
        raise BlockConfigError(f"{layer.name}: engines need kernel {KERNEL_TAPS} and stride 1")
    x = _as_channels(x_raw)
    n = x.shape[1]
    if n < KERNEL_TAPS:
        raise BlockConfigError(f"{layer.name}: input length {n} < {KERNEL_TAPS}")
    if x.shape[0] != layer.in_ch:
        raise BlockConfigError(f"{layer.name}: expected {layer.in_ch} input channels, got {x.shape[0]}")

    padded = np.pad(x, ((0, 0), (layer.padding, layer.padding))) if layer.padding else x
    outputs = padded.shape[1] - KERNEL_TAPS + 1
    cycles = conv_cycles(layer.in_ch, layer.out_ch, outputs, mac_count)
    chunk = math.ceil(outputs / (mac_count // MACS_PER_ENGINE))
    matrix = fixed_matrix(layer)

    pieces = []
    for start in range(0, outputs, chunk):
        stop = min(start + chunk, outputs)
        window = sliding_window_view(padded[:, start : stop + KERNEL_TAPS - 1], KERNEL_TAPS, axis=1)
        rows = window.transpose(1, 0, 2).reshape(stop - start, -1)       # (c, tap) order
        pieces.append(fixed_affine(rows, in_frac, layer.qweight, matrix, layer.qbias, layer.out_format))
    out = np.concatenate(pieces, axis=0).T
    return BlockOutput(out, layer.out_format.frac_bits, cycles)


def _fused_parts(layers: Sequence[LayerSpec]) -> Tuple[PointwiseConv, Optional[MaxPool1D], LayerSpec]:
    if len(layers) < 3 or not isinstance(layers[0], PointwiseConv) or not isinstance(layers[1], ReLU):
        raise BlockConfigError("fused block must start with a pointwise projection followed by ReLU")
    head, end = layers[0], layers[-1]
    if not isinstance(end, (PointwiseConv, FullyConnected)):
        raise BlockConfigError(f"{end.name}: fused block must end in a pointwise or fully connected projection")
    pool = None
    for layer in layers[2:-1]:
        if isinstance(layer, MaxPool1D) and pool is None:
            pool = layer
        elif not isinstance(layer, Dropout):
            raise BlockConfigError(f"{layer.name}: unexpected {layer.kind.value} inside a fused block")
    return head, pool, end


def fused_geometry(layers: Sequence[LayerSpec], length: int) -> Tuple[int, int, int, bool]:
    """(items, m, k_in, has_maxpool) of a fused block fed ``length`` positions."""
    head, pool, end = _fused_parts(layers)
    positions = length // pool.pool if pool is not None else length
    rows = head.out_ch
    if isinstance(end, PointwiseConv):
        if end.in_ch != rows:
            raise BlockConfigError(f"{end.name}: reads {end.in_ch} rows, {head.name} produces {rows}")
        items = positions * end.out_ch
    else:
        if end.in_dim != rows * positions:
            raise BlockConfigError(f"{end.name}: reads {end.in_dim} values, block produces {rows}×{positions}")
        items = positions * end.out_dim
    return items, rows, head.in_ch, pool is not None


def simulate_fused_block(x_raw: np.ndarray, in_frac: int, layers: Sequence[LayerSpec], mappers: int = 1) -> BlockOutput:
    """e_j = b′ + Σ_i w′_i · max(0, w_i·a_j + b_i), each mapper owning one output at a time."""
    _require_quantized(layers)
    head, pool, end = _fused_parts(layers)
    x = _as_channels(x_raw)
    if x.shape[0] != head.in_ch:
        raise BlockConfigError(f"{head.name}: expected {head.in_ch} input channels, got {x.shape[0]}")
    items, rows, k_in, has_pool = fused_geometry(layers, x.shape[1])
    cycles = fused_cycles(items, rows, k_in, mappers, has_pool)

    hidden = fixed_affine(x.T, in_frac, head.qweight, fixed_matrix(head), head.qbias, head.out_format)
    hidden = np.maximum(hidden, 0)                                          # (positions, m)
    if pool is not None:
        keep = (hidden.shape[0] // pool.pool) * pool.pool
        hidden = hidden[:keep].reshape(-1, pool.pool, rows).max(axis=1)
    frac = head.out_format.frac_bits
    if isinstance(end, PointwiseConv):
        out = fixed_affine(hidden, frac, end.qweight, fixed_matrix(end), end.qbias, end.out_format).T
    else:
        flat = hidden.T.reshape(1, -1)                                      # channel-major
        out = fixed_affine(flat, frac, end.qweight, fixed_matrix(end), end.qbias, end.out_format).reshape(-1, 1)
    return BlockOutput(out, end.out_format.frac_bits, cycles)


def simulate_classifier(x_raw: np.ndarray, in_frac: int, layer: FullyConnected, relu: bool = True, mac_count: int = 1) -> BlockOutput:
    _require_quantized([layer])
    flat = np.asarray(x_raw, dtype=np.int64).reshape(1, -1)
    if flat.shape[1] != layer.in_dim:
        raise BlockConfigError(f"{layer.name}: expected {layer.in_dim} inputs, got {flat.shape[1]}")
    out = fixed_affine(flat, in_frac, layer.qweight, fixed_matrix(layer), layer.qbias, layer.out_format)
    if relu:
        out = np.maximum(out, 0)
    cycles = classifier_cycles(layer.in_dim, layer.out_dim, mac_count)
    return BlockOutput(out.reshape(-1, 1), layer.out_format.frac_bits, cycles)


def simulate_scoreboard(scores_raw: np.ndarray, frac: int) -> BlockOutput:
    """Sequential compare of class scores; ties keep the lower class index."""
    scores = np.asarray(scores_raw, dtype=np.int64).reshape(-1)
    best = 0
    for index in range(1, scores.size):
        if scores[index] > scores[best]:
            best = index
    return BlockOutput(scores.reshape(-1, 1), frac, max(scores.size - 1, 0), label=best)


def simulate_signal_memory(segment: np.ndarray, fmt: QFormat) -> BlockOutput:
    raw = quantize_array(np.asarray(segment, dtype=np.float64), fmt)
    return BlockOutput(_as_channels(raw), fmt.frac_bits, 1)


# ──────────────────────────────────────────────────────────────────────────────
# Blocks
# ──────────────────────────────────────────────────────────────────────────────


@dataclass(eq=False)
class Block:
    """A pipeline stage with resident parameters and a resource count.

    ``in_shape`` is the (channels, length) the block receives; ``mac_count``
    counts MACs (conv, classifier) or mappers (fused).
    """

    name: str
    layers: List[LayerSpec]
    in_shape: Tuple[int, int]
    mac_count: int = 1

    kind: ClassVar[BlockKind]
    resource_step: ClassVar[int] = 1
    handshaked: ClassVar[bool] = True

    @property
    def has_maxpool(self) -> bool:
        return False

    @property
    def config(self) -> BlockConfig:
        return BlockConfig(kind=self.kind, mac_count=self.mac_count, has_maxpool=self.has_maxpool)

    @property
    def max_resources(self) -> int:
        return self.resource_step

    def cycles_for(self, resources: int) -> int:
        raise NotImplementedError

    @property
    def compute_cycles(self) -> int:
        return self.cycles_for(self.mac_count)

    def process(self, x_raw: np.ndarray, frac: int) -> BlockOutput:
        raise NotImplementedError

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "layers": [layer.name for layer in self.layers],
            "mac_count": self.mac_count,
            "compute_cycles": self.compute_cycles,
        }


@dataclass(eq=False)
class SignalMemoryBlock(Block):
    input_format: Optional[QFormat] = None

    kind: ClassVar[BlockKind] = BlockKind.SIGNAL_MEMORY
    handshaked: ClassVar[bool] = False

    def cycles_for(self, resources: int) -> int:
        return 1

    def process(self, x_raw: np.ndarray, frac: int) -> BlockOutput:
        return BlockOutput(_as_channels(x_raw), frac, 1)

    def load(self, segment: np.ndarray) -> BlockOutput:
        if self.input_format is None:
            raise BlockConfigError("signal memory has no input format")
        segment = np.asarray(segment)
        if segment.shape[-1] != self.in_shape[1]:
            raise BlockConfigError(f"segment of {segment.shape[-1]} samples, expected {self.in_shape[1]}")
        return simulate_signal_memory(segment, self.input_format)


@dataclass(eq=False)
class ConvBlock(Block):
    mac_count: int = MACS_PER_ENGINE

    kind: ClassVar[BlockKind] = BlockKind.CONV
    resource_step: ClassVar[int] = MACS_PER_ENGINE

    @property
    def layer(self) -> Conv1D:
        return self.layers[0]

    @property
    def outputs(self) -> int:
        return self.in_shape[1] + 2 * self.layer.padding - KERNEL_TAPS + 1

    @property
    def max_resources(self) -> int:
        return MACS_PER_ENGINE * self.outputs

    def cycles_for(self, resources: int) -> int:
        return conv_cycles(self.layer.in_ch, self.layer.out_ch, self.outputs, resources)

    def process(self, x_raw: np.ndarray, frac: int) -> BlockOutput:
        return simulate_conv_block(x_raw, frac, self.layer, self.mac_count)


@dataclass(eq=False)
class FusedBlock(Block):
    kind: ClassVar[BlockKind] = BlockKind.FUSED

    @property
    def geometry(self) -> Tuple[int, int, int, bool]:
        return fused_geometry(self.layers, self.in_shape[1])

    @property
    def has_maxpool(self) -> bool:
        return self.geometry[3]

    @property
    def max_resources(self) -> int:
        return self.geometry[0]

    def cycles_for(self, resources: int) -> int:
        items, rows, k_in, has_pool = self.geometry
        return fused_cycles(items, rows, k_in, resources, has_pool)

    def process(self, x_raw: np.ndarray, frac: int) -> BlockOutput:
        return simulate_fused_block(x_raw, frac, self.layers, self.mac_count)


@dataclass(eq=False)
class ClassifierBlock(Block):
    kind: ClassVar[BlockKind] = BlockKind.CLASSIFIER

    @property
    def layer(self) -> FullyConnected:
        return self.layers[0]

    @property
    def relu(self) -> bool:
        return any(isinstance(layer, ReLU) for layer in self.layers[1:])

    @property
    def max_resources(self) -> int:
        return self.layer.out_dim

    def cycles_for(self, resources: int) -> int:
        return classifier_cycles(self.layer.in_dim, self.layer.out_dim, resources)

    def process(self, x_raw: np.ndarray, frac: int) -> BlockOutput:
        return simulate_classifier(x_raw, frac, self.layer, self.relu, self.mac_count)


@dataclass(eq=False)
class ScoreboardBlock(Block):
    kind: ClassVar[BlockKind] = BlockKind.SCOREBOARD

    def cycles_for(self, resources: int) -> int:
        return max(self.in_shape[0] * self.in_shape[1] - 1, 0)

    def process(self, x_raw: np.ndarray, frac: int) -> BlockOutput:
        return simulate_scoreboard(x_raw, frac)


__all__ = [
    "Block",
    "BlockConfigError",
    "BlockOutput",
    "ClassifierBlock",
    "ConvBlock",
    "FusedBlock",
    "ScoreboardBlock",
    "SignalMemoryBlock",
    "classifier_cycles",
    "conv_cycles",
    "fused_cycles",
    "fused_geometry",
    "simulate_classifier",
    "simulate_conv_block",
    "simulate_fused_block",
    "simulate_scoreboard",
    "simulate_signal_memory",
]
