"""Split a projected network into the pipeline's hardware blocks."""

from __future__ import annotations

import logging
from typing import List

from model import NetworkModel
from model.layers import Conv1D, Dropout, FullyConnected, MaxPool1D, PointwiseConv, ReLU

from .blocks import Block, ClassifierBlock, ConvBlock, FusedBlock, ScoreboardBlock, SignalMemoryBlock

logger = logging.getLogger(__name__)


class PartitionError(ValueError):
    """The model does not follow the projected block pattern."""


def partition(model: NetworkModel, require_quantized: bool = True) -> List[Block]:
    """signal_memory → (conv_i → fused_i)… → classifier → scoreboard.

    Each core convolution becomes a ConvBlock; each
    ``[pointwise, ReLU, (maxpool), (dropout), pointwise | fc]`` run becomes a
    FusedBlock; the trailing ``[fc, (ReLU)]`` is the classifier.
    """
    if require_quantized and not model.is_quantized:
        raise PartitionError(f"{model.name}: pipeline needs a quantized model")
    shapes = model.check_shapes()
    layers = model.layers

    def shape_in(index: int):
        return (model.input_channels, model.input_length) if index == 0 else shapes[index - 1]

    blocks: List[Block] = [
        SignalMemoryBlock("signal_memory", [], (model.input_channels, model.input_length), input_format=model.input_format)
    ]
    convs = fused = 0
    i = 0
    while i < len(layers):
        layer = layers[i]
        if isinstance(layer, Conv1D):
            convs += 1
            blocks.append(ConvBlock(f"conv{convs}", [layer], shape_in(i)))
            i += 1
        elif isinstance(layer, PointwiseConv):
            j = i + 1
            if j >= len(layers) or not isinstance(layers[j], ReLU):
                raise PartitionError(f"{layer.name}: projection-out must be followed by ReLU")
            j += 1
            if j < len(layers) and isinstance(layers[j], MaxPool1D):
                j += 1
            if j < len(layers) and isinstance(layers[j], Dropout):
                j += 1
            if j >= len(layers) or not isinstance(layers[j], (PointwiseConv, FullyConnected)):
                raise PartitionError(f"{layer.name}: fused run does not end in a projection-in")
            fused += 1
            blocks.append(FusedBlock(f"fused{fused}", list(layers[i : j + 1]), shape_in(i)))
            i = j + 1
        elif isinstance(layer, FullyConnected):
            j = i + 1
            if j < len(layers) and isinstance(layers[j], ReLU):
                j += 1
            if j != len(layers):
                raise PartitionError(f"{layer.name}: classifier must be the last stage, found {layers[j].name} after it")
            blocks.append(ClassifierBlock("classifier", list(layers[i:j]), shape_in(i)))
            i = j
        else:
            raise PartitionError(f"{layer.name}: {layer.kind.value} does not start a block")

    if not isinstance(blocks[-1], ClassifierBlock):
        raise PartitionError(f"{model.name}: no classifier stage")
    blocks.append(ScoreboardBlock("scoreboard", [], (model.class_count, 1)))
    logger.debug("partitioned %s into %s", model.name, [block.name for block in blocks])
    return blocks


__all__ = ["PartitionError", "partition"]
