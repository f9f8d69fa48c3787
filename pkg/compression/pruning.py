"""
Structured pruning: whole convolution filters are removed together with the
input channels (or flattened FC columns) that consumed them downstream.

Each iteration tries every convolution layer as the removal site, scoring
its lowest-L1 filters by validation accuracy; the best site that clears the
accuracy floor is kept and fine-tuned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from model import Conv1D, FullyConnected, NetworkModel, PointwiseConv, TrainConfig, evaluate, fine_tune
from model.data import DataSplit

from .config import CompressionConfig, CompressionError

logger = logging.getLogger(__name__)


@dataclass
class SkipRecord:
    iteration: int
    layer: str
    filters: int
    reason: str

    def as_dict(self) -> Dict[str, Any]:
        return {"iteration": self.iteration, "layer": self.layer, "filters": self.filters, "reason": self.reason}


@dataclass
class PruneCandidate:
    iteration: int
    model: NetworkModel
    accuracy: float
    removed_from: Optional[str] = None

    @property
    def learnables(self) -> int:
        return self.model.learnables

    @property
    def filters(self) -> Dict[str, int]:
        return filter_counts(self.model)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "iteration": self.iteration,
            "learnables": self.learnables,
            "accuracy": self.accuracy,
            "removed_from": self.removed_from,
            "filters": self.filters,
        }


@dataclass
class PruneResult:
    candidates: List[PruneCandidate] = field(default_factory=list)
    skips: List[SkipRecord] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def final(self) -> PruneCandidate:
        return self.candidates[-1]

    def as_dict(self) -> Dict[str, Any]:
        return {
            "candidates": [c.as_dict() for c in self.candidates],
            "skips": [s.as_dict() for s in self.skips],
            "stop_reason": self.stop_reason,
        }


# ──────────────────────────────────────────────────────────────────────────────
# Filter surgery
# ──────────────────────────────────────────────────────────────────────────────


def conv_layers(model: NetworkModel) -> List[Conv1D]:
    """Convolutions whose filters can be removed (those followed by another weighted layer)."""
    layers = []
    for i, layer in enumerate(model.layers):
        if isinstance(layer, Conv1D) and _consumer_index(model, i) is not None:
            layers.append(layer)
    return layers


def filter_counts(model: NetworkModel) -> Dict[str, int]:
    return {layer.name: layer.out_ch for layer in model.layers if isinstance(layer, Conv1D)}


def filter_importance(layer: Conv1D) -> np.ndarray:
    """L1 norm of each output filter's kernel."""
    return np.abs(layer.weight).sum(axis=(0, 1, 2))


def _consumer_index(model: NetworkModel, index: int) -> Optional[int]:
    for j in range(index + 1, len(model.layers)):
        if model.layers[j].is_weighted:
            return j
    return None


def remove_filters(model: NetworkModel, layer_name: str, filters: Sequence[int]) -> NetworkModel:
    """Copy of ``model`` without the given output filters of ``layer_name``."""
    out = model.copy()
    index = out.index_of(layer_name)
    conv = out.layers[index]
    if not isinstance(conv, Conv1D):
        raise CompressionError(f"'{layer_name}' is not a convolution")
    consumer_at = _consumer_index(out, index)
    if consumer_at is None:
        raise CompressionError(f"'{layer_name}' feeds no weighted layer; its filters are class outputs")
    keep = np.setdiff1d(np.arange(conv.out_ch), np.asarray(filters, dtype=np.int64))
    if keep.size == 0:
        raise CompressionError(f"cannot remove every filter of '{layer_name}'")

    # activation length reaching the consumer, needed to drop flattened FC columns
    channels_length = out.check_shapes()[consumer_at - 1]
    old_channels = conv.out_ch

    conv.weight = conv.weight[..., keep]
    conv.bias = conv.bias[..., keep]
    conv.clear_quantization()
    conv.validate()

    consumer = out.layers[consumer_at]
    if isinstance(consumer, (Conv1D, PointwiseConv)):
        consumer.weight = consumer.weight[:, :, keep, :]
    elif isinstance(consumer, FullyConnected):
        length = channels_length[1]
        blocks = consumer.weight.reshape(consumer.out_dim, old_channels, length)
        consumer.weight = blocks[:, keep, :].reshape(consumer.out_dim, -1)
    consumer.clear_quantization()
    consumer.validate()

    out.input_format = None
    out.check_shapes()
    return out


# ──────────────────────────────────────────────────────────────────────────────
# Iterative pruning
# ──────────────────────────────────────────────────────────────────────────────


def prune_structured(
    model: NetworkModel,
    split: DataSplit,
    train_cfg: TrainConfig,
    cfg: CompressionConfig,
) -> PruneResult:
    """Iteratively remove filters; candidate 0 is the unpruned model."""
    current = model.copy()
    result = PruneResult()
    result.candidates.append(PruneCandidate(0, current, evaluate(current, split.x_val, split.y_val)))
    floored = set()

    for iteration in range(1, cfg.max_prune_iters + 1):
        choices = []
        for position, layer in enumerate(conv_layers(current)):
            count = min(cfg.filters_per_iter, layer.out_ch - cfg.min_filters)
            if count <= 0:
                result.skips.append(SkipRecord(iteration, layer.name, layer.out_ch, "at filter floor"))
                if layer.name not in floored:
                    logger.warning("%s is at its filter floor (%d); skipping", layer.name, layer.out_ch)
                    floored.add(layer.name)
                continue
            weakest = np.argsort(filter_importance(layer), kind="stable")[:count]
            trial = remove_filters(current, layer.name, weakest)
            accuracy = evaluate(trial, split.x_val, split.y_val)
            logger.debug("iter %d: -%d from %s → val acc %.4f", iteration, count, layer.name, accuracy)
            choices.append((accuracy, position, layer.name, trial))

        if not choices:
            result.stop_reason = "every layer at its filter floor"
            break
        eligible = [c for c in choices if c[0] >= cfg.accuracy_floor]
        if not eligible:
            result.stop_reason = "no removal clears the accuracy floor"
            break

        accuracy, _, name, trial = max(eligible, key=lambda c: (c[0], -c[1]))
        tuned = fine_tune(trial, split, train_cfg, cfg.fine_tune_epochs)
        tuned.meta["prune_iter"] = iteration
        tuned_accuracy = evaluate(tuned, split.x_val, split.y_val)
        result.candidates.append(PruneCandidate(iteration, tuned, tuned_accuracy, name))
        logger.info(
            "prune iter %d: %s, %d learnables, val acc %.4f",
            iteration,
            filter_counts(tuned),
            tuned.learnables,
            tuned_accuracy,
        )
        current = tuned
    else:
        result.stop_reason = "iteration cap"

    return result
