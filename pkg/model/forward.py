"""
Forward pass in real arithmetic (float64) and in fixed point (int64 raws).

Activations are batch-first ``(N, C, L)``. A fully connected layer flattens
channel-major (index ``c·L + t``) and emits ``(N, out, 1)``. Dropout is
never applied here; training lives in ``model.training``.

The fixed-point path is the reference datapath: ``fixed_affine`` is also
what the pipeline simulator calls per element, so both produce the same bits.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fxp import (
    QFormat,
    QTensor,
    dequantize_array,
    mac_array,
    quantize_array,
    requantize_array,
    round_shift_array,
    saturate_bits,
)
from fxp.config import ACCUMULATOR_BITS

from .layers import (
    Conv1D,
    Dropout,
    FullyConnected,
    LayerSpec,
    MaxPool1D,
    PointwiseConv,
    ReLU,
    ShapeMismatchError,
)
from .network import NetworkModel

logger = logging.getLogger(__name__)


class EmptyDatasetError(ValueError):
    """Evaluation requested on zero segments."""


class NotQuantizedError(ValueError):
    """Fixed-point inference requested on a model without quantized parameters."""

    def __init__(self, model: str):
        self.model = model
        super().__init__(f"model '{model}' has no fixed-point input format; quantize it before fixed-point inference")


def as_batch(x: np.ndarray, channels: int = 1) -> np.ndarray:
    """Accept a single segment (L,), a batch (N, L) or (N, C, L); return (N, C, L)."""
    x = np.asarray(x)
    if x.ndim == 1:
        return x[None, None, :]
    if x.ndim == 2:
        return x[:, None, :] if channels == 1 else x[None, :, :]
    if x.ndim == 3:
        return x
    raise ShapeMismatchError("<input>", "1-, 2- or 3-D segment array", x.shape)


def _check_input(model: NetworkModel, x: np.ndarray) -> None:
    if x.shape[1:] != (model.input_channels, model.input_length):
        raise ShapeMismatchError(
            "<input>", f"{model.input_channels}×{model.input_length} segments", "×".join(map(str, x.shape[1:]))
        )


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding)))


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    """(N, C, L) → (N, L−k+1, C·k), inner order (c, tap)."""
    win = sliding_window_view(x, k, axis=2)           # N, C, Lout, k
    n, c, lout, _ = win.shape
    return win.transpose(0, 2, 1, 3).reshape(n, lout, c * k)


def conv_matrix(weight: np.ndarray) -> np.ndarray:
    """1×k×in×out kernel → (in·k)×out matrix matching ``_windows`` order."""
    _, k, cin, cout = weight.shape
    return weight[0].transpose(1, 0, 2).reshape(cin * k, cout)


def maxpool(x: np.ndarray, pool: int) -> np.ndarray:
    n, c, length = x.shape
    keep = (length // pool) * pool
    return x[:, :, :keep].reshape(n, c, length // pool, pool).max(axis=-1)


# ──────────────────────────────────────────────────────────────────────────────
# Real arithmetic
# ──────────────────────────────────────────────────────────────────────────────


def apply_layer(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    if isinstance(layer, Conv1D):
        win = _windows(_pad(x, layer.padding), layer.kernel_len)
        out = win @ conv_matrix(layer.weight) + layer.bias.reshape(1, 1, -1)
        return out.transpose(0, 2, 1)
    if isinstance(layer, PointwiseConv):
        out = np.einsum("ncl,co->nol", x, layer.matrix)
        return out + layer.bias.reshape(1, -1, 1)
    if isinstance(layer, FullyConnected):
        flat = x.reshape(x.shape[0], -1)
        return (flat @ layer.weight.T + layer.bias)[:, :, None]
    if isinstance(layer, ReLU):
        return np.maximum(x, 0.0)
    if isinstance(layer, MaxPool1D):
        return maxpool(x, layer.pool)
    if isinstance(layer, Dropout):
        return x
    raise TypeError(f"unsupported layer {type(layer).__name__}")


def run_layers(layers: Sequence[LayerSpec], x: np.ndarray) -> List[np.ndarray]:
    """Float forward returning the input followed by every layer's output."""
    acts = [np.asarray(x, dtype=np.float64)]
    for layer in layers:
        acts.append(apply_layer(layer, acts[-1]))
    return acts


# ──────────────────────────────────────────────────────────────────────────────
# Fixed point
# ──────────────────────────────────────────────────────────────────────────────


def fixed_affine(
    inputs: np.ndarray,
    in_frac: int,
    weight: QTensor,
    matrix: np.ndarray,
    bias: QTensor,
    out_format: QFormat,
) -> np.ndarray:
    """requant(Σ inputs·matrix + bias) with a saturating 32-bit accumulator.

    ``inputs`` is (..., K) raw activations, ``matrix`` the (K, M) raw weights.
    """
    acc_frac = in_frac + weight.shift
    acc = mac_array(inputs, matrix, ACCUMULATOR_BITS)
    aligned_bias = round_shift_array(bias.raw.reshape(-1), bias.shift - acc_frac)
    total = saturate_bits(acc + aligned_bias, ACCUMULATOR_BITS)
    return requantize_array(total, acc_frac, out_format)


def fixed_matrix(layer: LayerSpec) -> np.ndarray:
    """Raw weight matrix of a quantized layer in the layout ``fixed_affine`` expects."""
    raw = layer.qweight.raw
    if isinstance(layer, Conv1D):
        return conv_matrix(raw)
    if isinstance(layer, PointwiseConv):
        return raw[0, 0]
    if isinstance(layer, FullyConnected):
        return raw.T
    raise TypeError(f"{type(layer).__name__} has no weights")


def apply_layer_fixed(layer: LayerSpec, x: np.ndarray, frac: int) -> Tuple[np.ndarray, int]:
    if isinstance(layer, Conv1D):
        win = _windows(_pad(x, layer.padding), layer.kernel_len)
        out = fixed_affine(win, frac, layer.qweight, fixed_matrix(layer), layer.qbias, layer.out_format)
        return out.transpose(0, 2, 1), layer.out_format.frac_bits
    if isinstance(layer, PointwiseConv):
        out = fixed_affine(
            x.transpose(0, 2, 1), frac, layer.qweight, fixed_matrix(layer), layer.qbias, layer.out_format
        )
        return out.transpose(0, 2, 1), layer.out_format.frac_bits
    if isinstance(layer, FullyConnected):
        flat = x.reshape(x.shape[0], -1)
        out = fixed_affine(flat, frac, layer.qweight, fixed_matrix(layer), layer.qbias, layer.out_format)
        return out[:, :, None], layer.out_format.frac_bits
    if isinstance(layer, ReLU):
        return np.maximum(x, 0), frac
    if isinstance(layer, MaxPool1D):
        return maxpool(x, layer.pool), frac
    if isinstance(layer, Dropout):
        return x, frac
    raise TypeError(f"unsupported layer {type(layer).__name__}")


def run_layers_fixed(
    layers: Sequence[LayerSpec], x_raw: np.ndarray, in_frac: int
) -> List[Tuple[np.ndarray, int]]:
    """Fixed-point forward returning (raw, frac) for the input and every layer output."""
    acts = [(np.asarray(x_raw, dtype=np.int64), in_frac)]
    for layer in layers:
        if layer.is_weighted and not layer.is_quantized:
            raise ShapeMismatchError(layer.name, "quantized parameters", "real parameters")
        acts.append(apply_layer_fixed(layer, *acts[-1]))
    return acts


# ──────────────────────────────────────────────────────────────────────────────
# Model-level API
# ──────────────────────────────────────────────────────────────────────────────


def quantize_input(model: NetworkModel, x: np.ndarray) -> np.ndarray:
    if model.input_format is None:
        raise NotQuantizedError(model.name)
    return quantize_array(as_batch(x, model.input_channels), model.input_format)


def forward_fixed_raw(model: NetworkModel, x: np.ndarray) -> Tuple[np.ndarray, int]:
    """Raw integer class scores (N, classes) and their fraction bits."""
    batch = as_batch(x, model.input_channels)
    _check_input(model, batch)
    model.check_shapes()
    raw, frac = run_layers_fixed(model.layers, quantize_input(model, batch), model.input_format.frac_bits)[-1]
    return raw.reshape(raw.shape[0], -1), frac


def forward(model: NetworkModel, x: np.ndarray, quantized: Optional[bool] = None) -> np.ndarray:
    """Class scores for one segment (returns (classes,)) or a batch ((N, classes)).

    ``quantized`` defaults to the model's precision.
    """
    single = np.asarray(x).ndim == 1
    batch = as_batch(x, model.input_channels)
    _check_input(model, batch)
    model.check_shapes()
    use_fixed = model.is_quantized if quantized is None else quantized
    if use_fixed:
        raw, frac = forward_fixed_raw(model, batch)
        scores = dequantize_array(raw, frac)
    else:
        scores = run_layers(model.layers, batch.astype(np.float64))[-1]
        scores = scores.reshape(scores.shape[0], -1)
    return scores[0] if single else scores


def predict(model: NetworkModel, x: np.ndarray, quantized: Optional[bool] = None) -> np.ndarray:
    """Argmax class per segment; ties resolve to the lowest class index."""
    scores = forward(model, as_batch(x, model.input_channels), quantized)
    return np.argmax(scores, axis=1)


def confusion_matrix(labels: np.ndarray, predictions: np.ndarray, class_count: int) -> np.ndarray:
    matrix = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(matrix, (np.asarray(labels, dtype=np.int64), np.asarray(predictions, dtype=np.int64)), 1)
    return matrix


def evaluate(model: NetworkModel, x: np.ndarray, y: np.ndarray, quantized: Optional[bool] = None) -> float:
    """Fraction of segments whose argmax equals the label."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    if y.min() < 0 or y.max() >= model.class_count:
        raise ValueError(f"labels must lie in 0..{model.class_count - 1}")
    predictions = predict(model, x, quantized)
    return float(np.mean(predictions == y))
