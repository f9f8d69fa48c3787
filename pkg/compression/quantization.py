"""Post-training quantization of weights, biases and activation formats."""

from __future__ import annotations

import logging
from typing import Dict, Optional

import numpy as np

from fxp import ACTIVATION_FORMAT, QFormat, frac_bits_for_peak, quantize_tensor
from fxp.config import ACTIVATION_TOTAL_BITS
from model import NetworkModel, run_layers
from model.forward import as_batch

from .config import MAX_QUANT_BITS, MIN_QUANT_BITS

logger = logging.getLogger(__name__)


def calibrate_formats(
    model: NetworkModel,
    calibration: np.ndarray,
    total_bits: int = ACTIVATION_TOTAL_BITS,
) -> Dict[str, QFormat]:
    """Activation format per weighted layer output (plus ``"<input>"``), each
    with the most fraction bits that still cover the largest float activation."""
    batch = as_batch(calibration, model.input_channels).astype(np.float64)
    acts = run_layers(model.layers, batch)
    formats = {"<input>": QFormat(total_bits, frac_bits_for_peak(float(np.max(np.abs(batch))), total_bits))}
    for layer, out in zip(model.layers, acts[1:]):
        if layer.is_weighted:
            formats[layer.name] = QFormat(total_bits, frac_bits_for_peak(float(np.max(np.abs(out))), total_bits))
    return formats


def quantize_model(
    model: NetworkModel,
    bits: int,
    calibration: Optional[np.ndarray] = None,
    formats: Optional[Dict[str, QFormat]] = None,
) -> NetworkModel:
    """Copy of ``model`` with ``bits``-wide per-tensor power-of-two parameters.

    Activation formats come from ``formats``, else are calibrated on
    ``calibration``, else default to the 10-bit sample format.
    """
    if not MIN_QUANT_BITS <= bits <= MAX_QUANT_BITS:
        raise ValueError(f"bits must be in [{MIN_QUANT_BITS}, {MAX_QUANT_BITS}], got {bits}")
    model.check_shapes()
    if formats is None and calibration is not None and len(calibration):
        formats = calibrate_formats(model, calibration)
    formats = formats or {}

    out = model.copy()
    out.input_format = formats.get("<input>", ACTIVATION_FORMAT)
    for layer in out.weighted_layers():
        layer.qweight = quantize_tensor(layer.weight, bits)
        layer.qbias = quantize_tensor(layer.bias, bits)
        layer.out_format = formats.get(layer.name, ACTIVATION_FORMAT)
    out.meta["bits"] = bits
    logger.debug("quantized %s to %d bits (%d bytes)", model.name, bits, out.memory_bytes())
    return out
