"""
DeepSpike — Fixed-Point Arithmetic
====================================
Saturating Q-format arithmetic for quantized parameters, activations and
every simulator datapath.

Usage:
    from fxp import QFormat, quantize, mac

    fmt = QFormat(total_bits=10, frac_bits=7)
    v = quantize(0.5, fmt)          # raw 64
    acc = mac(v, v, quantize(0.0, QFormat(32, 14)))
"""

from .arith import (
    ACTIVATION_FORMAT,
    FormatError,
    FxValue,
    QFormat,
    QTensor,
    accumulator_format,
    choose_shift,
    dequantize,
    dequantize_array,
    frac_bits_for_peak,
    mac,
    mac_array,
    quantize,
    quantize_array,
    quantize_tensor,
    requantize,
    requantize_array,
    round_half_away,
    round_shift,
    round_shift_array,
    saturate,
    saturate_array,
    saturate_bits,
)

__all__ = [
    "ACTIVATION_FORMAT",
    "FormatError",
    "FxValue",
    "QFormat",
    "QTensor",
    "accumulator_format",
    "choose_shift",
    "dequantize",
    "dequantize_array",
    "frac_bits_for_peak",
    "mac",
    "mac_array",
    "quantize",
    "quantize_array",
    "quantize_tensor",
    "requantize",
    "requantize_array",
    "round_half_away",
    "round_shift",
    "round_shift_array",
    "saturate",
    "saturate_array",
    "saturate_bits",
]

__version__ = "0.1.0"
