"""
DeepSpike — Fixed-Point Arithmetic
====================================
Two's-complement raw integers with an explicit Q-format. Every operation
saturates instead of wrapping and rounds half away from zero.

Scalar helpers (``quantize``, ``mac``...) work on ``FxValue``; the ``*_array``
helpers apply the identical rules to numpy int64 arrays so that the model's
quantized forward and the pipeline simulator share one numeric definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from .config import (
    ACCUMULATOR_BITS,
    ACTIVATION_FRAC_BITS,
    ACTIVATION_TOTAL_BITS,
    MAX_TOTAL_BITS,
    MIN_TOTAL_BITS,
    SHIFT_LIMIT,
)


class FormatError(ValueError):
    """Invalid Q-format or incompatible operand formats."""


# ──────────────────────────────────────────────────────────────────────────────
# Formats and values
# ──────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class QFormat:
    total_bits: int
    frac_bits: int
    signed: bool = True

    def __post_init__(self):
        if not MIN_TOTAL_BITS <= self.total_bits <= MAX_TOTAL_BITS:
            raise FormatError(
                f"total_bits must be in [{MIN_TOTAL_BITS}, {MAX_TOTAL_BITS}], got {self.total_bits}"
            )
        if not 0 <= self.frac_bits < self.total_bits:
            raise FormatError(
                f"frac_bits must be in [0, {self.total_bits - 1}], got {self.frac_bits}"
            )

    @property
    def raw_min(self) -> int:
        return -(1 << (self.total_bits - 1)) if self.signed else 0

    @property
    def raw_max(self) -> int:
        if self.signed:
            return (1 << (self.total_bits - 1)) - 1
        return (1 << self.total_bits) - 1

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def value_min(self) -> float:
        return self.raw_min * self.resolution

    @property
    def value_max(self) -> float:
        return self.raw_max * self.resolution

    def as_dict(self) -> Dict[str, Any]:
        return {
            "total_bits": self.total_bits,
            "frac_bits": self.frac_bits,
            "signed": self.signed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QFormat":
        return cls(int(data["total_bits"]), int(data["frac_bits"]), bool(data.get("signed", True)))

    def __str__(self) -> str:
        prefix = "s" if self.signed else "u"
        return f"{prefix}Q{self.total_bits}.{self.frac_bits}"


ACTIVATION_FORMAT = QFormat(ACTIVATION_TOTAL_BITS, ACTIVATION_FRAC_BITS)


@dataclass(frozen=True)
class FxValue:
    """A raw integer interpreted in ``fmt``; out-of-range raws saturate on construction."""

    raw: int
    fmt: QFormat = field(default=ACTIVATION_FORMAT)

    def __post_init__(self):
        object.__setattr__(self, "raw", saturate(int(self.raw), self.fmt))

    @property
    def value(self) -> float:
        return dequantize(self)

    def __float__(self) -> float:
        return self.value


def accumulator_format(a: QFormat, b: QFormat, total_bits: int = ACCUMULATOR_BITS) -> QFormat:
    """Format that holds a·b without losing fraction bits."""
    if a.signed != b.signed:
        raise FormatError("operands must agree on signedness")
    frac = a.frac_bits + b.frac_bits
    if frac >= total_bits:
        raise FormatError(f"product needs {frac} fraction bits, accumulator has {total_bits}")
    return QFormat(total_bits, frac, a.signed)


# ──────────────────────────────────────────────────────────────────────────────
# Scalar primitives
# ──────────────────────────────────────────────────────────────────────────────


def round_half_away(x: float) -> int:
    if math.isnan(x):
        return 0
    if math.isinf(x):
        return int(math.copysign(1 << 62, x))
    a = abs(x)
    magnitude = math.floor(a)
    if a - magnitude >= 0.5:
        magnitude += 1
    return int(magnitude) if x >= 0 else -int(magnitude)


def saturate(raw: int, fmt: QFormat) -> int:
    return max(fmt.raw_min, min(fmt.raw_max, raw))


def round_shift(raw: int, shift: int) -> int:
    """Divide by 2**shift rounding half away from zero; a negative shift multiplies."""
    if shift <= 0:
        return raw << -shift
    half = 1 << (shift - 1)
    magnitude = (abs(raw) + half) >> shift
    return magnitude if raw >= 0 else -magnitude


def requantize(raw: int, from_frac: int, to_fmt: QFormat) -> int:
    return saturate(round_shift(raw, from_frac - to_fmt.frac_bits), to_fmt)


def quantize(x: float, fmt: QFormat = ACTIVATION_FORMAT) -> FxValue:
    scaled = x * (1 << fmt.frac_bits)
    if math.isinf(scaled):
        return FxValue(fmt.raw_max if scaled > 0 else fmt.raw_min, fmt)
    return FxValue(round_half_away(scaled), fmt)


def dequantize(v: FxValue) -> float:
    return v.raw / (1 << v.fmt.frac_bits)


def mac(m1: FxValue, m2: FxValue, ps: FxValue) -> FxValue:
    """ps + m1·m2, product exact before it is rescaled to ps's fraction bits."""
    if not (m1.fmt.signed == m2.fmt.signed == ps.fmt.signed):
        raise FormatError("mac operands must agree on signedness")
    product = m1.raw * m2.raw
    product_frac = m1.fmt.frac_bits + m2.fmt.frac_bits
    aligned = round_shift(product, product_frac - ps.fmt.frac_bits)
    return FxValue(ps.raw + aligned, ps.fmt)


# ──────────────────────────────────────────────────────────────────────────────
# Array primitives (int64 raws)
# ──────────────────────────────────────────────────────────────────────────────


def round_half_away_array(x: np.ndarray) -> np.ndarray:
    x = np.nan_to_num(np.asarray(x, dtype=np.float64), nan=0.0)
    a = np.abs(x)
    magnitude = np.floor(a)
    magnitude = magnitude + (a - magnitude >= 0.5)
    return np.sign(x) * magnitude


def saturate_array(raw: np.ndarray, fmt: QFormat) -> np.ndarray:
    return np.clip(np.asarray(raw, dtype=np.int64), fmt.raw_min, fmt.raw_max)


def saturate_bits(raw: np.ndarray, bits: int) -> np.ndarray:
    return np.clip(np.asarray(raw, dtype=np.int64), -(1 << (bits - 1)), (1 << (bits - 1)) - 1)


def round_shift_array(raw: np.ndarray, shift: int) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.int64)
    if shift <= 0:
        return raw << -shift
    half = np.int64(1 << (shift - 1))
    magnitude = (np.abs(raw) + half) >> shift
    return np.where(raw >= 0, magnitude, -magnitude)


def requantize_array(raw: np.ndarray, from_frac: int, to_fmt: QFormat) -> np.ndarray:
    return saturate_array(round_shift_array(raw, from_frac - to_fmt.frac_bits), to_fmt)


def quantize_array(x: np.ndarray, fmt: QFormat = ACTIVATION_FORMAT) -> np.ndarray:
    scaled = np.asarray(x, dtype=np.float64) * float(1 << fmt.frac_bits)
    rounded = round_half_away_array(np.clip(scaled, fmt.raw_min, fmt.raw_max))
    return rounded.astype(np.int64)


def dequantize_array(raw: np.ndarray, frac_bits: int) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) * math.ldexp(1.0, -frac_bits)


def mac_array(a: np.ndarray, w: np.ndarray, acc_bits: int = ACCUMULATOR_BITS) -> np.ndarray:
    """Exact integer dot products over the last axis of ``a`` and first of ``w``,
    saturated to the accumulator width."""
    acc = np.tensordot(np.asarray(a, dtype=np.int64), np.asarray(w, dtype=np.int64), axes=(-1, 0))
    return saturate_bits(acc, acc_bits)


# ──────────────────────────────────────────────────────────────────────────────
# Per-tensor power-of-two quantization
# ──────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class QTensor:
    """Parameter tensor stored as ``raw · 2**-shift`` with ``bits``-bit signed raws."""

    raw: np.ndarray
    bits: int
    shift: int

    @property
    def scale(self) -> float:
        return 2.0 ** -self.shift

    def values(self) -> np.ndarray:
        return self.raw.astype(np.float64) * self.scale

    def as_dict(self) -> Dict[str, Any]:
        return {"bits": self.bits, "shift": self.shift, "raw": self.raw.tolist()}


def choose_shift(peak: float, bits: int) -> int:
    """Largest shift s (within ±SHIFT_LIMIT) with round(peak·2^s) ≤ 2^(bits−1)−1."""
    if peak == 0.0 or not math.isfinite(peak):
        return 0
    qmax = (1 << (bits - 1)) - 1
    shift = int(math.floor(math.log2(qmax / peak)))
    while shift < SHIFT_LIMIT and round_half_away(math.ldexp(peak, shift + 1)) <= qmax:
        shift += 1
    while shift > -SHIFT_LIMIT and round_half_away(math.ldexp(peak, shift)) > qmax:
        shift -= 1
    return max(-SHIFT_LIMIT, min(SHIFT_LIMIT, shift))


def quantize_tensor(x: np.ndarray, bits: int) -> QTensor:
    if not MIN_TOTAL_BITS <= bits <= MAX_TOTAL_BITS:
        raise FormatError(f"bits must be in [{MIN_TOTAL_BITS}, {MAX_TOTAL_BITS}], got {bits}")
    x = np.asarray(x, dtype=np.float64)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    shift = choose_shift(peak, bits)
    raw = round_half_away_array(x * math.ldexp(1.0, shift))
    raw = np.clip(raw, -(1 << (bits - 1)), (1 << (bits - 1)) - 1).astype(np.int64)
    return QTensor(raw=raw, bits=bits, shift=shift)


def frac_bits_for_peak(peak: float, total_bits: int = ACTIVATION_TOTAL_BITS) -> int:
    """Most fraction bits a signed ``total_bits`` format can use while covering ``peak``."""
    qmax = (1 << (total_bits - 1)) - 1
    for frac in range(total_bits - 1, -1, -1):
        if peak * (1 << frac) <= qmax:
            return frac
    return 0
