"""
Model files: one JSON document per network.

    {
      "format_version": 1,
      "name": "optimized", "class_count": 3, "input_length": 66, "input_channels": 1,
      "input_format": {"total_bits": 10, "frac_bits": 7, "signed": true} | null,
      "layers": [
        {"kind": "conv1d", "name": "conv1.core", "padding": 1,
         "W": [[[[...]]]], "B": [[[...]]],
         "qweight": {"bits": 4, "shift": 3, "raw": [...]} | null,
         "qbias": {...} | null,
         "out_format": {...} | null},
        {"kind": "relu", "name": "relu1"}, ...
      ]
    }
"""

from __future__ import annotations

import json
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from fxp import FormatError, QFormat, QTensor

from .config import LayerKind
from .layers import (
    LAYER_TYPES,
    Conv1D,
    Dropout,
    MaxPool1D,
    ShapeMismatchError,
    WeightedLayer,
)
from .network import NetworkModel

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """Malformed model file; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


# ──────────────────────────────────────────────────────────────────────────────
# Schema
# ──────────────────────────────────────────────────────────────────────────────


class FormatRecord(BaseModel):
    total_bits: int
    frac_bits: int
    signed: bool = True


class QTensorRecord(BaseModel):
    bits: int = Field(ge=2, le=32)
    shift: int
    raw: Any


class LayerRecord(BaseModel):
    kind: LayerKind
    name: str
    padding: int = Field(0, ge=0)
    pool: int = Field(2, ge=1)
    stride: int = Field(2, ge=1)
    rate: float = Field(0.5, ge=0, lt=1)
    W: Optional[Any] = None
    B: Optional[Any] = None
    qweight: Optional[QTensorRecord] = None
    qbias: Optional[QTensorRecord] = None
    out_format: Optional[FormatRecord] = None


class ModelRecord(BaseModel):
    format_version: int = FORMAT_VERSION
    name: str = "cnn"
    class_count: int = Field(ge=1)
    input_length: int = Field(ge=1)
    input_channels: int = Field(1, ge=1)
    input_format: Optional[FormatRecord] = None
    layers: List[LayerRecord]


# ──────────────────────────────────────────────────────────────────────────────
# Conversion
# ──────────────────────────────────────────────────────────────────────────────


def _qtensor_dict(q: Optional[QTensor]) -> Optional[Dict[str, Any]]:
    return None if q is None else q.as_dict()


def model_to_dict(model: NetworkModel) -> Dict[str, Any]:
    layers = []
    for layer in model.layers:
        entry: Dict[str, Any] = {"kind": layer.kind.value, "name": layer.name}
        if isinstance(layer, Conv1D):
            entry["padding"] = layer.padding
        if isinstance(layer, MaxPool1D):
            entry.update({"pool": layer.pool, "stride": layer.stride})
        if isinstance(layer, Dropout):
            entry["rate"] = layer.rate
        if isinstance(layer, WeightedLayer):
            entry.update(
                {
                    "W": layer.weight.tolist(),
                    "B": layer.bias.tolist(),
                    "qweight": _qtensor_dict(layer.qweight),
                    "qbias": _qtensor_dict(layer.qbias),
                    "out_format": None if layer.out_format is None else layer.out_format.as_dict(),
                }
            )
        layers.append(entry)
    return {
        "format_version": FORMAT_VERSION,
        "name": model.name,
        "class_count": model.class_count,
        "input_length": model.input_length,
        "input_channels": model.input_channels,
        "input_format": None if model.input_format is None else model.input_format.as_dict(),
        "layers": layers,
    }


def _array(value: Any, path: str, dtype=np.float64) -> np.ndarray:
    try:
        array = np.asarray(value, dtype=dtype)
    except (TypeError, ValueError) as ex:
        raise ModelFileError(path, f"not a rectangular numeric array ({ex})") from ex
    if array.dtype == object:
        raise ModelFileError(path, "not a rectangular numeric array")
    return array


def _format(record: Optional[FormatRecord], path: str) -> Optional[QFormat]:
    if record is None:
        return None
    try:
        return QFormat(record.total_bits, record.frac_bits, record.signed)
    except FormatError as ex:
        raise ModelFileError(path, str(ex)) from ex


def _qtensor(record: Optional[QTensorRecord], shape, path: str) -> Optional[QTensor]:
    if record is None:
        return None
    raw = _array(record.raw, f"{path}.raw", np.int64)
    if raw.shape != tuple(shape):
        raise ModelFileError(f"{path}.raw", f"shape {raw.shape} does not match {tuple(shape)}")
    limit = 1 << (record.bits - 1)
    if raw.size and (raw.min() < -limit or raw.max() > limit - 1):
        raise ModelFileError(f"{path}.raw", f"values exceed {record.bits}-bit range")
    return QTensor(raw=raw, bits=record.bits, shift=record.shift)


def model_from_dict(data: Dict[str, Any]) -> NetworkModel:
    try:
        record = ModelRecord.model_validate(data)
    except ValidationError as ex:
        error = ex.errors()[0]
        path = ".".join(str(part) for part in error["loc"]) or "<root>"
        raise ModelFileError(path, error["msg"]) from ex
    if record.format_version != FORMAT_VERSION:
        raise ModelFileError("format_version", f"unsupported version {record.format_version}")

    layers = []
    for i, entry in enumerate(record.layers):
        path = f"layers.{i}"
        cls = LAYER_TYPES[entry.kind]
        if cls is Dropout:
            layers.append(Dropout(name=entry.name, rate=entry.rate))
            continue
        if cls is MaxPool1D:
            layers.append(MaxPool1D(name=entry.name, pool=entry.pool, stride=entry.stride))
            continue
        if not issubclass(cls, WeightedLayer):
            layers.append(cls(name=entry.name))
            continue
        for key in ("W", "B"):
            if getattr(entry, key) is None:
                raise ModelFileError(f"{path}.{key}", "missing")
        weight = _array(entry.W, f"{path}.W")
        bias = _array(entry.B, f"{path}.B")
        kwargs: Dict[str, Any] = {"name": entry.name, "weight": weight, "bias": bias}
        if cls is Conv1D:
            kwargs["padding"] = entry.padding
        try:
            layer = cls(**kwargs)
        except ShapeMismatchError as ex:
            key = "B" if str(ex.expected).startswith("B") else "W"
            raise ModelFileError(f"{path}.{key}", str(ex)) from ex
        layer.qweight = _qtensor(entry.qweight, weight.shape, f"{path}.qweight")
        layer.qbias = _qtensor(entry.qbias, bias.shape, f"{path}.qbias")
        layer.out_format = _format(entry.out_format, f"{path}.out_format")
        layers.append(layer)

    model = NetworkModel(
        layers=layers,
        class_count=record.class_count,
        input_length=record.input_length,
        input_channels=record.input_channels,
        input_format=_format(record.input_format, "input_format"),
        name=record.name,
    )
    try:
        model.check_shapes()
    except ShapeMismatchError as ex:
        index = next((i for i, layer in enumerate(layers) if layer.name == ex.layer), None)
        raise ModelFileError("layers" if index is None else f"layers.{index}", str(ex)) from ex
    return model


def save_model(model: NetworkModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f)


def load_model(path: str) -> NetworkModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as ex:
        raise ModelFileError("<root>", f"invalid JSON ({ex.msg} at line {ex.lineno})") from ex
    if not isinstance(data, dict):
        raise ModelFileError("<root>", "expected a JSON object")
    return model_from_dict(data)
