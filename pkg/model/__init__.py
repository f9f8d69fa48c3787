"""
DeepSpike — 1-D CNN
=====================
Definition, forward pass and training of the spike/artefact/noise classifier.

Topologies:
  - build_original():  Conv(1→50) · Conv(50→50) · pool · Conv(50→50) · pool · FC(750→3),
                       17,553 learnables
  - build_optimized(): the same network after pruning to 10 filters and projecting
                       every layer through low-rank sublayers, 419 learnables

Usage:
    from model import build_original, forward, train, TrainConfig, split_dataset

    model = build_original(seed=1)
    split = split_dataset(segments, labels, seed=1)
    trained, history = train(model, split, TrainConfig())
    scores = forward(trained, segments[0])
"""

from .config import CLASS_COUNT, INPUT_LENGTH, LayerKind, TrainConfig
from .data import DataSplit, split_dataset
from .forward import (
    EmptyDatasetError,
    NotQuantizedError,
    confusion_matrix,
    evaluate,
    fixed_affine,
    fixed_matrix,
    forward,
    forward_fixed_raw,
    predict,
    quantize_input,
    run_layers,
    run_layers_fixed,
)
from .io import ModelFileError, load_model, model_from_dict, model_to_dict, save_model
from .layers import (
    Conv1D,
    Dropout,
    FullyConnected,
    LayerSpec,
    MaxPool1D,
    PointwiseConv,
    ReLU,
    ShapeMismatchError,
    TensorShape,
    WeightedLayer,
)
from .network import (
    NetworkModel,
    build_network,
    build_optimized,
    build_original,
    build_projected,
    memory_bytes,
)
from .training import (
    NonFiniteLossError,
    TrainHistory,
    fine_tune,
    gradient_check,
    l2_grid_search,
    lr_at_epoch,
    train,
)

__all__ = [
    "CLASS_COUNT",
    "INPUT_LENGTH",
    "Conv1D",
    "DataSplit",
    "Dropout",
    "EmptyDatasetError",
    "FullyConnected",
    "LayerKind",
    "LayerSpec",
    "MaxPool1D",
    "ModelFileError",
    "NetworkModel",
    "NonFiniteLossError",
    "NotQuantizedError",
    "PointwiseConv",
    "ReLU",
    "ShapeMismatchError",
    "TensorShape",
    "TrainConfig",
    "TrainHistory",
    "WeightedLayer",
    "build_network",
    "build_optimized",
    "build_original",
    "build_projected",
    "confusion_matrix",
    "evaluate",
    "fine_tune",
    "fixed_affine",
    "fixed_matrix",
    "forward",
    "forward_fixed_raw",
    "gradient_check",
    "l2_grid_search",
    "load_model",
    "lr_at_epoch",
    "memory_bytes",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "quantize_input",
    "run_layers",
    "run_layers_fixed",
    "save_model",
    "split_dataset",
    "train",
]

__version__ = "0.1.0"
