"""
Training with mini-batch SGD + momentum (torch, CPU, float64).

The NetworkModel is mirrored into a torch module, trained, and its best
weights (lowest validation loss) copied back into a fresh NetworkModel.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
from torch.utils.data import DataLoader, TensorDataset
from tqdm import tqdm

from .config import TrainConfig
from .data import DataSplit
from .forward import EmptyDatasetError, as_batch
from .layers import Conv1D, Dropout, FullyConnected, MaxPool1D, PointwiseConv, ReLU
from .network import NetworkModel

logger = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.__dict__ for r in self.records])

    def write_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")

    def as_dict(self) -> Dict:
        return {
            "epochs": len(self.records),
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "final_val_acc": self.records[-1].val_acc if self.records else None,
        }


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate for 1-based ``epoch``: scaled by lr_factor every lr_period_epochs."""
    return cfg.initial_lr * cfg.lr_factor ** ((epoch - 1) // cfg.lr_period_epochs)


# ──────────────────────────────────────────────────────────────────────────────
# NetworkModel <-> torch
# ──────────────────────────────────────────────────────────────────────────────


class TorchNetwork(nn.Module):
    """torch mirror of a NetworkModel (flattens before every fully connected layer)."""

    def __init__(self, model: NetworkModel, dropout_rate: Optional[float] = None):
        super().__init__()
        modules = []
        for layer in model.layers:
            if isinstance(layer, Conv1D):
                module = nn.Conv1d(layer.in_ch, layer.out_ch, layer.kernel_len, padding=layer.padding)
                weight = layer.weight[0].transpose(2, 1, 0)
            elif isinstance(layer, PointwiseConv):
                module = nn.Conv1d(layer.in_ch, layer.out_ch, 1)
                weight = layer.matrix.T[:, :, None]
            elif isinstance(layer, FullyConnected):
                module = nn.Linear(layer.in_dim, layer.out_dim)
                weight = layer.weight
            elif isinstance(layer, ReLU):
                module, weight = nn.ReLU(), None
            elif isinstance(layer, MaxPool1D):
                module, weight = nn.MaxPool1d(layer.pool, layer.stride), None
            elif isinstance(layer, Dropout):
                module, weight = nn.Dropout(layer.rate if dropout_rate is None else dropout_rate), None
            else:
                raise TypeError(f"unsupported layer {type(layer).__name__}")
            if weight is not None:
                module = module.double()
                with torch.no_grad():
                    module.weight.copy_(torch.from_numpy(np.ascontiguousarray(weight)))
                    module.bias.copy_(torch.from_numpy(layer.bias.reshape(-1).copy()))
            modules.append(module)
        self.body = nn.ModuleList(modules)
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for module in self.body:
            if isinstance(module, nn.Linear):
                x = x.flatten(1)
            x = module(x)
        return x.flatten(1)

    def weights_and_biases(self) -> Tuple[List[nn.Parameter], List[nn.Parameter]]:
        weights, biases = [], []
        for module in self.body:
            if isinstance(module, (nn.Conv1d, nn.Linear)):
                weights.append(module.weight)
                biases.append(module.bias)
        return weights, biases


def export_weights(net: TorchNetwork, model: NetworkModel) -> NetworkModel:
    """Copy of ``model`` carrying the torch module's current parameters (real precision)."""
    out = model.copy()
    out.input_format = None
    for layer, module in zip(out.layers, net.body):
        if not layer.is_weighted:
            continue
        w = module.weight.detach().cpu().numpy().astype(np.float64)
        b = module.bias.detach().cpu().numpy().astype(np.float64)
        if isinstance(layer, Conv1D):
            layer.weight = w.transpose(2, 1, 0)[None].copy()
            layer.bias = b.reshape(1, 1, -1)
        elif isinstance(layer, PointwiseConv):
            layer.weight = w[:, :, 0].T[None, None].copy()
            layer.bias = b.reshape(1, 1, -1)
        else:
            layer.weight = w.copy()
            layer.bias = b.copy()
        layer.clear_quantization()
    return out


def _tensors(x: np.ndarray, y: np.ndarray, channels: int) -> Tuple[torch.Tensor, torch.Tensor]:
    xb = torch.from_numpy(np.ascontiguousarray(as_batch(x, channels), dtype=np.float64))
    yb = torch.from_numpy(np.asarray(y, dtype=np.int64))
    return xb, yb


def _score(net: nn.Module, criterion: nn.Module, x: torch.Tensor, y: torch.Tensor) -> Tuple[float, float]:
    net.eval()
    with torch.no_grad():
        scores = net(x)
        loss = float(criterion(scores, y))
        acc = float((scores.argmax(dim=1) == y).double().mean())
    return loss, acc


# ──────────────────────────────────────────────────────────────────────────────
# Training
# ──────────────────────────────────────────────────────────────────────────────


def train(model: NetworkModel, split: DataSplit, cfg: TrainConfig) -> Tuple[NetworkModel, TrainHistory]:
    """Fit ``model`` on split.train, early-stopping on split.val; returns (trained copy, history)."""
    model.check_shapes()
    if len(split.y_train) == 0:
        raise EmptyDatasetError("training set is empty")

    torch.manual_seed(cfg.rng_seed)
    net = TorchNetwork(model, cfg.dropout_rate)
    weights, biases = net.weights_and_biases()
    optimizer = torch.optim.SGD(
        [
            {"params": weights, "weight_decay": cfg.l2 / len(split.y_train)},
            {"params": biases, "weight_decay": 0.0},
        ],
        lr=cfg.initial_lr,
        momentum=cfg.momentum,
    )
    criterion = nn.CrossEntropyLoss()

    x_train, y_train = _tensors(split.x_train, split.y_train, model.input_channels)
    has_val = len(split.y_val) > 0
    x_val, y_val = _tensors(split.x_val, split.y_val, model.input_channels) if has_val else (x_train, y_train)
    loader = DataLoader(
        TensorDataset(x_train, y_train),
        batch_size=cfg.batch_size,
        shuffle=True,
        generator=torch.Generator().manual_seed(cfg.rng_seed),
    )

    history = TrainHistory()
    best_loss = math.inf
    best_state = copy.deepcopy(net.state_dict())
    stale = 0
    epochs = range(1, cfg.max_epochs + 1)
    if cfg.progress:
        epochs = tqdm(epochs, desc=f"train {model.name}", unit="epoch")

    for epoch in epochs:
        lr = lr_at_epoch(cfg, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr

        net.train()
        total_loss, correct, seen = 0.0, 0, 0
        for batch, (xb, yb) in enumerate(loader):
            optimizer.zero_grad()
            scores = net(xb)
            loss = criterion(scores, yb)
            if not torch.isfinite(loss):
                raise NonFiniteLossError(epoch, batch, float(loss))
            loss.backward()
            optimizer.step()
            total_loss += float(loss) * len(yb)
            correct += int((scores.argmax(dim=1) == yb).sum())
            seen += len(yb)

        val_loss, val_acc = _score(net, criterion, x_val, y_val)
        record = EpochRecord(epoch, lr, total_loss / seen, correct / seen, val_loss, val_acc)
        history.records.append(record)
        logger.debug("epoch %d lr=%.3g loss=%.4f val_loss=%.4f val_acc=%.4f", epoch, lr, record.train_loss, val_loss, val_acc)

        if val_loss < best_loss:
            best_loss = val_loss
            best_state = copy.deepcopy(net.state_dict())
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                history.stopped_early = True
                break

    net.load_state_dict(best_state)
    trained = export_weights(net, model)
    logger.info(
        "trained %s: %d epochs (best %d), val acc %.4f",
        model.name,
        len(history.records),
        history.best_epoch,
        history.records[history.best_epoch - 1].val_acc if history.best_epoch else float("nan"),
    )
    return trained, history


def fine_tune(model: NetworkModel, split: DataSplit, cfg: TrainConfig, epochs: int) -> NetworkModel:
    """Short retraining at the recipe's initial learning rate."""
    if epochs <= 0:
        return model.copy()
    tuned, _ = train(model, split, cfg.model_copy(update={"max_epochs": epochs}))
    return tuned


def l2_grid_search(
    model: NetworkModel,
    split: DataSplit,
    cfg: TrainConfig,
    grid: Optional[List[float]] = None,
) -> Tuple[float, Dict[float, float]]:
    """Validation accuracy per L2 value (default 0..5 step 0.2); returns the best value and the table."""
    grid = [round(0.2 * i, 1) for i in range(26)] if grid is None else grid
    table = {}
    for l2 in grid:
        trained, history = train(model, split, cfg.model_copy(update={"l2": l2}))
        table[l2] = history.records[history.best_epoch - 1].val_acc
        logger.info("l2=%.1f val_acc=%.4f", l2, table[l2])
    best = max(grid, key=lambda value: (table[value], -value))
    return best, table


# ──────────────────────────────────────────────────────────────────────────────
# Gradient check
# ──────────────────────────────────────────────────────────────────────────────


def gradient_check(model: NetworkModel, x: np.ndarray, y: np.ndarray, eps: float = 1e-6) -> float:
    """Max relative error between autograd and central differences over every parameter.

    Runs in eval mode, so dropout is inert. Relative error uses a floor of 1e-3
    on the denominator so that vanishing gradients compare absolutely.
    """
    net = TorchNetwork(model)
    net.eval()
    criterion = nn.CrossEntropyLoss()
    xb, yb = _tensors(x, y, model.input_channels)

    net.zero_grad()
    criterion(net(xb), yb).backward()
    worst = 0.0
    for param in net.parameters():
        analytic = param.grad.detach().clone()
        flat = param.data.view(-1)
        for i in range(flat.numel()):
            original = float(flat[i])
            with torch.no_grad():
                flat[i] = original + eps
                plus = float(criterion(net(xb), yb))
                flat[i] = original - eps
                minus = float(criterion(net(xb), yb))
                flat[i] = original
            numeric = (plus - minus) / (2 * eps)
            a = float(analytic.view(-1)[i])
            worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-3))
    return worst
