"""
Network projection: every convolution and the classifier are replaced by
projection-in / core / projection-out sublayers derived from the principal
components of calibration activations.

For a convolution with per-tap in×out kernels W_k, input basis U_in (mean
μ_in) and output basis U_out (mean μ_out):

    proj_in   z = (x − μ_in) · U_in
    core      w = Σ_k z_{t+k} · (U_inᵀ W_k U_out) + (Σ_k μ_in W_k + b − μ_out) · U_out
    proj_out  y = w · U_outᵀ + μ_out

With full-rank bases the three sublayers reproduce the original layer
exactly. Fully connected layers only get the output-side factorisation.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from model import Conv1D, FullyConnected, NetworkModel, TrainConfig, fine_tune, run_layers
from model.data import DataSplit
from model.forward import as_batch
from model.layers import LayerSpec, PointwiseConv, channel_bias, conv_weight

from .config import RANK_TOLERANCE, CompressionError

logger = logging.getLogger(__name__)

Ranks = Dict[str, Tuple[Optional[int], int]]


@dataclass
class Basis:
    """Principal axes of one side of a layer, strongest first."""

    vectors: np.ndarray        # channels × channels, columns ordered by variance
    variances: np.ndarray
    mean: np.ndarray
    identity_fallback: bool = False

    @property
    def channels(self) -> int:
        return int(self.vectors.shape[0])

    def discarded(self, rank: int) -> float:
        total = float(self.variances.sum())
        if total <= 0.0:
            return 0.0
        return float(self.variances[rank:].sum()) / total

    @property
    def numerical_rank(self) -> int:
        """Directions whose variance exceeds RANK_TOLERANCE relative to the strongest."""
        if self.identity_fallback:
            return self.channels
        return max(1, int(np.count_nonzero(self.variances > RANK_TOLERANCE * self.variances[0])))

    def top(self, rank: int) -> np.ndarray:
        return self.vectors[:, :rank]


@dataclass
class LayerProjection:
    name: str
    rank_in: Optional[int]
    rank_out: int
    kept_variance_in: Optional[float]
    kept_variance_out: float
    identity_fallback: bool

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "rank_in": self.rank_in,
            "rank_out": self.rank_out,
            "kept_variance_in": self.kept_variance_in,
            "kept_variance_out": self.kept_variance_out,
            "identity_fallback": self.identity_fallback,
        }


# ──────────────────────────────────────────────────────────────────────────────
# Principal axes
# ──────────────────────────────────────────────────────────────────────────────


def principal_basis(vectors: np.ndarray, center: bool = True) -> Basis:
    """Eigen-decomposition of the covariance of ``vectors`` (samples × channels).

    Falls back to the identity when there are fewer samples than channels or
    no direction carries variance. Other rank-deficient covariances keep
    their eigenbasis; ``Basis.numerical_rank`` counts the directions that
    carry variance and projection ranks are clamped to it.
    """
    samples, channels = vectors.shape
    mean = vectors.mean(axis=0) if center and samples else np.zeros(channels)
    if samples < channels:
        return Basis(np.eye(channels), np.ones(channels), np.zeros(channels), identity_fallback=True)
    centered = vectors - mean
    cov = centered.T @ centered / samples
    values, axes = np.linalg.eigh(cov)
    values = np.clip(values, 0.0, None)
    if values.max() <= RANK_TOLERANCE:
        return Basis(np.eye(channels), np.ones(channels), np.zeros(channels), identity_fallback=True)
    order = np.argsort(-values, kind="stable")
    return Basis(axes[:, order], values[order], mean)


def _channel_vectors(act: np.ndarray) -> np.ndarray:
    """(N, C, L) activations → (N·L, C) channel vectors."""
    return act.transpose(0, 2, 1).reshape(-1, act.shape[1])


# ──────────────────────────────────────────────────────────────────────────────
# Stage bookkeeping
# ──────────────────────────────────────────────────────────────────────────────


@dataclass
class _Stage:
    index: int
    layer: LayerSpec
    basis_in: Optional[Basis]
    basis_out: Basis

    @property
    def name(self) -> str:
        return self.layer.name

    @property
    def is_fc(self) -> bool:
        return isinstance(self.layer, FullyConnected)

    def learnables(self, rank_in: Optional[int], rank_out: int) -> int:
        if self.is_fc:
            fc = self.layer
            return rank_out * fc.in_dim + rank_out + fc.out_dim * rank_out + fc.out_dim
        conv = self.layer
        total = 0
        core_in = conv.in_ch
        if rank_in is not None:
            total += conv.in_ch * rank_in + rank_in
            core_in = rank_in
        total += conv.kernel_len * core_in * rank_out + rank_out
        total += rank_out * conv.out_ch + conv.out_ch
        return total

    def full_ranks(self) -> Tuple[Optional[int], int]:
        rank_in = None if self.basis_in is None else self.basis_in.channels
        return rank_in, self.basis_out.channels


def _stages(model: NetworkModel, x: np.ndarray) -> List[_Stage]:
    acts = run_layers(model.layers, as_batch(x, model.input_channels).astype(np.float64))
    stages = []
    for i, layer in enumerate(model.layers):
        if isinstance(layer, PointwiseConv) or "." in layer.name:
            raise CompressionError(f"layer '{layer.name}' is already projected")
        if isinstance(layer, Conv1D):
            basis_in = None
            if layer.in_ch > 1:
                basis_in = principal_basis(_channel_vectors(acts[i]), center=layer.padding == 0)
            basis_out = principal_basis(_channel_vectors(acts[i + 1]))
            stages.append(_Stage(i, layer, basis_in, basis_out))
        elif isinstance(layer, FullyConnected):
            basis_out = principal_basis(acts[i + 1].reshape(acts[i + 1].shape[0], -1))
            stages.append(_Stage(i, layer, None, basis_out))
    return stages


def greedy_ranks(stages: List[_Stage], budget: int) -> Ranks:
    """Lower ranks one step at a time, always on the side whose next cut
    discards the smallest share of its variance, until the projected stages
    fit in ``budget`` learnables (or every side is at rank 1)."""
    ranks = {s.name: s.full_ranks() for s in stages}

    def total() -> int:
        return sum(s.learnables(*ranks[s.name]) for s in stages)

    while total() > budget:
        best = None
        for position, stage in enumerate(stages):
            rank_in, rank_out = ranks[stage.name]
            sides = [("out", rank_out, stage.basis_out)]
            if rank_in is not None:
                sides.append(("in", rank_in, stage.basis_in))
            for side, rank, basis in sides:
                if rank <= 1 or basis.identity_fallback:
                    continue
                loss = basis.discarded(rank - 1)
                key = (loss, position, side != "in")
                if best is None or key < best[0]:
                    best = (key, stage.name, side)
        if best is None:
            logger.warning("learnable budget %d unreachable; stopping at %d", budget, total())
            break
        _, name, side = best
        rank_in, rank_out = ranks[name]
        ranks[name] = (rank_in - 1, rank_out) if side == "in" else (rank_in, rank_out - 1)
    return ranks


# ──────────────────────────────────────────────────────────────────────────────
# Layer rewriting
# ──────────────────────────────────────────────────────────────────────────────


def _project_conv(conv: Conv1D, basis_in: Optional[Basis], basis_out: Basis, rank_in, rank_out) -> List[LayerSpec]:
    layers: List[LayerSpec] = []
    kernels = conv.weight[0]                        # k × in × out
    bias = conv.bias.reshape(-1)
    u_out = basis_out.top(rank_out)
    mu_out = basis_out.mean

    if rank_in is not None:
        u_in = basis_in.top(rank_in)
        mu_in = basis_in.mean
        layers.append(
            PointwiseConv(
                name=f"{conv.name}.proj_in",
                weight=u_in[None, None],
                bias=channel_bias(-(mu_in @ u_in)),
            )
        )
        core_kernels = np.einsum("ir,kio,os->krs", u_in, kernels, u_out)
        core_bias = (mu_in @ kernels.sum(axis=0) + bias - mu_out) @ u_out
    else:
        core_kernels = np.einsum("kio,os->kis", kernels, u_out)
        core_bias = (bias - mu_out) @ u_out

    layers.append(
        Conv1D(name=f"{conv.name}.core", weight=conv_weight(core_kernels), bias=channel_bias(core_bias), padding=conv.padding)
    )
    layers.append(PointwiseConv(name=f"{conv.name}.proj_out", weight=u_out.T[None, None], bias=channel_bias(mu_out)))
    return layers


def _project_fc(fc: FullyConnected, basis_out: Basis, rank_out: int) -> List[LayerSpec]:
    u_out = basis_out.top(rank_out)
    mu_out = basis_out.mean
    return [
        FullyConnected(name=f"{fc.name}.proj_in", weight=u_out.T @ fc.weight, bias=(fc.bias - mu_out) @ u_out),
        FullyConnected(name=f"{fc.name}.proj_out", weight=u_out.copy(), bias=mu_out.copy()),
    ]


def _validate_ranks(stages: List[_Stage], ranks: Ranks) -> None:
    for stage in stages:
        if stage.name not in ranks:
            raise CompressionError(f"no rank given for '{stage.name}'")
        rank_in, rank_out = ranks[stage.name]
        full_in, full_out = stage.full_ranks()
        if not 1 <= rank_out <= full_out:
            raise CompressionError(f"'{stage.name}' output rank {rank_out} outside [1, {full_out}]")
        if rank_in is not None and (full_in is None or not 1 <= rank_in <= full_in):
            raise CompressionError(f"'{stage.name}' input rank {rank_in} not available")


def clamp_ranks(stages: List[_Stage], ranks: Ranks) -> Ranks:
    """Lower every rank above its basis's numerical rank to that rank."""
    clamped = dict(ranks)
    for stage in stages:
        rank_in, rank_out = ranks[stage.name]
        new_out = min(rank_out, stage.basis_out.numerical_rank)
        new_in = rank_in if rank_in is None else min(rank_in, stage.basis_in.numerical_rank)
        if (new_in, new_out) != (rank_in, rank_out):
            logger.info("%s: ranks %s clamped to numerical rank %s", stage.name, (rank_in, rank_out), (new_in, new_out))
        clamped[stage.name] = (new_in, new_out)
    return clamped


def project_network(
    model: NetworkModel,
    calibration: np.ndarray,
    target_reduction: float = 0.0,
    ranks: Optional[Ranks] = None,
    split: Optional[DataSplit] = None,
    train_cfg: Optional[TrainConfig] = None,
    fine_tune_epochs: int = 0,
) -> NetworkModel:
    """Projected copy of ``model``.

    Ranks are taken from ``ranks`` when given; otherwise target 0 keeps every
    component and larger targets reduce ranks greedily until the model has at
    most (1 − target) of the original learnables. With ``split`` and
    ``train_cfg`` the result is fine-tuned for ``fine_tune_epochs``.
    """
    if not 0.0 <= target_reduction <= 0.9:
        raise CompressionError(f"target_reduction must be in [0, 0.9], got {target_reduction}")
    calibration = np.asarray(calibration, dtype=np.float64)
    if calibration.size == 0:
        raise CompressionError("calibration set is empty")
    model.check_shapes()
    stages = _stages(model, calibration)

    if ranks is not None:
        chosen = dict(ranks)
        _validate_ranks(stages, chosen)
        chosen = clamp_ranks(stages, chosen)
    elif target_reduction == 0.0:
        chosen = {s.name: s.full_ranks() for s in stages}
    else:
        fixed = model.learnables - sum(s.layer.learnables for s in stages)
        budget = int((1.0 - target_reduction) * model.learnables) - fixed
        chosen = clamp_ranks(stages, greedy_ranks(stages, budget))

    by_index = {s.index: s for s in stages}
    layers: List[LayerSpec] = []
    report = []
    for i, layer in enumerate(model.layers):
        stage = by_index.get(i)
        if stage is None:
            layers.append(layer)
            continue
        rank_in, rank_out = chosen[stage.name]
        if stage.is_fc:
            layers.extend(_project_fc(layer, stage.basis_out, rank_out))
        else:
            layers.extend(_project_conv(layer, stage.basis_in, stage.basis_out, rank_in, rank_out))
        fallback = stage.basis_out.identity_fallback or (rank_in is not None and stage.basis_in.identity_fallback)
        if fallback:
            logger.warning("%s: degenerate calibration covariance, identity projection used", stage.name)
        report.append(
            LayerProjection(
                name=stage.name,
                rank_in=rank_in,
                rank_out=rank_out,
                kept_variance_in=None if rank_in is None else 1.0 - stage.basis_in.discarded(rank_in),
                kept_variance_out=1.0 - stage.basis_out.discarded(rank_out),
                identity_fallback=fallback,
            )
        )

    projected = NetworkModel(
        layers=[_detached(layer) for layer in layers],
        class_count=model.class_count,
        input_length=model.input_length,
        input_channels=model.input_channels,
        name=f"{model.name}-projected",
        meta=dict(model.meta),
    )
    projected.meta["projection"] = {
        "target_reduction": target_reduction,
        "layers": [entry.as_dict() for entry in report],
    }
    projected.check_shapes()
    logger.info(
        "projected %s: ranks %s, %d → %d learnables",
        model.name,
        {name: chosen[name] for name in (s.name for s in stages)},
        model.learnables,
        projected.learnables,
    )

    if split is not None and train_cfg is not None and fine_tune_epochs > 0:
        projected = fine_tune(projected, split, train_cfg, fine_tune_epochs)
    return projected


def _detached(layer: LayerSpec) -> LayerSpec:
    """Unquantized deep copy; projected models never share arrays with their source."""
    clone = copy.deepcopy(layer)
    if clone.is_weighted:
        clone.clear_quantization()
    return clone


def projection_flags(model: NetworkModel) -> List[str]:
    entries = model.meta.get("projection", {}).get("layers", [])
    return ["identity_fallback"] if any(e["identity_fallback"] for e in entries) else []
