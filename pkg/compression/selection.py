"""
Model selection over compressed candidates.

1. keep candidates whose float accuracy clears the floor;
2. walk them from fewest learnables upwards, sweeping parameter widths
   from 8 bits down;
3. take the first candidate that stays stable at 8 bits, at its smallest
   stable width.

A width ``b`` is stable when every width from ``b`` up to 8 keeps accuracy
within ``stability_margin`` points of the candidate's float accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from model import NetworkModel, TrainConfig, evaluate
from model.data import DataSplit

from .config import CompressionConfig, CompressionError, Stage
from .projection import project_network, projection_flags
from .pruning import PruneResult, prune_structured
from .quantization import calibrate_formats, quantize_model

logger = logging.getLogger(__name__)

Sweep = Dict[int, float]


@dataclass
class Candidate:
    label: str
    stage: Stage
    learnables: int
    float_accuracy: float
    model: Optional[NetworkModel] = None
    iteration: int = 0
    projection_rate: Optional[float] = None
    flags: List[str] = field(default_factory=list)

    @classmethod
    def from_model(cls, label: str, stage: Stage, model: NetworkModel, accuracy: float, **kwargs) -> "Candidate":
        return cls(label=label, stage=stage, learnables=model.learnables, float_accuracy=accuracy, model=model, **kwargs)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "stage": self.stage.value,
            "learnables": self.learnables,
            "float_accuracy": self.float_accuracy,
            "iteration": self.iteration,
            "projection_rate": self.projection_rate,
            "flags": list(self.flags),
        }


@dataclass
class Selection:
    candidate: Candidate
    bits: int
    accuracy: float
    stable: bool
    sweeps: Dict[str, Sweep] = field(default_factory=dict)
    model: Optional[NetworkModel] = None

    @property
    def learnables(self) -> int:
        return self.candidate.learnables

    def as_dict(self) -> Dict[str, Any]:
        return {
            "label": self.candidate.label,
            "learnables": self.learnables,
            "bits": self.bits,
            "memory_bytes": -(-self.learnables * self.bits // 8),
            "accuracy": self.accuracy,
            "float_accuracy": self.candidate.float_accuracy,
            "stable": self.stable,
        }


# ──────────────────────────────────────────────────────────────────────────────
# Bit-width sweeps
# ──────────────────────────────────────────────────────────────────────────────


def _accuracy_at(model: NetworkModel, bits: int, x: np.ndarray, y: np.ndarray, formats) -> float:
    return evaluate(quantize_model(model, bits, formats=formats), x, y, quantized=True)


def sweep_bits(
    model: NetworkModel,
    x: np.ndarray,
    y: np.ndarray,
    widths: Sequence[int],
    calibration: Optional[np.ndarray] = None,
    n_jobs: int = 1,
) -> Sweep:
    """Quantized accuracy at each width (widths evaluated in parallel)."""
    formats = calibrate_formats(model, calibration) if calibration is not None and len(calibration) else None
    scores = Parallel(n_jobs=n_jobs)(delayed(_accuracy_at)(model, bits, x, y, formats) for bits in widths)
    return dict(zip(widths, scores))


def stable_width(float_accuracy: float, sweep: Sweep, margin_points: float) -> Optional[int]:
    """Smallest width whose every wider width (up to the widest swept) stays within the margin."""
    threshold = float_accuracy - margin_points / 100.0
    best = None
    for bits in sorted(sweep, reverse=True):
        if sweep[bits] < threshold:
            break
        best = bits
    return best


def select_model(
    candidates: Sequence[Candidate],
    cfg: CompressionConfig,
    sweep: Callable[[Candidate], Sweep],
    calibration: Optional[np.ndarray] = None,
) -> Selection:
    """Apply the floor → fewest-learnables → smallest-stable-width rules.

    ``sweep`` maps a candidate to its accuracy per swept width. When no
    candidate is stable, the best 8-bit candidate is returned with
    ``stable=False``.
    """
    eligible = [c for c in candidates if c.float_accuracy >= cfg.accuracy_floor]
    if not eligible:
        raise CompressionError(f"no candidate reaches the accuracy floor {cfg.accuracy_floor}")
    order = sorted(range(len(eligible)), key=lambda i: (eligible[i].learnables, i))

    sweeps: Dict[str, Sweep] = {}
    chosen = None
    for i in order:
        candidate = eligible[i]
        sweeps[candidate.label] = sweep(candidate)
        width = stable_width(candidate.float_accuracy, sweeps[candidate.label], cfg.stability_margin)
        logger.debug("candidate %s (%d learnables): stable width %s", candidate.label, candidate.learnables, width)
        if width is not None:
            chosen = Selection(candidate, width, sweeps[candidate.label][width], True, sweeps)
            break

    if chosen is None:
        widest = max(cfg.bit_widths)
        best = max(order, key=lambda i: (sweeps[eligible[i].label][widest], -eligible[i].learnables, -i))
        candidate = eligible[best]
        candidate.flags.append("unstable")
        chosen = Selection(candidate, widest, sweeps[candidate.label][widest], False, sweeps)
        logger.warning("no candidate is stable under quantization; using %s at %d bits", candidate.label, widest)

    if chosen.candidate.model is not None:
        chosen.model = quantize_model(chosen.candidate.model, chosen.bits, calibration=calibration)
    logger.info(
        "selected %s: %d learnables at %d bits, accuracy %.4f",
        chosen.candidate.label,
        chosen.learnables,
        chosen.bits,
        chosen.accuracy,
    )
    return chosen


# ──────────────────────────────────────────────────────────────────────────────
# Candidate generation
# ──────────────────────────────────────────────────────────────────────────────


def generate_candidates(
    model: NetworkModel,
    split: DataSplit,
    train_cfg: TrainConfig,
    cfg: CompressionConfig,
    calibration: np.ndarray,
) -> tuple[List[Candidate], PruneResult]:
    """Every pruning candidate plus projections of the smallest pruned model
    that clears the floor, at each configured rate (and explicit ranks)."""
    pruned = prune_structured(model, split, train_cfg, cfg)
    candidates = []
    for entry in pruned.candidates:
        stage = Stage.ORIGINAL if entry.iteration == 0 else Stage.PRUNED
        label = "original" if entry.iteration == 0 else f"prune-{entry.iteration}"
        candidates.append(Candidate.from_model(label, stage, entry.model, entry.accuracy, iteration=entry.iteration))

    clearing = [c for c in pruned.candidates if c.accuracy >= cfg.accuracy_floor]
    base = min(clearing, key=lambda c: (c.learnables, c.iteration)) if clearing else pruned.final

    variants: List[tuple] = [(f"proj-{rate:g}", rate, None) for rate in cfg.projection_rates]
    if cfg.projection_ranks:
        variants.append(("proj-ranks", None, cfg.projection_ranks))
    for label, rate, ranks in variants:
        projected = project_network(
            base.model,
            calibration,
            target_reduction=rate or 0.0,
            ranks=ranks,
            split=split,
            train_cfg=train_cfg,
            fine_tune_epochs=cfg.fine_tune_epochs,
        )
        accuracy = evaluate(projected, split.x_val, split.y_val)
        candidates.append(
            Candidate.from_model(
                label,
                Stage.PROJECTED,
                projected,
                accuracy,
                iteration=base.iteration,
                projection_rate=rate,
                flags=projection_flags(projected),
            )
        )
        logger.info("%s: %d learnables, val acc %.4f", label, projected.learnables, accuracy)
    return candidates, pruned


def default_sweep(split: DataSplit, cfg: CompressionConfig, calibration: np.ndarray) -> Callable[[Candidate], Sweep]:
    def run(candidate: Candidate) -> Sweep:
        return sweep_bits(candidate.model, split.x_val, split.y_val, cfg.bit_widths, calibration, cfg.n_jobs)

    return run
