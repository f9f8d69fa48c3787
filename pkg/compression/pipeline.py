"""End-to-end compression: prune → project → quantize → select."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from model import NetworkModel, TrainConfig
from model.data import DataSplit

from .config import CompressionConfig
from .report import CompressionReport
from .selection import Candidate, Selection, default_sweep, generate_candidates, select_model

logger = logging.getLogger(__name__)


@dataclass
class CompressionOutcome:
    report: CompressionReport
    selection: Selection
    candidates: List[Candidate] = field(default_factory=list)

    @property
    def model(self) -> NetworkModel:
        return self.selection.model


def run_compression(
    model: NetworkModel,
    split: DataSplit,
    train_cfg: TrainConfig,
    cfg: CompressionConfig,
) -> CompressionOutcome:
    """Compress a trained float model; calibration uses the first training segments."""
    calibration = np.asarray(split.x_train[: cfg.calibration_segments])
    logger.info("compressing %s (%d learnables)", model.name, model.learnables)
    candidates, pruned = generate_candidates(model, split, train_cfg, cfg, calibration)
    selection = select_model(candidates, cfg, default_sweep(split, cfg, calibration), calibration=calibration)
    report = CompressionReport.build(candidates, selection, pruned.skips, pruned.stop_reason)
    return CompressionOutcome(report, selection, candidates)
