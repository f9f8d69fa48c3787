"""
Sorting accuracy and power scaling.

CAcc = 100 · TPCC / NTS with NTS = DTS − (FPS + MS):

    DTS   detected events (matched spikes + false positives + misses)
    FPS   predictions matching no true spike (or matching an artefact)
    MS    true spikes no prediction matched
    TPCC  matched spikes whose cluster maps to their neuron under the best
          cluster → neuron assignment
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from .config import BASE_SUPPLY_V, MATCH_TOLERANCE, SCALED_SUPPLY_V

logger = logging.getLogger(__name__)


@dataclass
class SortingMetrics:
    dts: int
    fps: int
    ms: int
    nts: int
    tpcc: int
    cacc: Optional[float]

    @property
    def defined(self) -> bool:
        return self.cacc is not None

    @classmethod
    def from_counts(cls, dts: int, fps: int, ms: int, tpcc: int) -> "SortingMetrics":
        nts = dts - (fps + ms)
        if not 0 <= tpcc <= max(nts, 0):
            raise ValueError(f"TPCC {tpcc} outside 0..{max(nts, 0)}")
        cacc = 100.0 * tpcc / nts if nts > 0 else None
        if cacc is None:
            logger.warning("CAcc undefined: no true spikes detected (DTS=%d, FPS=%d, MS=%d)", dts, fps, ms)
        return cls(dts, fps, ms, nts, tpcc, cacc)

    @classmethod
    def combine(cls, parts: Iterable["SortingMetrics"]) -> "SortingMetrics":
        parts = list(parts)
        return cls.from_counts(
            sum(p.dts for p in parts), sum(p.fps for p in parts), sum(p.ms for p in parts), sum(p.tpcc for p in parts)
        )

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["defined"] = self.defined
        return data


# ──────────────────────────────────────────────────────────────────────────────
# Event matching
# ──────────────────────────────────────────────────────────────────────────────


def _groups(pred: np.ndarray, true: np.ndarray, tolerance: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Split events into runs no match can cross (gaps wider than ``tolerance``)."""
    times = np.concatenate([pred, true])
    owner = np.concatenate([np.zeros(len(pred), dtype=int), np.ones(len(true), dtype=int)])
    index = np.concatenate([np.arange(len(pred)), np.arange(len(true))])
    order = np.argsort(times, kind="stable")
    breaks = np.flatnonzero(np.diff(times[order]) > tolerance) + 1
    groups = []
    for run in np.split(order, breaks):
        groups.append((index[run][owner[run] == 0], index[run][owner[run] == 1]))
    return groups


def match_events(pred_times: Sequence[int], true_times: Sequence[int], tolerance: int = MATCH_TOLERANCE) -> List[Tuple[int, int]]:
    """One-to-one (prediction, truth) index pairs within ``tolerance`` samples.

    Maximises the number of pairs, then minimises their total distance.
    """
    pred = np.asarray(pred_times, dtype=np.int64)
    true = np.asarray(true_times, dtype=np.int64)
    if pred.size == 0 or true.size == 0:
        return []
    pairs = []
    for p_idx, t_idx in _groups(pred, true, tolerance):
        if p_idx.size == 0 or t_idx.size == 0:
            continue
        distance = np.abs(pred[p_idx][:, None] - true[t_idx][None, :])
        allowed = distance <= tolerance
        penalty = tolerance * (min(distance.shape) + 1) + 1
        rows, cols = linear_sum_assignment(np.where(allowed, distance, penalty))
        for r, c in zip(rows, cols):
            if allowed[r, c]:
                pairs.append((int(p_idx[r]), int(t_idx[c])))
    return sorted(pairs)


def best_label_map(pred_labels: Sequence[int], true_labels: Sequence[int]) -> Tuple[Dict[int, int], int]:
    """Cluster → class assignment maximising agreement; returns (map, agreements)."""
    pred = np.asarray(pred_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.size == 0:
        return {}, 0
    clusters, pred_idx = np.unique(pred, return_inverse=True)
    classes, true_idx = np.unique(true, return_inverse=True)
    confusion = np.zeros((len(clusters), len(classes)), dtype=np.int64)
    np.add.at(confusion, (pred_idx, true_idx), 1)
    rows, cols = linear_sum_assignment(-confusion)
    mapping = {int(clusters[r]): int(classes[c]) for r, c in zip(rows, cols)}
    return mapping, int(confusion[rows, cols].sum())


def compute_cacc(
    pred_times: Sequence[int],
    pred_labels: Sequence[int],
    true_times: Sequence[int],
    true_classes: Sequence[int],
    true_artefacts: Optional[Sequence[bool]] = None,
    tolerance: int = MATCH_TOLERANCE,
) -> SortingMetrics:
    """Score sorted events against ground truth (artefact events are not spikes)."""
    pred_labels = np.asarray(pred_labels, dtype=np.int64)
    true_classes = np.asarray(true_classes, dtype=np.int64)
    artefact = (
        np.zeros(len(true_classes), dtype=bool) if true_artefacts is None else np.asarray(true_artefacts, dtype=bool)
    )
    pairs = match_events(pred_times, true_times, tolerance)
    spike_pairs = [(p, t) for p, t in pairs if not artefact[t]]
    nts = len(spike_pairs)
    fps = len(pred_labels) - nts
    ms = int((~artefact).sum()) - nts
    _, tpcc = best_label_map(
        [pred_labels[p] for p, _ in spike_pairs], [true_classes[t] for _, t in spike_pairs]
    )
    return SortingMetrics.from_counts(nts + fps + ms, fps, ms, tpcc)


# ──────────────────────────────────────────────────────────────────────────────
# Power
# ──────────────────────────────────────────────────────────────────────────────


def downscaling_factor(v_base: float = BASE_SUPPLY_V, v_scale: float = SCALED_SUPPLY_V, rounded: bool = True) -> float:
    """(V_base / V_scale)², rounded to an integer by default."""
    if v_base <= 0 or v_scale <= 0:
        raise ValueError(f"supply voltages must be > 0, got {v_base} and {v_scale}")
    factor = (v_base / v_scale) ** 2
    return float(round(factor)) if rounded else factor


def downscale_power(
    power: float, v_base: float = BASE_SUPPLY_V, v_scale: float = SCALED_SUPPLY_V, rounded: bool = True
) -> float:
    return power / downscaling_factor(v_base, v_scale, rounded)


# ──────────────────────────────────────────────────────────────────────────────
# Results table
# ──────────────────────────────────────────────────────────────────────────────

TABLE_COLUMNS = ["dataset", "noise_sigma", "spike_count", "cacc"]
AVERAGE_LABEL = "Average (plain mean)"


@dataclass
class TableRow:
    dataset: str
    noise_sigma: float
    spike_count: int
    cacc: Optional[float]

    @classmethod
    def from_json(cls, path: str) -> "TableRow":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return cls(data["dataset"], float(data["noise_sigma"]), int(data["spike_count"]), data["metrics"]["cacc"])


def results_table(rows: Sequence[TableRow]) -> pd.DataFrame:
    """Dataset rows followed by an average over every defined CAcc cell."""
    frame = pd.DataFrame([asdict(r) for r in rows], columns=TABLE_COLUMNS)
    defined = frame["cacc"].dropna()
    average = {"dataset": AVERAGE_LABEL, "noise_sigma": None, "spike_count": None,
               "cacc": float(defined.mean()) if len(defined) else None}
    return pd.concat([frame, pd.DataFrame([average], columns=TABLE_COLUMNS)], ignore_index=True)


def write_table(rows: Sequence[TableRow], path: str, config_hash: Optional[str] = None) -> pd.DataFrame:
    frame = results_table(rows)
    with open(path, "w", encoding="utf-8", newline="") as f:
        if config_hash:
            f.write(f"# config_hash={config_hash}\n")
        frame.to_csv(f, index=False)
    return frame


__all__ = [
    "AVERAGE_LABEL",
    "SortingMetrics",
    "TABLE_COLUMNS",
    "TableRow",
    "best_label_map",
    "compute_cacc",
    "downscale_power",
    "downscaling_factor",
    "match_events",
    "results_table",
    "write_table",
]
