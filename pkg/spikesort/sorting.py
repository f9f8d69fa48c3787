"""
Deep spike detection and sorting.

    recording ─▶ channel selection (CNN1) ─▶ detection ─▶ artefact removal (CNN2)
              ─▶ PCA ─▶ K-means ─▶ CAcc against ground truth

Either CNN may be ``None``, in which case that stage passes everything
through (every channel active, every detection kept).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Set, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.cluster import kmeans_plusplus
from sklearn.decomposition import PCA

from model import NetworkModel, predict

from .config import KMEANS_MAX_ITER, NEURON_COUNT, PCA_COMPONENTS, ChannelLabel, EventLabel, SortConfig
from .metrics import SortingMetrics, compute_cacc, match_events
from .recording import Recording
from .segmentation import Segments, detect_events, segment_for_channel_selection

logger = logging.getLogger(__name__)


class InsufficientDataError(ValueError):
    """Fewer points than components or clusters."""


# ──────────────────────────────────────────────────────────────────────────────
# CNN stages
# ──────────────────────────────────────────────────────────────────────────────


def _classify(cnn: NetworkModel, segments: Segments) -> np.ndarray:
    if len(segments) == 0:
        return np.zeros(0, dtype=np.int64)
    return predict(cnn, segments.data)


def channel_select(cnn1: Optional[NetworkModel], segments: Segments) -> Set[int]:
    """Channels with at least one segment classified neural."""
    if cnn1 is None:
        return {int(c) for c in np.unique(segments.channels)}
    labels = _classify(cnn1, segments)
    active = {int(c) for c in np.unique(segments.channels[labels == ChannelLabel.NEURAL])}
    logger.info("channel selection: %d of %d channels active", len(active), len(np.unique(segments.channels)))
    return active


def remove_artefacts(cnn2: Optional[NetworkModel], segments: Segments) -> Tuple[Segments, Segments]:
    """Split detections into (kept spikes, discarded artefacts and noise)."""
    if cnn2 is None:
        return segments, segments.subset(np.zeros(len(segments), dtype=bool))
    keep = _classify(cnn2, segments) == EventLabel.SPIKE
    return segments.subset(keep), segments.subset(~keep)


# ──────────────────────────────────────────────────────────────────────────────
# Features and clustering
# ──────────────────────────────────────────────────────────────────────────────


@dataclass
class Projection:
    features: np.ndarray              # (N, n_components)
    components: np.ndarray            # (n_components, D)
    mean: np.ndarray
    explained_variance: np.ndarray


def pca_project(data: np.ndarray, n_components: int = PCA_COMPONENTS) -> Projection:
    """Mean-centred projection on the leading covariance eigenvectors.

    Each component is signed so its largest-magnitude loading is positive.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected (segments, samples), got shape {x.shape}")
    if x.shape[0] < n_components:
        raise InsufficientDataError(f"{x.shape[0]} segments for {n_components} components")
    if n_components > x.shape[1]:
        raise InsufficientDataError(f"{n_components} components from {x.shape[1]}-sample segments")
    mean = x.mean(axis=0)
    if not np.any(np.ptp(x, axis=0)):
        zeros = np.zeros((n_components, x.shape[1]))
        return Projection(np.zeros((x.shape[0], n_components)), zeros, mean, np.zeros(n_components))

    pca = PCA(n_components=n_components, svd_solver="full").fit(x)
    components = pca.components_.copy()
    signs = np.sign(components[np.arange(n_components), np.argmax(np.abs(components), axis=1)])
    signs[signs == 0] = 1.0
    components *= signs[:, None]
    features = (x - mean) @ components.T
    return Projection(features, components, mean, pca.explained_variance_.copy())


@dataclass
class Clustering:
    labels: np.ndarray
    centroids: np.ndarray
    inertia_history: List[float] = field(default_factory=list)

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]

    @property
    def iterations(self) -> int:
        return len(self.inertia_history)


def _assign(x: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, float]:
    distance = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(distance, axis=1)
    return labels, float(distance[np.arange(len(x)), labels].sum())


def kmeans_cluster(
    features: np.ndarray, k: int = NEURON_COUNT, seed: int = 0, max_iter: int = KMEANS_MAX_ITER
) -> Clustering:
    """Lloyd iterations from k-means++ seeds; stops when assignments repeat.

    An emptied cluster keeps its previous centroid.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if k < 1:
        raise ValueError(f"k must be ≥ 1, got {k}")
    if k > len(x):
        raise InsufficientDataError(f"k={k} clusters for {len(x)} points")

    centroids, _ = kmeans_plusplus(x, n_clusters=k, random_state=seed)
    centroids = centroids.astype(np.float64)
    labels, inertia = _assign(x, centroids)
    history = [inertia]
    for _ in range(max_iter - 1):
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
        updated, inertia = _assign(x, centroids)
        history.append(inertia)
        if np.array_equal(updated, labels):
            break
        labels = updated
    logger.debug("k-means: k=%d, %d iterations, inertia %.6g", k, len(history), history[-1])
    return Clustering(labels, centroids, history)


# ──────────────────────────────────────────────────────────────────────────────
# Per-channel sorting
# ──────────────────────────────────────────────────────────────────────────────


@dataclass
class ChannelSort:
    channel: int
    active: bool
    detected: int
    kept: int
    discarded: int
    kept_artefacts: int
    times: np.ndarray
    labels: np.ndarray
    features: Optional[np.ndarray]
    metrics: SortingMetrics

    @property
    def artefact_fraction(self) -> float:
        return self.kept_artefacts / self.kept if self.kept else 0.0

    def as_dict(self) -> Dict[str, Any]:
        return {
            "channel": self.channel,
            "active": self.active,
            "detected": self.detected,
            "kept": self.kept,
            "discarded": self.discarded,
            "kept_artefacts": self.kept_artefacts,
            "artefact_fraction": self.artefact_fraction,
            "metrics": self.metrics.as_dict(),
        }


def _truth(recording: Recording, channel: int) -> Tuple[List[int], List[int], List[bool]]:
    events = recording.events(channel)
    return [e.time_index for e in events], [e.class_id for e in events], [e.is_artefact for e in events]


def _missed(recording: Recording, channel: int) -> SortingMetrics:
    count = recording.spike_count(channel)
    return SortingMetrics(dts=count, fps=0, ms=count, nts=0, tpcc=0, cacc=None)


def sort_channel(
    recording: Recording, channel: int, cnn2: Optional[NetworkModel], cfg: SortConfig
) -> ChannelSort:
    detected = detect_events(recording, channel, cfg.threshold_sigmas)
    kept, discarded = remove_artefacts(cnn2, detected)
    times, classes, artefacts = _truth(recording, channel)

    labels = np.zeros(len(kept), dtype=np.int64)
    features = None
    if len(kept) >= max(cfg.clusters, cfg.n_components):
        features = pca_project(kept.data, cfg.n_components).features
        labels = kmeans_cluster(features, cfg.clusters, cfg.seed, cfg.max_iter).labels
    elif len(kept):
        logger.warning("channel %d: %d spikes kept, too few to cluster into %d", channel, len(kept), cfg.clusters)

    kept_artefacts = sum(1 for _, t in match_events(kept.times, times, cfg.tolerance) if artefacts[t])
    metrics = compute_cacc(kept.times, labels, times, classes, artefacts, cfg.tolerance)
    logger.info(
        "channel %d: %d detected, %d kept, %d discarded, CAcc %s",
        channel, len(detected), len(kept), len(discarded),
        "undefined" if metrics.cacc is None else f"{metrics.cacc:.2f}%",
    )
    return ChannelSort(
        channel, True, len(detected), len(kept), len(discarded), kept_artefacts, kept.times, labels, features, metrics
    )


@dataclass
class SortReport:
    name: str
    noise_sigma: float
    spike_count: int
    active_channels: List[int]
    channels: List[ChannelSort]
    metrics: SortingMetrics

    def as_dict(self) -> Dict[str, Any]:
        return {
            "dataset": self.name,
            "noise_sigma": self.noise_sigma,
            "spike_count": self.spike_count,
            "active_channels": self.active_channels,
            "metrics": self.metrics.as_dict(),
            "channels": [c.as_dict() for c in self.channels],
        }


def sort_recording(
    recording: Recording,
    cnn1: Optional[NetworkModel],
    cnn2: Optional[NetworkModel],
    cfg: Optional[SortConfig] = None,
) -> SortReport:
    """Run every stage on every channel; channels run through ``joblib``.

    True spikes on channels left inactive by channel selection count as misses.
    """
    cfg = cfg or SortConfig()
    windows = segment_for_channel_selection(recording, decimated=cfg.decimate)
    active = sorted(channel_select(cnn1, windows) if len(windows) else set(range(recording.channels)))

    results = Parallel(n_jobs=cfg.n_jobs)(
        delayed(sort_channel)(recording, channel, cnn2, cfg) for channel in active
    )
    for channel in range(recording.channels):
        if channel not in active:
            results.append(
                ChannelSort(channel, False, 0, 0, 0, 0, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                            None, _missed(recording, channel))
            )
    results.sort(key=lambda r: r.channel)
    metrics = SortingMetrics.combine(r.metrics for r in results)
    logger.info(
        "%s: DTS=%d FPS=%d MS=%d NTS=%d TPCC=%d CAcc=%s",
        recording.name, metrics.dts, metrics.fps, metrics.ms, metrics.nts, metrics.tpcc,
        "undefined" if metrics.cacc is None else f"{metrics.cacc:.2f}%",
    )
    return SortReport(recording.name, recording.noise_sigma, recording.spike_count(), active, results, metrics)


__all__ = [
    "ChannelSort",
    "Clustering",
    "InsufficientDataError",
    "Projection",
    "SortReport",
    "channel_select",
    "kmeans_cluster",
    "pca_project",
    "remove_artefacts",
    "sort_channel",
    "sort_recording",
]
