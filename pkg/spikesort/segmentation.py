"""
Cutting recordings into 66-sample segments.

Two views of a channel:

  - channel selection: non-overlapping 660-sample windows, anti-aliased
    with a 3-tap moving average and decimated by 10;
  - detection: 4σ negative threshold crossings (σ = median|x| / 0.6745)
    with a 66-sample lockout from the first crossing,
    each window aligned so the trough sits at sample 22.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

import numpy as np
from scipy.ndimage import uniform_filter1d

from .config import (
    ALIGN_INDEX,
    DECIMATION_FILTER,
    DOWNSAMPLE,
    MAD_SCALE,
    MIN_EVENT_GAP,
    SEGMENT_LENGTH,
    SELECTION_WINDOW,
    THRESHOLD_SIGMAS,
    TROUGH_SEARCH,
    ChannelLabel,
)
from .recording import Recording

logger = logging.getLogger(__name__)

UNLABELLED = -1


@dataclass
class Segments:
    """Batch of 66-sample windows with their provenance.

    ``origins`` is the window's first raw sample; ``times`` the event
    time it stands for (trough for detections, window start otherwise).
    """

    data: np.ndarray
    channels: np.ndarray
    origins: np.ndarray
    times: np.ndarray
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64).reshape(-1, SEGMENT_LENGTH)
        count = len(self.data)
        self.channels = np.asarray(self.channels, dtype=np.int64).reshape(count)
        self.origins = np.asarray(self.origins, dtype=np.int64).reshape(count)
        self.times = np.asarray(self.times, dtype=np.int64).reshape(count)
        if self.labels is None:
            self.labels = np.full(count, UNLABELLED, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(count)

    def __len__(self) -> int:
        return len(self.data)

    @classmethod
    def empty(cls) -> "Segments":
        return cls(np.zeros((0, SEGMENT_LENGTH)), [], [], [], [])

    @classmethod
    def concat(cls, parts: Iterable["Segments"]) -> "Segments":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.data for p in parts]),
            np.concatenate([p.channels for p in parts]),
            np.concatenate([p.origins for p in parts]),
            np.concatenate([p.times for p in parts]),
            np.concatenate([p.labels for p in parts]),
        )

    def subset(self, mask: np.ndarray) -> "Segments":
        return Segments(self.data[mask], self.channels[mask], self.origins[mask], self.times[mask], self.labels[mask])

    def for_channel(self, channel: int) -> "Segments":
        return self.subset(self.channels == channel)


# ──────────────────────────────────────────────────────────────────────────────
# Channel selection
# ──────────────────────────────────────────────────────────────────────────────


def decimate(windows: np.ndarray, factor: int = DOWNSAMPLE) -> np.ndarray:
    """3-tap moving average within each window (edges repeat), then every ``factor``-th sample."""
    smoothed = uniform_filter1d(np.asarray(windows, dtype=np.float64), size=DECIMATION_FILTER, axis=-1, mode="nearest")
    return smoothed[..., ::factor]


def segment_for_channel_selection(
    recording: Recording,
    window: int = SELECTION_WINDOW,
    downsample: int = DOWNSAMPLE,
    decimated: bool = True,
    channels: Optional[List[int]] = None,
) -> Segments:
    """Non-overlapping windows per channel, labelled neural when a true spike falls inside.

    With ``decimated=False`` the windows are 66 raw samples each. The tail
    shorter than a window is dropped.
    """
    if not decimated:
        window, downsample = SEGMENT_LENGTH, 1
    if window // downsample != SEGMENT_LENGTH or window % downsample:
        raise ValueError(f"window {window} / downsample {downsample} must give {SEGMENT_LENGTH} samples")
    parts = []
    for channel in channels if channels is not None else range(recording.channels):
        signal = recording.samples[channel].astype(np.float64)
        count = len(signal) // window
        if count == 0:
            continue
        windows = signal[: count * window].reshape(count, window)
        data = decimate(windows, downsample) if downsample > 1 else windows
        starts = np.arange(count) * window
        labels = np.full(count, ChannelLabel.NOISE, dtype=np.int64)
        spikes = np.array([e.time_index for e in recording.events(channel, artefacts=False)], dtype=np.int64)
        if spikes.size:
            hit = np.unique(spikes // window)
            labels[hit[hit < count]] = ChannelLabel.NEURAL
        parts.append(Segments(data, np.full(count, channel), starts, starts, labels))
    return Segments.concat(parts)


# ──────────────────────────────────────────────────────────────────────────────
# Detection
# ──────────────────────────────────────────────────────────────────────────────


def noise_level(signal: np.ndarray) -> float:
    return float(np.median(np.abs(signal)) / MAD_SCALE)


def threshold_crossings(signal: np.ndarray, threshold: float, lockout: int = MIN_EVENT_GAP) -> np.ndarray:
    """Samples where ``signal`` first drops below −threshold; crossings within
    ``lockout`` samples of the last accepted one are ignored."""
    below = np.concatenate(([False], signal < -threshold))
    onsets = np.flatnonzero(below[1:] & ~below[:-1])
    accepted: List[int] = []
    for onset in onsets:
        if not accepted or onset - accepted[-1] >= lockout:
            accepted.append(int(onset))
    return np.asarray(accepted, dtype=np.int64)


def detect_events(
    recording: Recording,
    channel: int = 0,
    threshold_sigmas: float = THRESHOLD_SIGMAS,
) -> Segments:
    """Trough-aligned windows at negative threshold crossings, 66-sample lockout."""
    signal = recording.samples[channel].astype(np.float64)
    sigma = noise_level(signal) if signal.size else 0.0
    if sigma == 0.0:
        return Segments.empty()
    threshold = threshold_sigmas * sigma
    crossings = threshold_crossings(signal, threshold)
    troughs = np.array(
        [c + int(np.argmin(signal[c : c + TROUGH_SEARCH])) for c in crossings], dtype=np.int64
    )
    starts = troughs - ALIGN_INDEX
    keep = (starts >= 0) & (starts + SEGMENT_LENGTH <= signal.size)
    troughs, starts = troughs[keep], starts[keep]
    data = signal[starts[:, None] + np.arange(SEGMENT_LENGTH)] if len(starts) else np.zeros((0, SEGMENT_LENGTH))
    logger.debug("channel %d: threshold %.4f, %d events", channel, threshold, len(troughs))
    return Segments(data, np.full(len(troughs), channel), starts, troughs)


__all__ = [
    "Segments",
    "UNLABELLED",
    "decimate",
    "detect_events",
    "noise_level",
    "segment_for_channel_selection",
    "threshold_crossings",
]
