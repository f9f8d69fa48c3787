"""Labelled training corpora for the two classifier stages."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np

from .config import ALIGN_INDEX, NOISE_LEVELS, SEGMENT_LENGTH, EventLabel, SyntheticConfig
from .recording import Recording
from .segmentation import segment_for_channel_selection
from .synthetic import generate_synthetic

logger = logging.getLogger(__name__)


@dataclass
class Corpus:
    x: np.ndarray          # (N, 66)
    y: np.ndarray          # (N,)
    class_count: int

    def __len__(self) -> int:
        return len(self.y)

    def counts(self) -> List[int]:
        return np.bincount(self.y, minlength=self.class_count).tolist()

    def save(self, path: str) -> None:
        np.savez_compressed(path, x=self.x, y=self.y, class_count=self.class_count)

    @classmethod
    def load(cls, path: str) -> "Corpus":
        with np.load(path) as data:
            return cls(data["x"], data["y"].astype(np.int64), int(data["class_count"]))

    @classmethod
    def concat(cls, parts: Sequence["Corpus"]) -> "Corpus":
        return cls(
            np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]), parts[0].class_count
        )


def channel_selection_corpus(recordings: Iterable[Recording], decimated: bool = True) -> Corpus:
    """Neural (1) / noise (0) windows from every channel."""
    xs, ys = [], []
    for recording in recordings:
        segments = segment_for_channel_selection(recording, decimated=decimated)
        xs.append(segments.data)
        ys.append(segments.labels)
    return Corpus(np.concatenate(xs), np.concatenate(ys), 2)


def _window(signal: np.ndarray, trough: int) -> np.ndarray:
    start = trough - ALIGN_INDEX
    return signal[start : start + SEGMENT_LENGTH]


def artefact_corpus(recordings: Iterable[Recording], noise_ratio: float = 1.0, seed: int = 0) -> Corpus:
    """Spike (0), artefact (1) and background (2) windows.

    Events are cut trough-aligned from ground truth, as detection would cut
    them; background windows are drawn where no event falls within the window.
    """
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for recording in recordings:
        for channel in range(recording.channels):
            signal = recording.samples[channel].astype(np.float64)
            events = recording.events(channel)
            for event in events:
                window = _window(signal, event.time_index)
                if len(window) == SEGMENT_LENGTH and event.time_index >= ALIGN_INDEX:
                    xs.append(window)
                    ys.append(EventLabel.ARTEFACT if event.is_artefact else EventLabel.SPIKE)

            wanted = int(round(noise_ratio * max(len(events), 1)))
            times = np.array([e.time_index for e in events], dtype=np.int64)
            drawn = 0
            for start in rng.permutation(max(len(signal) - SEGMENT_LENGTH, 0)):
                if drawn >= wanted:
                    break
                # any trough inside the window, or a waveform tail reaching into it
                if times.size and np.any((times >= start - SEGMENT_LENGTH) & (times < start + 2 * SEGMENT_LENGTH)):
                    continue
                xs.append(signal[start : start + SEGMENT_LENGTH])
                ys.append(EventLabel.NOISE)
                drawn += 1
    x = np.stack(xs) if xs else np.zeros((0, SEGMENT_LENGTH))
    return Corpus(x, np.asarray(ys, dtype=np.int64), 3)


def desk_recordings(cfg: SyntheticConfig, count: int) -> List[Recording]:
    """``count`` recordings from consecutive seeds, cycling the noise levels."""
    recordings = []
    for index in range(count):
        sigma = NOISE_LEVELS[index % len(NOISE_LEVELS)]
        recordings.append(
            generate_synthetic(
                cfg.model_copy(update={"seed": cfg.seed + index, "noise_sigma": sigma, "name": f"{cfg.name}_{index}"})
            )
        )
    return recordings


__all__ = ["Corpus", "artefact_corpus", "channel_selection_corpus", "desk_recordings"]
