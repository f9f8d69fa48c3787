"""
Recordings and their on-disk container.

A recording directory holds one little-endian float32 file per channel
(``channel_000.f32``, …) and a JSON manifest:

    {
      "format_version": 1, "name": "C_Easy1_noise005",
      "sample_rate": 26400.0, "channels": 1, "n_samples": 1440000,
      "noise_sigma": 0.05,
      "spike_times": [...], "class_ids": [...], "artefact_flags": [...],
      "event_channels": [...]
    }

Spike times are zero-based sample indices of the negative peak.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from fxp import ACTIVATION_FORMAT, QFormat, quantize_array

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
SAMPLE_DTYPE = np.dtype("<f4")


class RecordingFormatError(ValueError):
    """A recording container that cannot be read."""


class MalformedManifestError(RecordingFormatError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"manifest {field}: {message}")


class TruncatedDataError(RecordingFormatError):
    """A channel file holds fewer samples than the manifest declares."""


class NonMonotonicTimesError(RecordingFormatError):
    """Spike times within a channel are not strictly increasing."""


# ──────────────────────────────────────────────────────────────────────────────
# In-memory recording
# ──────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class GroundTruthEvent:
    time_index: int
    class_id: int                  # 1..3 for neurons, 0 for artefacts
    is_artefact: bool = False
    channel: int = 0


@dataclass(eq=False)
class Recording:
    samples: np.ndarray            # (channels, n_samples), float32
    sample_rate: float
    ground_truth: List[GroundTruthEvent] = field(default_factory=list)
    noise_sigma: float = 0.0
    name: str = "recording"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        self.samples = samples[None, :] if samples.ndim == 1 else samples
        check_monotonic(self.ground_truth)

    @property
    def channels(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[1])

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate

    def events(self, channel: int, artefacts: bool = True) -> List[GroundTruthEvent]:
        return [e for e in self.ground_truth if e.channel == channel and (artefacts or not e.is_artefact)]

    def spike_count(self, channel: Optional[int] = None) -> int:
        return sum(1 for e in self.ground_truth if not e.is_artefact and (channel is None or e.channel == channel))

    def class_count(self) -> int:
        return len({e.class_id for e in self.ground_truth if not e.is_artefact})

    def active_channels(self) -> List[int]:
        return sorted({e.channel for e in self.ground_truth if not e.is_artefact})

    def to_fixed(self, fmt: QFormat = ACTIVATION_FORMAT) -> np.ndarray:
        """Raw 10-bit samples, converted on demand."""
        return quantize_array(self.samples, fmt)


def check_monotonic(events: List[GroundTruthEvent]) -> None:
    last: Dict[int, int] = {}
    for event in events:
        previous = last.get(event.channel)
        if previous is not None and event.time_index <= previous:
            raise NonMonotonicTimesError(
                f"channel {event.channel}: time {event.time_index} follows {previous}"
            )
        last[event.channel] = event.time_index


# ──────────────────────────────────────────────────────────────────────────────
# Container format
# ──────────────────────────────────────────────────────────────────────────────


class RecordingManifest(BaseModel):
    format_version: int = FORMAT_VERSION
    name: str = "recording"
    sample_rate: float = Field(gt=0)
    channels: int = Field(ge=1)
    n_samples: int = Field(ge=0)
    noise_sigma: float = Field(0.0, ge=0)
    spike_times: List[int]
    class_ids: List[int]
    artefact_flags: List[bool]
    event_channels: Optional[List[int]] = None

    @model_validator(mode="after")
    def _aligned_lists(self) -> "RecordingManifest":
        count = len(self.spike_times)
        for key in ("class_ids", "artefact_flags", "event_channels"):
            values = getattr(self, key)
            if values is not None and len(values) != count:
                raise ValueError(f"{key} has {len(values)} entries, spike_times has {count}")
        return self


def channel_file(index: int) -> str:
    return f"channel_{index:03d}.f32"


def save_recording(recording: Recording, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    for index, channel in enumerate(recording.samples):
        channel.astype(SAMPLE_DTYPE).tofile(os.path.join(directory, channel_file(index)))
    events = recording.ground_truth
    manifest = RecordingManifest(
        name=recording.name,
        sample_rate=recording.sample_rate,
        channels=recording.channels,
        n_samples=recording.n_samples,
        noise_sigma=recording.noise_sigma,
        spike_times=[e.time_index for e in events],
        class_ids=[e.class_id for e in events],
        artefact_flags=[e.is_artefact for e in events],
        event_channels=[e.channel for e in events],
    )
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as f:
        json.dump(manifest.model_dump(), f, indent=2)
    logger.debug("saved %s (%d channels, %d events) to %s", recording.name, recording.channels, len(events), directory)
    return directory


def _read_manifest(directory: str) -> RecordingManifest:
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise MalformedManifestError("<root>", f"{path} not found")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data: Any = json.load(f)
    except json.JSONDecodeError as ex:
        raise MalformedManifestError("<root>", f"invalid JSON ({ex.msg} at line {ex.lineno})") from ex
    if not isinstance(data, dict):
        raise MalformedManifestError("<root>", "expected a JSON object")
    try:
        manifest = RecordingManifest.model_validate(data)
    except ValidationError as ex:
        error = ex.errors()[0]
        field_path = ".".join(str(part) for part in error["loc"]) or "<root>"
        raise MalformedManifestError(field_path, error["msg"]) from ex
    if manifest.format_version != FORMAT_VERSION:
        raise MalformedManifestError("format_version", f"unsupported version {manifest.format_version}")
    return manifest


def ingest_recording(directory: str) -> Recording:
    """Load a recording container; samples stay float32, ground truth attached."""
    manifest = _read_manifest(directory)
    channels = []
    for index in range(manifest.channels):
        path = os.path.join(directory, channel_file(index))
        if not os.path.isfile(path):
            raise TruncatedDataError(f"{path} missing")
        data = np.fromfile(path, dtype=SAMPLE_DTYPE)
        if data.size < manifest.n_samples:
            raise TruncatedDataError(f"{path}: {data.size} samples, manifest declares {manifest.n_samples}")
        if data.size > manifest.n_samples:
            raise RecordingFormatError(f"{path}: {data.size} samples, manifest declares {manifest.n_samples}")
        channels.append(data)

    event_channels = manifest.event_channels or [0] * len(manifest.spike_times)
    events = []
    for time_index, class_id, artefact, channel in zip(
        manifest.spike_times, manifest.class_ids, manifest.artefact_flags, event_channels
    ):
        if not 0 <= channel < manifest.channels:
            raise MalformedManifestError("event_channels", f"channel {channel} out of range")
        if not 0 <= time_index < manifest.n_samples:
            raise MalformedManifestError("spike_times", f"time {time_index} outside 0..{manifest.n_samples - 1}")
        events.append(GroundTruthEvent(int(time_index), int(class_id), bool(artefact), int(channel)))

    samples = np.stack(channels) if channels else np.zeros((0, manifest.n_samples), dtype=np.float32)
    recording = Recording(samples, manifest.sample_rate, events, manifest.noise_sigma, manifest.name)
    logger.info(
        "ingested %s: %d channels, %.1f s, %d spikes", recording.name, recording.channels,
        recording.duration_s, recording.spike_count(),
    )
    return recording


# ──────────────────────────────────────────────────────────────────────────────
# Wave_Clus simulator files
# ──────────────────────────────────────────────────────────────────────────────

_NOISE_PATTERN = re.compile(r"noise(\d+)", re.IGNORECASE)


def noise_from_name(name: str) -> float:
    """``noise005`` → 0.05, ``noise01`` → 0.1, ``noise015`` → 0.15."""
    match = _NOISE_PATTERN.search(name)
    if not match:
        raise RecordingFormatError(f"no noise level in {name!r}")
    digits = match.group(1)
    return int(digits) / 10 ** (len(digits) - 1)


def _cell(value: Any) -> np.ndarray:
    """Unwrap a MATLAB cell / 1×N array as loaded by ``scipy.io.loadmat``."""
    array = np.asarray(value)
    while array.dtype == object and array.size == 1:
        array = np.asarray(array.reshape(-1)[0])
    if array.dtype == object:
        array = np.asarray(array.reshape(-1)[0])
    return array.reshape(-1)


def convert_wave_clus(mat_path: str, directory: Optional[str] = None) -> Recording:
    """Convert a Wave_Clus simulator ``.mat`` file.

    Reads ``data``, ``spike_times``, ``spike_class`` (first cell: neuron
    ids) and ``samplingInterval`` (ms). MATLAB indices are one-based.
    Writes a container to ``directory`` when given.
    """
    from scipy.io import loadmat

    try:
        mat = loadmat(mat_path)
    except (OSError, ValueError) as ex:
        raise RecordingFormatError(f"{mat_path}: {ex}") from ex
    for key in ("data", "spike_times", "spike_class", "samplingInterval"):
        if key not in mat:
            raise RecordingFormatError(f"{mat_path}: variable {key!r} missing")

    samples = np.asarray(mat["data"], dtype=np.float64).reshape(-1)
    times = np.rint(_cell(mat["spike_times"])).astype(np.int64) - 1
    classes = _cell(mat["spike_class"]).astype(np.int64)
    if times.shape != classes.shape:
        raise RecordingFormatError(f"{mat_path}: {times.size} spike times but {classes.size} classes")
    interval_ms = float(np.asarray(mat["samplingInterval"]).reshape(-1)[0])
    order = np.argsort(times, kind="stable")
    name = os.path.splitext(os.path.basename(mat_path))[0]
    events = [GroundTruthEvent(int(times[i]), int(classes[i])) for i in order]
    recording = Recording(samples, 1000.0 / interval_ms, events, noise_from_name(name), name)
    logger.info("converted %s: %d spikes, %d classes", name, recording.spike_count(), recording.class_count())
    if directory is not None:
        save_recording(recording, directory)
    return recording


__all__ = [
    "GroundTruthEvent",
    "MalformedManifestError",
    "NonMonotonicTimesError",
    "Recording",
    "RecordingFormatError",
    "RecordingManifest",
    "TruncatedDataError",
    "convert_wave_clus",
    "ingest_recording",
    "noise_from_name",
    "save_recording",
]
