"""
DeepSpike — Spike Sorting: Configuration
==========================================
Recording geometry, synthetic-data and sorting defaults.
"""

from enum import Enum, IntEnum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

# ──────────────────────────────────────────────────────────────────────────────
# Recording geometry
# ──────────────────────────────────────────────────────────────────────────────

SAMPLE_RATE_HZ = 26_400.0       # 66 samples = 2.5 ms
SEGMENT_LENGTH = 66
TEMPLATE_LENGTH = 48
TEMPLATE_PEAK = 14              # negative peak index inside a template
ALIGN_INDEX = 22                # negative peak index inside a detected window
MIN_EVENT_GAP = 66              # samples between consecutive events
SELECTION_WINDOW = 660          # raw samples behind one channel-selection segment
DOWNSAMPLE = 10
DECIMATION_FILTER = 3           # moving-average taps ahead of the stride pick
NOISE_LEVELS = (0.05, 0.1, 0.15, 0.2)

# ──────────────────────────────────────────────────────────────────────────────
# Detection, clustering and scoring
# ──────────────────────────────────────────────────────────────────────────────

THRESHOLD_SIGMAS = 4.0
TROUGH_SEARCH = 22              # samples after a crossing searched for the trough
MAD_SCALE = 0.6745              # median(|x|) / 0.6745 estimates σ for Gaussian noise
MATCH_TOLERANCE = 10            # samples
PCA_COMPONENTS = 2
NEURON_COUNT = 3
KMEANS_MAX_ITER = 300

# ──────────────────────────────────────────────────────────────────────────────
# Power scaling
# ──────────────────────────────────────────────────────────────────────────────

BASE_SUPPLY_V = 1.1
SCALED_SUPPLY_V = 0.27
REFERENCE_POWER_W = 5.6e-3

ARTEFACT_GAIN = (0.4, 0.6)
MAX_TRUNCATION = 6              # samples cut around the peak of an artefact


class TemplateBank(str, Enum):
    EASY = "easy"
    DIFFICULT = "difficult"


class ChannelLabel(IntEnum):
    """First-stage classes."""

    NOISE = 0
    NEURAL = 1


class EventLabel(IntEnum):
    """Second-stage classes."""

    SPIKE = 0
    ARTEFACT = 1
    NOISE = 2


# ──────────────────────────────────────────────────────────────────────────────
# Models
# ──────────────────────────────────────────────────────────────────────────────


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "synthetic"
    bank: TemplateBank = TemplateBank.EASY
    noise_sigma: float = Field(0.05, ge=0)
    duration_s: float = Field(10.0, gt=0)
    spike_rate_hz: float = Field(20.0, ge=0, description="per neuron")
    artefact_rate_hz: float = Field(5.0, ge=0)
    channels: int = Field(1, ge=1)
    active_channels: Optional[int] = Field(None, ge=0)
    sample_rate: float = Field(SAMPLE_RATE_HZ, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _active_within_channels(self) -> "SyntheticConfig":
        if self.active_channels is not None and self.active_channels > self.channels:
            raise ValueError(f"active_channels ({self.active_channels}) exceeds channels ({self.channels})")
        return self

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate))


class SortConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    threshold_sigmas: float = Field(THRESHOLD_SIGMAS, gt=0)
    tolerance: int = Field(MATCH_TOLERANCE, ge=0)
    n_components: int = Field(PCA_COMPONENTS, ge=1)
    clusters: int = Field(NEURON_COUNT, ge=1)
    max_iter: int = Field(KMEANS_MAX_ITER, ge=1)
    decimate: bool = True
    seed: int = 0
    n_jobs: int = 1
