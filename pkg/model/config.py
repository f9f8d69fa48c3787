"""
DeepSpike — 1-D CNN: Configuration
====================================
Topology constants of the spike classifier and the training recipe defaults.
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

# ──────────────────────────────────────────────────────────────────────────────
# Topology
# ──────────────────────────────────────────────────────────────────────────────

INPUT_LENGTH = 66          # samples per segment (2.5 ms at 26.4 kHz)
CLASS_COUNT = 3            # spike, artefact, background noise
ORIGINAL_FILTERS = 50      # kernels per convolution layer before compression
KERNEL_LEN = 3
POOL_SIZE = 2
FIRST_CONV_PADDING = 1     # keeps 66 samples into the second convolution
DROPOUT_RATE = 0.5
FC_BIAS_INIT = 0.1         # keeps the ReLU after the classifier alive at start

# Projected topology, per layer (input rank, output rank); None = no projection-in
OPTIMIZED_FILTERS = 10
OPTIMIZED_RANKS = {
    "conv1": (None, 1),
    "conv2": (1, 1),
    "conv3": (1, 2),
    "fc": (None, 2),
}


class LayerKind(str, Enum):
    CONV1D = "conv1d"
    POINTWISE = "pointwise"
    RELU = "relu"
    MAXPOOL = "maxpool"
    FC = "fc"
    DROPOUT = "dropout"


# ──────────────────────────────────────────────────────────────────────────────
# Training recipe
# ──────────────────────────────────────────────────────────────────────────────


class TrainConfig(BaseModel):
    """SGD-with-momentum recipe; defaults follow the published training setup."""

    model_config = ConfigDict(extra="forbid")

    initial_lr: float = Field(0.01, gt=0)
    lr_factor: float = Field(0.1, gt=0)
    lr_period_epochs: int = Field(5, ge=1)
    momentum: float = Field(0.9, ge=0, lt=1)
    max_epochs: int = Field(200, ge=1)
    batch_size: int = Field(256, ge=1)
    l2: float = Field(1.8, ge=0)
    early_stop_patience: int = Field(6, ge=1)
    dropout_rate: float = Field(DROPOUT_RATE, ge=0, lt=1)
    rng_seed: int = 0
    progress: bool = False

    @model_validator(mode="after")
    def _decaying_schedule(self):
        if self.lr_factor > 1 and self.lr_period_epochs < self.max_epochs:
            raise ValueError("lr_factor must be <= 1")
        return self
