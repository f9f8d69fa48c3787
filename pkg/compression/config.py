"""
DeepSpike — Compression: Configuration
========================================
Bounds and defaults of the prune → project → quantize search.
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# ──────────────────────────────────────────────────────────────────────────────
# Bounds
# ──────────────────────────────────────────────────────────────────────────────

MAX_PRUNE_ITERS = 30
MAX_LEARNABLE_REDUCTION = 0.9
MIN_QUANT_BITS = 2
MAX_QUANT_BITS = 8
FLOAT_BITS = 32

# eigenvalues at or below this are treated as zero variance
RANK_TOLERANCE = 1e-12


class Stage(str, Enum):
    ORIGINAL = "original"
    PRUNED = "pruned"
    PROJECTED = "projected"


class CompressionError(RuntimeError):
    """The compression search cannot produce a usable candidate."""


# ──────────────────────────────────────────────────────────────────────────────
# Search configuration
# ──────────────────────────────────────────────────────────────────────────────


class CompressionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_prune_iters: int = Field(MAX_PRUNE_ITERS, ge=0, le=MAX_PRUNE_ITERS)
    filters_per_iter: int = Field(1, ge=1)
    min_filters: int = Field(1, ge=1)
    accuracy_floor: float = Field(0.99, ge=0, le=1)
    fine_tune_epochs: int = Field(5, ge=0)
    target_learnable_reduction: float = Field(0.0, ge=0, le=MAX_LEARNABLE_REDUCTION)
    projection_rates: List[float] = Field(default_factory=lambda: [0.5, 0.7, 0.9])
    projection_ranks: Optional[Dict[str, Tuple[Optional[int], int]]] = None
    quant_bits_range: Tuple[int, int] = (MIN_QUANT_BITS, MAX_QUANT_BITS)
    stability_margin: float = Field(1.0, ge=0)   # accuracy points
    calibration_segments: int = Field(512, ge=1)
    n_jobs: int = 1

    @field_validator("projection_rates")
    @classmethod
    def _rates_in_range(cls, rates: List[float]) -> List[float]:
        for rate in rates:
            if not 0 <= rate <= MAX_LEARNABLE_REDUCTION:
                raise ValueError(f"projection rate {rate} outside [0, {MAX_LEARNABLE_REDUCTION}]")
        return rates

    @field_validator("quant_bits_range")
    @classmethod
    def _bits_in_range(cls, bounds: Tuple[int, int]) -> Tuple[int, int]:
        low, high = bounds
        if not MIN_QUANT_BITS <= low <= high <= MAX_QUANT_BITS:
            raise ValueError(f"quant_bits_range must lie within [{MIN_QUANT_BITS}, {MAX_QUANT_BITS}], got {bounds}")
        return bounds

    @model_validator(mode="after")
    def _explicit_ranks_positive(self):
        for name, (rank_in, rank_out) in (self.projection_ranks or {}).items():
            if rank_out < 1 or (rank_in is not None and rank_in < 1):
                raise ValueError(f"projection_ranks.{name} must be positive")
        return self

    @property
    def bit_widths(self) -> List[int]:
        """Swept widths, widest first."""
        low, high = self.quant_bits_range
        return list(range(high, low - 1, -1))
