"""
DeepSpike — Pipeline Simulator: Configuration
===============================================
Clocking, handshake and resource-budget defaults of the block pipeline.
"""

from enum import Enum
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

# ──────────────────────────────────────────────────────────────────────────────
# Hardware constants
# ──────────────────────────────────────────────────────────────────────────────

MACS_PER_ENGINE = 3            # convolution engines chain three MACs
KERNEL_TAPS = 3
CLOCK_HZ = 2.5e6
CYCLE_BUDGET = 30
BUDGET_TOLERANCE = 0.1         # "approximately" the budget
HANDSHAKE_CYCLES = 2
STREAM_SEGMENTS = 4            # segments used to measure the initiation interval
REFERENCE_DELAY_CYCLES = 42

# mapper counts of the published fused blocks
REFERENCE_MAPPERS = {"fused1": 44, "fused2": 33, "fused3": 30}


class BlockKind(str, Enum):
    SIGNAL_MEMORY = "signal_memory"
    CONV = "conv"
    FUSED = "fused"
    CLASSIFIER = "classifier"
    SCOREBOARD = "scoreboard"


# ──────────────────────────────────────────────────────────────────────────────
# Models
# ──────────────────────────────────────────────────────────────────────────────


class BlockConfig(BaseModel):
    """Resources of one block; ``mac_count`` counts MACs (conv) or mappers (fused)."""

    model_config = ConfigDict(extra="forbid")

    kind: BlockKind
    mac_count: int = Field(1, ge=1)
    has_maxpool: bool = False


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    handshake_cycles: int = Field(HANDSHAKE_CYCLES, ge=0)
    cycle_budget: int = Field(CYCLE_BUDGET, ge=1)
    budget_tolerance: float = Field(BUDGET_TOLERANCE, ge=0)
    link_capacity: int = Field(1, ge=0)
    clock_hz: float = Field(CLOCK_HZ, gt=0)
    stream_segments: int = Field(STREAM_SEGMENTS, ge=2)
    mapper_override: Optional[Dict[str, int]] = None

    @property
    def effective_budget(self) -> int:
        return int(self.cycle_budget * (1.0 + self.budget_tolerance) + 1e-9)
