"""
DeepSpike — Pipeline Simulator
================================
Cycle-counting model of the classifier hardware: handshake-linked blocks,
3-MAC convolution engines, fused projection blocks and roofline MAC
allocation. Numeric results are bit-identical to the model's quantized
forward.

Usage:
    from pipesim import PipelineConfig, calibrate_handshake, run_pipeline

    cfg = PipelineConfig(mapper_override={"fused1": 44, "fused2": 33, "fused3": 30})
    cfg = calibrate_handshake(quantized_model, target=42, cfg=cfg)
    label, trace = run_pipeline(quantized_model, segment, cfg)
    print(trace.summary())       # latency, initiation interval, time at 2.5 MHz
"""

from .allocation import Allocation, BlockAllocation, allocate_resources
from .blocks import (
    Block,
    BlockConfigError,
    BlockOutput,
    ClassifierBlock,
    ConvBlock,
    FusedBlock,
    ScoreboardBlock,
    SignalMemoryBlock,
    simulate_classifier,
    simulate_conv_block,
    simulate_fused_block,
    simulate_scoreboard,
)
from .config import REFERENCE_MAPPERS, BlockConfig, BlockKind, PipelineConfig
from .handshake import DeadlockError, HandshakeState, Link, ProtocolError
from .partition import PartitionError, partition
from .pipeline import BlockTiming, CycleTrace, Pipeline, calibrate_handshake, cycles_to_time, run_pipeline, run_stream, schedule, simulate

__all__ = [
    "Allocation",
    "Block",
    "BlockAllocation",
    "BlockConfig",
    "BlockConfigError",
    "BlockKind",
    "BlockOutput",
    "BlockTiming",
    "ClassifierBlock",
    "ConvBlock",
    "CycleTrace",
    "DeadlockError",
    "FusedBlock",
    "HandshakeState",
    "Link",
    "PartitionError",
    "Pipeline",
    "PipelineConfig",
    "ProtocolError",
    "REFERENCE_MAPPERS",
    "ScoreboardBlock",
    "SignalMemoryBlock",
    "allocate_resources",
    "calibrate_handshake",
    "cycles_to_time",
    "partition",
    "run_pipeline",
    "run_stream",
    "schedule",
    "simulate",
    "simulate_classifier",
    "simulate_conv_block",
    "simulate_fused_block",
    "simulate_scoreboard",
]

__version__ = "0.1.0"
