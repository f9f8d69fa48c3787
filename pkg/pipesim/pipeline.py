"""
Self-timed pipeline run. Blocks exchange results only through handshake
links, and the cycle accounting falls out of the link states.

Each block cycles through four phases:

    idle       ready_in raised on its input link; waits for ready
    fetching   fetch raised; takes h cycles, then fetched frees the slot
    computing  c_b cycles on the fetched result
    holding    result waits for a free slot on the output link

A link holds at most κ results, so a producer whose output link is full
stalls until the consumer's fetched frees a slot. Time jumps between phase
boundaries; within a cycle every enabled transition fires before time
moves on. When nothing is pending and some block still holds a result,
the link it is waiting on is reported as deadlocked.

The signal memory takes no handshake. Latency is the first segment's push
time at the sink (Σc + h per handshaked block); the initiation interval is
the sink's last push spacing over a short stream, i.e. max_b(h + c_b). The
initiation interval is the reported classification delay.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from model import NetworkModel

from .allocation import Allocation, allocate_blocks
from .blocks import Block, BlockOutput, SignalMemoryBlock
from .config import REFERENCE_DELAY_CYCLES, PipelineConfig
from .handshake import DeadlockError, Link
from .partition import partition

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "block", "kind", "mac_count", "compute_cycles", "handshake_cycles", "start", "end", "stall_cycles"
]

IDLE, FETCHING, COMPUTING, HOLDING = "idle", "fetching", "computing", "holding"

# (block, upstream payload or segment index) -> payload passed downstream
Work = Callable[[Block, Any], Any]


def cycles_to_time(cycles: int, frequency: float) -> float:
    """Seconds taken by ``cycles`` at ``frequency`` Hz."""
    if frequency <= 0:
        raise ValueError(f"frequency must be > 0, got {frequency}")
    return cycles / frequency


@dataclass
class BlockTiming:
    block: str
    kind: str
    mac_count: int
    compute_cycles: int
    handshake_cycles: int
    start: int
    end: int
    stall_cycles: int = 0

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class CycleTrace:
    blocks: List[BlockTiming]
    latency_cycles: int
    initiation_interval_cycles: int
    handshake_cycles: int
    clock_hz: float
    segments: int
    stream_cycles: int
    link_transfers: Dict[str, int] = field(default_factory=dict)

    @property
    def delay_cycles(self) -> int:
        return self.initiation_interval_cycles

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([b.as_dict() for b in self.blocks], columns=TRACE_COLUMNS)

    def write_csv(self, path: str, config_hash: Optional[str] = None) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            if config_hash:
                f.write(f"# config_hash={config_hash}\n")
            self.to_frame().to_csv(f, index=False)

    def summary(self, config_hash: Optional[str] = None) -> Dict[str, Any]:
        return {
            "config_hash": config_hash,
            "latency_cycles": self.latency_cycles,
            "initiation_interval": self.initiation_interval_cycles,
            "delay_cycles": self.delay_cycles,
            "reference_delay_cycles": REFERENCE_DELAY_CYCLES,
            "handshake_cycles": self.handshake_cycles,
            "segments": self.segments,
            "stream_cycles": self.stream_cycles,
            "clock_hz": self.clock_hz,
            "time_at_frequency": {
                "latency_s": cycles_to_time(self.latency_cycles, self.clock_hz),
                "initiation_interval_s": cycles_to_time(self.initiation_interval_cycles, self.clock_hz),
                "stream_s": cycles_to_time(self.stream_cycles, self.clock_hz),
            },
        }

    def write_json(self, path: str, config_hash: Optional[str] = None) -> None:
        data = self.summary(config_hash)
        data["blocks"] = [b.as_dict() for b in self.blocks]
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)


# ──────────────────────────────────────────────────────────────────────────────
# Timing
# ──────────────────────────────────────────────────────────────────────────────


@dataclass
class _Stage:
    block: Block
    handshake: int
    inbound: Optional[Link] = None
    outbound: Optional[Link] = None
    phase: str = IDLE
    until: int = 0
    item: Tuple[int, Any] = (-1, None)
    fetch_start: List[int] = field(default_factory=list)
    compute_end: List[int] = field(default_factory=list)
    push: List[int] = field(default_factory=list)

    @property
    def compute(self) -> int:
        return self.block.compute_cycles

    @property
    def stall_cycles(self) -> int:
        return int(sum(p - c for p, c in zip(self.push, self.compute_end)))


class _Run:
    """One stream of segments through linked stages."""

    def __init__(self, blocks: Sequence[Block], cfg: PipelineConfig, segments: int, work: Optional[Work]):
        self.segments = segments
        self.work = work
        self.loaded = 0
        self.sink: List[Any] = []
        self.links = [Link(blocks[b - 1].name, blocks[b].name, capacity=cfg.link_capacity) for b in range(1, len(blocks))]
        self.stages = [
            _Stage(
                block=block,
                handshake=cfg.handshake_cycles if block.handshaked else 0,
                inbound=self.links[b - 1] if b > 0 else None,
                outbound=self.links[b] if b < len(self.links) else None,
            )
            for b, block in enumerate(blocks)
        ]

    def _apply(self, stage: _Stage, value: Any) -> Any:
        return self.work(stage.block, value) if self.work is not None else None

    def _step(self, stage: _Stage, t: int) -> bool:
        """Fire one enabled transition of ``stage`` at cycle ``t``."""
        if stage.phase == IDLE:
            if stage.inbound is None:
                if self.loaded >= self.segments:
                    return False
                segment = self.loaded
                self.loaded += 1
                stage.item = (segment, self._apply(stage, segment))
                stage.fetch_start.append(t)
                stage.phase, stage.until = COMPUTING, t + stage.compute
                return True
            link = stage.inbound
            if not link.state.ready_in:
                link.raise_ready_in()
            if not link.state.ready:
                return False
            link.raise_fetch()
            stage.fetch_start.append(t)
            stage.phase, stage.until = FETCHING, t + stage.handshake
            return True
        if stage.phase == FETCHING and t >= stage.until:
            stage.inbound.raise_fetched()
            segment, payload = stage.inbound.release()
            stage.item = (segment, None if payload is None else self._apply(stage, payload))
            stage.phase, stage.until = COMPUTING, t + stage.compute
            return True
        if stage.phase == COMPUTING and t >= stage.until:
            stage.compute_end.append(t)
            stage.phase = HOLDING
            return True
        if stage.phase == HOLDING:
            if stage.outbound is None:
                self.sink.append(stage.item[1])
            elif stage.outbound.has_space:
                stage.outbound.push(stage.item)
            else:
                return False
            stage.push.append(t)
            stage.phase = IDLE
            return True
        return False

    def run(self) -> None:
        t = 0
        while len(self.stages[-1].push) < self.segments:
            progressed = True
            while progressed:
                progressed = False
                for stage in self.stages:
                    while self._step(stage, t):
                        progressed = True
            if len(self.stages[-1].push) >= self.segments:
                break
            pending = [s.until for s in self.stages if s.phase in (FETCHING, COMPUTING) and s.until > t]
            if not pending:
                raise self._deadlock(t)
            t = min(pending)

    def _deadlock(self, t: int) -> DeadlockError:
        for stage in self.stages:
            if stage.phase == HOLDING and stage.outbound is not None:
                return DeadlockError(
                    stage.outbound.name,
                    f"{stage.block.name} holds segment {stage.item[0]} at cycle {t} "
                    f"({stage.outbound.occupancy}/{stage.outbound.capacity} slots used)",
                )
        link = self.links[0].name if self.links else self.stages[0].block.name
        return DeadlockError(link, f"no block can progress at cycle {t}")

    def trace(self, cfg: PipelineConfig) -> CycleTrace:
        sink = self.stages[-1].push
        if self.segments > 1:
            interval = sink[-1] - sink[-2]
        else:
            interval = max(s.handshake + s.compute for s in self.stages)
        timings = [
            BlockTiming(
                block=stage.block.name,
                kind=stage.block.kind.value,
                mac_count=stage.block.mac_count,
                compute_cycles=stage.compute,
                handshake_cycles=stage.handshake,
                start=stage.fetch_start[0],
                end=stage.compute_end[0],
                stall_cycles=stage.stall_cycles,
            )
            for stage in self.stages
        ]
        return CycleTrace(
            blocks=timings,
            latency_cycles=sink[0],
            initiation_interval_cycles=interval,
            handshake_cycles=cfg.handshake_cycles,
            clock_hz=cfg.clock_hz,
            segments=self.segments,
            stream_cycles=sink[-1],
            link_transfers={link.name: link.transfers for link in self.links},
        )


def simulate(
    blocks: Sequence[Block], cfg: PipelineConfig, segments: int, work: Optional[Work] = None
) -> Tuple[CycleTrace, List[Any]]:
    """Run ``segments`` inputs through linked blocks; returns the trace and the sink's payloads.

    ``work`` turns a block's input into its output: the source receives the
    segment index, every other block the payload fetched from its link.
    Without it only timing is simulated.
    """
    run = _Run(blocks, cfg, max(segments, 1), work)
    run.run()
    return run.trace(cfg), run.sink


def schedule(blocks: Sequence[Block], cfg: PipelineConfig, segments: Optional[int] = None) -> CycleTrace:
    """Cycle trace of ``segments`` back-to-back inputs; depends on shapes and resources only."""
    trace, _ = simulate(blocks, cfg, segments or cfg.stream_segments)
    return trace


# ──────────────────────────────────────────────────────────────────────────────
# Runs
# ──────────────────────────────────────────────────────────────────────────────


@dataclass
class Pipeline:
    """Partitioned, allocated blocks of one model."""

    model: NetworkModel
    blocks: List[Block]
    allocation: Allocation
    cfg: PipelineConfig

    @classmethod
    def build(cls, model: NetworkModel, cfg: Optional[PipelineConfig] = None) -> "Pipeline":
        cfg = cfg or PipelineConfig()
        blocks = partition(model)
        allocation = allocate_blocks(blocks, cfg)
        allocation.apply(blocks)
        return cls(model, blocks, allocation, cfg)

    def classify(self, segment: np.ndarray) -> Tuple[int, List[BlockOutput]]:
        """Push one segment through every block; returns the label and each block's output."""
        memory: SignalMemoryBlock = self.blocks[0]
        outputs = [memory.load(segment)]
        for block in self.blocks[1:]:
            previous = outputs[-1]
            outputs.append(block.process(previous.raw, previous.frac))
        return outputs[-1].label, outputs

    def trace(self, segments: Optional[int] = None) -> CycleTrace:
        return schedule(self.blocks, self.cfg, segments)


def run_pipeline(
    model: NetworkModel, segment: np.ndarray, cfg: Optional[PipelineConfig] = None
) -> Tuple[int, CycleTrace]:
    """Classify one segment on the block pipeline; returns (label, trace)."""
    pipeline = Pipeline.build(model, cfg)
    trace = pipeline.trace()
    label, _ = pipeline.classify(segment)
    logger.info(
        "pipeline %s: label %d, latency %d cycles, initiation interval %d cycles",
        model.name,
        label,
        trace.latency_cycles,
        trace.initiation_interval_cycles,
    )
    return label, trace


def run_stream(
    model: NetworkModel, inputs: np.ndarray, cfg: Optional[PipelineConfig] = None
) -> Tuple[np.ndarray, CycleTrace]:
    """Classify a batch of segments back to back; the trace covers the whole stream."""
    pipeline = Pipeline.build(model, cfg)
    batch = np.asarray(inputs)
    if batch.ndim == 1:
        batch = batch[None, :]
    memory: SignalMemoryBlock = pipeline.blocks[0]

    def work(block: Block, value: Any) -> Optional[BlockOutput]:
        if block is memory:
            return memory.load(batch[value]) if value < len(batch) else None
        return block.process(value.raw, value.frac)

    trace, outputs = simulate(pipeline.blocks, pipeline.cfg, max(len(batch), pipeline.cfg.stream_segments), work)
    labels = np.array([out.label for out in outputs[: len(batch)]], dtype=np.int64)
    logger.info(
        "pipeline %s: %d segments in %d cycles (%.1f µs)",
        model.name,
        len(batch),
        trace.stream_cycles,
        cycles_to_time(trace.stream_cycles, trace.clock_hz) * 1e6,
    )
    return labels, trace


def calibrate_handshake(
    model: NetworkModel, target: int = REFERENCE_DELAY_CYCLES, cfg: Optional[PipelineConfig] = None
) -> PipelineConfig:
    """Handshake cost h that makes the delay metric max_b(h + c_b) equal ``target``.

    Returns a copy of ``cfg`` with the solved ``handshake_cycles``; the
    resulting trace is checked against the target.
    """
    cfg = cfg or PipelineConfig()
    blocks = partition(model, require_quantized=False)
    allocate_blocks(blocks, cfg).apply(blocks)
    slowest = max(block.compute_cycles for block in blocks if block.handshaked)
    h = target - slowest
    if h < 0:
        raise ValueError(f"target {target} is below the slowest block's {slowest} compute cycles")
    calibrated = cfg.model_copy(update={"handshake_cycles": h})
    measured = schedule(blocks, calibrated).initiation_interval_cycles
    if measured != target:
        raise RuntimeError(f"calibrated handshake {h} gives {measured} cycles, expected {target}")
    logger.info("handshake calibrated to %d cycles (slowest block %d, delay %d)", h, slowest, measured)
    return calibrated


__all__ = [
    "BlockTiming",
    "CycleTrace",
    "Pipeline",
    "TRACE_COLUMNS",
    "calibrate_handshake",
    "cycles_to_time",
    "run_pipeline",
    "run_stream",
    "schedule",
    "simulate",
]
