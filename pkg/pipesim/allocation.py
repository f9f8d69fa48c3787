"""
Roofline MAC allocation.

Every block gets the smallest resource count whose compute cycles fit the
effective budget. Convolution engines come in steps of three MACs; mappers
and classifier MACs in steps of one. A block that cannot reach the budget
keeps its largest useful allocation and is reported as over budget.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

from model import NetworkModel

from .blocks import Block, BlockConfigError, FusedBlock
from .config import PipelineConfig
from .partition import partition

logger = logging.getLogger(__name__)


@dataclass
class BlockAllocation:
    name: str
    kind: str
    resources: int
    compute_cycles: int
    within_budget: bool
    overridden: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Allocation:
    budget: int
    blocks: List[BlockAllocation]

    @property
    def within_budget(self) -> bool:
        return all(block.within_budget for block in self.blocks)

    def resources(self, kind: Optional[str] = None) -> Dict[str, int]:
        return {b.name: b.resources for b in self.blocks if kind is None or b.kind == kind}

    def apply(self, blocks: Sequence[Block]) -> None:
        counts = self.resources()
        for block in blocks:
            block.mac_count = counts[block.name]

    def as_dict(self) -> dict:
        return {
            "budget": self.budget,
            "within_budget": self.within_budget,
            "blocks": [block.as_dict() for block in self.blocks],
        }


def smallest_resources(block: Block, budget: int) -> int:
    """Smallest count meeting ``budget``; the largest useful count if none does."""
    step = block.resource_step
    for resources in range(step, block.max_resources + 1, step):
        if block.cycles_for(resources) <= budget:
            return resources
    return block.max_resources


def allocate_blocks(blocks: Sequence[Block], cfg: PipelineConfig) -> Allocation:
    budget = cfg.effective_budget
    override = dict(cfg.mapper_override or {})
    fused_names = {block.name for block in blocks if isinstance(block, FusedBlock)}
    unknown = sorted(set(override) - fused_names)
    if unknown:
        raise BlockConfigError(f"mapper_override names unknown fused blocks {unknown}")

    entries = []
    for block in blocks:
        overridden = block.name in override
        resources = override[block.name] if overridden else smallest_resources(block, budget)
        if overridden and resources < 1:
            raise BlockConfigError(f"{block.name}: mapper count must be >= 1, got {resources}")
        cycles = block.cycles_for(resources)
        ok = cycles <= budget
        if not ok:
            logger.warning(
                "%s: %d cycles at %d resources exceeds the %d-cycle budget", block.name, cycles, resources, budget
            )
        entries.append(BlockAllocation(block.name, block.kind.value, resources, cycles, ok, overridden))
        logger.debug("allocated %s: %d resources, %d cycles", block.name, resources, cycles)
    return Allocation(budget, entries)


def allocate_resources(model: NetworkModel, cfg: Optional[PipelineConfig] = None) -> Allocation:
    """Per-block MAC / mapper counts of a projected model; only shapes are read."""
    cfg = cfg or PipelineConfig()
    allocation = allocate_blocks(partition(model, require_quantized=False), cfg)
    logger.info(
        "allocation for %s (budget %d): %s", model.name, allocation.budget, allocation.resources()
    )
    return allocation


__all__ = ["Allocation", "BlockAllocation", "allocate_blocks", "allocate_resources", "smallest_resources"]
