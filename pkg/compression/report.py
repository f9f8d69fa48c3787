"""
CompressionReport: one row per (candidate, width) with the bookkeeping
behind the learnables/memory/accuracy trade-off plots.

CSV columns: stage, iter, projection_rate, bits, learnables, memory_bytes,
accuracy, flags. Float rows carry bits = 32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd

from model import memory_bytes

from .config import FLOAT_BITS
from .pruning import SkipRecord
from .selection import Candidate, Selection

COLUMNS = ["stage", "iter", "projection_rate", "bits", "learnables", "memory_bytes", "accuracy", "flags"]


@dataclass
class CandidateRecord:
    label: str
    stage: str
    iteration: int
    projection_rate: Optional[float]
    bits: int
    learnables: int
    accuracy: float
    flags: List[str] = field(default_factory=list)

    @property
    def memory_bytes(self) -> int:
        return memory_bytes(self.learnables, self.bits)

    def row(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "iter": self.iteration,
            "projection_rate": "" if self.projection_rate is None else self.projection_rate,
            "bits": self.bits,
            "learnables": self.learnables,
            "memory_bytes": self.memory_bytes,
            "accuracy": round(self.accuracy, 6),
            "flags": ";".join(self.flags),
        }


@dataclass
class CompressionReport:
    records: List[CandidateRecord] = field(default_factory=list)
    skips: List[SkipRecord] = field(default_factory=list)
    selection: Optional[Selection] = None
    stop_reason: str = ""

    @classmethod
    def build(
        cls,
        candidates: List[Candidate],
        selection: Optional[Selection],
        skips: Optional[List[SkipRecord]] = None,
        stop_reason: str = "",
    ) -> "CompressionReport":
        report = cls(skips=list(skips or []), selection=selection, stop_reason=stop_reason)
        sweeps = selection.sweeps if selection else {}
        for candidate in candidates:
            base = dict(
                label=candidate.label,
                stage=candidate.stage.value,
                iteration=candidate.iteration,
                projection_rate=candidate.projection_rate,
                learnables=candidate.learnables,
            )
            report.records.append(
                CandidateRecord(bits=FLOAT_BITS, accuracy=candidate.float_accuracy, flags=list(candidate.flags), **base)
            )
            for bits, accuracy in sorted(sweeps.get(candidate.label, {}).items(), reverse=True):
                flags = list(candidate.flags)
                if selection and selection.candidate is candidate and selection.bits == bits:
                    flags.append("selected")
                report.records.append(CandidateRecord(bits=bits, accuracy=accuracy, flags=flags, **base))
        return report

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.row() for r in self.records], columns=COLUMNS)

    def write_csv(self, path: str, config_hash: Optional[str] = None) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            if config_hash:
                f.write(f"# config_hash={config_hash}\n")
            self.to_frame().to_csv(f, index=False)

    def as_dict(self, config_hash: Optional[str] = None) -> Dict[str, Any]:
        return {
            "config_hash": config_hash,
            "candidates": [r.row() for r in self.records],
            "skips": [s.as_dict() for s in self.skips],
            "stop_reason": self.stop_reason,
            "selected": self.selection.as_dict() if self.selection else None,
        }

    def write_json(self, path: str, config_hash: Optional[str] = None) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.as_dict(config_hash), f, indent=2)
