"""
DeepSpike — Run Configuration
===============================
One validated document nesting every package's settings. Loaded from
YAML or JSON; its canonical hash tags every output of a run.
"""

import hashlib
import json
from typing import Any, Dict, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field

from compression import CompressionConfig
from model import TrainConfig
from pipesim import PipelineConfig
from spikesort import SortConfig, SyntheticConfig


class CorpusConfig(BaseModel):
    """Desk-scale training corpus built from synthetic recordings."""

    model_config = ConfigDict(extra="forbid")

    recordings: int = Field(4, ge=1)
    noise_ratio: float = Field(1.0, ge=0)
    decimated: bool = True


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    out: str = "out"
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    compression: CompressionConfig = Field(default_factory=CompressionConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    sort: SortConfig = Field(default_factory=SortConfig)

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        """Propagate one seed to every seeded stage."""
        seed = self.seed if seed is None else seed
        return self.model_copy(
            update={
                "seed": seed,
                "synthetic": self.synthetic.model_copy(update={"seed": seed}),
                "train": self.train.model_copy(update={"rng_seed": seed}),
                "sort": self.sort.model_copy(update={"seed": seed}),
            }
        )


def _read(path: str) -> Dict[str, Any]:
    # Support YAML or JSON by file extension
    if path.lower().endswith(".yaml") or path.lower().endswith(".yml"):
        with open(path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f) or {}
    elif path.lower().endswith(".json"):
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    else:
        raise ValueError("Run config format not supported. Use YAML or JSON.")


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """Validated run configuration; defaults when ``path`` is None."""
    if path is None:
        return RunConfig()
    data = _read(path)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: run config must be a mapping")
    return RunConfig.model_validate(data)


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
