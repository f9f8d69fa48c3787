"""
DeepSpike — Compression
=========================
Structured pruning, PCA network projection, post-training quantization and
the candidate selection that ties them together.

Usage:
    from compression import CompressionConfig, run_compression

    outcome = run_compression(trained, split, TrainConfig(), CompressionConfig())
    outcome.report.write_csv("compression.csv")
    print(outcome.selection.as_dict())   # learnables, bits, memory_bytes, accuracy
"""

from .config import CompressionConfig, CompressionError, Stage
from .pipeline import CompressionOutcome, run_compression
from .projection import LayerProjection, principal_basis, project_network
from .pruning import PruneCandidate, PruneResult, SkipRecord, filter_importance, prune_structured, remove_filters
from .quantization import calibrate_formats, quantize_model
from .report import CandidateRecord, CompressionReport
from .selection import Candidate, Selection, generate_candidates, select_model, stable_width, sweep_bits

__all__ = [
    "Candidate",
    "CandidateRecord",
    "CompressionConfig",
    "CompressionError",
    "CompressionOutcome",
    "CompressionReport",
    "LayerProjection",
    "PruneCandidate",
    "PruneResult",
    "Selection",
    "SkipRecord",
    "Stage",
    "calibrate_formats",
    "filter_importance",
    "generate_candidates",
    "principal_basis",
    "project_network",
    "prune_structured",
    "quantize_model",
    "remove_filters",
    "run_compression",
    "select_model",
    "stable_width",
    "sweep_bits",
]

__version__ = "0.1.0"
