"""
DeepSpike — Command Line
==========================
``deepspike <command>`` front-end over the library packages.

Usage:
    deepspike generate --kind both --out out/
    deepspike train --data out/corpus_artefact.npz --out out/
    deepspike compress --model out/model.json --data out/corpus_artefact.npz --out out/
    deepspike simulate --model out/optimized.json --input out/corpus_artefact.npz --calibrate 42
    deepspike sort --recording out/synthetic --cnn1 out/cnn1.json --cnn2 out/cnn2.json
    deepspike report --inputs out/sort_*.json out/compression.json out/trace.json

Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

from .main import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, build_parser, main
from .runconfig import CorpusConfig, RunConfig, config_hash, load_run_config

__all__ = [
    "EXIT_OK",
    "EXIT_RUNTIME",
    "EXIT_USAGE",
    "CorpusConfig",
    "RunConfig",
    "build_parser",
    "config_hash",
    "load_run_config",
    "main",
]

__version__ = "0.1.0"
