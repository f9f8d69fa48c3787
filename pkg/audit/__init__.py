"""
DeepSpike — Run Provenance
============================
Hash-chained ledger written next to every CLI run.

Usage:
    from audit import RunLedger

    ledger = RunLedger("compress")
    ledger.log_event("config", config_hash=digest)
    ledger.log_inputs("corpus.npz")
    ledger.write("out/ledger.json")
"""

from .ledger import RunLedger, file_digest

__all__ = ["RunLedger", "file_digest"]

__version__ = "0.1.0"
