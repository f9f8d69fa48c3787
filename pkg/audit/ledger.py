import hashlib
import json
import os
import threading
import time
from typing import Any, Dict, List, Optional


def file_digest(path: str, chunk_size: int = 1 << 20) -> str:
    """sha256 of a file, or of every file below a directory in sorted order."""
    digest = hashlib.sha256()
    if os.path.isdir(path):
        for root, dirs, files in os.walk(path):
            dirs.sort()
            for name in sorted(files):
                full = os.path.join(root, name)
                digest.update(os.path.relpath(full, path).encode("utf-8"))
                digest.update(file_digest(full).encode("ascii"))
        return digest.hexdigest()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunLedger:
    """
    Hash-chained, append-only record of one run: configuration, input
    digests, outputs and results. Each entry commits to its predecessor.
    """

    def __init__(self, run: str = "run"):
        self.run = run
        self.chain: List[Dict[str, Any]] = []
        self.last_hash: Optional[str] = None
        self._lock = threading.Lock()

    @staticmethod
    def _hash_data(data: Dict[str, Any]) -> str:
        msg = str(sorted(data.items())).encode("utf-8")
        return hashlib.sha256(msg).hexdigest()

    def log_event(self, event_type: str, **details: Any) -> Dict[str, Any]:
        with self._lock:
            entry = {
                "timestamp": time.time(),
                "type": event_type,
                "details": details,
                "prev_hash": self.last_hash,
            }
            entry["entry_hash"] = self._hash_data(entry)
            self.chain.append(entry)
            self.last_hash = entry["entry_hash"]
        return dict(entry)

    def log_inputs(self, *paths: str) -> Dict[str, Any]:
        return self.log_event("input", files={p: file_digest(p) for p in paths if p and os.path.exists(p)})

    def log_outputs(self, *paths: str) -> Dict[str, Any]:
        return self.log_event("output", files={p: file_digest(p) for p in paths if p and os.path.exists(p)})

    def audit_trail(self, limit: Optional[int] = None) -> List[Dict[str, Any]]:
        entries = self.chain if limit is None else self.chain[-limit:] if limit > 0 else []
        return [dict(entry) for entry in entries]

    def verify_integrity(self) -> bool:
        prev = None
        for entry in self.chain:
            expected_hash = self._hash_data({k: entry[k] for k in entry if k != "entry_hash"})
            if entry["entry_hash"] != expected_hash:
                return False
            if entry["prev_hash"] != prev:
                return False
            prev = entry["entry_hash"]
        return True

    def write(self, path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(
                {"run": self.run, "integrity_verified": self.verify_integrity(), "entries": self.audit_trail()},
                f,
                indent=2,
                default=str,
            )
        return path
