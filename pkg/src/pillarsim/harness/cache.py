"""Content-addressed JSON store for solver runs."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path


def content_key(payload) -> str:
    """sha256 of the canonical JSON form of ``payload``."""
    text = json.dumps(payload, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


class RunCache:
    """One JSON file per key under ``root/<key[:2]>/<key>.json``."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str):
        try:
            with open(self.path(key)) as fh:
                return json.load(fh)
        except (OSError, ValueError):
            return None

    def put(self, key: str, record: dict) -> None:
        p = self.path(key)
        p.parent.mkdir(parents=True, exist_ok=True)
        # atomic replace so a killed run never leaves a truncated entry
        fd, tmp = tempfile.mkstemp(dir=p.parent, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(record, fh)
        os.replace(tmp, p)

    def __contains__(self, key: str) -> bool:
        return self.path(key).exists()
