"""Append-only monitoring log of analytical requests.

One entry per served request (query/drill/report/catalog), newline-delimited
JSON. The request digest is a stable SHA-256 over the canonicalized request, so
a log entry can be matched to the exact request that produced it.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .schema import format_rfc3339, parse_rfc3339

OPERATIONS = ("query", "drill", "report", "catalog")


def request_digest(method: str, path: str, payload: dict | None) -> str:
    canonical = json.dumps(
        {"method": method.upper(), "path": path, "payload": payload},
        sort_keys=True, separators=(",", ":"), ensure_ascii=False,
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class AccessLogEntry:
    timestamp: datetime
    actor: str
    operation: str
    request_digest: str
    duration_ms: float
    outcome: str  # "ok" | "error:<code>"

    def to_dict(self) -> dict:
        return {
            "timestamp": format_rfc3339(self.timestamp),
            "actor": self.actor,
            "operation": self.operation,
            "request_digest": self.request_digest,
            "duration_ms": self.duration_ms,
            "outcome": self.outcome,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AccessLogEntry":
        return cls(
            timestamp=parse_rfc3339(data["timestamp"]),
            actor=data["actor"],
            operation=data["operation"],
            request_digest=data["request_digest"],
            duration_ms=data["duration_ms"],
            outcome=data["outcome"],
        )


class AccessLog:
    """Serialized appender over one NDJSON file."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, actor: str, operation: str, digest: str,
               duration_ms: float, outcome: str) -> AccessLogEntry:
        entry = AccessLogEntry(
            timestamp=datetime.now(timezone.utc),
            actor=actor or "anonymous",
            operation=operation,
            request_digest=digest,
            duration_ms=round(max(duration_ms, 0.0), 3),
            outcome=outcome,
        )
        line = json.dumps(entry.to_dict(), separators=(",", ":")) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
        return entry

    def read(self, actor: str | None = None,
             start: datetime | None = None,
             end: datetime | None = None) -> list[AccessLogEntry]:
        """Entries in timestamp order, optionally filtered by actor and period."""
        if not self.path.exists():
            return []
        entries = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                entry = AccessLogEntry.from_dict(json.loads(line))
                if actor is not None and entry.actor != actor:
                    continue
                if start is not None and entry.timestamp < start:
                    continue
                if end is not None and entry.timestamp > end:
                    continue
                entries.append(entry)
        entries.sort(key=lambda e: e.timestamp)
        return entries
