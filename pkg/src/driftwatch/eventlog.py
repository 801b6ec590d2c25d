"""Append-only JSON-lines event log.

Single durable store of the service: every alert, assessment, decision,
approval transition, and action result lands here with a strictly
increasing sequence number. In-memory indexes are rebuilt from the file
on startup, so crash recovery is a replay.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator, Optional


class EventKind(str, Enum):
    INGEST_SUMMARY = "ingest-summary"
    ALERT = "alert"
    ASSESSMENT = "assessment"
    DECISION = "decision"
    APPROVAL = "approval"
    ACTION_RESULT = "action-result"


@dataclass(frozen=True)
class EventRecord:
    seq: int
    kind: EventKind
    ts: int
    payload: dict

    def to_json(self) -> dict:
        return {"seq": self.seq, "kind": self.kind.value, "ts": self.ts,
                "payload": self.payload}

    @classmethod
    def from_json(cls, obj: dict) -> "EventRecord":
        return cls(seq=int(obj["seq"]), kind=EventKind(obj["kind"]),
                   ts=int(obj["ts"]), payload=obj["payload"])


def _now_ms() -> int:
    return int(time.time() * 1000)


class EventLog:
    """Append-only log with a single serialized appender.

    Records are one JSON object per line; sequence numbers are strictly
    increasing and continue from whatever the file already holds.
    """

    def __init__(self, path, clock: Callable[[], int] = _now_ms):
        self.path = Path(path)
        self._clock = clock
        self._lock = threading.Lock()
        self._seq = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            for record in self.records():
                if record.seq <= self._seq:
                    raise ValueError(
                        f"event log corrupt: sequence {record.seq} after {self._seq}"
                    )
                self._seq = record.seq
        self._fh = open(self.path, "a", encoding="utf-8")

    @property
    def last_seq(self) -> int:
        return self._seq

    def append(self, kind: EventKind, payload: dict, ts: Optional[int] = None) -> EventRecord:
        with self._lock:
            self._seq += 1
            record = EventRecord(
                seq=self._seq, kind=kind,
                ts=self._clock() if ts is None else ts,
                payload=payload,
            )
            self._fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
            self._fh.flush()
            return record

    def records(self) -> Iterator[EventRecord]:
        """Replay the log from disk, oldest first."""
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield EventRecord.from_json(json.loads(line))

    def close(self) -> None:
        with self._lock:
            self._fh.close()
