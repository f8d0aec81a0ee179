"""Append-only versioned execution log with restore points and replay."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping

EVENT_TYPES = ("StartNode", "EndNode", "ValidatePass", "ValidateFail", "RepairStart", "RepairApply",
               "RepairCommit", "Retry", "Catch", "Compensate", "Timeout")
COMMIT_EVENTS = frozenset({"RepairCommit", "EndNode"})
REDACTED = "[REDACTED]"


class NoSuchSnapshot(KeyError):
    pass


class ReplayDivergence(AssertionError):
    def __init__(self, index: int, recorded: "LogEntry | None", replayed: "LogEntry | None"):
        self.index = index
        self.recorded = recorded
        self.replayed = replayed
        rec = recorded.event_key() if recorded else None
        rep = replayed.event_key() if replayed else None
        super().__init__(f"replay diverges at entry {index}: recorded {rec} vs replayed {rep}")


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def _redact(value):
    if isinstance(value, dict):
        return {k: (REDACTED if str(k).startswith("secret_") else _redact(v)) for k, v in value.items()}
    if isinstance(value, list):
        return [_redact(v) for v in value]
    return value


@dataclass(frozen=True)
class LogEntry:
    ts: str
    node_id: str
    event_type: str
    payload: dict = field(default_factory=dict)
    version: int = 0
    correlation_id: str = ""

    def __post_init__(self):
        if self.event_type not in EVENT_TYPES:
            raise ValueError(f"eventType {self.event_type!r} not in {EVENT_TYPES}")

    def to_dict(self, redact: bool = True) -> dict:
        return {"ts": self.ts, "nodeId": self.node_id, "eventType": self.event_type,
                "payload": _redact(self.payload) if redact else copy.deepcopy(self.payload),
                "version": self.version, "correlationId": self.correlation_id}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LogEntry":
        return cls(d["ts"], d["nodeId"], d["eventType"], dict(d.get("payload", {})), int(d["version"]),
                   d.get("correlationId", ""))

    def event_key(self) -> tuple:
        """Everything but the timestamp, as compared by replay."""
        return (self.node_id, self.event_type, json.dumps(self.payload, sort_keys=True), self.version,
                self.correlation_id)


class VersionedLog:
    """Single-writer log. Commit events (EndNode, RepairCommit) advance the
    version; every other event is stamped with the current head.

    With ``path`` set, each entry is also appended to that NDJSON file.
    """

    def __init__(self, path: str | Path | None = None, clock: Callable[[], str] = utc_now):
        self._entries: list[LogEntry] = []
        self._snapshots: dict[int, str] = {}
        self.head = 0
        self.clock = clock
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    @property
    def entries(self) -> tuple[LogEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def append(self, event_type: str, node_id: str, payload: Mapping | None = None,
               correlation_id: str = "") -> int:
        if event_type not in EVENT_TYPES:
            raise ValueError(f"eventType {event_type!r} not in {EVENT_TYPES}")
        if event_type in COMMIT_EVENTS:
            self.head += 1
        # a JSON round trip both copies and proves the payload serializable
        body = json.loads(json.dumps(dict(payload or {}), sort_keys=True))
        entry = LogEntry(self.clock(), node_id, event_type, body, self.head, correlation_id)
        self._entries.append(entry)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")
        return self.head

    def slice(self, node_id: str | None = None, correlation_id: str | None = None,
              version_range: tuple[int, int] | None = None, max_entries: int = 50,
              event_types: Iterable[str] | None = None) -> list[LogEntry]:
        """The last ``max_entries`` matching entries, oldest first.

        ``version_range`` is inclusive on both ends."""
        if max_entries < 1:
            raise ValueError("max_entries must be >= 1")
        types = set(event_types) if event_types is not None else None
        hits = [e for e in self._entries
                if (node_id is None or e.node_id == node_id)
                and (correlation_id is None or e.correlation_id == correlation_id)
                and (version_range is None or version_range[0] <= e.version <= version_range[1])
                and (types is None or e.event_type in types)]
        return hits[-max_entries:]

    def snapshot(self, state) -> int:
        self._snapshots[self.head] = json.dumps(state, sort_keys=True)
        return self.head

    def restore(self, version: int):
        if version not in self._snapshots:
            raise NoSuchSnapshot(version)
        return json.loads(self._snapshots[version])

    def snapshot_versions(self) -> list[int]:
        return sorted(self._snapshots)

    def latest_snapshot(self) -> int | None:
        return max(self._snapshots) if self._snapshots else None

    def to_ndjson(self, redact: bool = True) -> str:
        return "".join(json.dumps(e.to_dict(redact), ensure_ascii=False) + "\n" for e in self._entries)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_ndjson(), encoding="utf-8")

    @classmethod
    def from_entries(cls, entries: Iterable[LogEntry]) -> "VersionedLog":
        log = cls()
        for e in entries:
            if e.version < log.head:
                raise ValueError("entry versions must not decrease")
            log._entries.append(e)
            log.head = e.version
        return log

    @classmethod
    def load(cls, path: str | Path) -> "VersionedLog":
        entries = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                entries.append(LogEntry.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{n}: not a log entry ({exc})") from None
        return cls.from_entries(entries)


def append(log: VersionedLog, draft: Mapping) -> int:
    """Append a draft given as a lower-camel record."""
    return log.append(draft["eventType"], draft.get("nodeId", ""), draft.get("payload"),
                      draft.get("correlationId", ""))


def state_hash(state) -> str:
    return hashlib.sha256(json.dumps(state, sort_keys=True).encode("utf-8")).hexdigest()


def final_state(log: VersionedLog) -> dict:
    """Payload of the last EndNode, which carries the run's final state."""
    for e in reversed(log.entries):
        if e.event_type == "EndNode":
            return e.payload
    return {}


def compare_streams(recorded: Iterable[LogEntry], replayed: Iterable[LogEntry]) -> None:
    rec, rep = list(recorded), list(replayed)
    for i in range(max(len(rec), len(rep))):
        a = rec[i] if i < len(rec) else None
        b = rep[i] if i < len(rep) else None
        if a is None or b is None or a.event_key() != b.event_key():
            raise ReplayDivergence(i, a, b)


def replay(log: VersionedLog, registry: Mapping[str, Callable], seed: int, rerun: Callable | None = None) -> dict:
    """Re-execute a recorded run from the inputs in its first entry and
    compare the new event stream against the recorded one."""
    if not len(log):
        return {"finalStateHash": state_hash({}), "parityOk": True}
    if rerun is None:
        from .pipeline import rerun_from_log as rerun
    fresh = rerun(log, registry, seed)
    compare_streams(log.entries, fresh.entries)
    return {"finalStateHash": state_hash(final_state(fresh)), "parityOk": True}
