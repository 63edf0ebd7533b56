"""Trace events, the trace file format and the millisecond logger."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, TextIO

from .model import NodeState


@dataclass(frozen=True)
class TraceEvent:
    """One node's state right after it executed ``action``.

    ``oplog`` entries may be ``None`` where the node did not log them.
    """

    ts_ms: int
    node: int
    action: str
    role: str
    term: int
    commit_point: tuple[int, int]
    oplog: tuple

    @classmethod
    def of(cls, ts_ms: int, node: int, action: str, state: NodeState, oplog=None) -> TraceEvent:
        return cls(
            ts_ms,
            node,
            action,
            state.role,
            state.term,
            state.commit_point,
            tuple(state.oplog if oplog is None else oplog),
        )

    def to_record(self) -> dict:
        return {
            "ts_ms": self.ts_ms,
            "node": self.node,
            "action": self.action,
            "role": self.role,
            "term": self.term,
            "commitPoint": {"term": self.commit_point[0], "index": self.commit_point[1]},
            "oplog": list(self.oplog),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), separators=(",", ":"))

    @classmethod
    def from_record(cls, record) -> TraceEvent:
        cp = record["commitPoint"]
        return cls(
            int(record["ts_ms"]),
            int(record["node"]),
            record["action"],
            record["role"],
            int(record["term"]),
            (int(cp["term"]), int(cp["index"])),
            tuple(record["oplog"]),
        )


def read_trace(path: str | Path) -> list[TraceEvent]:
    with open(path, encoding="utf-8") as fh:
        return [TraceEvent.from_record(json.loads(line)) for line in fh if line.strip()]


def write_trace(events: Iterable[TraceEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(event.to_json() + "\n")


class ClockWentBackwards(AssertionError):
    pass


def _wall_ms() -> int:
    return time.time_ns() // 1_000_000


class TraceLogger:
    """Stamps events with strictly increasing millisecond timestamps.

    In ``logical`` mode each event takes the next tick. In ``wall`` mode the
    logger waits for the millisecond clock to change before stamping, and
    aborts if the clock moved backwards.
    """

    def __init__(
        self,
        clock_mode: str = "logical",
        clock: Callable[[], int] = _wall_ms,
        sleep: Callable[[float], None] = time.sleep,
        sink: TextIO | None = None,
    ):
        if clock_mode not in ("logical", "wall"):
            raise ValueError(f"unknown clock mode {clock_mode!r}")
        self.clock_mode = clock_mode
        self.clock = clock
        self.sleep = sleep
        self.sink = sink
        self.events: list[TraceEvent] = []
        self._tick = 0
        self._start = clock() if clock_mode == "wall" else 0

    def _timestamp(self) -> int:
        if self.clock_mode == "logical":
            self._tick += 1
            return self._tick
        before = self.clock()
        after = self.clock()
        while after == before:
            self.sleep(0.001)
            after = self.clock()
        if not after > before:
            raise ClockWentBackwards("Clock went backwards")
        return after - self._start

    def log_event(self, node: int, action: str, state: NodeState, oplog=None) -> TraceEvent:
        event = TraceEvent.of(self._timestamp(), node, action, state, oplog)
        self.events.append(event)
        if self.sink is not None:
            self.sink.write(event.to_json() + "\n")
        return event
