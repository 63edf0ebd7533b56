"""Check that a trace of node events is a behaviour of the replication model.

Pipeline: merge per-node streams by timestamp, fold events into whole-cluster
states, optionally fill in oplog entries nodes did not log, then test every
consecutive pair of states against the model's actions.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .model import (
    FOLLOWER,
    LEADER,
    STUTTER,
    UNBOUNDED,
    Diagnostic,
    ModelBounds,
    NodeState,
    ReplState,
    action_name,
    explain,
    initial_state,
    permits,
    to_record,
)
from .trace import TraceEvent, read_trace


class TraceError(ValueError):
    pass


class DuplicateTimestampError(TraceError):
    def __init__(self, first: TraceEvent, second: TraceEvent):
        self.events = (first, second)
        super().__init__(
            f"two events share timestamp {first.ts_ms}: "
            f"node {first.node} {first.action} and node {second.node} {second.action}"
        )


class BackfillError(TraceError):
    pass


# -- ordering and folding --------------------------------------------------------


def order_events(streams: Iterable[Sequence[TraceEvent]]) -> list[TraceEvent]:
    """Merge per-node event streams into one sequence ordered by timestamp."""
    streams = [list(s) for s in streams]
    for stream in streams:
        for a, b in zip(stream, stream[1:]):
            if b.ts_ms == a.ts_ms:
                raise DuplicateTimestampError(a, b)
            if b.ts_ms < a.ts_ms:
                raise TraceError(f"timestamps go backwards within a stream: {a.ts_ms} then {b.ts_ms}")
    merged = list(heapq.merge(*streams, key=lambda e: e.ts_ms))
    for a, b in zip(merged, merged[1:]):
        if a.ts_ms == b.ts_ms:
            raise DuplicateTimestampError(a, b)
    return merged


def infer_num_nodes(events: Sequence[TraceEvent]) -> int:
    return max((e.node for e in events), default=1)


def fold_events(initial: ReplState, events: Sequence[TraceEvent]) -> list[ReplState]:
    """Whole-cluster states: ``initial`` followed by one state per event.

    An event replaces the acting node's term, commit point and oplog. A node
    reporting Leader makes every other node a Follower; other role changes
    touch only the acting node.
    """
    states = [tuple(initial)]
    state = tuple(initial)
    for e in events:
        n = e.node - 1
        if not 0 <= n < len(state):
            raise TraceError(f"event at {e.ts_ms} names unknown node {e.node}")
        node = NodeState(e.role, e.term, e.commit_point[0], e.commit_point[1], tuple(e.oplog))
        if e.role == LEADER:
            state = tuple(
                node if i == n else (m if m.role == FOLLOWER else m._replace(role=FOLLOWER))
                for i, m in enumerate(state)
            )
        else:
            state = state[:n] + (node,) + state[n + 1 :]
        states.append(state)
    return states


# -- oplog backfill ---------------------------------------------------------------


@dataclass(frozen=True)
class Fill:
    step: int
    node: int
    index: int
    term: int


def _compatible(partial: tuple, full: tuple) -> bool:
    return len(full) >= len(partial) and all(p is None or p == f for p, f in zip(partial, full))


def backfill_oplog(states: Sequence[ReplState]) -> tuple[list[ReplState], list[Fill]]:
    """Fill ``None`` oplog entries from nodes that hold the same entry.

    Donors are every fully-known node whose oplog agrees with the known
    entries. No donor, or donors disagreeing on a missing entry, is an error.
    """
    out: list[ReplState] = []
    log: list[Fill] = []
    cache: dict[tuple[int, tuple], tuple] = {}
    for step, state in enumerate(states):
        nodes = list(state)
        pending = []
        for i, node in enumerate(nodes):
            if None not in node.oplog:
                continue
            if (i, node.oplog) in cache:
                nodes[i] = node._replace(oplog=cache[(i, node.oplog)])
            else:
                pending.append(i)
        for i in pending:
            raw = nodes[i].oplog
            missing = [j for j, t in enumerate(raw) if t is None]
            donors = [
                m.oplog for j, m in enumerate(nodes) if j != i and None not in m.oplog and _compatible(raw, m.oplog)
            ]
            if not donors:
                raise BackfillError(
                    f"step {step}: node {i + 1} oplog {list(raw)} has missing entries and no node can supply them"
                )
            fills = {tuple(d[j] for j in missing) for d in donors}
            if len(fills) > 1:
                raise BackfillError(
                    f"step {step}: node {i + 1} oplog {list(raw)}: donors disagree on missing entries "
                    f"{sorted(fills)}"
                )
            (fill,) = fills
            filled = list(raw)
            for j, t in zip(missing, fill):
                filled[j] = t
                log.append(Fill(step, i + 1, j + 1, t))
            cache[(i, raw)] = tuple(filled)
            nodes[i] = nodes[i]._replace(oplog=tuple(filled))
        out.append(tuple(nodes))
    return out, log


# -- checking -------------------------------------------------------------------------


@dataclass
class Failure:
    step: int  # 1-based event number; 0 means the initial state
    label: str | None
    before: ReplState | None
    after: ReplState
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def describe(self, limit: int = 3) -> str:
        head = f"step {self.step}" + (f" ({self.label})" if self.label else "")
        if self.before is None:
            return f"{head}: trace does not start in an initial state: {to_record(self.after)}"
        lines = [f"{head}: no action explains the transition", f"  before: {to_record(self.before)}"]
        lines.append(f"  after:  {to_record(self.after)}")
        for d in self.diagnostics[:limit]:
            lines.append(f"  nearest {d.label}: " + "; ".join(d.failures))
        return "\n".join(lines)


@dataclass
class CheckReport:
    verdict: str
    steps_checked: int
    stutter_steps: int
    failure: Failure | None = None
    fills: list[Fill] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict == "pass"

    def as_dict(self) -> dict:
        out = {
            "verdict": self.verdict,
            "steps_checked": self.steps_checked,
            "stutter_steps": self.stutter_steps,
            "backfilled_entries": len(self.fills),
        }
        if self.failure is not None:
            out["failure_step"] = self.failure.step
            out["failure_action"] = self.failure.label
        return out

    def summary(self) -> str:
        text = f"{self.verdict}: {self.steps_checked} steps checked, {self.stutter_steps} stuttering"
        if self.fills:
            text += f", {len(self.fills)} oplog entries backfilled"
        if self.failure is not None:
            text += "\n" + self.failure.describe()
        return text


def check(
    states: Sequence[ReplState],
    labels: Sequence[str] | None = None,
    bounds: ModelBounds = UNBOUNDED,
) -> CheckReport:
    """Check a state sequence against the model.

    ``states[0]`` must be an initial state. When ``labels`` (one per
    transition) are given, a step only passes if an action with the logged
    name explains it, or it stutters.
    """
    if not states:
        raise TraceError("empty state sequence")
    if labels is not None and len(labels) != len(states) - 1:
        raise ValueError("need one label per transition")
    if states[0] != initial_state(len(states[0])):
        return CheckReport("fail", 0, 0, Failure(0, None, None, states[0]))
    stutters = 0
    for k in range(1, len(states)):
        before, after = states[k - 1], states[k]
        matches = permits(before, after, bounds)
        label = labels[k - 1] if labels is not None else None
        if matches == [STUTTER]:
            stutters += 1
            continue
        if label is not None:
            matches = [m for m in matches if action_name(m) == label]
        if not matches:
            diags = explain(before, after, bounds)
            if label is not None:
                diags = [d for d in diags if action_name(d.label) == label] + [
                    d for d in diags if action_name(d.label) != label
                ]
            return CheckReport("fail", k - 1, stutters, Failure(k, label, before, after, diags))
    return CheckReport("pass", len(states) - 1, stutters)


def check_events(
    events: Sequence[TraceEvent],
    num_nodes: int | None = None,
    backfill: bool = False,
    use_labels: bool = True,
) -> CheckReport:
    events = list(events)
    n = num_nodes or infer_num_nodes(events)
    states = fold_events(initial_state(n), events)
    fills: list[Fill] = []
    if backfill:
        states, fills = backfill_oplog(states)
    elif any(None in node.oplog for s in states for node in s):
        raise TraceError("trace has missing oplog entries; enable backfill")
    report = check(states, [e.action for e in events] if use_labels else None)
    report.fills = fills
    return report


def check_trace_files(
    paths: Sequence[str | Path],
    num_nodes: int | None = None,
    backfill: bool = False,
    use_labels: bool = True,
) -> CheckReport:
    events = order_events(read_trace(p) for p in paths)
    return check_events(events, num_nodes, backfill, use_labels)
