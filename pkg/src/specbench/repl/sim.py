"""Seeded simulator of a replica set, with optional non-conformant
behaviour injected for the trace checker to find."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .model import (
    ACTIONS,
    FOLLOWER,
    LEADER,
    UNBOUNDED,
    ReplState,
    _up_to_date,
    _with,
    initial_state,
    majority,
)
from .trace import TraceEvent, TraceLogger, write_trace

BUGS = ("minority-commit", "two-leaders", "commit-beyond-applied")

DEFAULT_WEIGHTS: Mapping[str, float] = {
    "AppendOplog": 4,
    "RollbackOplog": 4,
    "UpdateTermThroughHeartbeat": 4,
    "LearnCommitPointWithTermCheck": 4,
    "LearnCommitPointFromSyncSourceNeverBeyondLastApplied": 4,
    "AdvanceCommitPoint": 4,
    "ClientWrite": 2,
    "BecomePrimaryByMagic": 1,
    "Stepdown": 1,
}

# Order in which the settling phase drains work; rollbacks go first so stale
# logs cannot keep re-growing.
_SETTLE_ORDER = (
    "RollbackOplog",
    "AppendOplog",
    "UpdateTermThroughHeartbeat",
    "AdvanceCommitPoint",
    "LearnCommitPointWithTermCheck",
    "LearnCommitPointFromSyncSourceNeverBeyondLastApplied",
)


@dataclass(frozen=True)
class Partition:
    """Between steps ``start`` (inclusive) and ``end`` (exclusive), the listed
    node pairs cannot talk to each other."""

    start: int
    end: int
    cut: frozenset[frozenset[int]]

    @classmethod
    def isolate(cls, node: int, start: int, end: int, num_nodes: int) -> Partition:
        return cls(start, end, frozenset(frozenset((node, m)) for m in range(1, num_nodes + 1) if m != node))

    @classmethod
    def parse(cls, text: str) -> Partition:
        """``START:END:A-B[,C-D...]`` with 1-based node IDs."""
        start, end, pairs = text.split(":")
        cut = frozenset(frozenset(int(x) for x in pair.split("-")) for pair in pairs.split(","))
        return cls(int(start), int(end), cut)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 1
    steps: int = 1000
    num_nodes: int = 3
    partition_schedule: tuple[Partition, ...] = ()
    inject: str | None = None
    inject_probability: float = 0.05
    clock_mode: str = "logical"
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    settle: bool = True
    # Nodes that, like an initial-synced member, only log their newest entry.
    log_recent_only: tuple[int, ...] = ()

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        if self.inject is not None and self.inject not in BUGS:
            raise ValueError(f"unknown bug {self.inject!r}; expected one of {BUGS}")


@dataclass
class SimResult:
    events: list[TraceEvent]
    final_state: ReplState
    per_action: Counter
    injections: int = 0
    # 1-based event numbers of the first event of each injected step
    injected_at: list[int] = field(default_factory=list)
    stopped_early: str | None = None
    settled: bool = False
    commit_points_converged: bool = False
    leader: int | None = None

    def summary(self) -> dict:
        return {
            "events": len(self.events),
            "per_action": dict(sorted(self.per_action.items())),
            "injections": self.injections,
            "injected_at": self.injected_at,
            "stopped_early": self.stopped_early,
            "settled": self.settled,
            "leader": self.leader,
            "commit_points_converged": self.commit_points_converged,
        }


class Simulator:
    def __init__(self, config: SimConfig, logger: TraceLogger | None = None):
        self.config = config
        self.rng = random.Random(config.seed)
        self.logger = logger or TraceLogger(config.clock_mode)
        self.state: ReplState = initial_state(config.num_nodes)
        self.per_action: Counter = Counter()
        self.injections = 0
        self.injected_at: list[int] = []

    # -- connectivity ------------------------------------------------------------

    def _cut(self, step: int | None) -> frozenset:
        if step is None:
            return frozenset()
        return frozenset().union(*(p.cut for p in self.config.partition_schedule if p.start <= step < p.end))

    def _enabled(self, step: int | None, names: Sequence[str] | None = None):
        cut = self._cut(step)
        s = self.state
        out = []
        for action in ACTIONS:
            if names is not None and action.name not in names:
                continue
            for n, src in action.instances(len(s)):
                if src is not None and frozenset((n + 1, src + 1)) in cut:
                    continue
                if action.name == "BecomePrimaryByMagic" and not self._reachable_quorum(n, cut):
                    continue
                nxt = action.fire(s, n, src, UNBOUNDED)
                if nxt is not None:
                    out.append((action.name, n, nxt))
        return out

    def _reachable_quorum(self, n: int, cut) -> bool:
        s = self.state
        voters = [m for m in range(len(s)) if m == n or frozenset((n + 1, m + 1)) not in cut]
        return sum(_up_to_date(s[n], s[m]) for m in voters) >= majority(len(s))

    # -- logging -------------------------------------------------------------------

    def _log(self, n: int, name: str) -> None:
        node = self.state[n]
        oplog = None
        if n + 1 in self.config.log_recent_only and len(node.oplog) >= 2:
            donors = [
                m
                for i, m in enumerate(self.state)
                if i != n and len(m.oplog) >= len(node.oplog) and m.oplog[len(node.oplog) - 1] == node.last_term
            ]
            if donors:
                oplog = (None,) * (len(node.oplog) - 1) + (node.last_term,)
        self.logger.log_event(n + 1, name, node, oplog)
        self.per_action[name] += 1

    def _step_to(self, name: str, n: int, nxt: ReplState) -> None:
        self.state = nxt
        self._log(n, name)

    # -- injected bugs ---------------------------------------------------------

    def _inject(self, step: int) -> bool:
        bug = self.config.inject
        s = self.state
        cut = self._cut(step)
        if bug == "minority-commit":
            options = []
            for n, node in enumerate(s):
                if node.role != LEADER or not node.oplog or node.last_term != node.term:
                    continue
                holders = sum(1 for m in s if m.oplog[: len(node.oplog)] == node.oplog)
                target = (node.term, len(node.oplog))
                if holders < majority(len(s)) and target > node.commit_point:
                    options.append((n, target))
            if not options:
                return False
            n, (ct, ci) = self.rng.choice(options)
            self._step_to("AdvanceCommitPoint", n, _with(s, n, s[n]._replace(commit_term=ct, commit_index=ci)))
            return True
        if bug == "two-leaders":
            leaders = [n for n, m in enumerate(s) if m.role == LEADER]
            followers = [n for n, m in enumerate(s) if m.role == FOLLOWER]
            if len(leaders) != 1 or not followers:
                return False
            old, new = leaders[0], self.rng.choice(followers)
            term = 1 + max(m.term for m in s)
            self._step_to("BecomePrimaryByMagic", new, _with(s, new, s[new]._replace(role=LEADER, term=term)))
            # The stale leader keeps accepting writes.
            stale = self.state[old]
            self._step_to("ClientWrite", old, _with(self.state, old, stale._replace(oplog=stale.oplog + (stale.term,))))
            return True
        if bug == "commit-beyond-applied":
            options = []
            for n, node in enumerate(s):
                for src, other in enumerate(s):
                    if src == n or frozenset((n + 1, src + 1)) in cut:
                        continue
                    if (
                        other.oplog[: len(node.oplog)] == node.oplog
                        and other.commit_index > len(node.oplog)
                        and other.commit_point > node.commit_point
                    ):
                        options.append((n, other.commit_point))
            if not options:
                return False
            n, (ct, ci) = self.rng.choice(options)
            self._step_to(
                "LearnCommitPointFromSyncSourceNeverBeyondLastApplied",
                n,
                _with(s, n, s[n]._replace(commit_term=ct, commit_index=ci)),
            )
            return True
        return False

    # -- main loop ---------------------------------------------------------------

    def run(self) -> SimResult:
        weights = self.config.weights
        stopped = None
        for step in range(self.config.steps):
            if self.config.inject and self.rng.random() < self.config.inject_probability:
                at = len(self.logger.events) + 1
                if self._inject(step):
                    self.injections += 1
                    self.injected_at.append(at)
                    continue
            enabled = self._enabled(step)
            if not enabled:
                stopped = f"no action enabled at step {step}"
                break
            name, n, nxt = self.rng.choices(enabled, weights=[weights.get(e[0], 1) for e in enabled])[0]
            self._step_to(name, n, nxt)

        settled = False
        if self.config.settle:
            settled = self._settle()
        leaders = [n + 1 for n, m in enumerate(self.state) if m.role == LEADER]
        leader = leaders[0] if len(leaders) == 1 else None
        if leader is not None:
            target = self.state[leader - 1].commit_point
        else:
            target = max(m.commit_point for m in self.state)
        converged = all(m.commit_point == target for m in self.state)
        return SimResult(
            events=self.logger.events,
            final_state=self.state,
            per_action=self.per_action,
            injections=self.injections,
            injected_at=self.injected_at,
            stopped_early=stopped,
            settled=settled,
            commit_points_converged=converged,
            leader=leader,
        )

    def _settle(self, limit: int = 100_000) -> bool:
        """Heal the network and drain replication and gossip until nothing
        is left to do."""
        for _ in range(limit):
            enabled = self._enabled(None, _SETTLE_ORDER)
            if not enabled:
                return True
            enabled.sort(key=lambda e: _SETTLE_ORDER.index(e[0]))
            name, n, nxt = enabled[0]
            self._step_to(name, n, nxt)
        return False


def run(config: SimConfig, out: str | Path | None = None) -> SimResult:
    """Run one simulation; write the trace to ``out`` when given."""
    result = Simulator(config).run()
    if out is not None:
        write_trace(result.events, out)
    return result


__all__ = ["BUGS", "DEFAULT_WEIGHTS", "Partition", "SimConfig", "SimResult", "Simulator", "run"]
