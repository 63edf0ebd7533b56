"""Executable model of a pull-based, Raft-style replica set.

Each node has a role, a term, a commit point ``(term, index)`` and an oplog
of entry terms. Nodes are numbered from 1 in labels, traces and records;
internally a state is a tuple of :class:`NodeState` indexed from 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

from ..mck import ModelDefinition

LEADER = "Leader"
FOLLOWER = "Follower"
STUTTER = "Stutter"


class NodeState(NamedTuple):
    role: str = FOLLOWER
    term: int = 0
    commit_term: int = 0
    commit_index: int = 0
    oplog: tuple = ()

    @property
    def commit_point(self) -> tuple[int, int]:
        return (self.commit_term, self.commit_index)

    @property
    def last_term(self) -> int:
        return self.oplog[-1] if self.oplog else 0

    @property
    def last_applied(self) -> tuple[int, int]:
        return (self.last_term, len(self.oplog))


ReplState = tuple  # tuple[NodeState, ...]


@dataclass(frozen=True)
class ModelBounds:
    num_nodes: int = 3
    max_term: int | None = 3
    max_oplog: int | None = 3


UNBOUNDED = ModelBounds(max_term=None, max_oplog=None)


def initial_state(num_nodes: int = 3) -> ReplState:
    return tuple(NodeState() for _ in range(num_nodes))


def majority(num_nodes: int) -> int:
    return num_nodes // 2 + 1


def _with(state: ReplState, n: int, node: NodeState) -> ReplState:
    return state[:n] + (node,) + state[n + 1 :]


def _up_to_date(a: NodeState, b: NodeState) -> bool:
    """``a``'s oplog is at least as up to date as ``b``'s."""
    return (a.last_term, len(a.oplog)) >= (b.last_term, len(b.oplog))


def _is_prefix(short: tuple, long: tuple) -> bool:
    return len(short) <= len(long) and long[: len(short)] == short


def _replicated(state: ReplState, prefix: tuple) -> int:
    return sum(1 for m in state if _is_prefix(prefix, m.oplog))


def _advance_target(state: ReplState, n: int):
    node = state[n]
    need = majority(len(state))
    for p in range(len(node.oplog), 0, -1):
        if node.oplog[p - 1] != node.term:
            break
        if _replicated(state, node.oplog[:p]) >= need:
            return (node.term, p)
    return None


def _learn_from_sync_source(node: NodeState, src: NodeState) -> tuple[int, int]:
    ct, ci = src.commit_point
    return (ct, ci) if ci <= len(node.oplog) else node.last_applied


def _holds_commit_entry(node: NodeState) -> bool:
    ct, ci = node.commit_point
    return ci == 0 or (len(node.oplog) >= ci and node.oplog[ci - 1] == ct)


# -- actions --------------------------------------------------------------------

Guard = tuple[str, Callable]


@dataclass(frozen=True)
class Action:
    name: str
    pairwise: bool  # instances are (node, source) pairs rather than single nodes
    guards: tuple[Guard, ...]
    effect: Callable

    def instances(self, num_nodes: int) -> Iterable[tuple[int, int | None]]:
        if self.pairwise:
            return ((n, s) for n in range(num_nodes) for s in range(num_nodes) if s != n)
        return ((n, None) for n in range(num_nodes))

    def label(self, n: int, src: int | None) -> str:
        return f"{self.name}({n + 1})" if src is None else f"{self.name}({n + 1}, {src + 1})"

    def failed_guards(self, state, n, src, bounds: ModelBounds) -> list[str]:
        failed = []
        for desc, ok in self.guards:
            try:
                if not ok(state, n, src, bounds):
                    failed.append(desc)
            except IndexError:
                # Only reachable when an earlier guard already failed.
                pass
        return failed

    def fire(self, state, n, src, bounds: ModelBounds):
        for _, ok in self.guards:
            if not ok(state, n, src, bounds):
                return None
        return self.effect(state, n, src)


def _append(s, n, src):
    node = s[n]
    return _with(s, n, node._replace(oplog=node.oplog + (s[src].oplog[len(node.oplog)],)))


def _rollback(s, n, src):
    node = s[n]
    return _with(s, n, node._replace(oplog=node.oplog[:-1]))


def _become_primary(s, n, src):
    term = 1 + max(m.term for m in s)
    return tuple(
        m._replace(role=LEADER, term=term) if i == n else m._replace(role=FOLLOWER) for i, m in enumerate(s)
    )


def _stepdown(s, n, src):
    return _with(s, n, s[n]._replace(role=FOLLOWER))


def _client_write(s, n, src):
    node = s[n]
    return _with(s, n, node._replace(oplog=node.oplog + (node.term,)))


def _advance(s, n, src):
    term, index = _advance_target(s, n)
    return _with(s, n, s[n]._replace(commit_term=term, commit_index=index))


def _update_term(s, n, src):
    return _with(s, n, s[n]._replace(term=s[src].term, role=FOLLOWER))


def _learn_term_check(s, n, src):
    ct, ci = s[src].commit_point
    return _with(s, n, s[n]._replace(commit_term=ct, commit_index=ci))


def _learn_sync(s, n, src):
    ct, ci = _learn_from_sync_source(s[n], s[src])
    return _with(s, n, s[n]._replace(commit_term=ct, commit_index=ci))


def _term_bound(s, n, src, b):
    return b.max_term is None or 1 + max(m.term for m in s) <= b.max_term


def _oplog_bound(s, n, src, b):
    return b.max_oplog is None or len(s[n].oplog) < b.max_oplog


ACTIONS: tuple[Action, ...] = (
    Action(
        "AppendOplog",
        True,
        (
            ("source oplog is longer", lambda s, n, src, b: len(s[src].oplog) > len(s[n].oplog)),
            ("oplog is a prefix of the source's", lambda s, n, src, b: _is_prefix(s[n].oplog, s[src].oplog)),
        ),
        _append,
    ),
    Action(
        "RollbackOplog",
        True,
        (
            ("oplog is non-empty", lambda s, n, src, b: bool(s[n].oplog)),
            ("source's last term is higher", lambda s, n, src, b: s[src].last_term > s[n].last_term),
            (
                "last entry diverges from the source",
                lambda s, n, src, b: len(s[n].oplog) > len(s[src].oplog)
                or s[src].oplog[len(s[n].oplog) - 1] != s[n].last_term,
            ),
        ),
        _rollback,
    ),
    Action(
        "BecomePrimaryByMagic",
        False,
        (
            ("node is a follower", lambda s, n, src, b: s[n].role == FOLLOWER),
            (
                "oplog is up to date with a majority",
                lambda s, n, src, b: sum(_up_to_date(s[n], m) for m in s) >= majority(len(s)),
            ),
            ("new term within bound", _term_bound),
        ),
        _become_primary,
    ),
    Action("Stepdown", False, (("node is the leader", lambda s, n, src, b: s[n].role == LEADER),), _stepdown),
    Action(
        "ClientWrite",
        False,
        (("node is the leader", lambda s, n, src, b: s[n].role == LEADER), ("oplog within bound", _oplog_bound)),
        _client_write,
    ),
    Action(
        "AdvanceCommitPoint",
        False,
        (
            ("node is the leader", lambda s, n, src, b: s[n].role == LEADER),
            (
                "a newer entry of the leader's term is on a majority",
                lambda s, n, src, b: (_advance_target(s, n) or (0, 0)) > s[n].commit_point,
            ),
        ),
        _advance,
    ),
    Action(
        "UpdateTermThroughHeartbeat",
        True,
        (("source term is newer", lambda s, n, src, b: s[src].term > s[n].term),),
        _update_term,
    ),
    Action(
        "LearnCommitPointWithTermCheck",
        True,
        (
            ("source commit point is newer", lambda s, n, src, b: s[src].commit_point > s[n].commit_point),
            ("commit point term is not beyond own term", lambda s, n, src, b: s[src].commit_term <= s[n].term),
        ),
        _learn_term_check,
    ),
    Action(
        "LearnCommitPointFromSyncSourceNeverBeyondLastApplied",
        True,
        (
            ("oplog is a prefix of the source's", lambda s, n, src, b: _is_prefix(s[n].oplog, s[src].oplog)),
            ("source holds its commit point entry", lambda s, n, src, b: _holds_commit_entry(s[src])),
            (
                "learned commit point is newer",
                lambda s, n, src, b: _learn_from_sync_source(s[n], s[src]) > s[n].commit_point,
            ),
        ),
        _learn_sync,
    ),
)

ACTION_NAMES = tuple(a.name for a in ACTIONS)
ACTIONS_BY_NAME = {a.name: a for a in ACTIONS}


def actions(
    state: ReplState, bounds: ModelBounds = UNBOUNDED, action_set: Sequence[Action] = ACTIONS
) -> list[tuple[str, ReplState]]:
    """Every enabled action instance and its successor state."""
    out = []
    for action in action_set:
        for n, src in action.instances(len(state)):
            nxt = action.fire(state, n, src, bounds)
            if nxt is not None:
                out.append((action.label(n, src), nxt))
    return out


def action_name(label: str) -> str:
    return label.split("(", 1)[0]


def permits(state: ReplState, target: ReplState, bounds: ModelBounds = UNBOUNDED) -> list[str]:
    """Labels of every action instance taking ``state`` to ``target``.

    A stuttering step yields ``[STUTTER]``.
    """
    if state == target:
        return [STUTTER]
    return [label for label, nxt in actions(state, bounds) if nxt == target]


@dataclass(frozen=True)
class Diagnostic:
    label: str
    failures: tuple[str, ...]


def explain(state: ReplState, target: ReplState, bounds: ModelBounds = UNBOUNDED) -> list[Diagnostic]:
    """For every action instance, why it does not take ``state`` to
    ``target``: failed preconditions, or the fields its effect gets wrong.
    Sorted nearest first."""
    out = []
    for action in ACTIONS:
        for n, src in action.instances(len(state)):
            failed = action.failed_guards(state, n, src, bounds)
            if not failed:
                nxt = action.effect(state, n, src)
                failed = _field_diffs(nxt, target)
            out.append(Diagnostic(action.label(n, src), tuple(failed)))
    out.sort(key=lambda d: len(d.failures))
    return out


def _field_diffs(got: ReplState, want: ReplState) -> list[str]:
    diffs = []
    for i, (g, w) in enumerate(zip(got, want)):
        for name in NodeState._fields:
            gv, wv = getattr(g, name), getattr(w, name)
            if gv != wv:
                diffs.append(f"node {i + 1} {name}: action gives {_show(gv)}, trace has {_show(wv)}")
    return diffs


def _show(value):
    return list(value) if isinstance(value, tuple) else value


# -- invariants -----------------------------------------------------------------


def committed(state: ReplState) -> frozenset[tuple[int, int]]:
    """(index, term) pairs covered by any node's commit point."""
    out: set[tuple[int, int]] = set()
    for node in state:
        ct, ci = node.commit_point
        if ci == 0:
            continue
        for holder in state:
            if len(holder.oplog) >= ci and holder.oplog[ci - 1] == ct:
                out.update((j + 1, holder.oplog[j]) for j in range(ci))
                break
    return frozenset(out)


def invariant_no_committed_rollback(state: ReplState, label: str, nxt: ReplState) -> bool:
    """No transition removes a committed oplog entry."""
    removed = [
        (j + 1, before.oplog[j])
        for before, after in zip(state, nxt)
        if len(after.oplog) < len(before.oplog)
        for j in range(len(after.oplog), len(before.oplog))
    ]
    if not removed:
        return True
    done = committed(state)
    return not any(entry in done for entry in removed)


def commit_points_on_majority(state: ReplState) -> bool:
    need = majority(len(state))
    for node in state:
        ct, ci = node.commit_point
        if ci and sum(1 for m in state if len(m.oplog) >= ci and m.oplog[ci - 1] == ct) < need:
            return False
    return True


def single_leader(state: ReplState) -> bool:
    return sum(1 for m in state if m.role == LEADER) <= 1


def terms_non_decreasing(state: ReplState) -> bool:
    return all(all(a <= b for a, b in zip(m.oplog, m.oplog[1:])) for m in state)


def log_matching(state: ReplState) -> bool:
    for i, a in enumerate(state):
        for b in state[i + 1 :]:
            for j in range(min(len(a.oplog), len(b.oplog)) - 1, -1, -1):
                if a.oplog[j] == b.oplog[j]:
                    if a.oplog[:j] != b.oplog[:j]:
                        return False
                    break
    return True


# -- records ----------------------------------------------------------------------


def node_to_record(node: NodeState) -> dict:
    return {
        "role": node.role,
        "term": node.term,
        "commitPoint": {"term": node.commit_term, "index": node.commit_index},
        "oplog": list(node.oplog),
    }


def node_from_record(record) -> NodeState:
    cp = record["commitPoint"]
    return NodeState(record["role"], record["term"], cp["term"], cp["index"], tuple(record["oplog"]))


def to_record(state: ReplState) -> dict:
    return {f"n{i + 1}": node_to_record(node) for i, node in enumerate(state)}


def from_record(record) -> ReplState:
    return tuple(node_from_record(record[f"n{i + 1}"]) for i in range(len(record)))


def model(bounds: ModelBounds = ModelBounds(), action_set: Sequence[Action] = ACTIONS) -> ModelDefinition:
    return ModelDefinition(
        initial_states=[initial_state(bounds.num_nodes)],
        next=lambda s: actions(s, bounds, action_set),
        to_record=to_record,
        from_record=from_record,
        invariants={
            "SingleLeader": single_leader,
            "CommitPointsOnMajority": commit_points_on_majority,
            "TermsNonDecreasing": terms_non_decreasing,
            "LogMatching": log_matching,
        },
        transition_invariants={"CommittedWritesNotRolledBack": invariant_no_committed_rollback},
    )


