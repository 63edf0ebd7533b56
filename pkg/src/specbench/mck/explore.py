"""Breadth-first explicit-state exploration with invariant checking."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

from .budget import NonTerminationError
from .canonical import encode, fingerprint

State = Hashable
Label = str
Successors = Callable[[Any], Iterable[tuple[Label, Any]]]


@dataclass
class ModelDefinition:
    """A transition system to explore.

    ``to_record``/``from_record`` map states to plain records (see
    :mod:`specbench.mck.canonical`); they define the canonical encoding and
    the DOT node labels. ``transition_invariants`` are checked on every edge
    as ``pred(state, label, successor)``.
    """

    initial_states: Sequence[Any]
    next: Successors
    to_record: Callable[[Any], Mapping[str, Any]]
    from_record: Callable[[Mapping[str, Any]], Any]
    invariants: Mapping[str, Callable[[Any], bool]] = field(default_factory=dict)
    transition_invariants: Mapping[str, Callable[[Any, Label, Any], bool]] = field(
        default_factory=dict
    )
    constraint: Callable[[Any], bool] | None = None

    def canonical(self, state: Any) -> bytes:
        return encode(self.to_record(state))

    def fingerprint(self, state: Any) -> int:
        return fingerprint(self.to_record(state))


@dataclass(frozen=True)
class Limits:
    max_states: int = 10_000_000
    max_depth: int = 10_000

    def __post_init__(self):
        if self.max_states <= 0 or self.max_depth <= 0:
            raise ValueError("limits must be positive")


@dataclass
class Stats:
    distinct_states: int = 0
    transitions: int = 0
    depth: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "distinct_states": self.distinct_states,
            "transitions": self.transitions,
            "depth": self.depth,
        }


@dataclass
class StateGraph:
    """Reachable states in discovery order plus labelled edges.

    ``predecessors`` maps every non-initial state to the ``(state, label)``
    through which breadth-first search first reached it.
    """

    states: list[Any]
    initial: list[Any]
    edges: list[tuple[Any, Label, Any]]
    predecessors: dict[Any, tuple[Any, Label]]
    stats: Stats
    model: ModelDefinition | None = field(default=None, repr=False, compare=False)

    def successors(self) -> dict[Any, list[tuple[Label, Any]]]:
        out: dict[Any, list[tuple[Label, Any]]] = {s: [] for s in self.states}
        for src, label, dst in self.edges:
            out[src].append((label, dst))
        return out

    def terminal_states(self) -> list[Any]:
        has_out = {src for src, _, _ in self.edges}
        return [s for s in self.states if s not in has_out]

    def path_to(self, state: Any) -> list[tuple[Label | None, Any]]:
        return _path(self.predecessors, state)

    def count_terminal_paths(self) -> int:
        """Number of distinct paths from an initial state to a terminal state.

        Only defined for acyclic graphs.
        """
        succ = self.successors()
        memo: dict[Any, int] = {}
        # Iterative post-order so deep graphs do not hit the recursion limit.
        for root in self.initial:
            stack: list[tuple[Any, bool]] = [(root, False)]
            on_stack: set[Any] = set()
            while stack:
                node, expanded = stack.pop()
                if node in memo:
                    continue
                if expanded:
                    on_stack.discard(node)
                    outs = succ[node]
                    memo[node] = 1 if not outs else sum(memo[d] for _, d in outs)
                    continue
                if node in on_stack:
                    raise ValueError("graph has a cycle; path count is unbounded")
                on_stack.add(node)
                stack.append((node, True))
                for _, dst in succ[node]:
                    if dst not in memo:
                        if dst in on_stack:
                            raise ValueError("graph has a cycle; path count is unbounded")
                        stack.append((dst, False))
        return sum(memo[s] for s in dict.fromkeys(self.initial))


@dataclass
class Violation:
    invariant_name: str
    state: Any
    path: list[tuple[Label | None, Any]]
    stats: Stats = field(default_factory=Stats)

    def __str__(self) -> str:
        steps = " -> ".join(label for label, _ in self.path if label is not None)
        return f"invariant {self.invariant_name!r} violated after {len(self.path) - 1} steps: {steps}"


class LimitExceeded(Exception):
    def __init__(self, what: str, limit: int, stats: Stats):
        super().__init__(f"{what} limit {limit} exceeded")
        self.what = what
        self.limit = limit
        self.stats = stats


def _path(predecessors, state):
    path: list[tuple[Label | None, Any]] = []
    cur = state
    while cur in predecessors:
        prev, label = predecessors[cur]
        path.append((label, cur))
        cur = prev
    path.append((None, cur))
    path.reverse()
    return path


def explore(
    model: ModelDefinition,
    limits: Limits | None = None,
    keep_edges: bool = True,
) -> StateGraph | Violation:
    """Explore every reachable state of ``model`` breadth first.

    Returns the full state graph, or the first invariant violation together
    with a shortest path to it. Edges are only stored when ``keep_edges`` is
    set; ``stats.transitions`` is counted either way.
    """
    limits = limits or Limits()
    if not model.initial_states:
        raise ValueError("model has no initial states")
    constraint = model.constraint
    stats = Stats()
    depth: dict[Any, int] = {}
    predecessors: dict[Any, tuple[Any, Label]] = {}
    order: list[Any] = []
    initial: list[Any] = []
    edges: list[tuple[Any, Label, Any]] = []
    queue: deque[Any] = deque()

    def violated(state):
        for name, pred in model.invariants.items():
            if not pred(state):
                return name
        return None

    def fail(name, state):
        stats.distinct_states = len(order)
        return Violation(name, state, _path(predecessors, state), stats)

    for state in model.initial_states:
        if constraint is not None and not constraint(state):
            continue
        if state in depth:
            continue
        depth[state] = 0
        order.append(state)
        initial.append(state)
        name = violated(state)
        if name is not None:
            return fail(name, state)
        queue.append(state)

    transition_invariants = list(model.transition_invariants.items())
    while queue:
        state = queue.popleft()
        d = depth[state]
        try:
            successors = list(model.next(state))
        except NonTerminationError as exc:
            exc.path = _path(predecessors, state)
            raise
        for label, succ in successors:
            for name, pred in transition_invariants:
                if not pred(state, label, succ):
                    stats.distinct_states = len(order)
                    path = _path(predecessors, state) + [(label, succ)]
                    return Violation(name, succ, path, stats)
            if constraint is not None and not constraint(succ):
                continue
            stats.transitions += 1
            if keep_edges:
                edges.append((state, label, succ))
            if succ in depth:
                continue
            if d + 1 > limits.max_depth:
                stats.distinct_states = len(order)
                raise LimitExceeded("depth", limits.max_depth, stats)
            depth[succ] = d + 1
            predecessors[succ] = (state, label)
            order.append(succ)
            stats.depth = max(stats.depth, d + 1)
            if len(order) > limits.max_states:
                stats.distinct_states = len(order)
                raise LimitExceeded("states", limits.max_states, stats)
            name = violated(succ)
            if name is not None:
                return fail(name, succ)
            queue.append(succ)

    stats.distinct_states = len(order)
    return StateGraph(order, initial, edges, predecessors, stats, model)
