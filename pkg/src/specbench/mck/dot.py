"""GraphViz DOT export and import of explored state graphs.

Node IDs are 64-bit fingerprints of the canonical state encoding. Each node
label lists the state record as ``key = <json>`` lines, so the graph can be
read back without the model that produced it. Initial states carry
``style=filled``.
"""

from __future__ import annotations

import json
import re
from collections import deque
from typing import Any, Callable, Mapping

from .canonical import fingerprint
from .explore import StateGraph, Stats


class DotParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnknownNodeError(DotParseError):
    pass


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def _unescape(text: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n"}.get(m.group(1), m.group(1)), text)


def render_label(record: Mapping[str, Any]) -> str:
    return "\n".join(
        f"{key} = {json.dumps(value, separators=(',', ':'))}" for key, value in record.items()
    )


def parse_label(text: str) -> dict[str, Any]:
    record: dict[str, Any] = {}
    for line in text.split("\n"):
        key, sep, raw = line.partition(" = ")
        if not sep:
            raise ValueError(f"malformed label line {line!r}")
        record[key] = json.loads(raw)
    return record


def export_dot(graph: StateGraph, to_record: Callable[[Any], Mapping[str, Any]] | None = None) -> str:
    """Render ``graph`` as DOT text. Output depends only on the graph."""
    if to_record is None:
        if graph.model is None:
            raise ValueError("graph carries no model; pass to_record")
        to_record = graph.model.to_record
    ids: dict[Any, int] = {}
    owner: dict[int, Any] = {}
    records = {}
    for state in graph.states:
        record = to_record(state)
        fp = fingerprint(record)
        if fp in owner and owner[fp] != state:
            raise ValueError(f"fingerprint collision on node {fp}")
        owner[fp] = state
        ids[state] = fp
        records[state] = record
    initial = set(graph.initial)
    lines = ["strict digraph StateGraph {"]
    for state in graph.states:
        attrs = f'label="{_escape(render_label(records[state]))}"'
        if state in initial:
            attrs += ",style=filled"
        lines.append(f"{ids[state]} [{attrs}];")
    for src, label, dst in graph.edges:
        lines.append(f'{ids[src]} -> {ids[dst]} [label="{_escape(label)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<arrow>->)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<id>-?[0-9]+|[A-Za-z_][A-Za-z_0-9]*)
  | (?P<punct>[\[\]{}=,;])
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DotParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind != "ws":
                yield kind, value, line, col
            col += len(value)
        pos = m.end()
    yield "eof", "", line, col


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.i]
        if (kind is not None and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of input"
            raise DotParseError(f"expected {want!r}, found {got!r}", tok[2], tok[3])
        self.i += 1
        return tok

    def attrs(self) -> dict[str, str]:
        out: dict[str, str] = {}
        if self.peek()[1] != "[":
            return out
        self.take("punct", "[")
        while self.peek()[1] != "]":
            key = self.take("id")[1]
            self.take("punct", "=")
            tok = self.peek()
            if tok[0] == "string":
                out[key] = _unescape(self.take()[1][1:-1])
            else:
                out[key] = self.take("id")[1]
            if self.peek()[1] == ",":
                self.take()
        self.take("punct", "]")
        return out


def parse_dot(text: str, from_record: Callable[[Mapping[str, Any]], Any] | None = None) -> StateGraph:
    """Read back a graph written by :func:`export_dot`.

    Without ``from_record`` the states are the label records themselves,
    frozen into nested tuples so they stay hashable.
    """
    p = _Parser(text)
    if p.peek()[1] == "strict":
        p.take()
    p.take("id", "digraph")
    if p.peek()[0] in ("id", "string"):
        p.take()
    p.take("punct", "{")
    nodes: dict[str, Any] = {}
    initial: list[Any] = []
    raw_edges = []
    while p.peek()[1] != "}":
        tok = p.peek()
        if tok[0] == "eof":
            raise DotParseError("unterminated digraph", tok[2], tok[3])
        head = p.take("id")
        if p.peek()[0] == "arrow":
            p.take()
            tail = p.take("id")
            attrs = p.attrs()
            raw_edges.append((head, tail, attrs.get("label", "")))
        elif p.peek()[1] == "=":
            p.take()
            p.take()  # graph attribute value, ignored
        else:
            attrs = p.attrs()
            if "label" not in attrs:
                raise DotParseError("node without label", head[2], head[3])
            try:
                record = parse_label(attrs["label"])
            except ValueError as exc:
                raise DotParseError(str(exc), head[2], head[3]) from None
            state = from_record(record) if from_record else _freeze(record)
            nodes[head[1]] = state
            if attrs.get("style") == "filled":
                initial.append(state)
        if p.peek()[1] == ";":
            p.take()
    p.take("punct", "}")
    p.take("eof")

    edges = []
    for head, tail, label in raw_edges:
        for tok in (head, tail):
            if tok[1] not in nodes:
                raise UnknownNodeError(f"edge references unknown node {tok[1]}", tok[2], tok[3])
        edges.append((nodes[head[1]], label, nodes[tail[1]]))
    return _rebuild(list(nodes.values()), initial, edges)


def _freeze(value):
    if isinstance(value, dict):
        return tuple((k, _freeze(v)) for k, v in value.items())
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _rebuild(states, initial, edges) -> StateGraph:
    succ: dict[Any, list[tuple[str, Any]]] = {s: [] for s in states}
    for src, label, dst in edges:
        succ[src].append((label, dst))
    depth = {s: 0 for s in initial}
    predecessors: dict[Any, tuple[Any, str]] = {}
    queue = deque(initial)
    while queue:
        s = queue.popleft()
        for label, t in succ[s]:
            if t not in depth:
                depth[t] = depth[s] + 1
                predecessors[t] = (s, label)
                queue.append(t)
    stats = Stats(len(states), len(edges), max(depth.values(), default=0))
    return StateGraph(states, initial, edges, predecessors, stats)
