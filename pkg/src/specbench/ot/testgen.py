"""Test-suite generation from the explored sync model, plus replay and
rule-case coverage of generated suites."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import jinja2

from ..mck import NonTerminationError, StateGraph, Violation, explore, fingerprint
from .fixture import SyncFixture
from .ops import (
    KIND_NAMES,
    ArrayClear,
    ArrayErase,
    ArrayInsert,
    ArrayMove,
    ArraySet,
    ArraySwap,
    TaggedOp,
    tagged_from_record,
    tagged_to_record,
)
from .syncmodel import SyncParams, SyncState, applied_ops, client_ops, model
from .transform import MERGE_RULES, RuleCase, RuleTable, record_rule_cases

CASES_PER_FILE = 1000
FORMATS = ("neutral", "source-template")


class GenerationError(Exception):
    pass


@dataclass(frozen=True)
class TestCase:
    id: str
    initial_array: tuple[int, ...]
    client_ops: tuple[TaggedOp, ...]
    applied_ops: tuple[tuple[TaggedOp, ...], ...]
    final_array: tuple[int, ...]

    __test__ = False  # not a pytest class

    def content_record(self) -> dict:
        return {
            "initial_array": list(self.initial_array),
            "client_ops": [tagged_to_record(op) for op in self.client_ops],
            "applied_ops": [[tagged_to_record(op) for op in ops] for ops in self.applied_ops],
            "final_array": list(self.final_array),
        }

    def to_record(self) -> dict:
        return {"id": self.id, **self.content_record()}

    @classmethod
    def from_record(cls, record) -> TestCase:
        return cls(
            id=str(record["id"]),
            initial_array=tuple(record["initial_array"]),
            client_ops=tuple(tagged_from_record(r) for r in record["client_ops"]),
            applied_ops=tuple(tuple(tagged_from_record(r) for r in ops) for ops in record["applied_ops"]),
            final_array=tuple(record["final_array"]),
        )

    @classmethod
    def build(cls, initial_array, client_ops, applied_ops, final_array) -> TestCase:
        case = cls("", tuple(initial_array), tuple(client_ops), tuple(tuple(o) for o in applied_ops), tuple(final_array))
        return cls(str(fingerprint(case.content_record())), *_fields(case)[1:])


def _fields(case: TestCase):
    return (case.id, case.initial_array, case.client_ops, case.applied_ops, case.final_array)


def case_from_state(state: SyncState) -> TestCase:
    arrays = {p.array for p in state.peers}
    if len(arrays) != 1:
        raise GenerationError(f"terminal state did not converge: {sorted(arrays)}")
    return TestCase.build(state.initial_array, client_ops(state), applied_ops(state), state.server.array)


def generate(graph: StateGraph | None = None, params: SyncParams | None = None) -> list[TestCase]:
    """One test case per terminal behaviour, sorted by id.

    Explores the sync model for ``params`` when no graph is given.
    """
    if graph is None:
        result = explore(model(params or SyncParams()))
        if isinstance(result, Violation):
            raise GenerationError(f"model check failed: {result}")
        graph = result
    elif isinstance(graph, Violation):
        raise GenerationError(f"model check failed: {graph}")
    cases = [case_from_state(s) for s in graph.terminal_states()]
    return sorted(cases, key=lambda c: int(c.id))


# -- emission -------------------------------------------------------------------


def _cpp_call(op: TaggedOp) -> str:
    o = op.op
    if isinstance(o, ArraySet):
        return f"set_int(0, {o.ndx}, {o.value})"
    if isinstance(o, ArrayInsert):
        return f"insert_int(0, {o.ndx}, {o.value})"
    if isinstance(o, ArrayMove):
        return f"move({o.from_ndx}, {o.to_ndx})"
    if isinstance(o, ArraySwap):
        return f"swap({o.ndx1}, {o.ndx2})"
    if isinstance(o, ArrayErase):
        return f"remove({o.ndx})"
    if isinstance(o, ArrayClear):
        return "clear()"
    raise TypeError(o)


def _environment(loader: jinja2.BaseLoader) -> jinja2.Environment:
    env = jinja2.Environment(loader=loader, keep_trailing_newline=True, trim_blocks=True, undefined=jinja2.StrictUndefined)
    env.filters["cpp_call"] = _cpp_call
    env.tests["discarded"] = lambda op: op.discarded
    return env


def default_template() -> str:
    return resources.files("specbench.ot").joinpath("templates/cpp_test.cpp.j2").read_text(encoding="utf-8")


def _chunks(cases: Sequence[TestCase]):
    for start in range(0, len(cases), CASES_PER_FILE):
        yield start // CASES_PER_FILE, cases[start : start + CASES_PER_FILE]


def emit(
    cases: Sequence[TestCase],
    out_dir: str | Path,
    format: str = "neutral",
    template: str | None = None,
    suffix: str = ".cpp",
    params: dict | None = None,
) -> list[Path]:
    """Write ``cases`` under ``out_dir`` and return the files written.

    ``neutral`` writes JSON-lines shards of up to 1,000 cases plus
    ``manifest.json``. ``source-template`` renders ``template`` (Jinja2 text,
    C++ by default) once per shard with ``cases`` in scope.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    digest = hashlib.sha256()
    if format == "neutral":
        for n, chunk in _chunks(cases):
            text = "".join(json.dumps(c.to_record(), separators=(",", ":")) + "\n" for c in chunk)
            path = out / f"cases-{n:05d}.jsonl"
            path.write_text(text, encoding="utf-8")
            digest.update(text.encode("utf-8"))
            written.append(path)
        manifest = {
            "format": "neutral",
            "params": params or {},
            "count": len(cases),
            "files": [p.name for p in written],
            "digest": "sha256:" + digest.hexdigest(),
        }
        path = out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(path)
        return written

    env = _environment(jinja2.BaseLoader())
    tmpl = env.from_string(template if template is not None else default_template())
    for n, chunk in _chunks(cases):
        text = tmpl.render(cases=chunk)
        path = out / f"transform_tests_{n:05d}{suffix}"
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written


def load_cases(directory: str | Path) -> tuple[list[TestCase], dict]:
    """Read a neutral suite back, checking the manifest digest."""
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    digest = hashlib.sha256()
    cases = []
    for name in manifest["files"]:
        raw = (root / name).read_bytes()
        digest.update(raw)
        cases += [TestCase.from_record(json.loads(line)) for line in raw.decode("utf-8").splitlines() if line]
    if manifest.get("digest") != "sha256:" + digest.hexdigest():
        raise ValueError(f"digest mismatch in {root / 'manifest.json'}")
    if manifest.get("count") != len(cases):
        raise ValueError(f"manifest count {manifest.get('count')} but {len(cases)} cases on disk")
    return cases, manifest


# -- replay and coverage ---------------------------------------------------------


@dataclass
class CaseResult:
    id: str
    passed: bool
    failure: str | None = None


@dataclass
class ReplayReport:
    results: list[CaseResult] = field(default_factory=list)

    @property
    def passed(self) -> int:
        return sum(r.passed for r in self.results)

    @property
    def failed(self) -> list[CaseResult]:
        return [r for r in self.results if not r.passed]

    @property
    def ok(self) -> bool:
        return not self.failed

    def summary(self) -> dict:
        return {
            "total": len(self.results),
            "passed": self.passed,
            "failed": len(self.failed),
            "failures": [{"id": r.id, "failure": r.failure} for r in self.failed],
        }


def _replay_one(case: TestCase, rules: RuleTable) -> CaseResult:
    fixture = SyncFixture(len(case.client_ops), case.initial_array, rules)
    try:
        for c, op in enumerate(case.client_ops):
            fixture.transaction(c, op)
        fixture.sync_all_clients()
    except (IndexError, NonTerminationError) as exc:
        return CaseResult(case.id, False, f"replay error: {exc}")
    for c, expected in enumerate(case.applied_ops):
        got = fixture.ops_applied(c)
        for step in range(max(len(got), len(expected))):
            want = expected[step] if step < len(expected) else None
            have = got[step] if step < len(got) else None
            if want != have:
                return CaseResult(case.id, False, f"client {c + 1}, applied op {step}: expected {want}, got {have}")
    peers = ["server"] + [f"client {c + 1}" for c in range(len(case.client_ops))]
    for name, array in zip(peers, fixture.arrays()):
        if array != case.final_array:
            return CaseResult(
                case.id, False, f"final-state check: {name} has {list(array)}, expected {list(case.final_array)}"
            )
    return CaseResult(case.id, True)


def replay(cases: Iterable[TestCase], rules: RuleTable = MERGE_RULES) -> ReplayReport:
    results = [_replay_one(c, rules) for c in cases]
    results.sort(key=lambda r: int(r.id) if r.id.isdigit() else r.id)
    return ReplayReport(results)


@dataclass
class CoverageReport:
    hits: dict[RuleCase, int]
    declared: set[RuleCase]
    kinds: tuple[str, ...]

    @property
    def unfired(self) -> list[RuleCase]:
        return sorted(c for c in self.declared if not self.hits.get(c))

    @property
    def undeclared(self) -> list[RuleCase]:
        return sorted(c for c in self.hits if c not in self.declared)

    @property
    def complete(self) -> bool:
        return not self.unfired

    def summary(self) -> dict:
        return {
            "kinds": list(self.kinds),
            "declared": len(self.declared),
            "fired": len(self.declared) - len(self.unfired),
            "unfired": [str(c) for c in self.unfired],
            "hits": {str(c): n for c, n in sorted(self.hits.items())},
        }


DEFAULT_KINDS = tuple(k for k in KIND_NAMES if k != "ArraySwap")


def rule_coverage(
    cases: Sequence[TestCase], kinds: Sequence[str] | None = None, rules: RuleTable = MERGE_RULES
) -> CoverageReport:
    """Replay ``cases`` and count which declared rule cases fired.

    ``kinds`` defaults to the five non-swap kinds, plus ``ArraySwap`` when
    any case performs a swap.
    """
    if kinds is None:
        uses_swap = any(isinstance(op.op, ArraySwap) for c in cases for op in c.client_ops)
        kinds = KIND_NAMES if uses_swap else DEFAULT_KINDS
    with record_rule_cases() as hits:
        for case in cases:
            _replay_one(case, rules)
    return CoverageReport(dict(hits), rules.declared(kinds), tuple(kinds))
