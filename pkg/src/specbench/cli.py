"""Command-line entry point.

Exit status: 0 success, 1 violation or failed conformance, 2 usage error.
Structured results go to stdout as JSON; human-readable summaries to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .mck import Limits, Violation, explore, export_dot
from .ot import syncmodel, testgen
from .repl.model import ModelBounds
from .repl.model import model as repl_model
from .repl.model import to_record as repl_to_record
from .repl.sim import BUGS, Partition, SimConfig, run
from .repl.tracecheck import TraceError, check_trace_files

OUT_ENV = "SPECBENCH_OUT"
TRACE_NAME = "trace.jsonl"


class UsageError(Exception):
    pass


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit_json(record) -> None:
    print(json.dumps(record, indent=2, sort_keys=True))


def _out_dir(args) -> Path:
    return Path(args.out)


# -- ot ---------------------------------------------------------------------------------


def _sync_params(args) -> syncmodel.SyncParams:
    if args.clients < 1 or args.array_len < 0:
        raise UsageError("--clients must be >= 1 and --array-len >= 0")
    return syncmodel.SyncParams(
        num_clients=args.clients,
        initial_array=tuple(range(1, args.array_len + 1)),
        exclude_swap=not args.include_swap,
    )


def _report_violation(v: Violation, to_record) -> int:
    _say(str(v))
    _emit_json(
        {
            "violation": v.invariant_name,
            "path": [{"action": label, "state": to_record(s)} for label, s in v.path],
            "stats": v.stats.as_dict(),
        }
    )
    return 1


def cmd_ot_explore(args) -> int:
    params = _sync_params(args)
    definition = syncmodel.model(params)
    result = explore(definition)
    if isinstance(result, Violation):
        return _report_violation(result, syncmodel.to_record)
    stats = result.stats.as_dict()
    stats["terminal_paths"] = result.count_terminal_paths()
    stats["violations"] = 0
    if args.dot:
        out = _out_dir(args)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ot-model.dot").write_text(export_dot(result), encoding="utf-8")
    _emit_json(stats)
    _say(f"explored {stats['distinct_states']} states, {stats['terminal_paths']} terminal behaviours, no violations")
    return 0


def cmd_ot_gen_tests(args) -> int:
    params = _sync_params(args)
    try:
        cases = testgen.generate(params=params)
    except testgen.GenerationError as exc:
        _say(str(exc))
        return 1
    template = Path(args.template).read_text(encoding="utf-8") if args.template else None
    out = _out_dir(args)
    files = testgen.emit(cases, out, format=args.format, template=template, params=params.as_record())
    _emit_json({"count": len(cases), "format": args.format, "files": [str(p) for p in files]})
    _say(f"wrote {len(cases)} test cases to {out}")
    return 0


def _cases_dir(args) -> Path:
    return Path(args.cases) if args.cases else _out_dir(args)


def cmd_ot_replay(args) -> int:
    cases, _ = testgen.load_cases(_cases_dir(args))
    report = testgen.replay(cases)
    _emit_json(report.summary())
    _say(f"replayed {len(report.results)} cases: {report.passed} passed, {len(report.failed)} failed")
    for r in report.failed[:10]:
        _say(f"  case {r.id}: {r.failure}")
    return 0 if report.ok else 1


def cmd_ot_coverage(args) -> int:
    cases, _ = testgen.load_cases(_cases_dir(args))
    report = testgen.rule_coverage(cases)
    _emit_json(report.summary())
    fired = len(report.declared) - len(report.unfired)
    _say(f"rule coverage: {fired}/{len(report.declared)} declared cases fired")
    for c in report.unfired:
        _say(f"  never fired: {c}")
    return 0 if report.complete else 1


# -- repl -------------------------------------------------------------------------------


def cmd_repl_check(args) -> int:
    bounds = ModelBounds(args.nodes, args.max_term, args.max_oplog)
    result = explore(repl_model(bounds), Limits(), keep_edges=args.dot)
    if isinstance(result, Violation):
        return _report_violation(result, repl_to_record)
    if args.dot:
        out = _out_dir(args)
        out.mkdir(parents=True, exist_ok=True)
        (out / "repl-model.dot").write_text(export_dot(result, repl_to_record), encoding="utf-8")
    stats = result.stats.as_dict()
    stats["violations"] = 0
    _emit_json(stats)
    _say(f"explored {stats['distinct_states']} states, {stats['transitions']} transitions, no violations")
    return 0


def cmd_repl_simulate(args) -> int:
    try:
        schedule = tuple(Partition.parse(p) for p in args.partition or ())
    except ValueError as exc:
        raise UsageError(f"bad --partition: {exc}") from exc
    config = SimConfig(
        seed=args.seed,
        steps=args.steps,
        num_nodes=args.nodes,
        partition_schedule=schedule,
        inject=args.inject,
        clock_mode=args.clock,
        log_recent_only=tuple(args.log_recent_only or ()),
    )
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / TRACE_NAME
    result = run(config, path)
    summary = result.summary()
    summary["trace"] = str(path)
    _emit_json(summary)
    _say(f"wrote {len(result.events)} events to {path}")
    if result.stopped_early:
        _say(f"stopped early: {result.stopped_early}")
    return 0


def cmd_repl_check_trace(args) -> int:
    paths = args.traces or [str(_out_dir(args) / TRACE_NAME)]
    try:
        report = check_trace_files(paths, num_nodes=args.nodes, backfill=args.backfill_oplog)
    except TraceError as exc:
        _say(f"trace rejected: {exc}")
        _emit_json({"verdict": "fail", "error": str(exc)})
        return 1
    _emit_json(report.as_dict())
    _say(report.summary())
    return 0 if report.ok else 1


# -- parser ------------------------------------------------------------------------------


def _add_ot_flags(p):
    p.add_argument("--clients", type=int, default=3, help="number of clients")
    p.add_argument("--array-len", type=int, default=3, help="initial array is [1..N]")
    p.add_argument("--include-swap", action="store_true", help="add ArraySwap to each client's op universe")


def _add_out(p):
    p.add_argument(
        "--out",
        default=os.environ.get(OUT_ENV, "specbench-out"),
        help=f"output directory (env {OUT_ENV})",
    )


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="specbench", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--config", help="JSON file of flag defaults (flags still win)")
    top = parser.add_subparsers(dest="area", required=True)

    ot = top.add_parser("ot", help="array OT model, test generation and replay", formatter_class=fmt)
    ot_cmds = ot.add_subparsers(dest="command", required=True)

    p = ot_cmds.add_parser("explore", help="exhaustively check the sync model", formatter_class=fmt)
    _add_ot_flags(p)
    _add_out(p)
    p.add_argument("--dot", action="store_true", help="also write the state graph as DOT under --out")
    p.set_defaults(func=cmd_ot_explore)

    p = ot_cmds.add_parser("gen-tests", help="generate one test case per terminal behaviour", formatter_class=fmt)
    _add_ot_flags(p)
    _add_out(p)
    p.add_argument("--format", choices=testgen.FORMATS, default="neutral", help="output format")
    p.add_argument("--template", help="Jinja2 template for --format source-template")
    p.set_defaults(func=cmd_ot_gen_tests)

    for name, func, text in (
        ("replay", cmd_ot_replay, "replay a generated suite against the merge rules"),
        ("coverage", cmd_ot_coverage, "report which merge-rule cases a suite exercises"),
    ):
        p = ot_cmds.add_parser(name, help=text, formatter_class=fmt)
        _add_out(p)
        p.add_argument("--cases", help="suite directory (defaults to --out)")
        p.set_defaults(func=func)

    repl = top.add_parser("repl", help="replication model, simulator and trace checker", formatter_class=fmt)
    repl_cmds = repl.add_subparsers(dest="command", required=True)

    p = repl_cmds.add_parser("check", help="exhaustively check the bounded replication model", formatter_class=fmt)
    p.add_argument("--nodes", type=int, default=3, help="replica set size")
    p.add_argument("--max-term", type=int, default=3, help="largest term explored")
    p.add_argument("--max-oplog", type=int, default=3, help="longest oplog explored")
    _add_out(p)
    p.add_argument("--dot", action="store_true", help="also write the state graph as DOT under --out")
    p.set_defaults(func=cmd_repl_check)

    p = repl_cmds.add_parser("simulate", help="run the seeded replica-set simulator", formatter_class=fmt)
    p.add_argument("--seed", type=int, default=1, help="PRNG seed")
    p.add_argument("--steps", type=int, default=1000, help="number of simulated steps")
    p.add_argument("--nodes", type=int, default=3, help="replica set size")
    p.add_argument("--inject", choices=BUGS, help="non-conformant behaviour to inject")
    p.add_argument(
        "--partition",
        action="append",
        metavar="START:END:A-B[,C-D]",
        help="cut node pairs for steps [START, END); repeatable",
    )
    p.add_argument("--clock", choices=("logical", "wall"), default="logical", help="timestamp source")
    p.add_argument(
        "--log-recent-only", type=int, nargs="*", metavar="NODE", help="nodes that log only their newest oplog entry"
    )
    _add_out(p)
    p.set_defaults(func=cmd_repl_simulate)

    p = repl_cmds.add_parser("check-trace", help="check trace files against the replication model", formatter_class=fmt)
    p.add_argument("traces", nargs="*", help=f"trace files (defaults to --out/{TRACE_NAME})")
    p.add_argument("--nodes", type=int, help="replica set size (inferred from the trace when omitted)")
    p.add_argument("--backfill-oplog", action="store_true", help="fill unlogged oplog entries from other nodes")
    _add_out(p)
    p.set_defaults(func=cmd_repl_check_trace)
    return parser


def _leaf(parser: argparse.ArgumentParser, args) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # area
        area = action.choices[args.area]
    for action in area._subparsers._group_actions:  # command
        return action.choices[args.command]
    raise AssertionError("unreachable")


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read --config: {exc}")
        if not isinstance(config, dict):
            parser.error("--config must hold a JSON object")
        leaf = _leaf(parser, args)
        known = {a.dest for a in leaf._actions}
        config = {k.replace("-", "_"): v for k, v in config.items()}
        unknown = sorted(set(config) - known)
        if unknown:
            parser.error(f"unknown keys in --config: {', '.join(unknown)}")
        leaf.set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        _say(f"error: {exc}")
        return 2
    except OSError as exc:
        _say(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
