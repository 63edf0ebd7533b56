import json
import subprocess
import sys

import pytest

from specbench.cli import build_parser, main, parse_args


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_tests_defaults(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "ot", "gen-tests", "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["count"] == 4913
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["count"] == 4913
    code, out, _ = run_cli(capsys, "ot", "replay", "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["failed"] == 0
    code, out, _ = run_cli(capsys, "ot", "coverage", "--cases", str(tmp_path))
    assert code == 0 and json.loads(out)["unfired"] == []


def test_ot_explore(tmp_path, capsys):
    code, out, err = run_cli(capsys, "ot", "explore", "--clients", "2", "--out", str(tmp_path), "--dot")
    assert code == 0
    stats = json.loads(out)
    assert stats["terminal_paths"] == 17 * 17
    assert stats["violations"] == 0
    assert (tmp_path / "ot-model.dot").read_text().startswith("strict digraph")
    assert "no violations" in err


def test_source_template_output(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "ot", "gen-tests", "--clients", "2", "--format", "source-template", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "transform_tests_00000.cpp").exists()


def test_simulate_then_check(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "repl", "simulate", "--seed", "1", "--steps", "1000", "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["injections"] == 0
    code, out, err = run_cli(capsys, "repl", "check-trace", "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["verdict"] == "pass"
    assert err.startswith("pass")


def test_injected_bug_fails_check(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "repl", "simulate", "--inject", "minority-commit", "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["injections"] > 0
    code, out, err = run_cli(capsys, "repl", "check-trace", str(tmp_path / "trace.jsonl"))
    assert code == 1
    assert json.loads(out)["verdict"] == "fail"
    assert "no action explains" in err


def test_backfill_flag(tmp_path, capsys):
    run_cli(capsys, "repl", "simulate", "--steps", "300", "--log-recent-only", "2", "--out", str(tmp_path))
    assert run_cli(capsys, "repl", "check-trace", "--out", str(tmp_path))[0] == 1
    code, out, _ = run_cli(capsys, "repl", "check-trace", "--backfill-oplog", "--out", str(tmp_path))
    assert code == 0 and json.loads(out)["backfilled_entries"] > 0


def test_repl_check_small_bounds(capsys):
    code, out, _ = run_cli(capsys, "repl", "check", "--max-term", "2", "--max-oplog", "1")
    assert code == 0
    assert json.loads(out)["violations"] == 0


def test_partition_flag(tmp_path, capsys):
    code, out, _ = run_cli(
        capsys, "repl", "simulate", "--steps", "400", "--partition", "50:150:1-2,1-3", "--out", str(tmp_path)
    )
    assert code == 0
    assert run_cli(capsys, "repl", "simulate", "--partition", "oops", "--out", str(tmp_path))[0] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["ot", "gen-tests", "--bogus"],
        ["nope"],
        [],
        ["repl", "simulate", "--inject", "split-brain"],
        ["repl", "simulate", "--steps", "0"],
        ["ot", "explore", "--clients", "0"],
    ],
)
def test_usage_errors_exit_2(argv, capsys, tmp_path):
    assert main(argv + (["--out", str(tmp_path)] if len(argv) > 1 and "--bogus" not in argv else [])) == 2


def test_missing_trace_file_is_usage_error(tmp_path, capsys):
    assert main(["repl", "check-trace", str(tmp_path / "none.jsonl")]) == 2


def test_env_var_sets_default_out(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SPECBENCH_OUT", str(tmp_path / "env"))
    assert main(["repl", "simulate", "--steps", "20"]) == 0
    assert (tmp_path / "env" / "trace.jsonl").exists()


def test_config_file_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 9, "steps": 50}))
    args = parse_args(["--config", str(cfg), "repl", "simulate"])
    assert (args.seed, args.steps) == (9, 50)
    args = parse_args(["--config", str(cfg), "repl", "simulate", "--seed", "3"])
    assert (args.seed, args.steps) == (3, 50)


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["--config", str(cfg), "repl", "simulate"]) == 2


def _help(*path):
    parser = build_parser()
    sub = parser
    for name in path:
        sub = next(a for a in sub._actions if a.__class__.__name__ == "_SubParsersAction").choices[name]
    return sub.format_help()


def test_help_lists_flags_and_defaults():
    text = _help("ot", "gen-tests")
    for flag in ("--out", "--clients", "--array-len", "--include-swap", "--format"):
        assert flag in text
    assert "(default: 3)" in text
    text = _help("repl", "check")
    for flag in ("--nodes", "--max-term", "--max-oplog"):
        assert flag in text
    assert text.count("(default: 3)") == 3
    text = _help("repl", "simulate")
    for flag in ("--seed", "--steps", "--inject", "--nodes"):
        assert flag in text
    assert "--backfill-oplog" in _help("repl", "check-trace")


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "specbench.cli", "repl", "simulate", "--steps", "10", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["events"] >= 1
