import io
import itertools

import pytest

from specbench.repl.sim import BUGS, Partition, SimConfig, Simulator, run
from specbench.repl.trace import ClockWentBackwards, TraceEvent, TraceLogger, read_trace
from specbench.repl.model import NodeState
from specbench.repl.tracecheck import check_events


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(steps=0)
    with pytest.raises(ValueError):
        SimConfig(inject="split-brain")


def test_partition_parse():
    p = Partition.parse("10:20:1-2,1-3")
    assert (p.start, p.end) == (10, 20)
    assert p.cut == {frozenset((1, 2)), frozenset((1, 3))}
    assert Partition.isolate(1, 10, 20, 3) == p


def test_same_config_gives_identical_trace_bytes(tmp_path):
    cfg = SimConfig(seed=7, steps=300)
    run(cfg, tmp_path / "a.jsonl")
    run(cfg, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_different_seeds_differ():
    a = run(SimConfig(seed=1, steps=200)).events
    b = run(SimConfig(seed=2, steps=200)).events
    assert a != b


def test_trace_file_field_order(tmp_path):
    run(SimConfig(seed=1, steps=5), tmp_path / "t.jsonl")
    first = (tmp_path / "t.jsonl").read_text().splitlines()[0]
    assert first.startswith('{"ts_ms":1,"node":')
    keys = ["ts_ms", "node", "action", "role", "term", "commitPoint", "oplog"]
    positions = [first.index(f'"{k}"') for k in keys]
    assert positions == sorted(positions)
    assert read_trace(tmp_path / "t.jsonl")[0].ts_ms == 1


def test_clean_run_seed_1_passes_trace_check():
    result = run(SimConfig(seed=1, steps=1000))
    assert result.injections == 0
    assert result.stopped_early is None
    assert check_events(result.events).ok


def test_summary_counts_and_convergence():
    result = run(SimConfig(seed=1, steps=1000))
    s = result.summary()
    assert sum(s["per_action"].values()) == s["events"] == len(result.events)
    assert s["settled"]
    assert s["commit_points_converged"]
    assert s["leader"] is not None


def test_logical_timestamps_are_ticks():
    events = run(SimConfig(seed=3, steps=500)).events
    assert [e.ts_ms for e in events] == list(range(1, len(events) + 1))


def test_partition_forces_a_rollback():
    # Cut the leader off from everyone else for a while, then heal.
    for seed in range(1, 6):
        schedule = tuple(Partition.isolate(n, 100 * n, 100 * n + 80, 3) for n in (1, 2, 3))
        result = run(SimConfig(seed=seed, steps=600, partition_schedule=schedule))
        assert result.per_action["RollbackOplog"] >= 1
        assert check_events(result.events).ok


def test_partition_masks_cross_node_actions():
    schedule = (Partition(0, 300, frozenset({frozenset((1, 2)), frozenset((1, 3))})),)
    sim = Simulator(SimConfig(seed=4, steps=300, partition_schedule=schedule, settle=False))
    result = sim.run()
    # Node 1 can neither win an election nor receive anything.
    assert all(e.node != 1 for e in result.events)


def test_empty_cluster_cannot_elect_without_quorum():
    everyone_cut = Partition(0, 10, frozenset(frozenset(p) for p in itertools.combinations((1, 2, 3), 2)))
    result = run(SimConfig(seed=1, steps=10, partition_schedule=(everyone_cut,), settle=False))
    assert result.stopped_early == "no action enabled at step 0"
    assert result.events == []


def test_no_bug_means_no_injection():
    result = run(SimConfig(seed=5, steps=300))
    assert result.injections == 0 and result.injected_at == []


@pytest.mark.parametrize("bug", BUGS)
def test_injected_bug_is_caught_at_injection(bug):
    hits = 0
    for seed in range(1, 8):
        result = run(SimConfig(seed=seed, steps=1000, inject=bug))
        if not result.injections:
            continue
        hits += 1
        report = check_events(result.events)
        assert not report.ok
        first = result.injected_at[0]
        assert first <= report.failure.step <= first + 1
    assert hits >= 5


def test_log_recent_only_needs_backfill():
    cfg = SimConfig(seed=3, steps=400, log_recent_only=(2,))
    events = run(cfg).events
    assert any(None in e.oplog for e in events)
    report = check_events(events, backfill=True)
    assert report.ok
    assert report.fills


# -- logger --


def _state():
    return NodeState()


def test_logger_logical_ticks():
    log = TraceLogger()
    a = log.log_event(1, "Stepdown", _state())
    b = log.log_event(2, "Stepdown", _state())
    assert (a.ts_ms, b.ts_ms) == (1, 2)


def test_logger_writes_sink():
    sink = io.StringIO()
    TraceLogger(sink=sink).log_event(1, "Stepdown", _state())
    assert sink.getvalue().startswith('{"ts_ms":1,')


def test_wall_logger_waits_for_clock_to_move():
    ticks = iter([1000, 1000, 1000, 1000, 1001, 1001, 1001, 1003])
    slept = []
    log = TraceLogger("wall", clock=lambda: next(ticks), sleep=slept.append)
    a = log.log_event(1, "Stepdown", _state())
    b = log.log_event(1, "Stepdown", _state())
    assert a.ts_ms == 1 and b.ts_ms == 3
    assert len(slept) == 3


def test_wall_logger_real_clock_is_strictly_increasing():
    log = TraceLogger("wall")
    stamps = [log.log_event(1, "Stepdown", _state()).ts_ms for _ in range(5)]
    assert all(a < b for a, b in zip(stamps, stamps[1:]))


def test_wall_logger_aborts_on_backwards_clock():
    ticks = iter([1000, 1005, 1004])
    log = TraceLogger("wall", clock=lambda: next(ticks), sleep=lambda s: None)
    with pytest.raises(ClockWentBackwards, match="Clock went backwards"):
        log.log_event(1, "Stepdown", _state())


def test_unknown_clock_mode():
    with pytest.raises(ValueError):
        TraceLogger("sundial")


def test_trace_event_round_trip():
    e = TraceEvent(5, 2, "ClientWrite", "Leader", 3, (2, 1), (1, None, 3))
    assert TraceEvent.from_record(e.to_record()) == e
