import pytest

from specbench.repl.model import FOLLOWER, LEADER, NodeState, initial_state
from specbench.repl.sim import SimConfig, run
from specbench.repl.trace import TraceEvent, write_trace
from specbench.repl.tracecheck import (
    BackfillError,
    DuplicateTimestampError,
    TraceError,
    backfill_oplog,
    check,
    check_events,
    check_trace_files,
    fold_events,
    order_events,
)

F, L = FOLLOWER, LEADER


def ev(ts, node, action, role=F, term=0, cp=(0, 0), oplog=()):
    return TraceEvent(ts, node, action, role, term, cp, tuple(oplog))


def node(role=F, term=0, cp=(0, 0), oplog=()):
    return NodeState(role, term, cp[0], cp[1], tuple(oplog))


# -- ordering --


def test_order_interleaved_streams():
    a = [ev(1, 1, "x"), ev(4, 1, "x")]
    b = [ev(2, 2, "x"), ev(6, 2, "x")]
    c = [ev(3, 3, "x"), ev(5, 3, "x")]
    assert [e.ts_ms for e in order_events([a, b, c])] == [1, 2, 3, 4, 5, 6]


def test_duplicate_timestamp_names_both_events():
    with pytest.raises(DuplicateTimestampError) as exc:
        order_events([[ev(3, 1, "ClientWrite")], [ev(3, 2, "AppendOplog")]])
    assert "node 1 ClientWrite" in str(exc.value)
    assert "node 2 AppendOplog" in str(exc.value)


def test_unsorted_stream_rejected():
    with pytest.raises(TraceError):
        order_events([[ev(3, 1, "x"), ev(2, 1, "x")]])


def test_empty_input():
    assert order_events([]) == []
    assert order_events([[], []]) == []


# -- folding --


def test_new_leader_demotes_old():
    start = (node(L, 1), node(F, 1), node(F, 1))
    states = fold_events(start, [ev(1, 2, "BecomePrimaryByMagic", L, 2)])
    after = states[-1]
    assert [m.role for m in after] == [F, L, F]
    assert [m.term for m in after] == [1, 2, 1]


def test_repeated_event_is_a_stutter():
    start = (node(L, 1), node(), node())
    states = fold_events(start, [ev(1, 1, "Stepdown", L, 1)])
    assert states[0] == states[1]


def test_commit_point_only_event():
    start = (node(L, 1, oplog=[1]), node(F, 1, oplog=[1]), node())
    (_, after) = fold_events(start, [ev(1, 2, "LearnCommitPointWithTermCheck", F, 1, (1, 1), [1])])
    assert after[1].commit_point == (1, 1)
    assert after[0] == start[0] and after[2] == start[2]


def test_leader_reporting_follower_changes_only_itself():
    start = (node(L, 2), node(F, 2), node(F, 1))
    (_, after) = fold_events(start, [ev(1, 1, "Stepdown", F, 2)])
    assert [m.role for m in after] == [F, F, F]
    assert after[1:] == start[1:]


def test_unknown_node():
    with pytest.raises(TraceError):
        fold_events(initial_state(3), [ev(1, 4, "x")])


# -- backfill --


def test_backfill_fills_missing_prefix():
    states = [(node(L, 2, oplog=[1, 2]), node(F, 2, oplog=[None, 2]), node(F, 2, oplog=[1]))]
    filled, log = backfill_oplog(states)
    assert filled[0][1].oplog == (1, 2)
    assert [(f.node, f.index, f.term) for f in log] == [(2, 1, 1)]


def test_backfill_without_gaps_is_identity():
    states = [initial_state(3), (node(L, 1, oplog=[1]), node(), node())]
    filled, log = backfill_oplog(states)
    assert filled == states and log == []


def test_backfill_conflicting_donors():
    states = [(node(L, 3, oplog=[1, 3]), node(F, 3, oplog=[None, 3]), node(F, 3, oplog=[2, 3]))]
    with pytest.raises(BackfillError, match="disagree"):
        backfill_oplog(states)


def test_backfill_without_donor():
    states = [(node(L, 2, oplog=[1]), node(F, 2, oplog=[None, 2]), node())]
    with pytest.raises(BackfillError, match="no node"):
        backfill_oplog(states)


def test_backfill_reuses_earlier_fill():
    donor = node(L, 2, oplog=[1, 2])
    states = [
        (donor, node(F, 2, oplog=[None, 2]), node()),
        (node(L, 3, oplog=[3]), node(F, 2, oplog=[None, 2]), node()),
    ]
    filled, log = backfill_oplog(states)
    assert filled[1][1].oplog == (1, 2)
    assert len(log) == 1


# -- checking --


def test_single_state_passes():
    r = check([initial_state(3)])
    assert r.ok and r.steps_checked == 0


def test_wrong_initial_state_fails_at_step_zero():
    r = check([(node(L, 1), node(), node())])
    assert not r.ok and r.failure.step == 0


def test_stutters_are_counted():
    s0 = initial_state(3)
    s1 = (node(L, 1), node(), node())
    r = check([s0, s1, s1, s1])
    assert r.ok
    assert (r.steps_checked, r.stutter_steps) == (3, 2)


def test_failure_reports_step_and_nearest_action():
    s0 = initial_state(3)
    s1 = (node(L, 1), node(), node())
    s2 = (node(L, 1, (1, 1), [1]), node(), node())  # write and commit in one step
    r = check([s0, s1, s2])
    assert not r.ok
    assert r.failure.step == 2
    assert r.failure.before == s1 and r.failure.after == s2
    assert r.failure.diagnostics
    text = r.summary()
    assert "step 2" in text and "nearest" in text


def test_labels_must_match():
    s0 = initial_state(3)
    s1 = (node(L, 1), node(), node())
    assert check([s0, s1], ["BecomePrimaryByMagic"]).ok
    r = check([s0, s1], ["ClientWrite"])
    assert not r.ok
    assert r.failure.diagnostics[0].label.startswith("ClientWrite")


def test_labels_length_checked():
    with pytest.raises(ValueError):
        check([initial_state(3)], ["x"])


def test_missing_entries_need_backfill():
    events = [ev(1, 1, "BecomePrimaryByMagic", L, 1), ev(2, 1, "ClientWrite", L, 1, oplog=[None])]
    with pytest.raises(TraceError):
        check_events(events)


def test_hand_written_trace():
    events = [
        ev(1, 1, "BecomePrimaryByMagic", L, 1),
        ev(2, 1, "ClientWrite", L, 1, oplog=[1]),
        ev(3, 2, "UpdateTermThroughHeartbeat", F, 1),
        ev(4, 2, "AppendOplog", F, 1, oplog=[1]),
        ev(5, 1, "AdvanceCommitPoint", L, 1, (1, 1), [1]),
        ev(6, 2, "LearnCommitPointWithTermCheck", F, 1, (1, 1), [1]),
    ]
    r = check_events(events, num_nodes=3)
    assert r.ok, r.summary()
    assert r.steps_checked == 6


def test_trace_files_round_trip(tmp_path):
    result = run(SimConfig(seed=2, steps=300))
    by_node = {}
    for e in result.events:
        by_node.setdefault(e.node, []).append(e)
    paths = []
    for n, events in by_node.items():
        paths.append(tmp_path / f"node{n}.jsonl")
        write_trace(events, paths[-1])
    r = check_trace_files(paths, num_nodes=3)
    assert r.ok
    assert r.steps_checked == len(result.events)


def test_twenty_clean_runs_pass():
    for seed in range(1, 21):
        result = run(SimConfig(seed=seed, steps=1000))
        r = check_events(result.events)
        assert r.ok, (seed, r.summary())


def test_fold_is_deterministic():
    events = run(SimConfig(seed=9, steps=200)).events
    assert fold_events(initial_state(3), events) == fold_events(initial_state(3), events)
