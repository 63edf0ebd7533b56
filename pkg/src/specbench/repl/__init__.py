"""Replication protocol: executable model, simulator and trace checker."""

from .model import (
    ACTION_NAMES,
    FOLLOWER,
    LEADER,
    STUTTER,
    UNBOUNDED,
    ModelBounds,
    NodeState,
    explain,
    initial_state,
    model,
    permits,
)
from .sim import BUGS, Partition, SimConfig, SimResult, Simulator, run
from .trace import ClockWentBackwards, TraceEvent, TraceLogger, read_trace, write_trace
from .tracecheck import (
    BackfillError,
    CheckReport,
    DuplicateTimestampError,
    TraceError,
    backfill_oplog,
    check,
    check_events,
    check_trace_files,
    fold_events,
    order_events,
)
