"""Operational transformation for arrays: ops, merge rules, the sync model
and test generation from it."""

from .ops import (
    ArrayClear,
    ArrayErase,
    ArrayInsert,
    ArrayMove,
    ArraySet,
    ArraySwap,
    TaggedOp,
    apply,
)
from .syncmodel import SyncParams, SyncState, model, op_universe
from .testgen import TestCase, emit, generate, load_cases, replay, rule_coverage
from .transform import MERGE_RULES, RuleCase, RuleTable, priority, transform, transform_window
