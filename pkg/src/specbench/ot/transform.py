"""Pairwise merge rules for the six array operations.

Each rule takes two concurrent operations and returns the versions each
peer must apply after the other's operation, plus the name of the branch
taken. Rules are keyed by an ordered pair of kinds; the reverse order is
derived by symmetry.
"""

from __future__ import annotations

from collections import Counter
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

from ..mck.budget import NonTermination, NonTerminationError, run_budgeted
from .ops import (
    KIND_NAMES,
    ArrayClear,
    ArrayErase,
    ArrayInsert,
    ArrayMove,
    ArraySet,
    ArraySwap,
    TaggedOp,
)

DEFAULT_BUDGET = 10_000


@dataclass(frozen=True, order=True)
class RuleCase:
    rule: tuple[str, str]
    case_label: str

    def __str__(self):
        return f"{self.rule[0]}x{self.rule[1]}:{self.case_label}"


@dataclass(frozen=True)
class Redispatch:
    """Returned by a rule that rewrote its inputs and wants them merged again."""

    a: TaggedOp
    b: TaggedOp


Rule = Callable[[TaggedOp, TaggedOp], "tuple[TaggedOp, TaggedOp, str] | Redispatch"]


@dataclass(frozen=True)
class RuleTable:
    rules: Mapping[tuple[str, str], Rule]
    cases: Mapping[tuple[str, str], tuple[str, ...]]

    def declared(self, kinds: Sequence[str] | None = None) -> set[RuleCase]:
        allowed = set(kinds) if kinds is not None else set(KIND_NAMES)
        return {
            RuleCase(rule, label)
            for rule, labels in self.cases.items()
            if set(rule) <= allowed
            for label in labels
        }


_RULES: dict[tuple[str, str], Rule] = {}
_CASES: dict[tuple[str, str], tuple[str, ...]] = {}


def merge_rule(left: type, right: type, cases: tuple[str, ...]):
    def register(fn: Rule) -> Rule:
        key = (left.__name__, right.__name__)
        _RULES[key] = fn
        _CASES[key] = cases
        return fn

    return register


_recorder: ContextVar[Counter | None] = ContextVar("rule_case_recorder", default=None)


@contextmanager
def record_rule_cases() -> Iterator[Counter]:
    """Count every :class:`RuleCase` reported by transforms in this block."""
    hits: Counter = Counter()
    token = _recorder.set(hits)
    try:
        yield hits
    finally:
        _recorder.reset(token)


def priority(a: TaggedOp, b: TaggedOp) -> TaggedOp:
    """Last write wins: the greater ``(timestamp, client)`` pair."""
    ka, kb = (a.timestamp, a.client), (b.timestamp, b.client)
    if ka == kb:
        raise ValueError(f"operations {a} and {b} have the same priority")
    return a if ka > kb else b


# -- index arithmetic ---------------------------------------------------------


def _after_move(ndx: int, src: int, dst: int) -> int:
    """Where the element at ``ndx`` ends up after ``ArrayMove(src, dst)``."""
    if ndx == src:
        return dst
    ndx -= ndx > src
    return ndx + (ndx >= dst)


def _after_swap(ndx: int, i: int, k: int) -> int:
    if ndx == i:
        return k
    if ndx == k:
        return i
    return ndx


def _place_two(gap_a: int, gap_b: int, a_first: bool) -> tuple[int, int]:
    """Final indices of two elements inserted into the same base sequence at
    the given gaps; ``a_first`` orders them when the gaps coincide."""
    if gap_a < gap_b or (gap_a == gap_b and a_first):
        return gap_a, gap_b + 1
    return gap_a + 1, gap_b


def _moved(t: TaggedOp, src: int, dst: int) -> TaggedOp:
    return t.with_op(ArrayMove(src, dst))


# -- the 21 rules ---------------------------------------------------------------


@merge_rule(ArraySet, ArraySet, ("same-index-priority", "different-index"))
def _set_set(a, b):
    if a.op.ndx != b.op.ndx:
        return a, b, "different-index"
    if priority(a, b) is a:
        return a, b.discard(), "same-index-priority"
    return a.discard(), b, "same-index-priority"


@merge_rule(ArraySet, ArrayInsert, ("set-shifted", "set-unchanged"))
def _set_insert(s, ins):
    if s.op.ndx >= ins.op.ndx:
        return s.with_op(ArraySet(s.op.ndx + 1, s.op.value)), ins, "set-shifted"
    return s, ins, "set-unchanged"


@merge_rule(ArraySet, ArrayMove, ("set-on-moved-element", "set-shifted", "set-unchanged"))
def _set_move(s, m):
    src, dst = m.op.from_ndx, m.op.to_ndx
    ndx = _after_move(s.op.ndx, src, dst)
    if s.op.ndx == src:
        label = "set-on-moved-element"
    elif ndx != s.op.ndx:
        label = "set-shifted"
    else:
        return s, m, "set-unchanged"
    return s.with_op(ArraySet(ndx, s.op.value)), m, label


@merge_rule(ArraySet, ArraySwap, ("set-on-swapped-element", "set-unchanged"))
def _set_swap(s, w):
    ndx = _after_swap(s.op.ndx, w.op.ndx1, w.op.ndx2)
    if ndx == s.op.ndx:
        return s, w, "set-unchanged"
    return s.with_op(ArraySet(ndx, s.op.value)), w, "set-on-swapped-element"


@merge_rule(ArraySet, ArrayErase, ("same-index-discard", "set-shifted-left", "set-unchanged"))
def _set_erase(set_op, erase_op):
    if set_op.op.ndx == erase_op.op.ndx:
        # Update of a removed element: the erase wins.
        return set_op.discard(), erase_op, "same-index-discard"
    if set_op.op.ndx > erase_op.op.ndx:
        return set_op.with_op(ArraySet(set_op.op.ndx - 1, set_op.op.value)), erase_op, "set-shifted-left"
    return set_op, erase_op, "set-unchanged"


@merge_rule(ArraySet, ArrayClear, ("set-discarded",))
def _set_clear(s, c):
    return s.discard(), c, "set-discarded"


@merge_rule(ArrayInsert, ArrayInsert, ("different-index", "same-index-priority"))
def _insert_insert(a, b):
    i, k = a.op.ndx, b.op.ndx
    if i == k:
        label = "same-index-priority"
        a_first = priority(a, b) is a
    else:
        label = "different-index"
        a_first = i < k
    if a_first:
        return a, b.with_op(ArrayInsert(k + 1, b.op.value)), label
    return a.with_op(ArrayInsert(i + 1, a.op.value)), b, label


@merge_rule(
    ArrayInsert,
    ArrayMove,
    ("insert-before-destination", "insert-at-destination", "insert-after-destination"),
)
def _insert_move(ins, m):
    p, src, dst = ins.op.ndx, m.op.from_ndx, m.op.to_ndx
    gap = p - (src < p)  # insertion gap once the moved element is lifted out
    if gap < dst:
        label, new_p, new_dst = "insert-before-destination", gap, dst + 1
    elif gap == dst:
        label, new_p, new_dst = "insert-at-destination", gap, dst + 1
    else:
        label, new_p, new_dst = "insert-after-destination", gap + 1, dst
    new_src = src + (src >= p)
    return ins.with_op(ArrayInsert(new_p, ins.op.value)), _moved(m, new_src, new_dst), label


@merge_rule(ArrayInsert, ArraySwap, ("swap-unshifted", "swap-partly-shifted", "swap-shifted"))
def _insert_swap(ins, w):
    p = ins.op.ndx
    i, k = w.op.ndx1, w.op.ndx2
    shifted = (i >= p) + (k >= p)
    label = ("swap-unshifted", "swap-partly-shifted", "swap-shifted")[shifted]
    return ins, w.with_op(ArraySwap(i + (i >= p), k + (k >= p))), label


@merge_rule(ArrayInsert, ArrayErase, ("erase-before-insert", "erase-at-or-after-insert"))
def _insert_erase(ins, e):
    p, x = ins.op.ndx, e.op.ndx
    if x < p:
        return ins.with_op(ArrayInsert(p - 1, ins.op.value)), e, "erase-before-insert"
    return ins, e.with_op(ArrayErase(x + 1)), "erase-at-or-after-insert"


@merge_rule(ArrayInsert, ArrayClear, ("insert-discarded",))
def _insert_clear(ins, c):
    return ins.discard(), c, "insert-discarded"


@merge_rule(
    ArrayMove,
    ArrayMove,
    (
        "same-move",
        "same-element-priority",
        "different-gaps",
        "same-gap-agree",
        "same-gap-priority",
    ),
)
def _move_move(a, b):
    f1, t1 = a.op.from_ndx, a.op.to_ndx
    f2, t2 = b.op.from_ndx, b.op.to_ndx
    if f1 == f2:
        if t1 == t2:
            return a.discard(), b.discard(), "same-move"
        if priority(a, b) is a:
            return _moved(a, t2, t1), b.discard(), "same-element-priority"
        return a.discard(), _moved(b, t1, t2), "same-element-priority"
    # A is a's element, B is b's. Work in the base sequence without both.
    g1 = f1 - (f1 > f2)  # A's index once B is lifted out
    g2 = f2 - (f2 > f1)
    gap_a = t1 - (g2 < t1)
    gap_b = t2 - (g1 < t2)
    if gap_a != gap_b:
        label, a_first = "different-gaps", gap_a < gap_b
    else:
        a_first_in_a = g2 >= t1  # order of A and B after applying a alone
        a_first_in_b = g1 < t2
        if a_first_in_a == a_first_in_b:
            label, a_first = "same-gap-agree", a_first_in_a
        else:
            label = "same-gap-priority"
            a_first = a_first_in_a if priority(a, b) is a else a_first_in_b
    final_a, final_b = _place_two(gap_a, gap_b, a_first)
    a_now = g1 + (t2 <= g1)  # A's index after b
    b_now = g2 + (t1 <= g2)
    return _moved(a, a_now, final_a), _moved(b, b_now, final_b), label


@merge_rule(ArrayMove, ArraySwap, ("swap-unrelated", "swap-of-moved-element"))
def _move_swap(m, w):
    src, dst = m.op.from_ndx, m.op.to_ndx
    i, k = w.op.ndx1, w.op.ndx2
    if src not in (i, k) or i == k:
        return m, w.with_op(ArraySwap(_after_move(i, src, dst), _after_move(k, src, dst))), "swap-unrelated"
    # The swap exchanges the moved element with another one; the swap turns
    # into a move of that other element into the moved element's old slot.
    x, y = (i, k) if src == i else (k, i)
    y_lifted = y - (y > x)  # other element's index once the moved one is lifted
    gap_moved = dst - (y_lifted < dst)
    gap_other = x - (y < x)
    final_other, final_moved = _place_two(gap_other, gap_moved, True)
    other_now = y_lifted + (dst <= y_lifted)
    return _moved(m, y, final_moved), _moved(w, other_now, final_other), "swap-of-moved-element"


@merge_rule(ArrayMove, ArrayErase, ("erase-moved-element", "erase-other-element"))
def _move_erase(m, e):
    src, dst, x = m.op.from_ndx, m.op.to_ndx, e.op.ndx
    if x == src:
        return m.discard(), e.with_op(ArrayErase(dst)), "erase-moved-element"
    lifted = x - (x > src)
    new_x = lifted + (lifted >= dst)
    new_dst = dst - (lifted < dst)
    return _moved(m, src - (src > x), new_dst), e.with_op(ArrayErase(new_x)), "erase-other-element"


@merge_rule(ArrayMove, ArrayClear, ("move-discarded",))
def _move_clear(m, c):
    return m.discard(), c, "move-discarded"


@merge_rule(ArraySwap, ArraySwap, ("same-pair", "swaps-compose"))
def _swap_swap(a, b):
    pa = {a.op.ndx1, a.op.ndx2}
    pb = {b.op.ndx1, b.op.ndx2}
    if pa == pb:
        return a.discard(), b.discard(), "same-pair"
    # The loser is applied unchanged; the winner follows its elements.
    if priority(a, b) is a:
        i, k = b.op.ndx1, b.op.ndx2
        return a.with_op(ArraySwap(_after_swap(a.op.ndx1, i, k), _after_swap(a.op.ndx2, i, k))), b, "swaps-compose"
    i, k = a.op.ndx1, a.op.ndx2
    return a, b.with_op(ArraySwap(_after_swap(b.op.ndx1, i, k), _after_swap(b.op.ndx2, i, k))), "swaps-compose"


@merge_rule(ArraySwap, ArrayErase, ("erase-swapped-element", "erase-other-element"))
def _swap_erase(w, e):
    i, k, x = w.op.ndx1, w.op.ndx2, e.op.ndx
    if x not in (i, k):
        return w.with_op(ArraySwap(i - (i > x), k - (k > x))), e, "erase-other-element"
    if i == k:
        # A swap of the erased element with itself has nothing left to do.
        return w.discard(), e, "erase-swapped-element"
    y = k if x == i else i
    # The survivor moves into the erased element's slot.
    return (
        _moved(w, y - (y > x), x - (y < x)),
        e.with_op(ArrayErase(y)),
        "erase-swapped-element",
    )


@merge_rule(ArraySwap, ArrayClear, ("swap-discarded",))
def _swap_clear(w, c):
    return w.discard(), c, "swap-discarded"


@merge_rule(ArrayErase, ArrayErase, ("same-index", "different-index"))
def _erase_erase(a, b):
    i, k = a.op.ndx, b.op.ndx
    if i == k:
        return a.discard(), b.discard(), "same-index"
    return a.with_op(ArrayErase(i - (i > k))), b.with_op(ArrayErase(k - (k > i))), "different-index"


@merge_rule(ArrayErase, ArrayClear, ("erase-discarded",))
def _erase_clear(e, c):
    return e.discard(), c, "erase-discarded"


@merge_rule(ArrayClear, ArrayClear, ("both-discarded",))
def _clear_clear(a, b):
    return a.discard(), b.discard(), "both-discarded"


MERGE_RULES = RuleTable(dict(_RULES), dict(_CASES))


# -- driver ---------------------------------------------------------------------


def _rule_key(a: TaggedOp, b: TaggedOp) -> tuple[str, str]:
    ka, kb = a.kind, b.kind
    return (ka, kb) if KIND_NAMES.index(ka) <= KIND_NAMES.index(kb) else (kb, ka)


def transform_steps(a: TaggedOp, b: TaggedOp, rules: RuleTable = MERGE_RULES):
    """Generator form of :func:`transform`; yields once per rule dispatch."""
    while True:
        yield (a, b)
        key = _rule_key(a, b)
        if a.discarded or b.discarded:
            return a, b, RuleCase(key, "discarded-input")
        flipped = (a.kind, b.kind) != key
        fn = rules.rules.get(key)
        if fn is None:
            raise KeyError(f"no merge rule for {key}")
        out = fn(b, a) if flipped else fn(a, b)
        if isinstance(out, Redispatch):
            a, b = (out.b, out.a) if flipped else (out.a, out.b)
            continue
        x, y, label = out
        if flipped:
            x, y = y, x
        return x, y, RuleCase(key, label)


def transform(
    a: TaggedOp,
    b: TaggedOp,
    rules: RuleTable = MERGE_RULES,
    budget: int = DEFAULT_BUDGET,
) -> tuple[TaggedOp, TaggedOp]:
    """Merge two concurrent operations.

    Returns ``(a2, b2)`` such that applying ``b`` then ``a2`` gives the same
    array as applying ``a`` then ``b2``.
    """
    result = run_budgeted(transform_steps(a, b, rules), budget, inputs=(a, b))
    if isinstance(result, NonTermination):
        raise NonTerminationError(result)
    x, y, case = result
    hits = _recorder.get()
    if hits is not None:
        hits[case] += 1
    return x, y


def transform_window(
    incoming: Sequence[TaggedOp],
    window: Sequence[TaggedOp],
    rules: RuleTable = MERGE_RULES,
    budget: int = DEFAULT_BUDGET,
) -> tuple[list[TaggedOp], list[TaggedOp]]:
    """Rebase ``incoming`` over the concurrent ``window`` and vice versa.

    The first list is what the window's owner must apply; the second is what
    the owner of ``incoming`` must apply. Discarded operations stay in place.
    """
    inc = list(incoming)
    win = list(window)
    for i, op in enumerate(inc):
        for j, other in enumerate(win):
            op, win[j] = transform(op, other, rules, budget)
        inc[i] = op
    return inc, win
