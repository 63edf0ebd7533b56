"""Array operations and their application semantics."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence, Union

Array = tuple[int, ...]


@dataclass(frozen=True)
class ArraySet:
    ndx: int
    value: int

    def __str__(self):
        return f"ArraySet{{{self.ndx}, {self.value}}}"


@dataclass(frozen=True)
class ArrayInsert:
    ndx: int
    value: int

    def __str__(self):
        return f"ArrayInsert{{{self.ndx}, {self.value}}}"


@dataclass(frozen=True)
class ArrayMove:
    """Remove the element at ``from_ndx`` and reinsert it so that it ends up
    at ``to_ndx`` of the resulting array."""

    from_ndx: int
    to_ndx: int

    def __str__(self):
        return f"ArrayMove{{{self.from_ndx}, {self.to_ndx}}}"


@dataclass(frozen=True)
class ArraySwap:
    ndx1: int
    ndx2: int

    def __str__(self):
        return f"ArraySwap{{{self.ndx1}, {self.ndx2}}}"


@dataclass(frozen=True)
class ArrayErase:
    ndx: int

    def __str__(self):
        return f"ArrayErase{{{self.ndx}}}"


@dataclass(frozen=True)
class ArrayClear:
    def __str__(self):
        return "ArrayClear{}"


ArrayOp = Union[ArraySet, ArrayInsert, ArrayMove, ArraySwap, ArrayErase, ArrayClear]

# Order used to key the merge-rule table.
KINDS: tuple[type, ...] = (ArraySet, ArrayInsert, ArrayMove, ArraySwap, ArrayErase, ArrayClear)
KIND_NAMES = tuple(k.__name__ for k in KINDS)
_BY_NAME = {k.__name__: k for k in KINDS}


@dataclass(frozen=True)
class TaggedOp:
    """An operation plus the origin metadata used for ordering conflicts."""

    op: ArrayOp
    client: int
    seq: int = 1
    timestamp: int = 0
    discarded: bool = False

    @property
    def kind(self) -> str:
        return type(self.op).__name__

    @property
    def key(self) -> tuple[int, int]:
        return (self.client, self.seq)

    def with_op(self, op: ArrayOp) -> TaggedOp:
        return replace(self, op=op)

    def discard(self) -> TaggedOp:
        return replace(self, discarded=True)

    def __str__(self):
        text = str(self.op)
        return f"{text}(discarded)" if self.discarded else text



def _check(cond: bool, op, state):
    if not cond:
        raise IndexError(f"{op} is not valid for an array of length {len(state)}")


def apply(state: Sequence[int], op: TaggedOp | ArrayOp) -> Array:
    """Return the array produced by applying ``op`` to ``state``."""
    if isinstance(op, TaggedOp):
        if op.discarded:
            return tuple(state)
        op = op.op
    arr = list(state)
    n = len(arr)
    if isinstance(op, ArraySet):
        _check(0 <= op.ndx < n, op, arr)
        arr[op.ndx] = op.value
    elif isinstance(op, ArrayInsert):
        _check(0 <= op.ndx <= n, op, arr)
        arr.insert(op.ndx, op.value)
    elif isinstance(op, ArrayMove):
        _check(0 <= op.from_ndx < n and 0 <= op.to_ndx < n, op, arr)
        arr.insert(op.to_ndx, arr.pop(op.from_ndx))
    elif isinstance(op, ArraySwap):
        _check(0 <= op.ndx1 < n and 0 <= op.ndx2 < n, op, arr)
        arr[op.ndx1], arr[op.ndx2] = arr[op.ndx2], arr[op.ndx1]
    elif isinstance(op, ArrayErase):
        _check(0 <= op.ndx < n, op, arr)
        del arr[op.ndx]
    elif isinstance(op, ArrayClear):
        arr = []
    else:
        raise TypeError(f"not an array operation: {op!r}")
    return tuple(arr)


def op_to_record(op: ArrayOp) -> dict:
    return {"kind": type(op).__name__, **op.__dict__}


def op_from_record(record) -> ArrayOp:
    fields = dict(record)
    kind = _BY_NAME[fields.pop("kind")]
    return kind(**fields)


def tagged_to_record(op: TaggedOp) -> dict:
    record = {
        "op": op_to_record(op.op),
        "client": op.client,
        "seq": op.seq,
        "timestamp": op.timestamp,
    }
    if op.discarded:
        record["discarded"] = True
    return record


def tagged_from_record(record) -> TaggedOp:
    return TaggedOp(
        op=op_from_record(record["op"]),
        client=record["client"],
        seq=record.get("seq", 1),
        timestamp=record.get("timestamp", 0),
        discarded=record.get("discarded", False),
    )
