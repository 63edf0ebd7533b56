"""Client/server synchronisation model explored by the checker.

Clients each perform one local operation, in ascending ID order, and then
merge with the server round-robin (again in ascending ID order) until no
peer has anything left to exchange.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

from ..mck import ModelDefinition
from .ops import (
    Array,
    ArrayClear,
    ArrayErase,
    ArrayInsert,
    ArrayMove,
    ArrayOp,
    ArraySet,
    ArraySwap,
    TaggedOp,
    apply,
    tagged_from_record,
    tagged_to_record,
)
from .transform import DEFAULT_BUDGET, MERGE_RULES, RuleTable, transform_window


@dataclass(frozen=True)
class PeerState:
    """A peer's array and history.

    For a client, ``last_integrated`` is how many server history entries it
    has merged and ``unsent`` how many trailing local entries the server has
    not seen yet. The server leaves both at zero.
    """

    array: Array
    history: tuple[TaggedOp, ...] = ()
    last_integrated: int = 0
    unsent: int = 0

    def seen(self) -> frozenset[tuple[int, int]]:
        return frozenset(op.key for op in self.history)


@dataclass(frozen=True)
class SyncState:
    initial_array: Array
    server: PeerState
    clients: tuple[PeerState, ...]
    acted: int = 0  # clients 1..acted have performed their local op
    merge_cursor: int = 0  # 0-based index of the next client to try merging

    @property
    def peers(self) -> tuple[PeerState, ...]:
        return (self.server, *self.clients)

    def has_pending(self, c: int) -> bool:
        client = self.clients[c]
        return client.unsent > 0 or client.last_integrated < len(self.server.history)

    def is_terminal(self) -> bool:
        return self.acted == len(self.clients) and not any(
            self.has_pending(c) for c in range(len(self.clients))
        )


@dataclass(frozen=True)
class SyncParams:
    num_clients: int = 3
    initial_array: Array = (1, 2, 3)
    exclude_swap: bool = True
    # Fixed per-client operation choices; ``None`` means the full universe.
    universe: tuple[ArrayOp, ...] | None = None
    rules: RuleTable = field(default=MERGE_RULES, compare=False)
    budget: int = DEFAULT_BUDGET

    def as_record(self) -> dict:
        return {
            "num_clients": self.num_clients,
            "initial_array": list(self.initial_array),
            "exclude_swap": self.exclude_swap,
        }


def client_value(client: int) -> int:
    """Fresh element value written by ``client`` (IDs start at 1)."""
    return 3 + client


def op_universe(array_len: int, exclude_swap: bool = True, client: int = 1) -> list[ArrayOp]:
    if array_len < 1:
        raise ValueError("array_len must be at least 1")
    value = client_value(client)
    ops: list[ArrayOp] = [ArraySet(i, value) for i in range(array_len)]
    ops += [ArrayInsert(i, value) for i in range(array_len + 1)]
    ops += [ArrayMove(f, t) for f in range(array_len) for t in range(array_len) if f != t]
    if not exclude_swap:
        ops += [ArraySwap(i, k) for i in range(array_len) for k in range(i + 1, array_len)]
    ops += [ArrayErase(i) for i in range(array_len)]
    ops.append(ArrayClear())
    return ops


def initial_state(params: SyncParams) -> SyncState:
    arr = tuple(params.initial_array)
    return SyncState(
        initial_array=arr,
        server=PeerState(arr),
        clients=tuple(PeerState(arr) for _ in range(params.num_clients)),
    )


def local_op(state: SyncState, c: int, op: ArrayOp) -> SyncState:
    client = state.clients[c]
    tagged = TaggedOp(op, client=c + 1, seq=sum(1 for h in client.history if h.client == c + 1) + 1)
    updated = replace(
        client,
        array=apply(client.array, tagged),
        history=client.history + (tagged,),
        unsent=client.unsent + 1,
    )
    clients = state.clients[:c] + (updated,) + state.clients[c + 1 :]
    return replace(state, clients=clients, acted=max(state.acted, c + 1))


def merge(state: SyncState, c: int, rules: RuleTable = MERGE_RULES, budget: int = DEFAULT_BUDGET) -> SyncState:
    """Upload client ``c``'s unsent ops and download what it has not seen,
    as one atomic exchange."""
    client, server = state.clients[c], state.server
    uploads = client.history[len(client.history) - client.unsent :] if client.unsent else ()
    downloads = server.history[client.last_integrated :]
    for_server, for_client = transform_window(uploads, downloads, rules, budget)
    server_array = server.array
    for op in for_server:
        server_array = apply(server_array, op)
    client_array = client.array
    for op in for_client:
        client_array = apply(client_array, op)
    new_server = replace(server, array=server_array, history=server.history + tuple(for_server))
    new_client = replace(
        client,
        array=client_array,
        history=client.history + tuple(for_client),
        last_integrated=len(new_server.history),
        unsent=0,
    )
    clients = state.clients[:c] + (new_client,) + state.clients[c + 1 :]
    return replace(
        state,
        server=new_server,
        clients=clients,
        merge_cursor=(c + 1) % len(state.clients),
    )


def next_states(state: SyncState, params: SyncParams) -> Iterable[tuple[str, SyncState]]:
    n = len(state.clients)
    if state.acted < n:
        c = state.acted
        n_elems = len(state.clients[c].array)
        if params.universe is not None:
            ops = list(params.universe)
        elif n_elems:
            ops = op_universe(n_elems, params.exclude_swap, c + 1)
        else:
            ops = [ArrayInsert(0, client_value(c + 1)), ArrayClear()]
        for op in ops:
            if _valid(op, n_elems):
                yield f"ClientLocalOp({c + 1}, {op})", local_op(state, c, op)
        return
    for step in range(n):
        c = (state.merge_cursor + step) % n
        if state.has_pending(c):
            yield f"MergeAction({c + 1})", merge(state, c, params.rules, params.budget)
            return


def _valid(op: ArrayOp, n: int) -> bool:
    if isinstance(op, ArrayInsert):
        return op.ndx <= n
    if isinstance(op, ArrayClear):
        return True
    if isinstance(op, ArrayMove):
        return op.from_ndx < n and op.to_ndx < n
    if isinstance(op, ArraySwap):
        return op.ndx2 < n
    return op.ndx < n


def invariant_consistent(state: SyncState) -> bool:
    """Any two peers that have integrated the same operations hold the same
    array."""
    peers = state.peers
    seen = [p.seen() for p in peers]
    for i in range(len(peers)):
        for j in range(i + 1, len(peers)):
            if seen[i] == seen[j] and peers[i].array != peers[j].array:
                return False
    return True


def terminal_converged(state: SyncState) -> bool:
    if not state.is_terminal():
        return True
    return len({p.array for p in state.peers}) == 1


# -- records ----------------------------------------------------------------------


def _peer_record(p: PeerState) -> dict:
    return {
        "array": list(p.array),
        "history": [tagged_to_record(op) for op in p.history],
        "last_integrated": p.last_integrated,
        "unsent": p.unsent,
    }


def _peer_from(record) -> PeerState:
    return PeerState(
        array=tuple(record["array"]),
        history=tuple(tagged_from_record(r) for r in record["history"]),
        last_integrated=record["last_integrated"],
        unsent=record["unsent"],
    )


def to_record(state: SyncState) -> dict:
    return {
        "initial_array": list(state.initial_array),
        "server": _peer_record(state.server),
        "clients": [_peer_record(c) for c in state.clients],
        "acted": state.acted,
        "merge_cursor": state.merge_cursor,
    }


def from_record(record) -> SyncState:
    return SyncState(
        initial_array=tuple(record["initial_array"]),
        server=_peer_from(record["server"]),
        clients=tuple(_peer_from(c) for c in record["clients"]),
        acted=record["acted"],
        merge_cursor=record["merge_cursor"],
    )


def model(params: SyncParams | None = None) -> ModelDefinition:
    params = params or SyncParams()
    return ModelDefinition(
        initial_states=[initial_state(params)],
        next=lambda s: next_states(s, params),
        to_record=to_record,
        from_record=from_record,
        invariants={
            "HaveUnmergedChangesOrAreConsistent": invariant_consistent,
            "TerminalStatesConverged": terminal_converged,
        },
    )


def client_ops(state: SyncState) -> list[TaggedOp]:
    """Each client's own original operation(s), in client order."""
    return [op for i, c in enumerate(state.clients) for op in c.history if op.client == i + 1]


def applied_ops(state: SyncState) -> list[list[TaggedOp]]:
    return [[op for op in c.history if op.client != i + 1] for i, c in enumerate(state.clients)]
