"""Imperative sync fixture used to replay generated cases.

Deliberately written without the explored model's state types: it only
shares the operation semantics and merge rules with the generator.
"""

from __future__ import annotations

from typing import Sequence

from .ops import ArrayOp, TaggedOp, apply
from .transform import DEFAULT_BUDGET, MERGE_RULES, RuleTable, transform_window


class _Peer:
    def __init__(self, array):
        self.array = tuple(array)
        self.history: list[TaggedOp] = []
        self.applied_remote: list[TaggedOp] = []
        self.server_version = 0
        self.unsent: list[TaggedOp] = []


class SyncFixture:
    def __init__(self, num_clients: int, initial, rules: RuleTable = MERGE_RULES, budget: int = DEFAULT_BUDGET):
        self.initial = tuple(initial)
        self.server = _Peer(initial)
        self.clients = [_Peer(initial) for _ in range(num_clients)]
        self.rules = rules
        self.budget = budget

    def transaction(self, client: int, op: ArrayOp | TaggedOp) -> None:
        """Perform ``op`` locally on 0-based ``client``."""
        peer = self.clients[client]
        if not isinstance(op, TaggedOp):
            seq = sum(1 for h in peer.history if h.client == client + 1) + 1
            op = TaggedOp(op, client=client + 1, seq=seq)
        peer.array = apply(peer.array, op)
        peer.history.append(op)
        peer.unsent.append(op)

    def _pending(self, peer: _Peer) -> bool:
        return bool(peer.unsent) or peer.server_version < len(self.server.history)

    def _sync(self, peer: _Peer) -> None:
        down = self.server.history[peer.server_version :]
        up, down = transform_window(peer.unsent, down, self.rules, self.budget)
        for op in up:
            self.server.array = apply(self.server.array, op)
            self.server.history.append(op)
        for op in down:
            peer.array = apply(peer.array, op)
            peer.history.append(op)
            peer.applied_remote.append(op)
        peer.unsent = []
        peer.server_version = len(self.server.history)

    def sync_all_clients(self, order: Sequence[int] | None = None) -> None:
        """Merge clients round-robin until quiescent, in ascending order
        unless another 0-based ``order`` is given."""
        order = list(order) if order is not None else list(range(len(self.clients)))
        cursor = 0
        n = len(order)
        while any(self._pending(c) for c in self.clients):
            for step in range(n):
                k = (cursor + step) % n
                if self._pending(self.clients[order[k]]):
                    self._sync(self.clients[order[k]])
                    cursor = (k + 1) % n
                    break

    def arrays(self) -> list[tuple]:
        return [self.server.array] + [c.array for c in self.clients]

    def ops_applied(self, client: int) -> list[TaggedOp]:
        return list(self.clients[client].applied_remote)
