"""Deterministic in-process block-based ledger.

Per-node mempools with gossip, round-robin proposers on a fixed tick,
capacity-bounded blocks, and identical ordered block delivery to every
subscriber. Transactions are opaque bytes; content never matters here.

The mempool is modelled as one global FIFO keyed by (submit time, submitter,
arrival sequence) plus per-node visibility: a transaction is in node w's
mempool from its arrival time (submit time at the submitter, submit time +
network delay elsewhere) until the block containing it is delivered. This
is equivalent to n separate gossiped pools because the delay is uniform,
and it keeps packing O(block size).

Proposers reap the FIFO prefix: transactions are taken in order while they
are visible to the proposer and the running byte total stays within the
block capacity, stopping at the first transaction that fails either check
(CometBFT-style reaping). Delivered blocks are final; there are no forks.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .engine import Counters, Scheduler


@dataclass(frozen=True)
class LedgerTx:
    """One opaque ledger transaction."""

    bytes: bytes
    submitter: int
    submit_time: int
    injected: bool = False


@dataclass(frozen=True)
class Block:
    """Ordered transactions under a height; heights are contiguous from 1."""

    height: int
    txs: tuple[LedgerTx, ...]
    proposer: int
    produced_at: int


class _Pending:
    __slots__ = ("tx", "dropped_at")

    def __init__(self, tx: LedgerTx):
        self.tx = tx
        self.dropped_at: set[int] | None = None


class LedgerObserver:
    """Optional instrumentation hooks; all no-ops by default."""

    def on_append(self, tx: LedgerTx) -> None: ...

    def on_gossip_complete(self, tx: LedgerTx, now: int) -> None: ...

    def on_deliver(self, block: Block) -> None: ...


class BlockLedger:
    def __init__(self, scheduler: Scheduler, n_nodes: int, *, block_interval: int,
                 block_capacity: int, network_delay: int, mempool_max_txs: int,
                 mempool_max_bytes: int, produce_empty_blocks: bool,
                 counters: Counters, observer: LedgerObserver | None = None):
        if network_delay >= block_interval:
            raise ValueError("network_delay must stay below block_interval")
        self._scheduler = scheduler
        self.n_nodes = n_nodes
        self.block_interval = block_interval
        self.block_capacity = block_capacity
        self.network_delay = network_delay
        self.mempool_max_txs = mempool_max_txs
        self.mempool_max_bytes = mempool_max_bytes
        self.produce_empty_blocks = produce_empty_blocks
        self.counters = counters
        self.observer = observer or LedgerObserver()

        self.blocks: list[Block] = []
        self.height = 0
        self._pending: deque[_Pending] = deque()
        self._known: dict[bytes, str] = {}  # tx bytes -> "pending" | "included"
        self._pool_count = [0] * n_nodes
        self._pool_bytes = [0] * n_nodes
        self._injections: dict[int, list[bytes]] = {}
        self._subscribers: list[tuple[int, Callable[[Block], None]]] = []
        self._started = False

    # -- endpoints -----------------------------------------------------

    def append(self, node: int, tx_bytes: bytes) -> bool:
        """Submit a transaction at a node's mempool; gossip to the rest.

        Duplicate bytes are acknowledged without a second entry. Oversize
        transactions and full mempools reject the submission.
        """
        if not tx_bytes or len(tx_bytes) > self.block_capacity:
            self.counters.inc("oversize_reject")
            return False
        if tx_bytes in self._known:
            return True
        if (self._pool_count[node] >= self.mempool_max_txs
                or self._pool_bytes[node] + len(tx_bytes) > self.mempool_max_bytes):
            self.counters.inc("mempool_reject")
            return False
        now = self._scheduler.now
        tx = LedgerTx(bytes=tx_bytes, submitter=node, submit_time=now)
        entry = _Pending(tx)
        self._pending.append(entry)
        self._known[tx_bytes] = "pending"
        self._pool_count[node] += 1
        self._pool_bytes[node] += len(tx_bytes)
        self.observer.on_append(tx)
        self._scheduler.schedule(self.network_delay, lambda: self._gossip(entry))
        return True

    def subscribe(self, server_id: int, handler: Callable[[Block], None]) -> None:
        """Register a block-notification handler, called once per block in
        height order; all subscribers see identical content."""
        self._subscribers.append((server_id, handler))

    def inject_proposer_tx(self, node: int, tx_bytes: bytes) -> None:
        """Adversary hook: bytes go verbatim into the next block this node
        proposes, bypassing mempool and validation."""
        self._injections.setdefault(node, []).append(tx_bytes)

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        self._scheduler.schedule(self.block_interval, self._tick)

    # -- introspection (tests and demos) --------------------------------

    def mempool_of(self, node: int) -> list[bytes]:
        now = self._scheduler.now
        out = []
        for entry in self._pending:
            if self._arrival(entry.tx, node) <= now and not (entry.dropped_at and node in entry.dropped_at):
                out.append(entry.tx.bytes)
        return out

    # -- internals -------------------------------------------------------

    def _arrival(self, tx: LedgerTx, node: int) -> int:
        return tx.submit_time if node == tx.submitter else tx.submit_time + self.network_delay

    def _gossip(self, entry: _Pending) -> None:
        if self._known.get(entry.tx.bytes) != "pending":
            return  # already included before gossip landed
        size = len(entry.tx.bytes)
        for node in range(self.n_nodes):
            if node == entry.tx.submitter:
                continue
            if (self._pool_count[node] >= self.mempool_max_txs
                    or self._pool_bytes[node] + size > self.mempool_max_bytes):
                if entry.dropped_at is None:
                    entry.dropped_at = set()
                entry.dropped_at.add(node)
                self.counters.inc("gossip_drop")
            else:
                self._pool_count[node] += 1
                self._pool_bytes[node] += size
        self.observer.on_gossip_complete(entry.tx, self._scheduler.now)

    def _tick(self) -> None:
        self._scheduler.schedule(self.block_interval, self._tick)
        now = self._scheduler.now
        proposer = (self.height + 1) % self.n_nodes

        txs: list[LedgerTx] = []
        total = 0
        for raw in self._injections.pop(proposer, []):
            if total + len(raw) > self.block_capacity:
                self._injections.setdefault(proposer, []).append(raw)
                continue
            txs.append(LedgerTx(bytes=raw, submitter=proposer, submit_time=now, injected=True))
            total += len(raw)

        chosen: list[_Pending] = []
        skipped: list[_Pending] = []
        while self._pending:
            entry = self._pending[0]
            tx = entry.tx
            if self._arrival(tx, proposer) > now:
                break  # still in gossip flight; everything behind it is newer
            if entry.dropped_at and proposer in entry.dropped_at:
                self._pending.popleft()
                skipped.append(entry)  # never reached this pool; another proposer takes it
                continue
            if total + len(tx.bytes) > self.block_capacity:
                break
            self._pending.popleft()
            chosen.append(entry)
            txs.append(tx)
            total += len(tx.bytes)
        if skipped:
            self._pending.extendleft(reversed(skipped))

        if not txs and not self.produce_empty_blocks:
            return
        self.height += 1
        block = Block(height=self.height, txs=tuple(txs), proposer=proposer, produced_at=now)
        self._scheduler.schedule(self.network_delay, lambda: self._deliver(block, chosen))

    def _deliver(self, block: Block, chosen: list[_Pending]) -> None:
        for entry in chosen:
            tx = entry.tx
            self._known[tx.bytes] = "included"
            size = len(tx.bytes)
            for node in range(self.n_nodes):
                if entry.dropped_at and node in entry.dropped_at:
                    continue
                self._pool_count[node] -= 1
                self._pool_bytes[node] -= size
        self.blocks.append(block)
        self.observer.on_deliver(block)
        for _, handler in self._subscribers:
            handler(block)
