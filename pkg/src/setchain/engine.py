"""Deterministic discrete-event machinery: virtual clock, event queue,
and the request/response transport used by the batch store.

Time is integer virtual milliseconds. Events fire in (time, sequence)
order; the sequence number is a global monotone counter, so two runs with
the same inputs replay the exact same interleaving.
"""

from __future__ import annotations

import heapq
from typing import Callable

# Responder outcomes for batch requests: content bytes, an explicit
# not-found reply, or silence (the requester only learns via its timeout).
NOT_FOUND = object()
SILENT = object()


class Scheduler:
    """Single-threaded event loop over virtual time."""

    def __init__(self):
        self.now = 0
        self._seq = 0
        self._queue: list[tuple[int, int, Callable[[], None]]] = []
        self._stopped = False

    def schedule(self, delay_ms: int, action: Callable[[], None]) -> None:
        if delay_ms < 0:
            raise ValueError("cannot schedule into the past")
        self._seq += 1
        heapq.heappush(self._queue, (self.now + delay_ms, self._seq, action))

    def stop(self) -> None:
        self._stopped = True

    def run(self, until_ms: int | None = None) -> None:
        """Process events until the queue drains, stop() is called, or the
        next event would fire after until_ms."""
        queue = self._queue
        while queue and not self._stopped:
            if until_ms is not None and queue[0][0] > until_ms:
                break
            fire_at, _, action = heapq.heappop(queue)
            self.now = fire_at
            action()
        if until_ms is not None and not self._stopped and self.now < until_ms:
            self.now = until_ms


class Counters(dict):
    """Named event counters surfaced in the metrics report."""

    def inc(self, name: str, by: int = 1) -> None:
        self[name] = self.get(name, 0) + by


class BatchStoreRouter:
    """Round-trip digest -> batch-content requests between servers.

    One-way transit is the configured network delay; a requester that hears
    nothing within request_timeout resolves the request as not-found.
    Responses arriving after the timeout are dropped.
    """

    def __init__(self, scheduler: Scheduler, network_delay: int, request_timeout: int):
        self._scheduler = scheduler
        self._delay = network_delay
        self._timeout = request_timeout
        self._responders: dict[int, Callable[[bytes, int], object]] = {}
        self._next_req = 0
        self._open: set[int] = set()

    def register_responder(self, server_id: int, fn: Callable[[bytes, int], object]) -> None:
        """fn(digest, requester_id) -> bytes | NOT_FOUND | SILENT."""
        self._responders[server_id] = fn

    def request(self, requester: int, target: int, digest: bytes,
                callback: Callable[[bytes | None], None]) -> None:
        self._next_req += 1
        req_id = self._next_req
        self._open.add(req_id)

        def resolve(content: bytes | None) -> None:
            if req_id in self._open:
                self._open.discard(req_id)
                callback(content)

        def deliver_request() -> None:
            responder = self._responders.get(target)
            outcome = responder(digest, requester) if responder else NOT_FOUND
            if outcome is SILENT:
                return
            reply = None if outcome is NOT_FOUND else outcome
            self._scheduler.schedule(self._delay, lambda: resolve(reply))

        self._scheduler.schedule(self._delay, deliver_request)
        self._scheduler.schedule(self._timeout, lambda: resolve(None))

    def open_requests(self) -> int:
        return len(self._open)


class ServerContext:
    """Runtime surface handed to each server: clock, ledger submit,
    timers, batch-store requests and registration, and metric counters."""

    __slots__ = ("identity", "_scheduler", "_ledger", "_router", "counters", "on_register")

    def __init__(self, identity: int, scheduler: Scheduler, ledger, router: BatchStoreRouter | None,
                 counters: Counters, on_register: Callable[[bytes, bytes], None] | None = None):
        self.identity = identity
        self._scheduler = scheduler
        self._ledger = ledger
        self._router = router
        self.counters = counters
        self.on_register = on_register

    def now(self) -> int:
        return self._scheduler.now

    def append(self, tx_bytes: bytes) -> bool:
        return self._ledger.append(self.identity, tx_bytes)

    def schedule(self, delay_ms: int, action: Callable[[], None]) -> None:
        self._scheduler.schedule(delay_ms, action)

    def request_batch(self, digest: bytes, target: int,
                      callback: Callable[[bytes | None], None]) -> None:
        self._router.request(self.identity, target, digest, callback)

    def register_batch(self, digest: bytes, data: bytes) -> None:
        if self.on_register is not None:
            self.on_register(digest, data)

    def count(self, name: str, by: int = 1) -> None:
        self.counters.inc(name, by)
