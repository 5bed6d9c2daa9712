"""Hash-batching server: only fixed-size signed digests reach the ledger.

A flushed batch is registered locally, its SHA-512 digest is signed and
appended as a 139-byte transaction, and peers recover the contents through
a request/response protocol. A digest is consolidated into an epoch only
once f+1 distinct servers have signed it in the ledger: with at most f
Byzantine servers, at least one signer is correct and can serve the batch
forever after.

Signer counting is robust by default: a signer is recorded as soon as its
valid signature is delivered, whether or not the content fetch from it
succeeds. This anchors consolidation to a ledger position, which the
consistent-notification property makes identical on every correct server.
(The alternative, skipping the signer when the fetch fails, lets a
selectively-serving adversary make two correct servers count different
signer sets; it is kept behind `literal_counting` for experiments.)

Consolidations happen strictly in threshold-crossing order: if the head
digest's content is still unknown, fetches retry round-robin over its
signers every request timeout and later consolidations stall until the
content arrives.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable

from . import core, crypto
from .core import (
    ADD_ACCEPTED,
    ADD_DUPLICATE,
    ADD_INVALID,
    Element,
    EpochProof,
    SetchainSnapshot,
)
from .compresschain import Collector
from .crypto import KeyPair, KeyRegistry
from .engine import NOT_FOUND
from .ledger import Block


@dataclass(frozen=True)
class HashBatchTx:
    """(digest, signature, signer): the fixed-size stand-in for a batch."""

    digest: bytes
    sig: bytes
    signer: int


def encode_hash_batch_tx(hb: HashBatchTx) -> bytes:
    if len(hb.digest) != crypto.DIGEST_LEN or len(hb.sig) != crypto.SIGNATURE_LEN:
        raise core.EncodingError("hash batch needs 64-byte digest and signature")
    return bytes([core.TAG_HASH_BATCH]) + hb.digest + hb.sig + struct.pack(">Q", hb.signer) + b"\x00\x00"


def decode_hash_batch_tx(data: bytes) -> HashBatchTx:
    if len(data) != core.HASH_BATCH_TX_LEN or data[0] != core.TAG_HASH_BATCH:
        raise core.DecodeError("not a hash-batch transaction")
    if data[137:] != b"\x00\x00":
        raise core.DecodeError("nonzero hash-batch padding")
    return HashBatchTx(digest=bytes(data[1:65]), sig=bytes(data[65:129]),
                       signer=struct.unpack_from(">Q", data, 129)[0])


class HashchainServer:
    def __init__(self, identity: int, keys: KeyPair, registry: KeyRegistry, ctx,
                 *, f: int, collector_limit: int, collector_timeout: int,
                 request_timeout: int, literal_counting: bool = False,
                 trusted_lookup: Callable[[bytes], bytes | None] | None = None):
        self.identity = identity
        self.keys = keys
        self.registry = registry
        self.ctx = ctx
        self.f = f
        self.request_timeout = request_timeout
        self.literal_counting = literal_counting
        self.trusted_lookup = trusted_lookup

        self.epoch = 0
        self._elements: dict[bytes, Element] = {}
        self._history: dict[int, frozenset[Element]] = {}
        self._in_history: set[bytes] = set()
        self._epoch_digests: dict[int, bytes] = {}
        self._proofs: set[EpochProof] = set()

        self.collector = Collector(collector_limit, collector_timeout,
                                   ctx.schedule, self._emit_batch)
        self.hash_to_batch: dict[bytes, tuple[bytes, ...]] = {}  # digest -> item bytes
        self.hash_to_signers: dict[bytes, set[int]] = {}
        self.consolidated: set[bytes] = set()
        self.signed_by_self: set[bytes] = set()
        self._batch_store: dict[bytes, bytes] = {}  # digest -> serialized batch
        self._pending_consolidation: deque[bytes] = deque()
        self._queued: set[bytes] = set()
        self._fetching: set[bytes] = set()
        self._stalled_digest: bytes | None = None
        self._retry_cursor: dict[bytes, int] = {}

    # -- client surface ---------------------------------------------------

    def add(self, e: Element) -> str:
        try:
            canon = core.canonical_element_bytes(e)
        except core.EncodingError:
            return ADD_INVALID
        if not core._valid_element_canon(canon, e, self.registry):
            return ADD_INVALID
        if canon in self._elements:
            return ADD_DUPLICATE
        self._elements[canon] = e
        self.add_to_batch(canon)
        return ADD_ACCEPTED

    def add_to_batch(self, item_bytes: bytes) -> None:
        self.collector.add(item_bytes)

    def get(self) -> SetchainSnapshot:
        return SetchainSnapshot(
            the_set=frozenset(self._elements.values()),
            history=dict(self._history),
            epoch=self.epoch,
            proofs=frozenset(self._proofs),
        )

    # -- batching -----------------------------------------------------------

    def _emit_batch(self, items: tuple[bytes, ...]) -> None:
        data = core.encode_batch(items)
        digest = crypto.sha512(data)
        self.hash_to_batch[digest] = items
        self._batch_store[digest] = data
        self.ctx.register_batch(digest, data)
        self.signed_by_self.add(digest)
        self.collector.last_flush = self.ctx.now()
        hb = HashBatchTx(digest=digest, sig=crypto.sign(self.keys, digest), signer=self.identity)
        self.ctx.append(encode_hash_batch_tx(hb))

    def serve_batch(self, digest: bytes, requester: int):
        data = self._batch_store.get(digest)
        return data if data is not None else NOT_FOUND

    # -- ledger surface -------------------------------------------------------

    def on_new_block(self, block: Block) -> None:
        for tx in block.txs:
            try:
                hb = decode_hash_batch_tx(tx.bytes)
            except core.DecodeError:
                continue
            if not self.registry.is_server(hb.signer):
                continue
            if not self.registry.verify_signature(hb.signer, hb.digest, hb.sig):
                continue
            self._process_hash_batch(hb)
        self._drain()

    def _process_hash_batch(self, hb: HashBatchTx) -> None:
        digest = hb.digest
        content_known = digest in self.hash_to_batch
        if not self.literal_counting:
            self._record_signer(digest, hb.signer)
        elif content_known:
            self._record_signer(digest, hb.signer)

        if content_known:
            return
        if self.trusted_lookup is not None:
            data = self.trusted_lookup(digest)
            if data is not None:
                self._acquire(digest, data)
            return
        if self.literal_counting:
            # one fetch per sighting; the signer only counts if it serves
            self._fetch(digest, hb.signer, credit_signer=hb.signer)
        elif digest not in self._fetching and digest not in self.consolidated:
            self._fetch(digest, hb.signer)

    def _record_signer(self, digest: bytes, signer: int) -> None:
        signers = self.hash_to_signers.setdefault(digest, set())
        if signer in signers:
            return
        signers.add(signer)
        if (len(signers) == self.f + 1 and digest not in self.consolidated
                and digest not in self._queued):
            self._queued.add(digest)
            self._pending_consolidation.append(digest)

    # -- batch retrieval ---------------------------------------------------

    def _fetch(self, digest: bytes, target: int, credit_signer: int | None = None) -> None:
        self._fetching.add(digest)

        def on_reply(content: bytes | None) -> None:
            self._fetching.discard(digest)
            if content is not None and crypto.sha512(content) != digest:
                self.ctx.count("bad_batch_response")
                content = None
            if digest in self.hash_to_batch:
                return
            if content is None:
                self._drain()
                return
            if credit_signer is not None:
                self._record_signer(digest, credit_signer)
            self._acquire(digest, content)
            self._drain()

        self.ctx.request_batch(digest, target, on_reply)

    def _acquire(self, digest: bytes, data: bytes) -> None:
        """Store verified batch content: register it for onward serving,
        merge its valid proofs, pull fresh valid elements into the_set, and
        sign the digest if we have not yet."""
        try:
            items = tuple(core.decode_batch(data))
        except core.DecodeError:
            items = ()
            self.ctx.count("undecodable_batch")
        self.hash_to_batch[digest] = items
        self._batch_store[digest] = data
        self.ctx.register_batch(digest, data)
        for item in items:
            if not item:
                continue
            if item[0] == core.TAG_PROOF:
                try:
                    p = core.decode_epoch_proof(item)
                except core.DecodeError:
                    continue
                if core.valid_proof(p.epoch_no, p.proof_sig, p.signer,
                                    self._history.get(p.epoch_no), self.registry,
                                    epoch_set_digest=self._epoch_digests.get(p.epoch_no)):
                    self._proofs.add(p)
            elif item[0] == core.TAG_ELEMENT:
                entry = core.parse_valid_element_entry(item, self.registry)
                if entry is not None:
                    e, canon = entry
                    if canon not in self._in_history:
                        self._elements[canon] = e
        if digest not in self.signed_by_self:
            self.signed_by_self.add(digest)
            hb = HashBatchTx(digest=digest, sig=crypto.sign(self.keys, digest), signer=self.identity)
            self.ctx.append(encode_hash_batch_tx(hb))

    # -- consolidation -------------------------------------------------------

    def _drain(self) -> None:
        """Consolidate queued digests in order; stall on unknown content."""
        while self._pending_consolidation:
            digest = self._pending_consolidation[0]
            items = self.hash_to_batch.get(digest)
            if items is None:
                self._stall(digest)
                return
            self._pending_consolidation.popleft()
            self._queued.discard(digest)
            if self._stalled_digest == digest:
                self._stalled_digest = None
            self._consolidate(digest, items)
            self.hash_to_batch[digest] = ()  # content only serves from _batch_store now

    def _stall(self, digest: bytes) -> None:
        if self._stalled_digest == digest:
            return  # retry loop already running
        self._stalled_digest = digest
        self._retry(digest)

    def _retry(self, digest: bytes) -> None:
        if self._stalled_digest != digest or digest in self.hash_to_batch:
            return
        signers = sorted(self.hash_to_signers.get(digest, ()))
        if signers:
            cursor = self._retry_cursor.get(digest, 0)
            target = signers[cursor % len(signers)]
            self._retry_cursor[digest] = cursor + 1
            self._fetch(digest, target)
        self.ctx.schedule(self.request_timeout, lambda: self._retry(digest))

    def _consolidate(self, digest: bytes, items: Iterable[bytes]) -> None:
        self.consolidated.add(digest)
        epoch_elems: dict[bytes, Element] = {}
        for item in items:
            if item and item[0] == core.TAG_ELEMENT:
                entry = core.parse_valid_element_entry(item, self.registry)
                if entry is None:
                    continue
                e, canon = entry
                if canon not in self._in_history and canon not in epoch_elems:
                    epoch_elems[canon] = e
        self._elements.update(epoch_elems)
        self.epoch += 1
        self._history[self.epoch] = frozenset(epoch_elems.values())
        self._in_history.update(epoch_elems)
        epoch_dig = core.epoch_digest_from_canonical(self.epoch, epoch_elems)
        self._epoch_digests[self.epoch] = epoch_dig
        own = core.make_epoch_proof(self.epoch, epoch_dig, self.identity, self.keys)
        self.add_to_batch(core.encode_epoch_proof(own))
