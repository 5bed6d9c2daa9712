"""Baseline set-replication server: one ledger transaction per element or
proof, and every delivered block's valid elements form one epoch.

Throughput is therefore the ledger's own; the point of this variant is to
be obviously correct and to serve as the reference for the other two.
"""

from __future__ import annotations

from . import core
from .core import (
    ADD_ACCEPTED,
    ADD_DUPLICATE,
    ADD_INVALID,
    Element,
    EpochProof,
    SetchainSnapshot,
)
from .crypto import KeyPair, KeyRegistry
from .engine import NOT_FOUND
from .ledger import Block


class VanillaServer:
    def __init__(self, identity: int, keys: KeyPair, registry: KeyRegistry, ctx):
        self.identity = identity
        self.keys = keys
        self.registry = registry
        self.ctx = ctx
        self.epoch = 0
        self._elements: dict[bytes, Element] = {}  # the_set keyed by canonical bytes
        self._history: dict[int, frozenset[Element]] = {}
        self._in_history: set[bytes] = set()
        self._epoch_digests: dict[int, bytes] = {}
        self._proofs: set[EpochProof] = set()

    def add(self, e: Element) -> str:
        """Accept a valid, fresh element: into the_set and onto the ledger."""
        try:
            canon = core.canonical_element_bytes(e)
        except core.EncodingError:
            return ADD_INVALID
        if not core._valid_element_canon(canon, e, self.registry):
            return ADD_INVALID
        if canon in self._elements:
            return ADD_DUPLICATE
        self._elements[canon] = e
        self.ctx.append(canon)
        return ADD_ACCEPTED

    def get(self) -> SetchainSnapshot:
        return SetchainSnapshot(
            the_set=frozenset(self._elements.values()),
            history=dict(self._history),
            epoch=self.epoch,
            proofs=frozenset(self._proofs),
        )

    def on_new_block(self, block: Block) -> None:
        """Merge the block's valid proofs, then stamp its valid fresh
        elements as the next epoch (possibly empty) and publish our proof."""
        epoch_elems: dict[bytes, Element] = {}
        for tx in block.txs:
            data = tx.bytes
            if not data:
                continue
            if data[0] == core.TAG_PROOF:
                try:
                    p = core.decode_epoch_proof(data)
                except core.DecodeError:
                    continue
                if core.valid_proof(p.epoch_no, p.proof_sig, p.signer,
                                    self._history.get(p.epoch_no), self.registry,
                                    epoch_set_digest=self._epoch_digests.get(p.epoch_no)):
                    self._proofs.add(p)
            elif data[0] == core.TAG_ELEMENT:
                entry = core.parse_valid_element_entry(data, self.registry)
                if entry is None:
                    continue
                e, canon = entry
                if canon in self._in_history or canon in epoch_elems:
                    continue
                epoch_elems[canon] = e
            # any other tag: a transaction this algorithm did not produce; skip

        self._elements.update(epoch_elems)
        self.epoch += 1
        self._history[self.epoch] = frozenset(epoch_elems.values())
        self._in_history.update(epoch_elems)
        digest = core.epoch_digest_from_canonical(self.epoch, epoch_elems)
        self._epoch_digests[self.epoch] = digest
        own = core.make_epoch_proof(self.epoch, digest, self.identity, self.keys)
        self.ctx.append(core.encode_epoch_proof(own))

    def serve_batch(self, digest: bytes, requester: int):
        return NOT_FOUND
