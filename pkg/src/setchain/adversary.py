"""Byzantine server behaviours for fault-injection campaigns.

Each adversary presents the same surface as a correct server (add, get,
on_new_block, serve_batch) and deviates only in its advertised way. All of
them hold real registered keys, and none can forge another process's
signatures: deviations stay inside the PKI assumptions.

Adversarial timing is derived from (run seed, identity), so a campaign
replays identically for a given seed.
"""

from __future__ import annotations

import random
import struct
from typing import Callable

from . import core, crypto
from .core import ADD_IGNORED, Element, SetchainSnapshot
from .crypto import KeyPair, KeyRegistry
from .engine import NOT_FOUND, SILENT

SILENT_KIND = "silent"
GARBAGE_APPENDER = "garbage_appender"
WITHHOLDER = "withholder"
SELECTIVE_SERVER = "selective_server"
WRONG_BATCH_SERVER = "wrong_batch_server"
FORGED_PROOF_SPAMMER = "forged_proof_spammer"

ADVERSARY_KINDS = (
    SILENT_KIND,
    GARBAGE_APPENDER,
    WITHHOLDER,
    SELECTIVE_SERVER,
    WRONG_BATCH_SERVER,
    FORGED_PROOF_SPAMMER,
)

DEFAULT_GARBAGE_RATE = 10.0  # appends per second
DEFAULT_SPAM_RATE = 5.0


def action_times_ms(rate_per_s: float, duration_s: float) -> list[int]:
    """Deterministic action schedule: exactly floor(rate * duration) events."""
    count = int(rate_per_s * duration_s)
    return [int(k * 1000 / rate_per_s) for k in range(count)]


def _derive_rng(seed: int, identity: int) -> random.Random:
    material = seed.to_bytes(8, "big") + b"/adversary/" + identity.to_bytes(8, "big")
    return random.Random(int.from_bytes(crypto.sha512(material)[:8], "big"))


class SilentServer:
    """Ignores every input; the canonical crash-faulty participant."""

    def __init__(self, identity: int):
        self.identity = identity

    def add(self, e: Element) -> str:
        return ADD_IGNORED

    def get(self) -> SetchainSnapshot:
        return SetchainSnapshot(the_set=frozenset(), history={}, epoch=0, proofs=frozenset())

    def on_new_block(self, block) -> None:
        pass

    def serve_batch(self, digest: bytes, requester: int):
        return SILENT


class _Delegating:
    """Runs the honest algorithm underneath; subclasses override the one
    behaviour they corrupt."""

    def __init__(self, base):
        self.base = base
        self.identity = base.identity

    def add(self, e: Element) -> str:
        return self.base.add(e)

    def get(self) -> SetchainSnapshot:
        return self.base.get()

    def on_new_block(self, block) -> None:
        self.base.on_new_block(block)

    def serve_batch(self, digest: bytes, requester: int):
        return self.base.serve_batch(digest, requester)


class WithholderServer(_Delegating):
    """Honest except that batch requests are never answered."""

    def serve_batch(self, digest: bytes, requester: int):
        return SILENT


class SelectiveServer(_Delegating):
    """Answers batch requests only for servers in its target set."""

    def __init__(self, base, targets: frozenset[int]):
        super().__init__(base)
        self.targets = targets

    def serve_batch(self, digest: bytes, requester: int):
        if requester in self.targets:
            return self.base.serve_batch(digest, requester)
        return SILENT


class WrongBatchServer(_Delegating):
    """Answers every batch request with bytes whose digest cannot match."""

    def __init__(self, base):
        super().__init__(base)
        self.responses_served = 0

    def serve_batch(self, digest: bytes, requester: int):
        self.responses_served += 1
        return b"\x00bogus-batch\x00" + digest


class GarbageAppenderServer(_Delegating):
    """Honest, plus a stream of junk: random blobs and elements with broken
    signatures appended to the ledger, and raw bytes injected through the
    proposer hook."""

    def __init__(self, base, ctx, inject: Callable[[bytes], None], rng: random.Random,
                 rate: float, duration_s: float):
        super().__init__(base)
        self.ctx = ctx
        self._inject = inject
        self._rng = rng
        self.garbage_appends = 0
        for i, t in enumerate(action_times_ms(rate, duration_s)):
            ctx.schedule(t, lambda i=i: self._act(i))

    def _act(self, i: int) -> None:
        rng = self._rng
        variant = i % 3
        if variant == 0:
            blob = rng.randbytes(rng.randint(8, 300))
            self.ctx.append(blob)
        elif variant == 1:
            fake = Element(creator=rng.choice(self.base.registry.client_ids()),
                           payload=rng.randbytes(rng.randint(16, 200)),
                           sig=rng.randbytes(crypto.SIGNATURE_LEN))
            self.ctx.append(core.canonical_element_bytes(fake))
        else:
            self._inject(rng.randbytes(rng.randint(8, 300)))
        self.garbage_appends += 1


class ForgedProofSpammerServer(_Delegating):
    """Honest, plus epoch proofs that can never validate: broken signatures
    on plausible epochs, and well-signed proofs for epochs far beyond any
    consolidated one."""

    def __init__(self, base, ctx, keys: KeyPair, rng: random.Random,
                 rate: float, duration_s: float):
        super().__init__(base)
        self.ctx = ctx
        self._keys = keys
        self._rng = rng
        self.forged_appends = 0
        for i, t in enumerate(action_times_ms(rate, duration_s)):
            ctx.schedule(t, lambda i=i: self._act(i))

    def _act(self, i: int) -> None:
        rng = self._rng
        if i % 2 == 0:
            proof = core.EpochProof(epoch_no=rng.randint(1, 50),
                                    proof_sig=rng.randbytes(crypto.SIGNATURE_LEN),
                                    signer=self.identity)
        else:
            # valid signature, but over an epoch no correct server has:
            # dropped by the history-presence check, never buffered
            future = self.base.epoch + 1000 + rng.randint(0, 100)
            bogus_digest = crypto.sha512(b"spam" + struct.pack(">Q", future))
            proof = core.EpochProof(epoch_no=future,
                                    proof_sig=crypto.sign(self._keys, bogus_digest),
                                    signer=self.identity)
        encoded = core.encode_epoch_proof(proof)
        self.ctx.append(encoded)
        if hasattr(self.base, "add_to_batch"):
            self.base.add_to_batch(encoded)
        self.forged_appends += 1


def make_adversary(kind: str, base, *, ctx, keys: KeyPair, registry: KeyRegistry,
                   inject: Callable[[bytes], None], seed: int, duration_s: float,
                   targets: frozenset[int] = frozenset(),
                   garbage_rate: float = DEFAULT_GARBAGE_RATE,
                   spam_rate: float = DEFAULT_SPAM_RATE):
    """Wrap an honest server instance with the requested deviation."""
    identity = base.identity
    rng = _derive_rng(seed, identity)
    if kind == SILENT_KIND:
        return SilentServer(identity)
    if kind == WITHHOLDER:
        return WithholderServer(base)
    if kind == SELECTIVE_SERVER:
        return SelectiveServer(base, targets)
    if kind == WRONG_BATCH_SERVER:
        return WrongBatchServer(base)
    if kind == GARBAGE_APPENDER:
        return GarbageAppenderServer(base, ctx, inject, rng, garbage_rate, duration_s)
    if kind == FORGED_PROOF_SPAMMER:
        return ForgedProofSpammerServer(base, ctx, keys, rng, spam_rate, duration_s)
    raise ValueError(f"unknown adversary kind {kind!r}")
