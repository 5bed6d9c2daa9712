"""Client-side workflow: submit to one server, poll snapshots, and accept
an epoch only with f+1 distinct-signer proofs, so a single server never
has to be trusted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Iterable

from . import core
from .core import Element, EpochProof, SetchainSnapshot
from .crypto import KeyRegistry


@dataclass(frozen=True)
class CommitCertificate:
    """Everything needed to check an element's inclusion offline: the epoch
    number, the element, the full epoch contents, and at least f+1
    distinct-signer proofs over their digest."""

    epoch_no: int
    element: Element
    epoch_elements: frozenset[Element]
    proofs: frozenset[EpochProof]


def verify_epoch(epoch_no: int, elements: Iterable[Element], proofs: Iterable[EpochProof],
                 f: int, registry: KeyRegistry) -> bool:
    """True iff at least f+1 proofs from pairwise-distinct registered servers
    each verify over the digest of (epoch_no, elements)."""
    if epoch_no < 1:
        return False
    try:
        digest = core.epoch_digest(epoch_no, elements)
    except (core.EncodingError, ValueError):
        return False
    signers: set[int] = set()
    for p in proofs:
        if p.epoch_no != epoch_no or p.signer in signers:
            continue
        if core.valid_proof(epoch_no, p.proof_sig, p.signer, (), registry,
                            epoch_set_digest=digest):
            signers.add(p.signer)
        if len(signers) >= f + 1:
            return True
    return False


def verify_certificate(cert: CommitCertificate, f: int, registry: KeyRegistry) -> bool:
    return (cert.element in cert.epoch_elements
            and verify_epoch(cert.epoch_no, cert.epoch_elements, cert.proofs, f, registry))


def certificate_from_snapshot(e: Element, snapshot: SetchainSnapshot, f: int,
                              registry: KeyRegistry) -> CommitCertificate | None:
    """Build a certificate for e out of one server's snapshot, if the
    snapshot proves it: e sits in some epoch carrying f+1 valid proofs."""
    for epoch_no in range(1, snapshot.epoch + 1):
        members = snapshot.history[epoch_no]
        if e not in members:
            continue
        relevant = frozenset(p for p in snapshot.proofs if p.epoch_no == epoch_no)
        if verify_epoch(epoch_no, members, relevant, f, registry):
            return CommitCertificate(epoch_no=epoch_no, element=e,
                                     epoch_elements=members, proofs=relevant)
        return None
    return None


# -- wire form (for the CLI verify pipeline) -----------------------------

def encode_certificate(cert: CommitCertificate) -> bytes:
    """Length-prefixed concatenation of the certificate fields in
    declaration order."""
    fields = [
        struct.pack(">Q", cert.epoch_no),
        core.canonical_element_bytes(cert.element),
        core.encode_batch(sorted(core.canonical_element_bytes(e) for e in cert.epoch_elements)),
        core.encode_batch(sorted(core.encode_epoch_proof(p) for p in cert.proofs)),
    ]
    return b"".join(struct.pack(">I", len(f)) + f for f in fields)


def decode_certificate(data: bytes) -> CommitCertificate:
    fields = []
    pos = 0
    for _ in range(4):
        if pos + 4 > len(data):
            raise core.DecodeError("truncated certificate")
        ln = struct.unpack_from(">I", data, pos)[0]
        pos += 4
        if pos + ln > len(data):
            raise core.DecodeError("truncated certificate field")
        fields.append(data[pos:pos + ln])
        pos += ln
    if pos != len(data):
        raise core.DecodeError("trailing bytes after certificate")
    if len(fields[0]) != 8:
        raise core.DecodeError("bad epoch number field")
    epoch_no = struct.unpack(">Q", fields[0])[0]
    element = core.decode_element(fields[1])
    members = frozenset(core.decode_element(b) for b in core.decode_batch(fields[2]))
    proofs = frozenset(core.decode_epoch_proof(b) for b in core.decode_batch(fields[3]))
    return CommitCertificate(epoch_no=epoch_no, element=element,
                             epoch_elements=members, proofs=proofs)


# -- in-simulation polling client ----------------------------------------

@dataclass
class ConfirmOutcome:
    """Result of a confirm attempt: a certificate, or a timeout carrying the
    last epoch height inspected."""

    certificate: CommitCertificate | None
    last_epoch_seen: int
    server: int

    @property
    def timed_out(self) -> bool:
        return self.certificate is None


class PollingClient:
    """Simulation actor that submits one element and polls a server's
    snapshots until the element is certified or a deadline passes. On
    timeout, the retry policy moves to the next server round-robin."""

    def __init__(self, client_id: int, servers: dict, f: int, registry: KeyRegistry,
                 schedule: Callable, now: Callable, poll_interval: int):
        self.client_id = client_id
        self.servers = servers
        self.f = f
        self.registry = registry
        self.schedule = schedule
        self.now = now
        self.poll_interval = max(1, poll_interval)
        self.outcomes: list[ConfirmOutcome] = []

    def submit(self, e: Element, server_id: int) -> str:
        return self.servers[server_id].add(e)

    def confirm(self, e: Element, server_id: int, deadline_ms: int,
                on_done: Callable[[ConfirmOutcome], None] | None = None) -> None:
        last_seen = 0

        def poll() -> None:
            nonlocal last_seen
            snapshot = self.servers[server_id].get()
            last_seen = snapshot.epoch
            cert = certificate_from_snapshot(e, snapshot, self.f, self.registry)
            if cert is not None:
                outcome = ConfirmOutcome(cert, last_seen, server_id)
            elif self.now() >= deadline_ms:
                outcome = ConfirmOutcome(None, last_seen, server_id)
            else:
                self.schedule(self.poll_interval, poll)
                return
            self.outcomes.append(outcome)
            if on_done is not None:
                on_done(outcome)

        self.schedule(self.poll_interval, poll)

    def confirm_with_retry(self, e: Element, first_server: int, deadline_ms: int,
                           attempts: int, on_done: Callable[[ConfirmOutcome], None]) -> None:
        """Restart the confirm loop on the next server after each timeout,
        splitting the remaining time budget evenly over remaining attempts."""
        server_ids = sorted(self.servers)

        def attempt(server_id: int, remaining: int) -> None:
            if remaining <= 1:
                slice_end = deadline_ms
            else:
                slice_end = self.now() + max(self.poll_interval, (deadline_ms - self.now()) // remaining)

            def done(outcome: ConfirmOutcome) -> None:
                if not outcome.timed_out or remaining <= 1 or self.now() >= deadline_ms:
                    on_done(outcome)
                    return
                nxt = server_ids[(server_ids.index(server_id) + 1) % len(server_ids)]
                attempt(nxt, remaining - 1)

            self.confirm(e, server_id, slice_end, done)

        attempt(first_server, max(1, attempts))
