"""Domain types, canonical byte layouts, and validity predicates.

Everything that crosses the ledger is reduced to one of four tagged wire
forms:

  0x01  element          1 + 8 + 4 + len(payload) + 64 bytes
  0x02  epoch proof      139 bytes (fixed, zero padded)
  0x03  compressed batch 1 + 1 + len(codec name) + payload
  0x04  hash batch       139 bytes (fixed)

All integers are big-endian. The layouts are injective over well-formed
values, which is what makes byte equality usable for dedup everywhere else.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from . import crypto
from .crypto import KeyRegistry, sha512

MAX_ELEMENT_SIZE = 16 * 1024

TAG_ELEMENT = 0x01
TAG_PROOF = 0x02
TAG_COMPRESSED_BATCH = 0x03
TAG_HASH_BATCH = 0x04

EPOCH_PROOF_LEN = 139
HASH_BATCH_TX_LEN = 139
_PROOF_PADDING = 58

# decode_batch sanity caps against adversarial length fields
_MAX_BATCH_ITEMS = 1_000_000
_MAX_ITEM_LEN = MAX_ELEMENT_SIZE + 128

# add() acknowledgments, with distinguishable rejection reasons
ADD_ACCEPTED = "accepted"
ADD_DUPLICATE = "duplicate"
ADD_INVALID = "invalid"
ADD_IGNORED = "ignored"  # a Byzantine server that swallowed the request


class EncodingError(ValueError):
    """A value violates its wire-format invariants and cannot be encoded."""


class DecodeError(ValueError):
    """Bytes do not parse as the expected wire form."""


@dataclass(frozen=True)
class Element:
    """A client-created, client-signed payload; the unit added to the set."""

    creator: int
    payload: bytes
    sig: bytes


@dataclass(frozen=True)
class EpochProof:
    """A server's signature over the digest of (epoch number, epoch contents)."""

    epoch_no: int
    proof_sig: bytes
    signer: int


BatchItem = Union[Element, EpochProof]


def element_signing_bytes(creator: int, payload: bytes) -> bytes:
    """The exact bytes a client signs: the element layout minus the signature."""
    return bytes([TAG_ELEMENT]) + struct.pack(">QI", creator, len(payload)) + payload


def canonical_element_bytes(e: Element) -> bytes:
    """Injective byte layout of an element; also its ledger-transaction form."""
    if not 1 <= len(e.payload) <= MAX_ELEMENT_SIZE:
        raise EncodingError(f"payload length {len(e.payload)} outside 1..{MAX_ELEMENT_SIZE}")
    if len(e.sig) != crypto.SIGNATURE_LEN:
        raise EncodingError("signature must be 64 bytes")
    if not 0 <= e.creator < 2**64:
        raise EncodingError("creator id outside u64 range")
    return element_signing_bytes(e.creator, e.payload) + e.sig


def decode_element(data: bytes) -> Element:
    """Strict inverse of canonical_element_bytes; must consume data exactly."""
    if len(data) < 1 + 8 + 4 + 1 + crypto.SIGNATURE_LEN:
        raise DecodeError("element too short")
    if data[0] != TAG_ELEMENT:
        raise DecodeError("bad element tag")
    creator, plen = struct.unpack_from(">QI", data, 1)
    if plen < 1 or plen > MAX_ELEMENT_SIZE:
        raise DecodeError("bad payload length")
    end = 13 + plen + crypto.SIGNATURE_LEN
    if len(data) != end:
        raise DecodeError("element length mismatch")
    return Element(creator=creator, payload=bytes(data[13:13 + plen]), sig=bytes(data[13 + plen:end]))


def encode_epoch_proof(p: EpochProof) -> bytes:
    """Fixed 139-byte proof transaction: tag, epoch, signature, signer, padding."""
    if p.epoch_no < 1:
        raise EncodingError("epoch_no must be positive")
    if len(p.proof_sig) != crypto.SIGNATURE_LEN:
        raise EncodingError("proof signature must be 64 bytes")
    out = bytes([TAG_PROOF]) + struct.pack(">Q", p.epoch_no) + p.proof_sig + struct.pack(">Q", p.signer)
    return out + bytes(_PROOF_PADDING)


def decode_epoch_proof(data: bytes) -> EpochProof:
    if len(data) != EPOCH_PROOF_LEN:
        raise DecodeError("epoch proof must be 139 bytes")
    if data[0] != TAG_PROOF:
        raise DecodeError("bad proof tag")
    epoch_no = struct.unpack_from(">Q", data, 1)[0]
    sig = bytes(data[9:73])
    signer = struct.unpack_from(">Q", data, 73)[0]
    if epoch_no < 1:
        raise DecodeError("bad epoch number")
    if any(data[81:]):
        raise DecodeError("nonzero proof padding")
    return EpochProof(epoch_no=epoch_no, proof_sig=sig, signer=signer)


def decode_batch_item(data: bytes) -> BatchItem:
    """Parse one tagged item (element or epoch proof) from a batch body."""
    if not data:
        raise DecodeError("empty batch item")
    if data[0] == TAG_ELEMENT:
        return decode_element(data)
    if data[0] == TAG_PROOF:
        return decode_epoch_proof(data)
    raise DecodeError(f"unknown batch item tag {data[0]:#x}")


class Batch:
    """Insertion-ordered collection of serialized items, deduped by bytes."""

    __slots__ = ("_items",)

    def __init__(self, items: Iterable[bytes] = ()):
        self._items: dict[bytes, None] = {}
        for it in items:
            self.add(it)

    def add(self, item_bytes: bytes) -> bool:
        """Append item bytes if not already present; True when added."""
        if item_bytes in self._items:
            return False
        self._items[item_bytes] = None
        return True

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def items(self) -> tuple[bytes, ...]:
        return tuple(self._items)

    def clear(self) -> None:
        self._items = {}


def encode_batch(items: Iterable[bytes]) -> bytes:
    """Batch wire form: u32 item count, then each item length-prefixed (u32)."""
    items = list(items)
    parts = [struct.pack(">I", len(items))]
    for it in items:
        parts.append(struct.pack(">I", len(it)))
        parts.append(it)
    return b"".join(parts)


def decode_batch(data: bytes) -> list[bytes]:
    """Strict inverse of encode_batch; raises DecodeError on any malformation."""
    if len(data) < 4:
        raise DecodeError("batch too short")
    count = struct.unpack_from(">I", data, 0)[0]
    if count > _MAX_BATCH_ITEMS:
        raise DecodeError("implausible batch item count")
    out: list[bytes] = []
    pos = 4
    for _ in range(count):
        if pos + 4 > len(data):
            raise DecodeError("truncated batch")
        ln = struct.unpack_from(">I", data, pos)[0]
        pos += 4
        if ln > _MAX_ITEM_LEN or pos + ln > len(data):
            raise DecodeError("bad batch item length")
        out.append(bytes(data[pos:pos + ln]))
        pos += ln
    if pos != len(data):
        raise DecodeError("trailing bytes after batch")
    return out


def epoch_digest(epoch_no: int, elements: Iterable[Element]) -> bytes:
    """SHA-512 over the epoch number and its elements in canonical byte order.

    Elements are hashed in ascending lexicographic order of their canonical
    bytes, each length-prefixed, so the digest is independent of iteration
    order of the input.
    """
    if epoch_no < 1:
        raise ValueError("epoch_no must be >= 1")
    h = crypto.hashlib.sha512(struct.pack(">Q", epoch_no))
    for canon in sorted(canonical_element_bytes(e) for e in elements):
        h.update(struct.pack(">I", len(canon)))
        h.update(canon)
    return h.digest()


def epoch_digest_from_canonical(epoch_no: int, canonical_items: Iterable[bytes]) -> bytes:
    """epoch_digest when the canonical element bytes are already at hand."""
    if epoch_no < 1:
        raise ValueError("epoch_no must be >= 1")
    h = crypto.hashlib.sha512(struct.pack(">Q", epoch_no))
    for canon in sorted(canonical_items):
        h.update(struct.pack(">I", len(canon)))
        h.update(canon)
    return h.digest()


def valid_element(e: Element, registry: KeyRegistry) -> bool:
    """Structural checks, registered-client creator, and signature check.

    Deterministic, never raises. A creator registered as a server fails the
    role check: servers cannot mint valid elements on their own.
    """
    try:
        canon = canonical_element_bytes(e)
    except EncodingError:
        return False
    return _valid_element_canon(canon, e, registry)


def _valid_element_canon(canon: bytes, e: Element, registry: KeyRegistry) -> bool:
    cache = registry._element_cache
    key = sha512(canon)[:20]
    hit = cache.get(key)
    if hit is not None:
        return hit[0]
    ok = registry.is_client(e.creator) and crypto.verify(
        registry.public_key(e.creator), canon[:-crypto.SIGNATURE_LEN], e.sig
    )
    cache[key] = (ok, e, canon) if ok else (False, None, None)
    return ok


def parse_valid_element_entry(data: bytes, registry: KeyRegistry) -> tuple[Element, bytes] | None:
    """Decode + validate in one step, returning interned (element, canon).

    Every server independently re-validates every element it sees in a
    block; validation is pure, so a shared cache only removes n-1 identical
    signature checks. The cache also interns the parsed element and one
    canonical-bytes object, so n servers storing the same element share
    storage instead of each keeping its own copy of the block slice.
    """
    cache = registry._element_cache
    key = sha512(data)[:20]
    hit = cache.get(key)
    if hit is not None:
        return (hit[1], hit[2]) if hit[0] else None
    try:
        e = decode_element(data)
    except DecodeError:
        cache[key] = (False, None, None)
        return None
    ok = registry.is_client(e.creator) and crypto.verify(
        registry.public_key(e.creator), data[:-crypto.SIGNATURE_LEN], e.sig
    )
    cache[key] = (ok, e, data) if ok else (False, None, None)
    return (e, data) if ok else None


def parse_valid_element(data: bytes, registry: KeyRegistry) -> Element | None:
    """Decode + validate; the interned element itself, or None."""
    entry = parse_valid_element_entry(data, registry)
    return entry[0] if entry else None


def valid_proof(
    epoch_no: int,
    proof_sig: bytes,
    signer: int,
    epoch_set: Iterable[Element] | None,
    registry: KeyRegistry,
    *,
    epoch_set_digest: bytes | None = None,
) -> bool:
    """True iff the epoch is known locally, signer is a registered server,
    and the signature verifies over the epoch digest.

    An undefined epoch_set (epoch not yet in local history) is invalid: a
    correct server's proof for epoch i only reaches the ledger after every
    correct server has consolidated epoch i, so this drops nothing honest.
    Callers that already hold the epoch digest can pass it to skip the
    re-hash.
    """
    if epoch_set is None:
        return False
    if not registry.is_server(signer):
        return False
    if epoch_set_digest is None:
        epoch_set_digest = epoch_digest(epoch_no, epoch_set)
    return registry.verify_signature(signer, epoch_set_digest, proof_sig)


def make_epoch_proof(epoch_no: int, digest: bytes, signer: int, keys: crypto.KeyPair) -> EpochProof:
    """Sign an epoch digest, producing the proof record for the ledger."""
    return EpochProof(epoch_no=epoch_no, proof_sig=crypto.sign(keys, digest), signer=signer)


@dataclass(frozen=True)
class SetchainSnapshot:
    """Immutable (the_set, history, epoch, proofs) view returned by get().

    history keys are exactly 1..epoch and every epoch is a subset of
    the_set. The snapshot holds fresh copies; later server activity never
    mutates it.
    """

    the_set: frozenset[Element]
    history: Mapping[int, frozenset[Element]]
    epoch: int
    proofs: frozenset[EpochProof]

    def __post_init__(self):
        if set(self.history.keys()) != set(range(1, self.epoch + 1)):
            raise ValueError("history keys must be exactly 1..epoch")


@dataclass(frozen=True)
class SizeMode:
    """Element payload size model: fixed(l_e) or lognormal(mean, sigma)."""

    kind: str
    mean: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "lognormal"):
            raise ValueError(f"unknown size mode {self.kind!r}")
        if self.mean <= 0:
            raise ValueError("size mean must be positive")

    @classmethod
    def parse(cls, text: str) -> "SizeMode":
        text = text.strip()
        if not text.endswith(")") or "(" not in text:
            raise ValueError(f"cannot parse size mode {text!r}")
        kind, args = text[:-1].split("(", 1)
        parts = [a.strip() for a in args.split(",")]
        if kind == "fixed" and len(parts) == 1:
            return cls("fixed", float(parts[0]))
        if kind == "lognormal" and len(parts) == 2:
            return cls("lognormal", float(parts[0]), float(parts[1]))
        raise ValueError(f"cannot parse size mode {text!r}")

    def format(self) -> str:
        if self.kind == "fixed":
            return f"fixed({self.mean:g})"
        return f"lognormal({self.mean:g},{self.sigma:g})"


@dataclass(frozen=True)
class SystemConfig:
    """Full parameter set for one simulated run."""

    n: int = 10
    f: int | None = None
    sending_rate: float = 10_000.0
    collector_limit: int = 100
    network_delay: int = 0
    block_capacity: int = 524_288
    block_interval: int = 1_250
    collector_timeout: int = 1_000
    request_timeout: int = 500
    mempool_max_txs: int = 10_000_000
    mempool_max_bytes: int = 2 * 1024**3
    element_size_mode: SizeMode = field(default_factory=lambda: SizeMode("lognormal", 438.0, 753.5))
    injection_duration: float = 50.0
    seed: int = 42
    produce_empty_blocks: bool = False
    max_virtual_time: float = 600.0

    def fault_bound(self) -> int:
        return (self.n - 1) // 3 if self.f is None else self.f

    def validate(self) -> None:
        f = self.fault_bound()
        if self.n < 2:
            raise ValueError("need at least 2 servers")
        if not 0 <= f or not f < self.n / 2:
            raise ValueError(f"fault bound f={f} must satisfy 0 <= f < n/2 (n={self.n})")
        if self.block_capacity <= 0 or self.block_interval <= 0:
            raise ValueError("block capacity and interval must be positive")
        if self.collector_limit <= self.n:
            raise ValueError(f"collector_limit ({self.collector_limit}) must exceed n ({self.n})")
        if self.network_delay < 0 or self.network_delay >= self.block_interval:
            raise ValueError("network_delay must be in [0, block_interval)")
        if self.sending_rate < 0 or self.injection_duration < 0:
            raise ValueError("sending rate and duration must be non-negative")
        if self.collector_timeout <= 0 or self.request_timeout <= 0:
            raise ValueError("timeouts must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
