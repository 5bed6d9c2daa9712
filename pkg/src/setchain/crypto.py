"""Hashing, signing, and the public-key registry shared by all processes.

Ed25519 (RFC 8032) for signatures, SHA-512 (FIPS 180-4) for hashing.
Key material is derived deterministically from seed bytes so that whole
simulations replay bit-identically from a single integer seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

SIGNATURE_LEN = 64
PUBLIC_KEY_LEN = 32
DIGEST_LEN = 64

ROLE_SERVER = "server"
ROLE_CLIENT = "client"


def sha512(message: bytes) -> bytes:
    """FIPS 180-4 SHA-512 digest (64 bytes)."""
    return hashlib.sha512(message).digest()


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 signing seed plus the derived 32-byte public key."""

    secret: bytes
    public: bytes

    def __post_init__(self):
        if len(self.secret) != 32 or len(self.public) != PUBLIC_KEY_LEN:
            raise ValueError("Ed25519 key material must be 32 bytes")

    def _private(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.secret)


def generate_keypair(seed_material: bytes) -> KeyPair:
    """Derive a keypair deterministically from arbitrary seed bytes.

    The seed bytes are hashed down to the 32-byte Ed25519 private seed, so
    any two processes fed the same material end up with the same keys.
    """
    if not seed_material:
        raise ValueError("seed_material must be non-empty")
    secret = sha512(seed_material)[:32]
    private = Ed25519PrivateKey.from_private_bytes(secret)
    return KeyPair(secret=secret, public=private.public_key().public_bytes_raw())


def derive_process_keypair(global_seed: int, process_id: int) -> KeyPair:
    """Per-process keypair from the run seed; stable across runs."""
    material = global_seed.to_bytes(8, "big", signed=False) + b"/key/" + process_id.to_bytes(8, "big")
    return generate_keypair(material)


def sign(key: KeyPair, message: bytes) -> bytes:
    """Deterministic Ed25519 signature (64 bytes) over message."""
    return key._private().sign(message)


def verify(public: bytes, message: bytes, sig: bytes) -> bool:
    """True iff sig is a valid Ed25519 signature of message under public.

    Never raises: malformed keys or signatures simply verify as False.
    """
    if len(sig) != SIGNATURE_LEN or len(public) != PUBLIC_KEY_LEN:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, message)
        return True
    except (InvalidSignature, ValueError):
        return False


@dataclass
class KeyRegistry:
    """Immutable-after-setup map of process id -> (public key, role).

    Also memoizes raw signature checks: every process re-verifies the same
    ledger payloads, and verification is pure, so a shared cache only saves
    work. The cache never changes observable behaviour.
    """

    _entries: dict[int, tuple[bytes, str]] = field(default_factory=dict)
    _verify_cache: dict[tuple[int, bytes, bytes], bool] = field(default_factory=dict, repr=False)
    _element_cache: dict = field(default_factory=dict, repr=False)

    def register(self, process_id: int, public: bytes, role: str) -> None:
        if role not in (ROLE_SERVER, ROLE_CLIENT):
            raise ValueError(f"unknown role {role!r}")
        if process_id in self._entries:
            raise ValueError(f"process {process_id} already registered")
        self._entries[process_id] = (public, role)

    def public_key(self, process_id: int) -> bytes | None:
        entry = self._entries.get(process_id)
        return entry[0] if entry else None

    def role(self, process_id: int) -> str | None:
        entry = self._entries.get(process_id)
        return entry[1] if entry else None

    def is_server(self, process_id: int) -> bool:
        return self.role(process_id) == ROLE_SERVER

    def is_client(self, process_id: int) -> bool:
        return self.role(process_id) == ROLE_CLIENT

    def server_ids(self) -> list[int]:
        return sorted(p for p, (_, r) in self._entries.items() if r == ROLE_SERVER)

    def client_ids(self) -> list[int]:
        return sorted(p for p, (_, r) in self._entries.items() if r == ROLE_CLIENT)

    def verify_signature(self, process_id: int, message: bytes, sig: bytes) -> bool:
        """Memoized signature check under the registered key of process_id."""
        public = self.public_key(process_id)
        if public is None:
            return False
        key = (process_id, message, sig)
        cached = self._verify_cache.get(key)
        if cached is None:
            cached = verify(public, message, sig)
            self._verify_cache[key] = cached
        return cached


def build_registry(n_servers: int, n_clients: int, global_seed: int) -> tuple[KeyRegistry, dict[int, KeyPair]]:
    """Standard process layout: servers 0..n-1, clients n..n+n_clients-1."""
    registry = KeyRegistry()
    keys: dict[int, KeyPair] = {}
    for sid in range(n_servers):
        kp = derive_process_keypair(global_seed, sid)
        registry.register(sid, kp.public, ROLE_SERVER)
        keys[sid] = kp
    for k in range(n_clients):
        cid = n_servers + k
        kp = derive_process_keypair(global_seed, cid)
        registry.register(cid, kp.public, ROLE_CLIENT)
        keys[cid] = kp
    return registry, keys
