"""Hashing, signing, key derivation, and the registry."""

import hashlib

import pytest

from setchain import crypto

# FIPS 180-4 / independent-tool vectors (sha512sum, openssl)
SHA512_EMPTY = (
    "cf83e1357eefb8bdf1542850d66d8007d620e4050b5715dc83f4a921d36ce9ce"
    "47d0d13c5d85f2b0ff8318d2877eec2f63b931bd47417a81a538327af927da3e")
SHA512_ABC = (
    "ddaf35a193617abacc417349ae20413112e6fa4e89a97ea20a9eeee64b55d39a"
    "2192992a274fc1a836ba3c23a3feebbd454d4423643ce80e2a9ac94fa54ca49f")

# RFC 8032 section 7.1, TEST 1 (empty message)
RFC8032_SECRET = "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"
RFC8032_PUBLIC = "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"
RFC8032_SIG = (
    "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e06522490155"
    "5fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b")


def test_sha512_standard_vectors():
    assert crypto.sha512(b"").hex() == SHA512_EMPTY
    assert crypto.sha512(b"abc").hex() == SHA512_ABC
    assert len(crypto.sha512(b"anything")) == 64


def test_sha512_avalanche():
    # flipping one input bit should flip roughly half the output bits
    import random
    rng = random.Random(5)
    fractions = []
    for _ in range(100):
        msg = bytearray(rng.randbytes(64))
        h1 = crypto.sha512(bytes(msg))
        msg[rng.randrange(64)] ^= 1 << rng.randrange(8)
        h2 = crypto.sha512(bytes(msg))
        diff = sum(bin(a ^ b).count("1") for a, b in zip(h1, h2))
        fractions.append(diff / 512)
    mean = sum(fractions) / len(fractions)
    assert 0.40 <= mean <= 0.60


def test_rfc8032_vector_1():
    kp = crypto.KeyPair(secret=bytes.fromhex(RFC8032_SECRET),
                        public=bytes.fromhex(RFC8032_PUBLIC))
    assert crypto.sign(kp, b"").hex() == RFC8032_SIG
    assert crypto.verify(bytes.fromhex(RFC8032_PUBLIC), b"", bytes.fromhex(RFC8032_SIG))


def test_generate_keypair_deterministic():
    a = crypto.generate_keypair(b"\x07" * 32)
    b = crypto.generate_keypair(b"\x07" * 32)
    assert a.public == b.public and a.secret == b.secret
    with pytest.raises(ValueError):
        crypto.generate_keypair(b"")


def test_generate_keypair_no_collisions():
    seen = set()
    for i in range(1000):
        kp = crypto.generate_keypair(i.to_bytes(4, "big"))
        seen.add(kp.public)
    assert len(seen) == 1000


def test_sign_verify_round_trip():
    kp = crypto.generate_keypair(b"roundtrip")
    msg = b"the quick brown fox"
    sig = crypto.sign(kp, msg)
    assert len(sig) == 64
    assert crypto.verify(kp.public, msg, sig)
    assert not crypto.verify(kp.public, msg + b"!", sig)


def test_sign_deterministic_bytes():
    kp = crypto.generate_keypair(b"deterministic")
    assert crypto.sign(kp, b"m") == crypto.sign(kp, b"m")


def test_verify_malformed_inputs_return_false():
    kp = crypto.generate_keypair(b"malformed")
    sig = crypto.sign(kp, b"m")
    assert not crypto.verify(kp.public, b"m", sig[:63])          # truncated
    assert not crypto.verify(kp.public[:31], b"m", sig)          # short key
    assert not crypto.verify(b"\x00" * 32, b"m", sig)            # wrong key
    tampered = bytes([sig[0] ^ 1]) + sig[1:]
    assert not crypto.verify(kp.public, b"m", tampered)


def test_derive_process_keypair_stable_and_distinct():
    a = crypto.derive_process_keypair(42, 0)
    b = crypto.derive_process_keypair(42, 0)
    c = crypto.derive_process_keypair(42, 1)
    d = crypto.derive_process_keypair(43, 0)
    assert a == b
    assert a.public != c.public
    assert a.public != d.public


def test_registry_roles_and_lookup():
    registry, keys = crypto.build_registry(n_servers=3, n_clients=2, global_seed=9)
    assert registry.server_ids() == [0, 1, 2]
    assert registry.client_ids() == [3, 4]
    assert registry.is_server(0) and not registry.is_client(0)
    assert registry.is_client(4) and not registry.is_server(4)
    assert registry.role(99) is None and registry.public_key(99) is None
    assert registry.public_key(1) == keys[1].public
    with pytest.raises(ValueError):
        registry.register(0, keys[0].public, "server")  # duplicate id
    with pytest.raises(ValueError):
        registry.register(77, keys[0].public, "oracle")  # unknown role


def test_registry_verify_signature_memo_matches_direct():
    registry, keys = crypto.build_registry(2, 1, 5)
    msg = hashlib.sha512(b"payload").digest()
    sig = crypto.sign(keys[0], msg)
    assert registry.verify_signature(0, msg, sig)
    assert registry.verify_signature(0, msg, sig)  # cached path
    assert not registry.verify_signature(1, msg, sig)
    assert not registry.verify_signature(123, msg, sig)
