"""Batching server: a collector accumulates elements and epoch proofs,
and each flushed batch is compressed into a single ledger transaction.
Every transaction that decompresses becomes one epoch.

The codec is pluggable. The default binds the system Brotli library
through ctypes; a pass-through codec exists for ratio-1 experiments.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import struct
from typing import Callable, Iterable

from . import core
from .core import (
    ADD_ACCEPTED,
    ADD_DUPLICATE,
    ADD_INVALID,
    Batch,
    Element,
    EpochProof,
    SetchainSnapshot,
)
from .crypto import KeyPair, KeyRegistry
from .engine import NOT_FOUND
from .ledger import Block


class CodecError(Exception):
    """Compressed payload cannot be decoded."""


_MAX_DECODED_LEN = 64 * 1024 * 1024


class NullCodec:
    """Identity codec: compression ratio exactly 1."""

    name = "null"

    def compress(self, data: bytes) -> bytes:
        return data

    def decompress(self, data: bytes) -> bytes:
        return data


class _BrotliLib:
    _instance = None

    def __init__(self):
        enc_name = ctypes.util.find_library("brotlienc") or "libbrotlienc.so.1"
        dec_name = ctypes.util.find_library("brotlidec") or "libbrotlidec.so.1"
        enc = ctypes.CDLL(enc_name)
        dec = ctypes.CDLL(dec_name)
        enc.BrotliEncoderMaxCompressedSize.restype = ctypes.c_size_t
        enc.BrotliEncoderMaxCompressedSize.argtypes = [ctypes.c_size_t]
        enc.BrotliEncoderCompress.restype = ctypes.c_int
        enc.BrotliEncoderCompress.argtypes = [
            ctypes.c_int, ctypes.c_int, ctypes.c_int, ctypes.c_size_t,
            ctypes.c_char_p, ctypes.POINTER(ctypes.c_size_t), ctypes.c_char_p,
        ]
        dec.BrotliDecoderDecompress.restype = ctypes.c_int
        dec.BrotliDecoderDecompress.argtypes = [
            ctypes.c_size_t, ctypes.c_char_p,
            ctypes.POINTER(ctypes.c_size_t), ctypes.c_char_p,
        ]
        self.enc = enc
        self.dec = dec

    @classmethod
    def get(cls) -> "_BrotliLib":
        if cls._instance is None:
            cls._instance = cls()
        return cls._instance


class BrotliCodec:
    """Brotli (RFC 7932) via the system library.

    The compressed frame carries the uncompressed length up front so a
    decoder can allocate exactly and detect truncation deterministically.
    """

    name = "brotli"

    def __init__(self, quality: int = 5, lgwin: int = 22):
        self.quality = quality
        self.lgwin = lgwin
        self._lib = _BrotliLib.get()

    def compress(self, data: bytes) -> bytes:
        lib = self._lib
        bound = lib.enc.BrotliEncoderMaxCompressedSize(len(data))
        out = ctypes.create_string_buffer(bound)
        size = ctypes.c_size_t(bound)
        ok = lib.enc.BrotliEncoderCompress(self.quality, self.lgwin, 0,
                                           len(data), data, ctypes.byref(size), out)
        if ok != 1:
            raise CodecError("brotli encoder failure")
        return struct.pack(">Q", len(data)) + out.raw[:size.value]

    def decompress(self, data: bytes) -> bytes:
        if len(data) < 8:
            raise CodecError("frame too short")
        expected = struct.unpack_from(">Q", data, 0)[0]
        if expected > _MAX_DECODED_LEN:
            raise CodecError("implausible decoded length")
        out = ctypes.create_string_buffer(expected) if expected else ctypes.create_string_buffer(1)
        size = ctypes.c_size_t(expected)
        result = self._lib.dec.BrotliDecoderDecompress(len(data) - 8, data[8:], ctypes.byref(size), out)
        if result != 1 or size.value != expected:
            raise CodecError("brotli decode failure")
        return out.raw[:expected]


_CODECS: dict[str, Callable[[], object]] = {
    "brotli": BrotliCodec,
    "null": NullCodec,
}


def get_codec(name: str):
    factory = _CODECS.get(name)
    if factory is None:
        raise KeyError(f"unknown codec {name!r}")
    return factory()


def encode_batch_tx(codec_name: str, compressed: bytes) -> bytes:
    """Ledger form of a compressed batch: tag, codec name, payload."""
    name = codec_name.encode("ascii")
    if not 1 <= len(name) <= 255:
        raise core.EncodingError("codec name must be 1..255 ascii bytes")
    return bytes([core.TAG_COMPRESSED_BATCH, len(name)]) + name + compressed


def decode_batch_tx(data: bytes) -> tuple[str, bytes]:
    if len(data) < 3 or data[0] != core.TAG_COMPRESSED_BATCH:
        raise core.DecodeError("not a compressed batch transaction")
    name_len = data[1]
    if name_len == 0 or len(data) < 2 + name_len:
        raise core.DecodeError("bad codec name length")
    try:
        name = data[2:2 + name_len].decode("ascii")
    except UnicodeDecodeError as exc:
        raise core.DecodeError("codec name not ascii") from exc
    return name, data[2 + name_len:]


class Collector:
    """Per-server buffer that flushes at a size limit or after a timeout.

    A batch never waits longer than the timeout once it holds an item: the
    deadline is armed when the batch becomes non-empty and disarmed by any
    flush in between (tracked by a generation counter).
    """

    def __init__(self, limit: int, timeout_ms: int, schedule: Callable, on_flush: Callable):
        if limit < 1:
            raise ValueError("collector limit must be >= 1")
        self.limit = limit
        self.timeout_ms = timeout_ms
        self.last_flush = 0
        self._schedule = schedule
        self._on_flush = on_flush
        self._batch = Batch()
        self._generation = 0

    def __len__(self) -> int:
        return len(self._batch)

    def add(self, item_bytes: bytes) -> bool:
        was_empty = len(self._batch) == 0
        added = self._batch.add(item_bytes)
        if added and was_empty:
            gen = self._generation
            self._schedule(self.timeout_ms, lambda: self._deadline(gen))
        if len(self._batch) >= self.limit:
            self.flush()
        return added

    def _deadline(self, generation: int) -> None:
        if generation == self._generation and len(self._batch) > 0:
            self.flush()

    def flush(self) -> None:
        assert len(self._batch) > 0, "flush of an empty collector"
        items = self._batch.items()
        self._batch.clear()
        self._generation += 1
        self._on_flush(items)


class CompresschainServer:
    def __init__(self, identity: int, keys: KeyPair, registry: KeyRegistry, ctx,
                 *, collector_limit: int, collector_timeout: int,
                 block_capacity: int, codec=None):
        self.identity = identity
        self.keys = keys
        self.registry = registry
        self.ctx = ctx
        self.codec = codec if codec is not None else BrotliCodec()
        self.block_capacity = block_capacity
        self.epoch = 0
        self._elements: dict[bytes, Element] = {}
        self._history: dict[int, frozenset[Element]] = {}
        self._in_history: set[bytes] = set()
        self._epoch_digests: dict[int, bytes] = {}
        self._proofs: set[EpochProof] = set()
        self.collector = Collector(collector_limit, collector_timeout,
                                   ctx.schedule, self._emit_batch)

    # -- client surface --------------------------------------------------

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

    # -- batching ----------------------------------------------------------

    def _emit_batch(self, items: tuple[bytes, ...]) -> None:
        """Compress and append one flushed batch, splitting in halves if the
        compressed transaction would exceed the block capacity."""
        tx = encode_batch_tx(self.codec.name, self.codec.compress(core.encode_batch(items)))
        if len(tx) <= self.block_capacity:
            self.collector.last_flush = self.ctx.now()
            self.ctx.append(tx)
            return
        if len(items) == 1:
            self.ctx.count("unsplittable_batch")
            return
        mid = len(items) // 2
        self._emit_batch(items[:mid])
        self._emit_batch(items[mid:])

    # -- ledger surface ----------------------------------------------------

    def on_new_block(self, block: Block) -> None:
        """Each transaction that decompresses into a non-empty batch becomes
        one epoch; anything undecodable is skipped and the epoch counter
        stays put, which keeps all correct servers in lockstep."""
        for tx in block.txs:
            items = self._decode_tx(tx.bytes)
            if not items:
                continue
            epoch_elems: dict[bytes, Element] = {}
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
                    if entry is None:
                        continue
                    e, canon = entry
                    if canon in self._in_history or canon in epoch_elems:
                        continue
                    epoch_elems[canon] = e

            self._elements.update(epoch_elems)
            self.epoch += 1
            self._history[self.epoch] = frozenset(epoch_elems.values())
            self._in_history.update(epoch_elems)
            digest = core.epoch_digest_from_canonical(self.epoch, epoch_elems)
            self._epoch_digests[self.epoch] = digest
            own = core.make_epoch_proof(self.epoch, digest, self.identity, self.keys)
            self.add_to_batch(core.encode_epoch_proof(own))

    def _decode_tx(self, data: bytes) -> list[bytes] | None:
        try:
            name, payload = decode_batch_tx(data)
            codec = self.codec if name == self.codec.name else get_codec(name)
            return core.decode_batch(codec.decompress(payload)) or None
        except (core.DecodeError, CodecError, KeyError):
            return None

    def serve_batch(self, digest: bytes, requester: int):
        return NOT_FOUND


def decode_compressed_tx(data: bytes) -> list[bytes] | None:
    """Standalone decode of a compressed-batch transaction; None on any
    malformation. Used by the metrics pipeline's reference executor."""
    try:
        name, payload = decode_batch_tx(data)
        return core.decode_batch(get_codec(name).decompress(payload)) or None
    except (core.DecodeError, CodecError, KeyError):
        return None
