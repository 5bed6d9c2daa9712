"""Deterministic simulation harness and metrics pipeline.

One run wires together: a virtual-time scheduler, the block ledger, n
servers (correct ones plus up to f adversaries on the highest ids), one
load-generating client per server, the batch-store transport, and a
monitor that snoops the ledger stream.

The monitor replays the ledger through an independent single-process
reference executor: it derives the consensus epoch assignment on its own,
validates every epoch proof it sees in delivered blocks, and stamps each
element's lifecycle times (mempool stages, ledger inclusion, commit).
Commit is recorded exactly when the (f+1)-th distinct-signer valid proof
of the element's epoch lands in a delivered block.

A run ends when all elements accepted by correct servers have committed
and every epoch up to the highest element-bearing one has f+1 proofs in
the ledger (plus a deterministic drain margin so servers finish in-flight
work), or at the virtual-time cap, whichever comes first. Hitting the cap
flags the run as saturated.
"""

from __future__ import annotations

import math
import random
from array import array
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import adversary as adversary_mod
from . import core, crypto
from .compresschain import BrotliCodec, CompresschainServer, NullCodec, decode_compressed_tx
from .core import ADD_ACCEPTED, Element, SetchainSnapshot, SystemConfig
from .crypto import KeyPair, KeyRegistry
from .engine import BatchStoreRouter, Counters, Scheduler, ServerContext
from .hashchain import HashchainServer, decode_hash_batch_tx
from .ledger import Block, BlockLedger, LedgerObserver, LedgerTx
from .vanilla import VanillaServer

ALGORITHMS = ("vanilla", "compresschain", "hashchain")

_UNSET = -1


def lognormal_params(mean: float, sigma: float) -> tuple[float, float]:
    """Parameters of the underlying normal for a lognormal with the given
    mean and standard deviation."""
    cv2 = (sigma / mean) ** 2
    s2 = math.log1p(cv2)
    mu = math.log(mean) - s2 / 2
    return mu, math.sqrt(s2)


class SyntheticElementFactory:
    """Element generator shaped like rollup transaction traffic.

    Payloads are structured: a unique sequence header, then 32-byte words
    that are mostly zero-padded small integers and addresses drawn from a
    shared pool, with an occasional fully random word. That yields batch
    compression ratios in the band reported for the real corpus, and the
    size model reproduces its size statistics.
    """

    ADDR_POOL = 32
    SELECTOR_POOL = 16
    MIN_PAYLOAD = 16

    def __init__(self, keys: dict[int, KeyPair], size_mode: core.SizeMode, seed: int):
        self._keys = keys
        self._mode = size_mode
        pool_rng = random.Random(int.from_bytes(
            crypto.sha512(seed.to_bytes(8, "big") + b"/corpus")[:8], "big"))
        self._addrs = [pool_rng.randbytes(20) for _ in range(self.ADDR_POOL)]
        self._selectors = [pool_rng.randbytes(4) for _ in range(self.SELECTOR_POOL)]
        self._rngs: dict[int, random.Random] = {}
        self._counters: dict[int, int] = {}
        self._seed = seed
        if size_mode.kind == "lognormal":
            self._mu, self._s = lognormal_params(size_mode.mean, size_mode.sigma)

    def _rng(self, client_id: int) -> random.Random:
        rng = self._rngs.get(client_id)
        if rng is None:
            material = self._seed.to_bytes(8, "big") + b"/client/" + client_id.to_bytes(8, "big")
            rng = random.Random(int.from_bytes(crypto.sha512(material)[:8], "big"))
            self._rngs[client_id] = rng
        return rng

    def _size(self, rng: random.Random) -> int:
        if self._mode.kind == "fixed":
            size = int(self._mode.mean)
        else:
            size = int(round(rng.lognormvariate(self._mu, self._s)))
            size = min(max(size, 64), core.MAX_ELEMENT_SIZE)
        return max(size, self.MIN_PAYLOAD)

    def _payload(self, client_id: int, seq: int, rng: random.Random, size: int) -> bytes:
        out = bytearray()
        out += (client_id & 0xFFFFFFFF).to_bytes(4, "big") + seq.to_bytes(8, "big")
        out += bytes(12) + rng.choice(self._addrs)
        out += bytes(12) + rng.choice(self._addrs)
        out += bytes(26) + rng.getrandbits(48).to_bytes(6, "big")
        out += rng.choice(self._selectors)
        while len(out) < size:
            kind = rng.random()
            word = bytearray(32)
            if kind < 0.30:
                word[12:] = rng.choice(self._addrs)
            elif kind < 0.90:
                nb = rng.randint(1, 6)
                word[32 - nb:] = rng.getrandbits(8 * nb).to_bytes(nb, "big")
            else:
                word[:] = rng.randbytes(32)
            out += word
        return bytes(out[:size])

    def make(self, client_id: int) -> Element:
        rng = self._rng(client_id)
        seq = self._counters.get(client_id, 0)
        self._counters[client_id] = seq + 1
        payload = self._payload(client_id, seq, rng, self._size(rng))
        sig = crypto.sign(self._keys[client_id], core.element_signing_bytes(client_id, payload))
        return Element(creator=client_id, payload=payload, sig=sig)


class TraceStore:
    """Per-element lifecycle timestamps, densely indexed in creation order.

    Stages: add, first mempool, f+1 mempools, all mempools, ledger
    inclusion, commit. Unset stages stay -1.
    """

    def __init__(self, injection_end_ms: int):
        self.injection_end_ms = injection_end_ms
        self.t_add = array("q")
        self.t_mempool_1 = array("q")
        self.t_mempool_quorum = array("q")
        self.t_mempool_all = array("q")
        self.t_ledger = array("q")
        self.t_commit = array("q")
        self.ack = []  # add acknowledgment strings

    def new_element(self, t_add: int) -> int:
        idx = len(self.t_add)
        self.t_add.append(t_add)
        for arr in (self.t_mempool_1, self.t_mempool_quorum, self.t_mempool_all,
                    self.t_ledger, self.t_commit):
            arr.append(_UNSET)
        self.ack.append("")
        return idx

    def __len__(self) -> int:
        return len(self.t_add)

    def stage_array(self, stage: int) -> array:
        return (self.t_mempool_1, self.t_mempool_quorum, self.t_mempool_all,
                self.t_ledger, self.t_commit)[stage - 1]


def efficiency(trace: TraceStore, t_seconds: float) -> float:
    """Committed-by-t over everything added during the injection window."""
    if t_seconds <= 0:
        raise ValueError("t must be positive")
    cutoff = int(t_seconds * 1000)
    total = sum(1 for ta in trace.t_add if ta <= trace.injection_end_ms)
    if total == 0:
        return 1.0
    committed = sum(1 for tc in trace.t_commit if tc != _UNSET and tc <= cutoff)
    return committed / total


def throughput_series(trace: TraceStore) -> tuple[list[int], list[float]]:
    """Per-second commit counts and their 9-second rolling average."""
    commits = [tc for tc in trace.t_commit if tc != _UNSET]
    if not commits:
        return [], []
    last_second = max(commits) // 1000
    bins = [0] * (last_second + 1)
    for tc in commits:
        bins[tc // 1000] += 1
    rolling = []
    for s in range(len(bins)):
        window = bins[max(0, s - 8):s + 1]
        rolling.append(sum(window) / 9.0)
    return bins, rolling


def latency_cdf(trace: TraceStore, stage: int) -> np.ndarray:
    """Sorted per-element latencies (seconds) from add to the given stage."""
    if stage not in (1, 2, 3, 4, 5):
        raise ValueError("stage must be in 1..5")
    arr = trace.stage_array(stage)
    vals = [(arr[i] - trace.t_add[i]) / 1000.0 for i in range(len(trace.t_add)) if arr[i] != _UNSET]
    return np.sort(np.asarray(vals))


@dataclass
class MetricsReport:
    algorithm: str
    n: int
    f: int
    seed: int
    codec_info: str
    total_generated: int
    accepted_correct: int
    committed: int
    rejected: int
    uncommitted: int
    efficiency_at: dict[int, float]
    throughput_bins: list[int]
    rolling9: list[float]
    latency_percentiles: dict[int, dict[str, float]]
    commit_marks: dict[str, float | None]
    counters: dict[str, int]
    saturated: bool
    end_time_ms: int


class RunMonitor(LedgerObserver):
    """Ledger snoop: reference executor, stage stamps, commit detection,
    and the run's drain condition."""

    def __init__(self, registry: KeyRegistry, n: int, f: int, algorithm: str,
                 counters: Counters, scheduler: Scheduler, trace: TraceStore,
                 drain_margin_ms: int):
        self.registry = registry
        self.n = n
        self.f = f
        self.algorithm = algorithm
        self.counters = counters
        self.scheduler = scheduler
        self.trace = trace
        self.drain_margin_ms = drain_margin_ms

        self.elem_index: dict[bytes, int] = {}
        self.accepted_flags = array("b")
        self.accepted_correct = 0
        self.committed_accepted = 0
        self.submitted: set[bytes] = set()

        # reference executor
        self.ref_epoch = 0
        self.ref_in_history: set[bytes] = set()
        self.ref_members: dict[int, frozenset[bytes]] = {}
        self.ref_digest: dict[int, bytes] = {}
        self.epoch_members_idx: dict[int, list[int]] = {}
        self.proof_signers: dict[int, set[int]] = {}
        self.epoch_commit_time: dict[int, int] = {}
        self.h_star = 0
        self._proofed_prefix = 0

        # hashchain bookkeeping
        self.registry_contents: dict[bytes, bytes] = {}
        self.digest_elems: dict[bytes, list[int]] = {}
        self._digest_stage1: set[bytes] = set()
        self._digest_gossiped: set[bytes] = set()
        self._digest_delivered: set[bytes] = set()
        self._ref_hash_signers: dict[bytes, set[int]] = {}
        self._ref_consolidated: set[bytes] = set()

        self._tx_cache: dict[bytes, tuple[bool, list[int], list[bytes], list[core.EpochProof]]] = {}
        self.delivered_fingerprints: list[tuple[int, bytes]] = []
        self.per_server_notifications: dict[int, list[tuple[int, bytes]]] = {}
        self.appended_tx: set[bytes] = set()
        self.injected_tx: set[bytes] = set()
        self.blocks_seen = 0
        self.drained = False
        self._stop_scheduled = False
        self.injection_done = False

    # -- harness instrumentation -----------------------------------------

    def note_generated(self, canon: bytes, t_add: int) -> int:
        idx = self.trace.new_element(t_add)
        self.elem_index[canon] = idx
        self.accepted_flags.append(0)
        self.submitted.add(canon)
        return idx

    def note_add_ack(self, idx: int, ack: str, correct_server: bool) -> None:
        self.trace.ack[idx] = ack
        if ack == ADD_ACCEPTED and correct_server:
            self.accepted_flags[idx] = 1
            self.accepted_correct += 1

    def register_batch(self, server_id: int, digest: bytes, data: bytes) -> None:
        if digest in self.registry_contents:
            return
        self.registry_contents[digest] = data
        idxs = []
        try:
            items = core.decode_batch(data)
        except core.DecodeError:
            items = []
        for item in items:
            idx = self.elem_index.get(item)
            if idx is not None:
                idxs.append(idx)
        if idxs:
            self.digest_elems[digest] = idxs

    def lookup_content(self, digest: bytes) -> bytes | None:
        return self.registry_contents.get(digest)

    def note_injection_done(self) -> None:
        self.injection_done = True
        self._check_drained()

    def record_notification(self, server_id: int, height: int, fingerprint: bytes) -> None:
        self.per_server_notifications.setdefault(server_id, []).append((height, fingerprint))

    # -- stage stamping ---------------------------------------------------

    def _mark(self, arr: array, idx: int, t: int) -> None:
        if arr[idx] == _UNSET:
            arr[idx] = t

    def _carried_indices_submit(self, tx_bytes: bytes) -> Iterable[int]:
        tag = tx_bytes[0] if tx_bytes else 0
        if self.algorithm == "vanilla":
            if tag == core.TAG_ELEMENT:
                idx = self.elem_index.get(tx_bytes)
                if idx is not None:
                    return (idx,)
            return ()
        if self.algorithm == "compresschain":
            if tag == core.TAG_COMPRESSED_BATCH:
                return self._decoded(tx_bytes)[1]
            return ()
        if tag == core.TAG_HASH_BATCH:
            try:
                hb = decode_hash_batch_tx(tx_bytes)
            except core.DecodeError:
                return ()
            if hb.digest not in self._digest_stage1:
                self._digest_stage1.add(hb.digest)
                return self.digest_elems.get(hb.digest, ())
        return ()

    def on_append(self, tx: LedgerTx) -> None:
        self.appended_tx.add(tx.bytes)
        for idx in self._carried_indices_submit(tx.bytes):
            self._mark(self.trace.t_mempool_1, idx, tx.submit_time)
            if self.f == 0:
                self._mark(self.trace.t_mempool_quorum, idx, tx.submit_time)

    def on_gossip_complete(self, tx: LedgerTx, now: int) -> None:
        tag = tx.bytes[0] if tx.bytes else 0
        idxs: Iterable[int] = ()
        if self.algorithm == "vanilla" and tag == core.TAG_ELEMENT:
            idx = self.elem_index.get(tx.bytes)
            idxs = (idx,) if idx is not None else ()
        elif self.algorithm == "compresschain" and tag == core.TAG_COMPRESSED_BATCH:
            idxs = self._decoded(tx.bytes)[1]
        elif self.algorithm == "hashchain" and tag == core.TAG_HASH_BATCH:
            try:
                hb = decode_hash_batch_tx(tx.bytes)
            except core.DecodeError:
                return
            if hb.digest in self._digest_gossiped:
                return
            self._digest_gossiped.add(hb.digest)
            idxs = self.digest_elems.get(hb.digest, ())
        for idx in idxs:
            if self.f > 0:
                self._mark(self.trace.t_mempool_quorum, idx, now)
            self._mark(self.trace.t_mempool_all, idx, now)

    # -- reference executor ------------------------------------------------

    def _decoded(self, tx_bytes: bytes) -> tuple[bool, list[int], list[bytes], list[core.EpochProof]]:
        """(decodable, element trace idxs, valid element canons, decoded
        proofs) of a compressed-batch transaction; cached per tx bytes.
        A decodable batch always forms an epoch on servers, even when all
        its items turn out invalid, so the flag is tracked separately."""
        cached = self._tx_cache.get(tx_bytes)
        if cached is not None:
            return cached
        idxs: list[int] = []
        canons: list[bytes] = []
        proofs: list[core.EpochProof] = []
        items = decode_compressed_tx(tx_bytes)
        decodable = items is not None
        for item in items or ():
            if not item:
                continue
            if item[0] == core.TAG_ELEMENT:
                parsed = core.parse_valid_element_entry(item, self.registry)
                if parsed is not None:
                    canons.append(parsed[1])
                    idx = self.elem_index.get(parsed[1])
                    if idx is not None:
                        idxs.append(idx)
            elif item[0] == core.TAG_PROOF:
                try:
                    proofs.append(core.decode_epoch_proof(item))
                except core.DecodeError:
                    pass
        entry = (decodable, idxs, canons, proofs)
        self._tx_cache[tx_bytes] = entry
        return entry

    def _count_proof(self, p: core.EpochProof, now: int) -> None:
        if not 1 <= p.epoch_no <= self.ref_epoch:
            return
        if not self.registry.is_server(p.signer):
            return
        if not self.registry.verify_signature(p.signer, self.ref_digest[p.epoch_no], p.proof_sig):
            return
        signers = self.proof_signers.setdefault(p.epoch_no, set())
        if p.signer in signers:
            return
        signers.add(p.signer)
        if len(signers) == self.f + 1 and p.epoch_no not in self.epoch_commit_time:
            self.epoch_commit_time[p.epoch_no] = now
            for idx in self.epoch_members_idx.get(p.epoch_no, ()):
                if self.trace.t_commit[idx] == _UNSET:
                    self.trace.t_commit[idx] = now
                    if self.accepted_flags[idx]:
                        self.committed_accepted += 1
            while (self._proofed_prefix + 1) in self.epoch_commit_time:
                self._proofed_prefix += 1

    def _ref_consolidate(self, fresh: dict[bytes, int | None], now: int, mark_ledger: bool) -> None:
        self.ref_epoch += 1
        epoch = self.ref_epoch
        self.ref_in_history.update(fresh)
        self.ref_members[epoch] = frozenset(fresh)
        self.ref_digest[epoch] = core.epoch_digest_from_canonical(epoch, fresh)
        member_idxs = [i for i in fresh.values() if i is not None]
        if member_idxs:
            self.epoch_members_idx[epoch] = member_idxs
            self.h_star = epoch
            if mark_ledger:
                for idx in member_idxs:
                    self._mark(self.trace.t_ledger, idx, now)

    def _fresh_of(self, canons: Iterable[bytes]) -> dict[bytes, int | None]:
        fresh: dict[bytes, int | None] = {}
        for canon in canons:
            if canon not in self.ref_in_history and canon not in fresh:
                fresh[canon] = self.elem_index.get(canon)
        return fresh

    def _content_items(self, digest: bytes) -> list[bytes]:
        content = self.registry_contents.get(digest)
        if content is None:
            return []
        try:
            return core.decode_batch(content)
        except core.DecodeError:
            return []

    def on_deliver(self, block: Block) -> None:
        now = self.scheduler.now
        self.blocks_seen += 1
        fp = crypto.sha512(b"".join(tx.bytes for tx in block.txs))
        self.delivered_fingerprints.append((block.height, fp))
        for tx in block.txs:
            if tx.injected:
                self.injected_tx.add(tx.bytes)

        if self.algorithm == "vanilla":
            pending_proofs: list[core.EpochProof] = []
            canons: list[bytes] = []
            for tx in block.txs:
                data = tx.bytes
                if not data:
                    continue
                if data[0] == core.TAG_ELEMENT:
                    parsed = core.parse_valid_element_entry(data, self.registry)
                    if parsed is not None:
                        canons.append(parsed[1])
                elif data[0] == core.TAG_PROOF:
                    try:
                        pending_proofs.append(core.decode_epoch_proof(data))
                    except core.DecodeError:
                        pass
            for p in pending_proofs:
                self._count_proof(p, now)
            self._ref_consolidate(self._fresh_of(canons), now, mark_ledger=True)

        elif self.algorithm == "compresschain":
            for tx in block.txs:
                decodable, idxs, canons, proofs = self._decoded(tx.bytes)
                if not decodable:
                    self.counters.inc("garbage_tx")
                    continue
                for p in proofs:
                    self._count_proof(p, now)
                for idx in idxs:
                    self._mark(self.trace.t_ledger, idx, now)
                self._ref_consolidate(self._fresh_of(canons), now, mark_ledger=False)

        else:  # hashchain
            for tx in block.txs:
                try:
                    hb = decode_hash_batch_tx(tx.bytes)
                except core.DecodeError:
                    self.counters.inc("garbage_tx")
                    continue
                if not self.registry.is_server(hb.signer):
                    continue
                if not self.registry.verify_signature(hb.signer, hb.digest, hb.sig):
                    continue
                digest = hb.digest
                if digest not in self._digest_delivered:
                    self._digest_delivered.add(digest)
                    for idx in self.digest_elems.get(digest, ()):
                        self._mark(self.trace.t_ledger, idx, now)
                    for item in self._content_items(digest):
                        if item and item[0] == core.TAG_PROOF:
                            try:
                                self._count_proof(core.decode_epoch_proof(item), now)
                            except core.DecodeError:
                                pass
                signers = self._ref_hash_signers.setdefault(digest, set())
                if hb.signer in signers:
                    continue
                signers.add(hb.signer)
                if len(signers) == self.f + 1 and digest not in self._ref_consolidated:
                    self._ref_consolidated.add(digest)
                    canons = []
                    for item in self._content_items(digest):
                        if item and item[0] == core.TAG_ELEMENT:
                            parsed = core.parse_valid_element_entry(item, self.registry)
                            if parsed is not None:
                                canons.append(parsed[1])
                    self._ref_consolidate(self._fresh_of(canons), now, mark_ledger=False)

        self._check_drained()

    # -- termination --------------------------------------------------------

    def _check_drained(self) -> None:
        if self._stop_scheduled or not self.injection_done:
            return
        if self.committed_accepted < self.accepted_correct:
            return
        if self._proofed_prefix < self.h_star:
            return
        self._stop_scheduled = True
        self.drained = True
        self.scheduler.schedule(self.drain_margin_ms, self.scheduler.stop)


class LoadGenerator:
    """One client per server; client k targets server k with elements at an
    aggregate rate of sending_rate, split evenly. Add times are exact:
    client k's i-th element goes out at floor(i * n * 1000 / rate) ms."""

    def __init__(self, scheduler: Scheduler, factory: SyntheticElementFactory,
                 servers: dict, monitor: RunMonitor, config: SystemConfig,
                 correct_ids: frozenset[int]):
        self.scheduler = scheduler
        self.factory = factory
        self.servers = servers
        self.monitor = monitor
        self.config = config
        self.correct_ids = correct_ids
        self.duration_ms = int(config.injection_duration * 1000)

    def start(self) -> None:
        cfg = self.config
        if cfg.sending_rate <= 0 or self.duration_ms <= 0:
            self.scheduler.schedule(0, self.monitor.note_injection_done)
            return
        for server_id in range(cfg.n):
            self._schedule_next(server_id, 0)
        self.scheduler.schedule(self.duration_ms, self.monitor.note_injection_done)

    def _add_time(self, k: int) -> int:
        return int(k * self.config.n * 1000 // self.config.sending_rate)

    def _schedule_next(self, server_id: int, k: int) -> None:
        t = self._add_time(k)
        if t >= self.duration_ms:
            return
        delay = t - self.scheduler.now
        self.scheduler.schedule(delay, lambda: self._fire(server_id, k))

    def _fire(self, server_id: int, k: int) -> None:
        client_id = self.config.n + server_id
        e = self.factory.make(client_id)
        canon = core.canonical_element_bytes(e)
        idx = self.monitor.note_generated(canon, self.scheduler.now)
        ack = self.servers[server_id].add(e)
        self.monitor.note_add_ack(idx, ack, server_id in self.correct_ids)
        self._schedule_next(server_id, k + 1)


def parse_adversary_mix(text: str) -> list[str]:
    """'withholder:1,garbage_appender:2' -> kind list, validated."""
    kinds: list[str] = []
    if not text.strip():
        return kinds
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            kind, count_s = part.rsplit(":", 1)
            count = int(count_s)
        else:
            kind, count = part, 1
        kind = kind.strip()
        if kind not in adversary_mod.ADVERSARY_KINDS:
            raise ValueError(f"unknown adversary kind {kind!r}")
        if count < 0:
            raise ValueError("adversary count must be non-negative")
        kinds.extend([kind] * count)
    return kinds


@dataclass
class RunResult:
    config: SystemConfig
    algorithm: str
    report: MetricsReport
    snapshots: dict[int, SetchainSnapshot]
    trace: TraceStore
    monitor: RunMonitor
    correct_ids: frozenset[int]
    adversary_ids: dict[int, str]
    servers: dict[int, object]
    ledger: BlockLedger
    registry: KeyRegistry


def _build_server(algorithm: str, identity: int, keys: KeyPair, registry: KeyRegistry,
                  ctx: ServerContext, config: SystemConfig, *, codec_name: str,
                  literal_counting: bool, trusted_lookup) -> object:
    if algorithm == "vanilla":
        return VanillaServer(identity, keys, registry, ctx)
    if algorithm == "compresschain":
        codec = NullCodec() if codec_name == "null" else BrotliCodec()
        return CompresschainServer(identity, keys, registry, ctx,
                                   collector_limit=config.collector_limit,
                                   collector_timeout=config.collector_timeout,
                                   block_capacity=config.block_capacity,
                                   codec=codec)
    if algorithm == "hashchain":
        return HashchainServer(identity, keys, registry, ctx,
                               f=config.fault_bound(),
                               collector_limit=config.collector_limit,
                               collector_timeout=config.collector_timeout,
                               request_timeout=config.request_timeout,
                               literal_counting=literal_counting,
                               trusted_lookup=trusted_lookup)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def _percentile_summary(trace: TraceStore) -> dict[int, dict[str, float]]:
    out: dict[int, dict[str, float]] = {}
    for stage in (1, 2, 3, 4, 5):
        cdf = latency_cdf(trace, stage)
        if len(cdf) == 0:
            out[stage] = {}
        else:
            out[stage] = {
                "p50": float(np.percentile(cdf, 50)),
                "p90": float(np.percentile(cdf, 90)),
                "p99": float(np.percentile(cdf, 99)),
            }
    return out


def _commit_marks(trace: TraceStore) -> dict[str, float | None]:
    total = len(trace.t_add)
    commits = sorted(tc for tc in trace.t_commit if tc != _UNSET)
    marks: dict[str, float | None] = {"first": commits[0] / 1000.0 if commits else None}
    for pct in (10, 20, 30, 40, 50):
        need = math.ceil(total * pct / 100)
        marks[f"p{pct}"] = commits[need - 1] / 1000.0 if 0 < need <= len(commits) else None
    return marks


def run(config: SystemConfig, adversary_mix: list[str] | str = "",
        algorithm: str = "hashchain", *, codec_name: str = "brotli",
        hashchain_literal_counting: bool = False,
        hashchain_trusted_mode: bool = False) -> RunResult:
    """Simulate one full scenario deterministically and report metrics."""
    config.validate()
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    if isinstance(adversary_mix, str):
        adversary_mix = parse_adversary_mix(adversary_mix)
    f = config.fault_bound()
    if len(adversary_mix) > f:
        raise ValueError(f"{len(adversary_mix)} adversaries configured, but f={f}")

    n = config.n
    scheduler = Scheduler()
    counters = Counters()
    registry, keys = crypto.build_registry(n, n, config.seed)

    injection_end_ms = int(config.injection_duration * 1000)
    trace = TraceStore(injection_end_ms)
    drain_margin = (2 * config.block_interval + (n + 2) * config.request_timeout
                    + 4 * config.network_delay + config.collector_timeout)
    monitor = RunMonitor(registry, n, f, algorithm, counters, scheduler, trace, drain_margin)

    ledger = BlockLedger(
        scheduler, n,
        block_interval=config.block_interval,
        block_capacity=config.block_capacity,
        network_delay=config.network_delay,
        mempool_max_txs=config.mempool_max_txs,
        mempool_max_bytes=config.mempool_max_bytes,
        produce_empty_blocks=config.produce_empty_blocks,
        counters=counters,
        observer=monitor,
    )
    router = BatchStoreRouter(scheduler, config.network_delay, config.request_timeout)

    adversary_ids: dict[int, str] = {}
    for i, kind in enumerate(adversary_mix):
        adversary_ids[n - 1 - i] = kind
    correct_ids = frozenset(range(n)) - frozenset(adversary_ids)
    selective_targets = frozenset(sorted(correct_ids)[:max(1, (len(correct_ids) + 1) // 2)])
    trusted_lookup = monitor.lookup_content if hashchain_trusted_mode else None

    servers: dict[int, object] = {}
    for sid in range(n):
        ctx = ServerContext(
            sid, scheduler, ledger, router, counters,
            on_register=lambda digest, data, sid=sid: monitor.register_batch(sid, digest, data))
        base = _build_server(algorithm, sid, keys[sid], registry, ctx, config,
                             codec_name=codec_name,
                             literal_counting=hashchain_literal_counting,
                             trusted_lookup=trusted_lookup)
        if sid in adversary_ids:
            server = adversary_mod.make_adversary(
                adversary_ids[sid], base, ctx=ctx, keys=keys[sid], registry=registry,
                inject=lambda data, sid=sid: ledger.inject_proposer_tx(sid, data),
                seed=config.seed, duration_s=config.injection_duration,
                targets=selective_targets)
        else:
            server = base
        servers[sid] = server
        router.register_responder(sid, server.serve_batch)

        def handler(block: Block, sid=sid, server=server) -> None:
            monitor.record_notification(sid, block.height,
                                        monitor.delivered_fingerprints[-1][1])
            server.on_new_block(block)

        ledger.subscribe(sid, handler)

    factory = SyntheticElementFactory(keys, config.element_size_mode, config.seed)
    generator = LoadGenerator(scheduler, factory, servers, monitor, config, correct_ids)

    ledger.start()
    generator.start()
    scheduler.run(until_ms=int(config.max_virtual_time * 1000))

    snapshots = {sid: servers[sid].get() for sid in sorted(correct_ids)}
    saturated = not monitor.drained

    total = len(trace)
    committed = sum(1 for tc in trace.t_commit if tc != _UNSET)
    rejected = sum(1 for a in trace.ack if a in (core.ADD_DUPLICATE, core.ADD_INVALID))
    if algorithm == "compresschain":
        codec_info = f"{codec_name}/q5" if codec_name == "brotli" else codec_name
    elif algorithm == "hashchain" and hashchain_trusted_mode:
        codec_info = "none (trusted, no hash reversal)"
    else:
        codec_info = "none"
    bins, rolling = throughput_series(trace)
    report = MetricsReport(
        algorithm=algorithm, n=n, f=f, seed=config.seed, codec_info=codec_info,
        total_generated=total,
        accepted_correct=monitor.accepted_correct,
        committed=committed,
        rejected=rejected,
        uncommitted=total - committed - rejected,
        efficiency_at={t: efficiency(trace, t) for t in (50, 75, 100)},
        throughput_bins=bins,
        rolling9=rolling,
        latency_percentiles=_percentile_summary(trace),
        commit_marks=_commit_marks(trace),
        counters=dict(sorted(counters.items())),
        saturated=saturated,
        end_time_ms=scheduler.now,
    )
    return RunResult(config=config, algorithm=algorithm, report=report,
                     snapshots=snapshots, trace=trace, monitor=monitor,
                     correct_ids=correct_ids, adversary_ids=adversary_ids,
                     servers=servers, ledger=ledger, registry=registry)
