"""Set-based replicated ledger algorithms over a simulated block ledger.

Three server algorithms maintain a grow-only set whose elements are
stamped into a sequence of unordered epochs, certified to light clients by
f+1 signed epoch proofs:

- ``vanilla``: one ledger transaction per element; each block is an epoch.
- ``compresschain``: collector batches compressed into one transaction per
  epoch.
- ``hashchain``: fixed-size signed batch digests on the ledger, contents
  served peer-to-peer, epochs consolidated at f+1 distinct signatures.

The package ships a deterministic discrete-event simulator with Byzantine
fault injection, the client-side verification workflow, and the analytical
throughput model.
"""

from . import adversary, analysis, client, core, crypto, engine, ledger, sim
from .client import CommitCertificate, verify_epoch
from .compresschain import BrotliCodec, CompresschainServer, NullCodec
from .core import (
    Element,
    EpochProof,
    SetchainSnapshot,
    SizeMode,
    SystemConfig,
    canonical_element_bytes,
    epoch_digest,
    valid_element,
    valid_proof,
)
from .crypto import KeyPair, KeyRegistry, generate_keypair, sha512, sign, verify
from .hashchain import HashchainServer
from .sim import MetricsReport, RunResult, efficiency, latency_cdf, run, throughput_series
from .vanilla import VanillaServer

__version__ = "0.1.0"
