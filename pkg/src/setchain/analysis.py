"""Closed-form steady-state throughput of the three algorithms.

With all n servers correct, each epoch carries n proofs. A block of
capacity C filled at rate R blocks/s then bounds elements/second as:

  baseline (one element per transaction):   T_v = R (C - n l_p) / l_e
  compressed batches of c items, ratio r:   T_c = R (c - n) C / l
                                            with l = ((c - n) l_e + n l_p) / r
  hash batches of fixed length l_h:         T_h = R (c - n) C / (n l_h)

Floors and ceilings are omitted throughout, so these are real-valued
bounds. All four functions are pure and monotone increasing in R and C.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


class AnalysisDomainError(ValueError):
    """Parameters outside a formula's domain."""


@dataclass(frozen=True)
class AnalysisParams:
    """Bundle of the steady-state model parameters.

    R: blocks per second; C: block capacity in bytes; n: servers;
    l_p: epoch-proof length; l_e: element length; c: collector size;
    r: compression ratio; l_h: hash-batch length. Lengths in bytes.
    """

    R: float = 0.8
    C: float = 524_288.0
    n: int = 10
    l_p: float = 139.0
    l_e: float = 438.0
    c: int = 100
    r: float = 2.7
    l_h: float = 139.0

    def __post_init__(self):
        for name in ("R", "C", "l_p", "l_e", "r", "l_h"):
            if getattr(self, name) <= 0:
                raise AnalysisDomainError(f"{name} must be strictly positive")
        if self.n < 1 or self.c < 1:
            raise AnalysisDomainError("n and c must be at least 1")

    def with_(self, **kw) -> "AnalysisParams":
        return replace(self, **kw)


def vanilla_throughput(p: AnalysisParams) -> float:
    """Elements/second with one element per ledger transaction."""
    if p.C < p.n * p.l_p:
        raise AnalysisDomainError(f"C={p.C} smaller than n*l_p={p.n * p.l_p}")
    return p.R * (p.C - p.n * p.l_p) / p.l_e


def compress_epoch_length(p: AnalysisParams) -> float:
    """Ledger bytes of one epoch built from a full collector of c items
    (c-n elements and n proofs) at compression ratio r."""
    if p.c <= p.n:
        raise AnalysisDomainError(f"collector size c={p.c} must exceed n={p.n}")
    return ((p.c - p.n) * p.l_e + p.n * p.l_p) / p.r


def compress_throughput(p: AnalysisParams) -> float:
    """Elements/second with compressed batches as transactions."""
    return p.R * (p.c - p.n) * p.C / compress_epoch_length(p)


def hash_throughput(p: AnalysisParams) -> float:
    """Elements/second with fixed-size hash batches; n hash-batches reach
    the ledger per consolidated epoch."""
    if p.c <= p.n:
        raise AnalysisDomainError(f"collector size c={p.c} must exceed n={p.n}")
    return p.R * (p.c - p.n) * p.C / (p.n * p.l_h)


def block_size_sweep(p: AnalysisParams, capacities: list[float]) -> list[dict[str, float]]:
    """Evaluate all three formulas across block capacities."""
    rows = []
    for cap in capacities:
        q = p.with_(C=float(cap))
        rows.append({
            "C": float(cap),
            "vanilla": vanilla_throughput(q),
            "compresschain": compress_throughput(q),
            "hashchain": hash_throughput(q),
        })
    return rows
