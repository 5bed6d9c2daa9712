"""Command-line front end: scenario runs, parameter sweeps, the analytical
table, and certificate verification.

Scenario files are flat key=value text; unknown keys are rejected with the
offending line number, missing keys fall back to the base scenario
defaults (10 servers, 10,000 el/s aggregate, no network delay). All CSV
output is deterministic: fixed column order, floats with 3 decimals, LF
line endings.

Exit codes: run 0 clean / 2 saturated / 1 configuration error;
verify 0 accepted / 3 rejected / 1 parse failure.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis, client, core, crypto, sim
from .core import SizeMode, SystemConfig
from .sim import _UNSET, RunResult


class ScenarioError(ValueError):
    pass


_BOOLS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOLS[text.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {text!r}")


# key -> (SystemConfig field | None, coercion)
SCENARIO_KEYS = {
    "algorithm": (None, str),
    "adversaries": (None, str),
    "n": ("n", int),
    "f": ("f", int),
    "sending_rate": ("sending_rate", float),
    "collector_limit": ("collector_limit", int),
    "network_delay_ms": ("network_delay", int),
    "block_capacity_bytes": ("block_capacity", int),
    "block_interval_ms": ("block_interval", int),
    "collector_timeout_ms": ("collector_timeout", int),
    "request_timeout_ms": ("request_timeout", int),
    "mempool_max_txs": ("mempool_max_txs", int),
    "mempool_max_bytes": ("mempool_max_bytes", int),
    "element_size_mode": ("element_size_mode", SizeMode.parse),
    "injection_duration_s": ("injection_duration", float),
    "seed": ("seed", int),
    "produce_empty_blocks": ("produce_empty_blocks", _parse_bool),
    "max_virtual_time_s": ("max_virtual_time", float),
}


def parse_scenario_text(text: str) -> dict[str, str]:
    """key=value per line; blank lines and #-comments allowed."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in SCENARIO_KEYS:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def scenario_to_run_args(pairs: dict[str, str]) -> tuple[SystemConfig, str, str]:
    """Coerce parsed pairs into (config, algorithm, adversary mix)."""
    algorithm = pairs.get("algorithm", "hashchain")
    if algorithm not in sim.ALGORITHMS:
        raise ScenarioError(f"algorithm must be one of {sim.ALGORITHMS}, got {algorithm!r}")
    adversaries = pairs.get("adversaries", "")
    fields = {}
    for key, value in pairs.items():
        field, coerce = SCENARIO_KEYS[key]
        if field is None:
            continue
        try:
            fields[field] = coerce(value)
        except ValueError as exc:
            raise ScenarioError(f"key {key!r}: {exc}") from exc
    config = SystemConfig(**fields)
    try:
        config.validate()
        sim.parse_adversary_mix(adversaries)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    return config, algorithm, adversaries


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _fmt_ms(t_ms: int) -> str:
    return "" if t_ms == _UNSET else _fmt(t_ms / 1000.0)


def write_outputs(result: RunResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    trace = result.trace

    with open(out_dir / "elements.csv", "w", newline="\n") as fh:
        fh.write("element_id,t_add,t_mempool_1,t_mempool_quorum,t_mempool_all,t_ledger,t_commit\n")
        for i in range(len(trace)):
            fh.write(",".join([
                str(i),
                _fmt(trace.t_add[i] / 1000.0),
                _fmt_ms(trace.t_mempool_1[i]),
                _fmt_ms(trace.t_mempool_quorum[i]),
                _fmt_ms(trace.t_mempool_all[i]),
                _fmt_ms(trace.t_ledger[i]),
                _fmt_ms(trace.t_commit[i]),
            ]) + "\n")

    bins, rolling = result.report.throughput_bins, result.report.rolling9
    with open(out_dir / "throughput.csv", "w", newline="\n") as fh:
        fh.write("second,commits,rolling9\n")
        for s in range(len(bins)):
            fh.write(f"{s},{bins[s]},{_fmt(rolling[s])}\n")

    rep = result.report
    rows: list[tuple[str, str]] = [
        ("algorithm", rep.algorithm),
        ("n", str(rep.n)),
        ("f", str(rep.f)),
        ("seed", str(rep.seed)),
        ("codec", rep.codec_info),
        ("total_generated", str(rep.total_generated)),
        ("accepted_correct", str(rep.accepted_correct)),
        ("committed", str(rep.committed)),
        ("rejected", str(rep.rejected)),
        ("uncommitted", str(rep.uncommitted)),
    ]
    for t in (50, 75, 100):
        rows.append((f"efficiency_{t}", _fmt(rep.efficiency_at[t])))
    for stage in (1, 2, 3, 4, 5):
        pct = rep.latency_percentiles.get(stage, {})
        for name in ("p50", "p90", "p99"):
            rows.append((f"stage{stage}_{name}", _fmt(pct[name]) if name in pct else ""))
    for mark in ("first", "p10", "p20", "p30", "p40", "p50"):
        v = rep.commit_marks.get(mark)
        rows.append((f"commit_{mark}", _fmt(v) if v is not None else ""))
    for counter in ("mempool_reject", "garbage_tx", "bad_batch_response"):
        rows.append((f"counter_{counter}", str(rep.counters.get(counter, 0))))
    rows.append(("saturated", "1" if rep.saturated else "0"))
    rows.append(("end_time_s", _fmt(rep.end_time_ms / 1000.0)))
    with open(out_dir / "summary.csv", "w", newline="\n") as fh:
        fh.write("key,value\n")
        for key, value in rows:
            fh.write(f"{key},{value}\n")

    with open(out_dir / "registry.txt", "w", newline="\n") as fh:
        for pid in result.registry.server_ids() + result.registry.client_ids():
            role = result.registry.role(pid)
            fh.write(f"{pid},{role},{result.registry.public_key(pid).hex()}\n")

    for sid, snapshot in sorted(result.snapshots.items()):
        with open(out_dir / f"snapshot_server_{sid}.txt", "w", newline="\n") as fh:
            fh.write(f"server {sid}\nepoch {snapshot.epoch}\n")
            for epoch_no in range(1, snapshot.epoch + 1):
                digests = sorted(
                    crypto.sha512(core.canonical_element_bytes(e)).hex()
                    for e in snapshot.history[epoch_no])
                fh.write(f"epoch {epoch_no} size {len(digests)}\n")
                for d in digests:
                    fh.write(f"  {d}\n")
            fh.write("proofs\n")
            for p in sorted(core.encode_epoch_proof(q).hex() for q in snapshot.proofs):
                fh.write(f"  {p}\n")

    _write_certificate(result, out_dir)


def _write_certificate(result: RunResult, out_dir: Path) -> None:
    """Certificate for the first committed element, built from the snapshot
    of the lowest-id correct server; feeds the verify subcommand."""
    if not result.snapshots:
        return
    trace = result.trace
    first, first_t = None, None
    for i in range(len(trace)):
        tc = trace.t_commit[i]
        if tc != _UNSET and (first_t is None or tc < first_t):
            first, first_t = i, tc
    if first is None:
        return
    canon = next(c for c, idx in result.monitor.elem_index.items() if idx == first)
    element = core.decode_element(canon)
    sid = min(result.snapshots)
    cert = client.certificate_from_snapshot(element, result.snapshots[sid],
                                            result.config.fault_bound(), result.registry)
    if cert is not None:
        (out_dir / "certificate.bin").write_bytes(client.encode_certificate(cert))


def load_registry_file(path: Path) -> crypto.KeyRegistry:
    registry = crypto.KeyRegistry()
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            pid_s, role, pub_hex = line.split(",")
            registry.register(int(pid_s), bytes.fromhex(pub_hex), role)
        except ValueError as exc:
            raise ScenarioError(f"registry line {lineno}: {exc}") from exc
    return registry


# -- subcommands ----------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    try:
        pairs = parse_scenario_text(Path(args.scenario).read_text())
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 1
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    overrides: dict[str, str] = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.algorithm is not None:
        overrides["algorithm"] = args.algorithm

    sweeps: list[list[tuple[str, str]]] = []
    for sweep in args.sweep or []:
        if "=" not in sweep:
            print(f"error: --sweep expects key=v1,v2,..., got {sweep!r}", file=sys.stderr)
            return 1
        key, values = sweep.split("=", 1)
        if key not in SCENARIO_KEYS:
            print(f"error: --sweep: unknown key {key!r}", file=sys.stderr)
            return 1
        sweeps.append([(key, v) for v in values.split(",")])

    out_root = Path(args.out)
    worst = 0
    for combo in itertools.product(*sweeps) if sweeps else [()]:
        pairs_combo = dict(pairs)
        pairs_combo.update(overrides)
        for key, value in combo:
            pairs_combo[key] = value
        try:
            config, algorithm, adversaries = scenario_to_run_args(pairs_combo)
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        out_dir = out_root
        if combo:
            out_dir = out_root / "_".join(f"{k}={v}" for k, v in combo)
        result = sim.run(config, adversaries, algorithm)
        write_outputs(result, out_dir)
        status = "saturated" if result.report.saturated else "drained"
        eff = result.report.efficiency_at[100]
        print(f"{out_dir}: {algorithm} n={config.n} f={config.fault_bound()} "
              f"rate={config.sending_rate:g} -> committed {result.report.committed}"
              f"/{result.report.total_generated} (efficiency@100s {eff:.3f}, {status})")
        if result.report.saturated:
            worst = max(worst, 2)
    return worst


_MIB = 1024.0 * 1024.0


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        base = analysis.AnalysisParams(R=args.block_rate, C=args.block_capacity,
                                       n=args.servers, l_p=args.proof_len,
                                       l_e=args.element_len, l_h=args.hash_len)
        small = base.with_(c=args.collector_small, r=args.ratio_small)
        large = base.with_(c=args.collector_large, r=args.ratio_large)
        lines = [
            ("vanilla el/s", analysis.vanilla_throughput(base)),
            (f"compresschain el/s (c={small.c}, r={small.r:g})", analysis.compress_throughput(small)),
            (f"compresschain el/s (c={large.c}, r={large.r:g})", analysis.compress_throughput(large)),
            (f"hashchain el/s (c={small.c})", analysis.hash_throughput(small)),
            (f"hashchain el/s (c={large.c})", analysis.hash_throughput(large)),
            (f"hashchain/vanilla ratio (c={large.c})",
             analysis.hash_throughput(large) / analysis.vanilla_throughput(base)),
            (f"hashchain/compresschain ratio (c={large.c})",
             analysis.hash_throughput(large) / analysis.compress_throughput(large)),
        ]
        capacities = [0.5 * _MIB * (2 ** k) for k in range(9)]  # 0.5 .. 128 MiB
        sweep_small = analysis.block_size_sweep(small, capacities)
        sweep_large = analysis.block_size_sweep(large, capacities)
    except analysis.AnalysisDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for label, value in lines:
        print(f"{label:44s} {value:14.1f}")
    header = (f"{'C (MiB)':>8s} {'vanilla':>12s} "
              f"{'compress c=' + str(small.c):>16s} {'compress c=' + str(large.c):>16s} "
              f"{'hash c=' + str(small.c):>14s} {'hash c=' + str(large.c):>14s}")
    print()
    print(header)
    for row_s, row_l in zip(sweep_small, sweep_large):
        print(f"{row_s['C'] / _MIB:8.1f} {row_s['vanilla']:12.1f} "
              f"{row_s['compresschain']:16.1f} {row_l['compresschain']:16.1f} "
              f"{row_s['hashchain']:14.1f} {row_l['hashchain']:14.1f}")

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "analyze.csv", "w", newline="\n") as fh:
            fh.write("C_bytes,vanilla,compress_small,compress_large,hash_small,hash_large\n")
            for row_s, row_l in zip(sweep_small, sweep_large):
                fh.write(f"{row_s['C']:.0f},{row_s['vanilla']:.3f},"
                         f"{row_s['compresschain']:.3f},{row_l['compresschain']:.3f},"
                         f"{row_s['hashchain']:.3f},{row_l['hashchain']:.3f}\n")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        cert = client.decode_certificate(Path(args.certificate).read_bytes())
        registry = load_registry_file(Path(args.registry))
    except (OSError, core.DecodeError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    digest = core.epoch_digest(cert.epoch_no, cert.epoch_elements)
    accepted = client.verify_certificate(cert, args.f, registry)
    signers = sorted({p.signer for p in cert.proofs})
    print(f"epoch {cert.epoch_no} digest {digest.hex()}")
    print(f"signers: {', '.join(map(str, signers)) if signers else '(none)'}")
    print(f"verdict: {'accepted' if accepted else 'rejected'} (f={args.f})")
    return 0 if accepted else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setchain",
        description="Set-based ledger simulator: scenario runs, analytical tables, certificate checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file, write CSV metrics")
    p_run.add_argument("--scenario", required=True, help="path to key=value scenario file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--algorithm", choices=sim.ALGORITHMS, default=None,
                       help="override the scenario algorithm")
    p_run.add_argument("--sweep", action="append", metavar="key=v1,v2,...",
                       help="sweep a scenario key; repeatable, runs the cartesian product")
    p_run.set_defaults(fn=cmd_run)

    p_an = sub.add_parser("analyze", help="print the analytical throughput table")
    p_an.add_argument("--block-rate", type=float, default=0.8, help="blocks per second")
    p_an.add_argument("--block-capacity", type=float, default=524288.0, help="block bytes")
    p_an.add_argument("--servers", type=int, default=10)
    p_an.add_argument("--proof-len", type=float, default=139.0)
    p_an.add_argument("--element-len", type=float, default=438.0)
    p_an.add_argument("--hash-len", type=float, default=139.0)
    p_an.add_argument("--collector-small", type=int, default=100)
    p_an.add_argument("--collector-large", type=int, default=500)
    p_an.add_argument("--ratio-small", type=float, default=2.7)
    p_an.add_argument("--ratio-large", type=float, default=3.5)
    p_an.add_argument("--out", default=None, help="also write analyze.csv here")
    p_an.set_defaults(fn=cmd_analyze)

    p_ver = sub.add_parser("verify", help="check a commit certificate against a registry")
    p_ver.add_argument("certificate", help="certificate file (from a run)")
    p_ver.add_argument("registry", help="registry file (from a run)")
    p_ver.add_argument("f", type=int, help="fault bound the certificate must beat")
    p_ver.set_defaults(fn=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
