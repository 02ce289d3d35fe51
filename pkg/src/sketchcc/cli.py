"""Command-line entry point.

Every long flag can also be set through an environment variable named
``SKETCHCC_<FLAG>`` (upper case, dashes as underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .bench import INGEST_FIELDS, L0_FIELDS, bench_l0, plot_l0, write_csv
from .buffering import BufferConfig
from .graph_engine import GraphParams, GraphSketch
from .ingest import Ingestor
from .streamio import (
    EdgeStream,
    StreamReader,
    generate_dense_graph,
    read_edge_list,
    read_text,
    stream_read,
    stream_write,
    synthesize_stream,
    write_text,
)
from .verify import VerifyReport, verify_snapshot, verify_stream

ENV_PREFIX = "SKETCHCC_"

CSV_HELP = f"""\
CSV schemas:
  ingest   {",".join(INGEST_FIELDS)}
  bench-l0 {",".join(L0_FIELDS)}
Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.
"""

BUFFER_NAMES = {"none": "none", "leaf": "leaf", "tree": "tree"}


class UsageError(Exception):
    pass


def _env(name: str, default):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _add(p: argparse.ArgumentParser, flag: str, **kw) -> None:
    if "default" in kw:
        raw = _env(flag.lstrip("-"), None)
        if raw is not None:
            kw["default"] = kw.get("type", str)(raw)
    p.add_argument(flag, **kw)


def _pipeline_flags(p: argparse.ArgumentParser) -> None:
    _add(p, "--workers", type=int, default=1, help="graph worker threads (default 1)")
    _add(p, "--buffering", choices=sorted(BUFFER_NAMES), default="leaf",
         help="buffering mode (default leaf)")
    _add(p, "--gutter-factor", type=float, default=None,
         help="gutter size as a fraction of a node sketch (default 0.5 leaf, 2 tree)")
    _add(p, "--group-size", type=int, default=1, help="nodes per node group (default 1)")
    _add(p, "--tree-file", default=None, help="gutter tree backing file (default: temp file)")
    _add(p, "--buffer-bytes", type=int, default=8 << 20, help="tree buffer size (default 8 MiB)")
    _add(p, "--block-bytes", type=int, default=16 << 10, help="tree block size (default 16 KiB)")
    _add(p, "--seed", type=int, default=0, help="master hash seed (default 0)")
    _add(p, "--rounds", type=int, default=None, help="Boruvka rounds (default ceil(log2 V))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchcc", description=__doc__,
                                     epilog=CSV_HELP,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dense graph and a stream for it",
                       epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add(p, "--nodes", type=int, default=256, help="node count V (default 256)")
    _add(p, "--edge-prob", type=float, default=0.5, help="target edge density (default 0.5)")
    _add(p, "--seed", type=int, default=0, help="generator seed (default 0)")
    _add(p, "--churn", type=float, default=0.025,
         help="mean extra delete/insert pairs per edge slot (default 0.025)")
    _add(p, "--disconnect", type=int, default=0, help="nodes to isolate, < 150 (default 0)")
    _add(p, "--noise", type=int, default=0, help="non-edge slots inserted then deleted (default 0)")
    _add(p, "--input-edges", default=None, help="use this 'u v' edge list instead of generating")
    _add(p, "--stream", required=False, default="stream.bin", help="output stream path")
    _add(p, "--graph", default=None, help="optional output path for the final edge list")
    p.add_argument("--text", action="store_true", help="write the text codec instead of binary")

    p = sub.add_parser("ingest", help="ingest a stream and write a snapshot",
                       epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add(p, "--stream", default=None, help="input stream (.txt for the text codec)")
    _add(p, "--nodes", type=int, default=None, help="node count (default: from stream header)")
    _pipeline_flags(p)
    _add(p, "--snapshot", default=None, help="output snapshot path")
    _add(p, "--query-every", type=float, default=None,
         help="run a connectivity query every this many percent of the stream")
    _add(p, "--csv", default=None, help="write a throughput row to this CSV")

    p = sub.add_parser("query", help="spanning forest of a snapshot")
    _add(p, "--snapshot", default=None, help="snapshot path")

    p = sub.add_parser("verify", help="compare the engine against the exact oracle")
    _add(p, "--stream", default=None, help="stream to verify (.txt for the text codec)")
    _add(p, "--edges", default=None, help="edge list to synthesize a stream from")
    _add(p, "--snapshot", default=None, help="check this snapshot against the stream's final graph")
    _add(p, "--trials", type=int, default=0, help="random (graph, stream, seed) trials to run")
    _add(p, "--nodes", type=int, default=64, help="node count for random trials (default 64)")
    _add(p, "--checks", type=int, default=10, help="partition checks per stream (default 10)")
    _pipeline_flags(p)

    p = sub.add_parser("bench-l0", help="compare the two samplers",
                       epilog=CSV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add(p, "--lengths", default="1e3,1e4,1e5,1e6,1e9,1e10,1e12",
         help="comma-separated vector lengths")
    _add(p, "--duration", type=float, default=1.0, help="seconds per measurement (default 1)")
    _add(p, "--seed", type=int, default=0, help="seed (default 0)")
    _add(p, "--csv", default=None, help="output CSV path")
    _add(p, "--plot", default=None, help="optional PNG plot path")
    return parser


def _config(args) -> BufferConfig:
    return BufferConfig(mode=BUFFER_NAMES[args.buffering], gutter_factor=args.gutter_factor,
                        group_size=args.group_size, buffer_bytes=args.buffer_bytes,
                        block_bytes=args.block_bytes, workers=args.workers,
                        tree_path=args.tree_file)


def _load_stream(path: str) -> EdgeStream:
    return read_text(path) if path.endswith(".txt") else stream_read(path)


def cmd_gen(args) -> int:
    if args.disconnect >= 150:
        raise UsageError("--disconnect must be below 150")
    if args.input_edges:
        V, edges = read_edge_list(args.input_edges)
    else:
        V = args.nodes
        edges = generate_dense_graph(V, args.edge_prob, args.seed)
    stream, disconnected = synthesize_stream(edges, V, args.seed, args.churn, args.disconnect,
                                             args.noise)
    (write_text if args.text else stream_write)(args.stream, stream)
    if args.graph:
        np.savetxt(args.graph, edges, fmt="%d", header=f"{V} nodes", comments="# ")
    print(f"{'nodes':>10} {'edges':>12} {'updates':>12}")
    print(f"{V:>10} {len(edges):>12} {len(stream):>12}")
    return 0


def _print_forest(result, seconds: float, label: str = "") -> None:
    print(f"{label}components={result.num_components} forest_edges={len(result.edges)} "
          f"rounds_used={result.rounds_used} exhausted={result.exhausted} "
          f"query_seconds={seconds:.4f}")


def cmd_ingest(args) -> int:
    if not args.stream:
        raise UsageError("--stream is required")
    reader = None if args.stream.endswith(".txt") else StreamReader(args.stream)
    text = None if reader is not None else read_text(args.stream)
    V = args.nodes or (reader.num_nodes if reader is not None else text.num_nodes)
    total = len(reader) if reader is not None else len(text)
    params = GraphParams(V, args.rounds, args.seed)
    graph = GraphSketch(params)
    config = _config(args)
    chunks = reader.chunks(1 << 16) if reader is not None else iter([text])
    marks = []
    if args.query_every:
        step = max(1, int(total * args.query_every / 100))
        marks = list(range(step, total + 1, step))
    start = time.perf_counter()
    query_time = 0.0
    with Ingestor(graph, config) as ing:
        for chunk in chunks:
            pos = 0
            while pos < len(chunk):
                nxt = marks[0] - ing.updates if marks else len(chunk) - pos
                take = min(len(chunk) - pos, max(nxt, 0)) if marks else len(chunk) - pos
                ing.ingest(chunk[pos:pos + take])
                pos += take
                if marks and ing.updates >= marks[0]:
                    marks.pop(0)
                    q0 = time.perf_counter()
                    ing.flush()
                    result = graph.spanning_forest()
                    dt = time.perf_counter() - q0
                    query_time += dt
                    _print_forest(result, dt, f"[{100 * ing.updates / total:5.1f}%] ")
        ing.flush()
        reads, writes = ing.io_counters()
        batches = ing.buffers.batches_emitted
        updates = ing.updates
    seconds = time.perf_counter() - start - query_time
    rate = updates / seconds if seconds > 0 else float("inf")
    print(f"updates={updates} seconds={seconds:.3f} updates_per_sec={rate:.0f} batches={batches}")
    if config.mode.value == "tree":
        print(f"blocks_read={reads} blocks_written={writes}")
    if args.snapshot:
        size = graph.save(args.snapshot)
        print(f"snapshot={args.snapshot} bytes={size}")
    if args.csv:
        write_csv(args.csv, [{"label": args.stream, "mode": config.mode.value,
                              "gutter_factor": config.gutter_factor, "workers": config.workers,
                              "updates": updates, "seconds": seconds, "updates_per_sec": rate,
                              "batches": batches, "blocks_read": reads,
                              "blocks_written": writes}], INGEST_FIELDS)
    return 0


def cmd_query(args) -> int:
    if not args.snapshot:
        raise UsageError("--snapshot is required")
    graph = GraphSketch.load(args.snapshot)
    start = time.perf_counter()
    result = graph.spanning_forest()
    _print_forest(result, time.perf_counter() - start)
    return 0


def _report(report: VerifyReport, label: str) -> None:
    lat = [c.seconds for c in report.checks]
    mean = sum(lat) / len(lat) if lat else 0.0
    print(f"{label}checks={len(report.checks)} failures={report.failures} "
          f"mean_check_seconds={mean:.4f}")
    for c in report.checks:
        if not c.ok:
            print(f"  MISMATCH at update {c.position}: engine components={c.components} "
                  f"oracle components={c.oracle_components} exhausted={c.exhausted}")
            for node, mine, truth in c.differing:
                print(f"    node {node}: engine root {mine}, oracle root {truth}")
            for e in c.unsound_edges:
                print(f"    forest edge {e} absent from graph")


def cmd_verify(args) -> int:
    config = _config(args)
    report = VerifyReport()
    if args.snapshot:
        if not args.stream:
            raise UsageError("--snapshot needs --stream")
        check = verify_snapshot(GraphSketch.load(args.snapshot), _load_stream(args.stream))
        report.checks.append(check)
    elif args.stream or args.edges:
        if args.stream:
            stream = _load_stream(args.stream)
        else:
            V, edges = read_edge_list(args.edges)
            stream, _ = synthesize_stream(edges, V, args.seed, churn=0.05)
        params = GraphParams(stream.num_nodes, args.rounds, args.seed)
        report = verify_stream(stream, params, config, args.checks)
    if args.trials:
        rng = np.random.default_rng(args.seed)
        for t in range(args.trials):
            seed = int(rng.integers(1 << 62))
            density = float(rng.choice([0.02, 0.1, 0.5]))
            edges = generate_dense_graph(args.nodes, density, seed)
            stream, _ = synthesize_stream(edges, args.nodes, seed, churn=0.1,
                                          disconnect_count=int(rng.integers(0, 4)))
            report.extend(verify_stream(stream, GraphParams(args.nodes, args.rounds, seed),
                                        config, args.checks))
    if not report.checks:
        raise UsageError("give --stream, --edges, --snapshot or --trials")
    _report(report, "")
    return 0 if report.ok else 1


def cmd_bench_l0(args) -> int:
    lengths = [int(float(x)) for x in args.lengths.split(",") if x.strip()]
    rows = bench_l0(lengths, args.duration, args.seed)
    print(f"{'length':>14} {'sampler':>12} {'word':>5} {'updates/s':>14} {'payload B':>10}")
    for r in rows:
        print(f"{r.vector_length:>14} {r.sampler:>12} {r.word_bytes:>5} "
              f"{r.updates_per_sec:>14.0f} {r.payload_bytes:>10}")
    for n in lengths:
        cube, std = [r for r in rows if r.vector_length == n]
        print(f"n={n}: speedup {cube.updates_per_sec / std.updates_per_sec:.1f}x, "
              f"size ratio {std.payload_bytes / cube.payload_bytes:.2f}x")
    if args.csv:
        write_csv(args.csv, rows, L0_FIELDS)
    if args.plot:
        plot_l0(rows, args.plot)
    return 0


COMMANDS = {"gen": cmd_gen, "ingest": cmd_ingest, "query": cmd_query, "verify": cmd_verify,
            "bench-l0": cmd_bench_l0}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
