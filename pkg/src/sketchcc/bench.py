"""Throughput and size measurements for the samplers and the ingestion pipeline."""

from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass

import numpy as np

from .buffering import BufferConfig
from .cubesketch import CubeSketch, SketchParams, cube_payload_bytes
from .graph_engine import GraphParams, GraphSketch
from .ingest import ingest_stream
from .standard_l0 import StandardL0Sketch, StdParams, std_payload_bytes

L0_FIELDS = ["vector_length", "sampler", "word_bytes", "updates_per_sec", "payload_bytes",
             "serialized_bytes"]
INGEST_FIELDS = ["label", "mode", "gutter_factor", "workers", "updates", "seconds",
                 "updates_per_sec", "batches", "blocks_read", "blocks_written"]


@dataclass
class L0Row:
    vector_length: int
    sampler: str
    word_bytes: int
    updates_per_sec: float
    payload_bytes: int
    serialized_bytes: int


def _rate(update, idxs, deltas, duration: float, chunk: int) -> float:
    # one warm-up call keeps JIT compilation out of the timing
    update(idxs[:8], deltas[:8])
    done = 0
    start = time.perf_counter()
    elapsed = 0.0
    while True:
        lo = done % (idxs.size - chunk + 1) if idxs.size > chunk else 0
        update(idxs[lo:lo + chunk], deltas[lo:lo + chunk])
        done += min(chunk, idxs.size)
        elapsed = time.perf_counter() - start
        if elapsed >= duration:
            return done / elapsed


def measure_l0(vector_length: int, duration: float = 1.0, seed: int = 0,
               num_columns: int = 7, chunk: int = 20_000) -> tuple[L0Row, L0Row]:
    """Single-threaded update rate and size of both samplers at one vector length."""
    rng = np.random.default_rng(seed)
    idxs = rng.integers(0, vector_length, size=4 * chunk, dtype=np.uint64)
    deltas = np.where(rng.random(idxs.size) < 0.5, 1, -1).astype(np.int64)

    cube = CubeSketch(SketchParams(vector_length, num_columns, master_seed=seed))
    cube_rate = _rate(lambda i, d: cube.update_many(i), idxs, deltas, duration, chunk)
    std = StandardL0Sketch(StdParams(vector_length, num_columns, master_seed=seed))
    # the baseline is slower; smaller chunks keep the timing loop responsive
    std_rate = _rate(std.update_many, idxs, deltas, duration, max(1, chunk // 20))
    return (
        L0Row(vector_length, "cubesketch", 8, cube_rate, cube_payload_bytes(cube.params),
              len(cube.to_bytes())),
        L0Row(vector_length, "standard_l0", std.params.word_regime.word_bytes, std_rate,
              std_payload_bytes(std.params), len(std.to_bytes())),
    )


def bench_l0(lengths, duration: float = 1.0, seed: int = 0) -> list[L0Row]:
    rows: list[L0Row] = []
    for n in lengths:
        rows.extend(measure_l0(int(n), duration, seed))
    return rows


def write_csv(path, rows, fields) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow(row if isinstance(row, dict) else asdict(row))


def plot_l0(rows: list[L0Row], path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for sampler in ("cubesketch", "standard_l0"):
        sel = [r for r in rows if r.sampler == sampler]
        ax1.loglog([r.vector_length for r in sel], [r.updates_per_sec for r in sel], "o-", label=sampler)
        ax2.semilogx([r.vector_length for r in sel], [r.payload_bytes / 1024 for r in sel], "o-",
                     label=sampler)
    ax1.set_xlabel("vector length")
    ax1.set_ylabel("updates / s")
    ax2.set_xlabel("vector length")
    ax2.set_ylabel("payload KiB")
    ax1.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def ingest_rate(stream, params: GraphParams, config: BufferConfig, label: str = "") -> dict:
    graph = GraphSketch(params)
    st = ingest_stream(graph, stream, config)
    return {"label": label, "mode": config.mode.value, "gutter_factor": config.gutter_factor,
            "workers": config.workers, "updates": st.updates, "seconds": st.seconds,
            "updates_per_sec": st.rate, "batches": st.batches, "blocks_read": st.blocks_read,
            "blocks_written": st.blocks_written}


def gutter_sweep(stream, params: GraphParams, factors=(0.0, 0.01, 0.1, 0.5, 1.0, 2.0),
                 workers: int = 1) -> list[dict]:
    """Leaf-gutter ingestion rate for each gutter factor (0 means capacity 1)."""
    return [ingest_rate(stream, params, BufferConfig(mode="leaf", gutter_factor=f, workers=workers),
                        label=f"leaf f={f}") for f in factors]
