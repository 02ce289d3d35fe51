"""Stream ingestion pipeline: feeder, buffering, work queue, graph workers."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from .buffering import BufferConfig, GutterSystem, UpdateBatch, WorkQueue, make_gutter_system
from .graph_engine import GraphSketch, node_sketch_bytes
from .streamio import EdgeStream, StreamReader


@dataclass
class IngestStats:
    updates: int = 0
    seconds: float = 0.0
    batches: int = 0
    blocks_read: int = 0
    blocks_written: int = 0

    @property
    def rate(self) -> float:
        return self.updates / self.seconds if self.seconds > 0 else float("inf")


class Ingestor:
    """Feeds edge updates through a buffering system into ``graph``.

    Each stream update ``{u, v}`` is inserted twice, once per endpoint.
    ``config.workers`` threads take batches off the work queue and apply
    them; a per-group lock keeps two batches for the same node group from
    being applied at the same time.
    """

    def __init__(self, graph: GraphSketch, config: BufferConfig | None = None):
        self.graph = graph
        self.config = config or BufferConfig()
        self.queue = WorkQueue(self.config.queue_capacity)
        self.buffers: GutterSystem = make_gutter_system(
            self.config, graph.num_nodes, node_sketch_bytes(graph.params), self.queue.put)
        self._locks = [threading.Lock() for _ in range(self.buffers.num_groups)]
        self._errors: list[BaseException] = []
        self.updates = 0
        self._workers = [threading.Thread(target=self._work, name=f"graph-worker-{i}", daemon=True)
                         for i in range(self.config.workers)]
        for w in self._workers:
            w.start()
        self._closed = False

    def _work(self) -> None:
        while True:
            batch = self.queue.get()
            if batch is None:
                return
            try:
                self._apply(batch)
            except BaseException as exc:
                self._errors.append(exc)
            finally:
                self.queue.task_done()

    def _apply(self, batch: UpdateBatch) -> None:
        with self._locks[batch.group]:
            self.graph.apply_pairs(batch.targets, batch.others)

    def _check(self) -> None:
        if self._errors:
            raise RuntimeError("graph worker failed") from self._errors[0]

    def update(self, u: int, v: int) -> None:
        if u == v or not (0 <= u < self.graph.num_nodes and 0 <= v < self.graph.num_nodes):
            raise ValueError(f"invalid edge ({u}, {v})")
        self.buffers.insert(u, v)
        self.buffers.insert(v, u)
        self.updates += 1

    def update_many(self, us, vs) -> None:
        us = np.ascontiguousarray(us, dtype=np.uint32)
        vs = np.ascontiguousarray(vs, dtype=np.uint32)
        if us.size:
            V = self.graph.num_nodes
            if np.any(us == vs) or int(us.max()) >= V or int(vs.max()) >= V:
                raise ValueError("invalid edge in update array")
        # interleave so the two endpoint insertions of an update stay adjacent
        targets = np.empty(2 * us.size, dtype=np.uint32)
        others = np.empty(2 * us.size, dtype=np.uint32)
        targets[0::2], targets[1::2] = us, vs
        others[0::2], others[1::2] = vs, us
        self.buffers.insert_many(targets, others)
        self.updates += int(us.size)

    def ingest(self, stream: EdgeStream) -> None:
        self.update_many(stream.us, stream.vs)

    def flush(self) -> None:
        """Push every buffered update into the sketches and wait for the workers."""
        self.buffers.flush_all()
        self.queue.join()
        self._check()

    def close(self) -> None:
        if self._closed:
            return
        self.flush()
        self.queue.close()
        for w in self._workers:
            w.join()
        self.buffers.close()
        self._closed = True
        self._check()

    def io_counters(self) -> tuple[int, int]:
        f = getattr(self.buffers, "file", None)
        return (f.blocks_read, f.blocks_written) if f is not None else (0, 0)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, *exc):
        if exc_type is None:
            self.close()
        else:
            self.queue.close()
            self.buffers.close()


def ingest_stream(graph: GraphSketch, stream, config: BufferConfig | None = None,
                  chunk_size: int = 1 << 16) -> IngestStats:
    """Ingest an :class:`EdgeStream` or a stream file path; returns throughput stats."""
    start = time.perf_counter()
    with Ingestor(graph, config) as ing:
        if isinstance(stream, EdgeStream):
            chunks = (stream[i:i + chunk_size] for i in range(0, len(stream), chunk_size))
        else:
            chunks = StreamReader(stream).chunks(chunk_size)
        for chunk in chunks:
            ing.ingest(chunk)
        ing.flush()
        blocks = ing.io_counters()
        batches = ing.buffers.batches_emitted
        updates = ing.updates
    return IngestStats(updates, time.perf_counter() - start, batches, *blocks)
