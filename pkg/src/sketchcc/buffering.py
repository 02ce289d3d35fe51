"""Batching of fine-grained edge updates ahead of the sketches.

Three buffering modes turn a sequence of ``(target, other)`` insertions into
:class:`UpdateBatch` objects that address a single node group:

* ``none``: every insertion becomes a singleton batch.
* ``leaf``: one in-RAM gutter per node group.
* ``tree``: a gutter tree stored in a preallocated file. The root buffer is
  in RAM; a flusher thread pushes full buffers down towards the leaf gutters
  using whole-block reads and writes only.

Batches go into a bounded :class:`WorkQueue` that blocks producers when full.
"""

from __future__ import annotations

import enum
import math
import os
import queue
import tempfile
import threading
from dataclasses import dataclass

import numba as nb
import numpy as np

RECORD_BYTES = 8
REC_DTYPE = np.uint32


class BufferMode(enum.Enum):
    NONE = "none"
    LEAF = "leaf"
    TREE = "tree"


@dataclass
class BufferConfig:
    mode: BufferMode = BufferMode.LEAF
    gutter_factor: float | None = None
    group_size: int = 1
    buffer_bytes: int = 8 * 1024 * 1024
    block_bytes: int = 16 * 1024
    fanout: int | None = None
    queue_capacity_multiplier: int = 8
    workers: int = 1
    tree_path: str | None = None

    def __post_init__(self):
        self.mode = BufferMode(self.mode)
        if self.gutter_factor is None:
            self.gutter_factor = 2.0 if self.mode is BufferMode.TREE else 0.5
        if self.gutter_factor < 0:
            raise ValueError("gutter_factor must be >= 0")
        if self.group_size < 1 or self.workers < 1 or self.queue_capacity_multiplier < 1:
            raise ValueError("group_size, workers and queue multiplier must be >= 1")
        if self.block_bytes % RECORD_BYTES or self.buffer_bytes % self.block_bytes:
            raise ValueError("buffer_bytes must be a multiple of block_bytes, "
                             "itself a multiple of the record size")
        derived = self.buffer_bytes // self.block_bytes
        if self.fanout is None:
            self.fanout = derived
        if self.mode is BufferMode.TREE and self.fanout != derived:
            raise ValueError(f"tree fanout must equal buffer_bytes / block_bytes = {derived}")
        if self.mode is BufferMode.TREE and self.fanout < 2:
            raise ValueError("tree fanout must be >= 2")

    @property
    def queue_capacity(self) -> int:
        return self.queue_capacity_multiplier * self.workers


def gutter_capacity(config: BufferConfig, node_sketch_bytes: int) -> int:
    """Updates a gutter holds before it is emitted as a batch.

    The gutter is sized as ``gutter_factor`` times the sketches of its node
    group (``group_size`` node sketches).
    """
    group_bytes = node_sketch_bytes * config.group_size
    return max(1, math.floor(config.gutter_factor * group_bytes / RECORD_BYTES))


@dataclass(eq=False)
class UpdateBatch:
    """Updates for one node group: rows of (target node, other endpoint)."""

    group: int
    records: np.ndarray

    @property
    def targets(self) -> np.ndarray:
        return self.records[:, 0]

    @property
    def others(self) -> np.ndarray:
        return self.records[:, 1]

    def __len__(self) -> int:
        return len(self.records)


_CLOSED = object()


class WorkQueue:
    """Bounded FIFO of batches with close semantics.

    ``put`` blocks while full and ``get`` blocks while empty. After
    ``close`` every pending and future ``get`` returns ``None`` once the
    queued batches are drained.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._q: queue.Queue = queue.Queue(maxsize=capacity)
        self._closed = False

    def put(self, batch: UpdateBatch, timeout: float | None = None) -> None:
        if self._closed:
            raise RuntimeError("put on closed work queue")
        self._q.put(batch, timeout=timeout)

    def get(self, timeout: float | None = None) -> UpdateBatch | None:
        item = self._q.get(timeout=timeout)
        if item is _CLOSED:
            self._q.task_done()
            # let the other getters see the end of stream too
            self._q.put(_CLOSED)
            return None
        return item

    def task_done(self) -> None:
        self._q.task_done()

    def join(self) -> None:
        self._q.join()

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._q.put(_CLOSED)

    def qsize(self) -> int:
        return self._q.qsize()


def queue_put(q: WorkQueue, batch: UpdateBatch) -> None:
    q.put(batch)


def queue_get(q: WorkQueue) -> UpdateBatch | None:
    return q.get()


class GutterSystem:
    """Common surface of the three buffering modes."""

    def __init__(self, config: BufferConfig, num_nodes: int, node_sketch_bytes: int,
                 emit):
        self.config = config
        self.num_nodes = num_nodes
        self.num_groups = -(-num_nodes // config.group_size)
        self.capacity = gutter_capacity(config, node_sketch_bytes)
        self._emit = emit
        self.batches_emitted = 0

    def group_of(self, node: int) -> int:
        return node // self.config.group_size

    def emit(self, group: int, records: np.ndarray) -> None:
        self.batches_emitted += 1
        self._emit(UpdateBatch(group, records))

    def insert(self, u: int, v: int) -> None:
        raise NotImplementedError

    def insert_many(self, targets: np.ndarray, others: np.ndarray) -> None:
        for t, o in zip(targets.tolist(), others.tolist()):
            self.insert(t, o)

    def flush_all(self) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class NoBuffer(GutterSystem):
    def insert(self, u: int, v: int) -> None:
        self.emit(self.group_of(u), np.array([[u, v]], dtype=REC_DTYPE))

    def flush_all(self) -> None:
        pass


@nb.njit(cache=True)
def _leaf_fill(buf, fill, group_size, capacity, targets, others, start):
    # append until some gutter fills; return (next position, full group or -1)
    for i in range(start, targets.size):
        g = targets[i] // group_size
        k = fill[g]
        buf[g, k, 0] = targets[i]
        buf[g, k, 1] = others[i]
        fill[g] = k + 1
        if k + 1 == capacity:
            return i + 1, g
    return targets.size, -1


class LeafGutters(GutterSystem):
    """One fixed-size gutter per node group, held in RAM."""

    def __init__(self, config, num_nodes, node_sketch_bytes, emit):
        super().__init__(config, num_nodes, node_sketch_bytes, emit)
        self.buf = np.empty((self.num_groups, self.capacity, 2), dtype=REC_DTYPE)
        self.fill = np.zeros(self.num_groups, dtype=np.int64)

    def _take(self, g: int) -> None:
        k = int(self.fill[g])
        records = self.buf[g, :k].copy()
        self.fill[g] = 0
        self.emit(g, records)

    def insert(self, u: int, v: int) -> None:
        g = u // self.config.group_size
        k = self.fill[g]
        self.buf[g, k, 0] = u
        self.buf[g, k, 1] = v
        self.fill[g] = k + 1
        if k + 1 == self.capacity:
            self._take(g)

    def insert_many(self, targets, others) -> None:
        targets = np.ascontiguousarray(targets, dtype=REC_DTYPE)
        others = np.ascontiguousarray(others, dtype=REC_DTYPE)
        pos = 0
        while pos < targets.size:
            pos, g = _leaf_fill(self.buf, self.fill, self.config.group_size, self.capacity,
                                targets, others, pos)
            if g >= 0:
                self._take(int(g))

    def flush_all(self) -> None:
        for g in np.flatnonzero(self.fill).tolist():
            self._take(g)


class BlockFile:
    """Preallocated file accessed only in whole, aligned blocks; counts I/O."""

    def __init__(self, path: str, size: int, block_bytes: int):
        self.path = path
        self.block_bytes = block_bytes
        self.fd = os.open(path, os.O_RDWR | os.O_CREAT | os.O_TRUNC, 0o644)
        os.ftruncate(self.fd, size)
        self.size = size
        self.blocks_read = 0
        self.blocks_written = 0
        self.write_sizes: set[int] = set()

    def _check(self, offset: int, length: int) -> None:
        if offset % self.block_bytes or length % self.block_bytes:
            raise ValueError(f"unaligned block I/O at {offset} (+{length})")
        if offset + length > self.size:
            raise ValueError("block I/O past end of file")

    def read(self, offset: int, nblocks: int) -> bytes:
        length = nblocks * self.block_bytes
        self._check(offset, length)
        data = os.pread(self.fd, length, offset)
        self.blocks_read += nblocks
        return data

    def write(self, offset: int, data: bytes) -> None:
        self._check(offset, len(data))
        os.pwrite(self.fd, data, offset)
        self.blocks_written += len(data) // self.block_bytes
        self.write_sizes.add(len(data))

    def close(self) -> None:
        if self.fd >= 0:
            os.close(self.fd)
            self.fd = -1


@dataclass
class _TreeNode:
    offset: int
    capacity: int          # records
    leaf_start: int        # first node group covered
    child_span: int        # groups covered by each child (0 for leaves)
    children: list
    fill: int = 0

    @property
    def is_leaf(self) -> bool:
        return not self.children


class GutterTree(GutterSystem):
    """Gutter tree over node groups, backed by one preallocated file."""

    def __init__(self, config, num_nodes, node_sketch_bytes, emit):
        super().__init__(config, num_nodes, node_sketch_bytes, emit)
        self.rpb = config.block_bytes // RECORD_BYTES
        self.buffer_records = config.buffer_bytes // RECORD_BYTES
        self.leaf_blocks = -(-self.capacity // self.rpb)
        self._own_path = config.tree_path is None
        if self._own_path:
            fd, path = tempfile.mkstemp(prefix="gutter-tree-", suffix=".bin")
            os.close(fd)
        else:
            path = config.tree_path
        self.levels = 1
        while config.fanout ** self.levels < self.num_groups:
            self.levels += 1
        self._offset = 0
        self.internal_nodes: list[_TreeNode] = []
        self.leaves: list[_TreeNode] = []
        span = config.fanout ** self.levels
        self.root = self._build(0, span, depth=0)
        self.file = BlockFile(path, self._offset, config.block_bytes)
        self._root_buf = np.empty((self.buffer_records, 2), dtype=REC_DTYPE)
        self._root_fill = 0
        self.records_inserted = 0
        self._jobs: queue.Queue = queue.Queue(maxsize=1)
        self._error: BaseException | None = None
        self._flusher = threading.Thread(target=self._flusher_loop, name="gutter-flusher",
                                         daemon=True)
        self._flusher.start()

    # -- topology ---------------------------------------------------------

    def _build(self, start: int, span: int, depth: int) -> _TreeNode:
        if span == 1:
            node = _TreeNode(self._offset, self.capacity, start, 0, [])
            self._offset += self.leaf_blocks * self.config.block_bytes
            self.leaves.append(node)
            return node
        child_span = span // self.config.fanout
        if depth == 0:
            node = _TreeNode(-1, self.buffer_records, start, child_span, [])
        else:
            node = _TreeNode(self._offset, self.buffer_records, start, child_span, [])
            self._offset += self.config.buffer_bytes
            self.internal_nodes.append(node)
        for s in range(start, min(start + span, self.num_groups), child_span):
            node.children.append(self._build(s, child_span, depth + 1))
        return node

    @property
    def height(self) -> int:
        """Levels below the root (internal levels plus the leaf level)."""
        return self.levels

    def io_estimate(self, num_records: int) -> int:
        """sort(N)-style block count: every record is written and read once per level."""
        blocks = -(-num_records * RECORD_BYTES // self.config.block_bytes)
        return 2 * self.levels * blocks

    # -- feeder side --------------------------------------------------------

    def insert(self, u: int, v: int) -> None:
        k = self._root_fill
        self._root_buf[k, 0] = u
        self._root_buf[k, 1] = v
        self._root_fill = k + 1
        self.records_inserted += 1
        if k + 1 == self.buffer_records:
            self._hand_off_root()

    def insert_many(self, targets, others) -> None:
        targets = np.ascontiguousarray(targets, dtype=REC_DTYPE)
        others = np.ascontiguousarray(others, dtype=REC_DTYPE)
        pos = 0
        while pos < targets.size:
            k = min(self.buffer_records - self._root_fill, targets.size - pos)
            sl = slice(self._root_fill, self._root_fill + k)
            self._root_buf[sl, 0] = targets[pos:pos + k]
            self._root_buf[sl, 1] = others[pos:pos + k]
            self._root_fill += k
            self.records_inserted += k
            pos += k
            if self._root_fill == self.buffer_records:
                self._hand_off_root()

    def _hand_off_root(self) -> None:
        full = self._root_buf[:self._root_fill]
        self._root_buf = np.empty((self.buffer_records, 2), dtype=REC_DTYPE)
        self._root_fill = 0
        self._submit(("root", full))

    def _submit(self, job) -> None:
        self._raise_pending()
        self._jobs.put(job)

    def _raise_pending(self) -> None:
        if self._error is not None:
            raise RuntimeError("gutter tree flusher failed") from self._error

    def flush_all(self) -> None:
        if self._root_fill:
            self._hand_off_root()
        done = threading.Event()
        self._submit(("drain", done))
        done.wait()
        self._raise_pending()

    def close(self) -> None:
        if self._flusher.is_alive():
            self._jobs.put(("stop", None))
            self._flusher.join()
        self.file.close()
        if self._own_path:
            try:
                os.unlink(self.file.path)
            except FileNotFoundError:
                pass

    # -- flusher side -------------------------------------------------------

    def _flusher_loop(self) -> None:
        while True:
            kind, payload = self._jobs.get()
            if kind == "stop":
                return
            try:
                if kind == "root":
                    self._distribute(self.root, payload)
                elif kind == "drain":
                    self._drain()
            except BaseException as exc:  # surfaced to the feeder
                self._error = exc
            finally:
                if kind == "drain":
                    payload.set()

    def _distribute(self, node: _TreeNode, records: np.ndarray) -> None:
        child_idx = (records[:, 0].astype(np.int64) // self.config.group_size - node.leaf_start) \
            // node.child_span
        order = np.argsort(child_idx, kind="stable")
        records = records[order]
        bounds = np.searchsorted(child_idx[order], np.arange(len(node.children) + 1))
        for c, child in enumerate(node.children):
            lo, hi = bounds[c], bounds[c + 1]
            if hi > lo:
                self._append(child, records[lo:hi])

    def _append(self, node: _TreeNode, records: np.ndarray) -> None:
        while len(records):
            take = min(node.capacity - node.fill, len(records))
            self._write_tail(node, records[:take])
            records = records[take:]
            if node.fill == node.capacity:
                self._flush_node(node)

    def _write_tail(self, node: _TreeNode, records: np.ndarray) -> None:
        bs = self.config.block_bytes
        first_block, partial = divmod(node.fill, self.rpb)
        offset = node.offset + first_block * bs
        if partial:
            head = np.frombuffer(self.file.read(offset, 1), dtype=REC_DTYPE).reshape(-1, 2)[:partial]
            records = np.concatenate([head, records])
        nblocks = -(-len(records) // self.rpb)
        out = np.zeros((nblocks * self.rpb, 2), dtype=REC_DTYPE)
        out[:len(records)] = records
        self.file.write(offset, out.tobytes())
        node.fill += len(records) - partial

    def _read_all(self, node: _TreeNode) -> np.ndarray:
        nblocks = -(-node.fill // self.rpb)
        data = self.file.read(node.offset, nblocks)
        records = np.frombuffer(data, dtype=REC_DTYPE).reshape(-1, 2)[:node.fill].copy()
        node.fill = 0
        return records

    def _flush_node(self, node: _TreeNode) -> None:
        if not node.fill:
            return
        records = self._read_all(node)
        if node.is_leaf:
            self.emit(node.leaf_start, records)
        else:
            self._distribute(node, records)

    def _drain(self) -> None:
        # breadth-first so that everything above a level is pushed down first
        level = [self.root]
        while level:
            nxt = []
            for node in level:
                if node is not self.root:
                    self._flush_node(node)
                nxt.extend(node.children)
            level = nxt


def make_gutter_system(config: BufferConfig, num_nodes: int, node_sketch_bytes: int,
                       emit) -> GutterSystem:
    cls = {BufferMode.NONE: NoBuffer, BufferMode.LEAF: LeafGutters,
           BufferMode.TREE: GutterTree}[config.mode]
    return cls(config, num_nodes, node_sketch_bytes, emit)


def buffer_insert(system: GutterSystem, u: int, v: int) -> None:
    system.insert(u, v)


def flush_all(system: GutterSystem) -> None:
    system.flush_all()
