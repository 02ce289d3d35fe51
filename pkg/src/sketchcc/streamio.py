"""Edge-update streams: file codecs, synthesis, and the exact oracle.

Binary layout (little-endian)::

    header  magic "CCSTREAM" | version u32 | V u32 | N u64      (24 bytes)
    record  op u8 (0 insert, 1 delete) | u u32 | v u32          (9 bytes)

The text codec has a first line ``V N`` followed by one ``I u v`` or
``D u v`` line per update.
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass
from typing import Iterator

import numba as nb
import numpy as np

MAGIC = b"CCSTREAM"
VERSION = 1
HEADER = struct.Struct("<8sIIQ")
RECORD_DTYPE = np.dtype([("op", "u1"), ("u", "<u4"), ("v", "<u4")])
INSERT, DELETE = 0, 1


class StreamFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class StreamValidityError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (update #{position})")
        self.position = position


class Op(enum.IntEnum):
    INSERT = INSERT
    DELETE = DELETE


@dataclass(frozen=True)
class StreamUpdate:
    op: Op
    u: int
    v: int


@dataclass(eq=False)
class EdgeStream:
    """A whole stream held as parallel arrays."""

    num_nodes: int
    ops: np.ndarray
    us: np.ndarray
    vs: np.ndarray

    def __post_init__(self):
        self.ops = np.ascontiguousarray(self.ops, dtype=np.uint8)
        self.us = np.ascontiguousarray(self.us, dtype=np.uint32)
        self.vs = np.ascontiguousarray(self.vs, dtype=np.uint32)
        if not (self.ops.shape == self.us.shape == self.vs.shape):
            raise ValueError("ops, us and vs must have equal length")

    def __len__(self) -> int:
        return int(self.ops.size)

    def __iter__(self) -> Iterator[StreamUpdate]:
        for op, u, v in zip(self.ops.tolist(), self.us.tolist(), self.vs.tolist()):
            yield StreamUpdate(Op(op), u, v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EdgeStream):
            return NotImplemented
        return (self.num_nodes == other.num_nodes and np.array_equal(self.ops, other.ops)
                and np.array_equal(self.us, other.us) and np.array_equal(self.vs, other.vs))

    def __getitem__(self, sl: slice) -> EdgeStream:
        return EdgeStream(self.num_nodes, self.ops[sl], self.us[sl], self.vs[sl])

    @classmethod
    def from_updates(cls, num_nodes: int, updates) -> EdgeStream:
        updates = list(updates)
        return cls(num_nodes,
                   np.array([int(x.op) for x in updates], dtype=np.uint8),
                   np.array([x.u for x in updates], dtype=np.uint32),
                   np.array([x.v for x in updates], dtype=np.uint32))

    def records(self) -> np.ndarray:
        rec = np.empty(len(self), dtype=RECORD_DTYPE)
        rec["op"], rec["u"], rec["v"] = self.ops, self.us, self.vs
        return rec


def _check_records(rec: np.ndarray, num_nodes: int, base_offset: int) -> None:
    bad = (rec["op"] > 1) | (rec["u"] == rec["v"]) | (rec["u"] >= num_nodes) | (rec["v"] >= num_nodes)
    if bad.any():
        i = int(np.argmax(bad))
        raise StreamFormatError(f"malformed record {tuple(rec[i].tolist())}",
                                base_offset + i * RECORD_DTYPE.itemsize)


class StreamWriter:
    """Incremental binary writer; the update count is patched on close."""

    def __init__(self, path, num_nodes: int):
        self.path = path
        self.num_nodes = num_nodes
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(HEADER.pack(MAGIC, VERSION, num_nodes, 0))

    def write(self, stream: EdgeStream) -> None:
        if stream.num_nodes != self.num_nodes:
            raise ValueError("node count mismatch")
        rec = stream.records()
        _check_records(rec, self.num_nodes, HEADER.size + self.count * RECORD_DTYPE.itemsize)
        self._fh.write(rec.tobytes())
        self.count += len(stream)

    def close(self) -> None:
        if self._fh.closed:
            return
        self._fh.seek(0)
        self._fh.write(HEADER.pack(MAGIC, VERSION, self.num_nodes, self.count))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class StreamReader:
    """Constant-memory reader over a binary stream file."""

    def __init__(self, path):
        self.path = path
        size = os.path.getsize(path)
        with open(path, "rb") as fh:
            head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise StreamFormatError("truncated header", len(head))
        magic, version, V, N = HEADER.unpack(head)
        if magic != MAGIC:
            raise StreamFormatError(f"bad magic {magic!r}", 0)
        if version != VERSION:
            raise StreamFormatError(f"unsupported version {version}", 8)
        if V < 2:
            raise StreamFormatError(f"node count {V} < 2", 12)
        body = size - HEADER.size
        whole, extra = divmod(body, RECORD_DTYPE.itemsize)
        if whole < N or (whole == N and extra):
            raise StreamFormatError(f"truncated body: header declares {N} updates",
                                    HEADER.size + min(whole, N) * RECORD_DTYPE.itemsize)
        if whole > N:
            raise StreamFormatError("trailing bytes after declared updates",
                                    HEADER.size + N * RECORD_DTYPE.itemsize)
        self.num_nodes = V
        self.num_updates = N

    def __len__(self) -> int:
        return self.num_updates

    def chunks(self, chunk_size: int = 1 << 20) -> Iterator[EdgeStream]:
        with open(self.path, "rb") as fh:
            fh.seek(HEADER.size)
            done = 0
            while done < self.num_updates:
                k = min(chunk_size, self.num_updates - done)
                buf = fh.read(k * RECORD_DTYPE.itemsize)
                rec = np.frombuffer(buf, dtype=RECORD_DTYPE)
                _check_records(rec, self.num_nodes, HEADER.size + done * RECORD_DTYPE.itemsize)
                yield EdgeStream(self.num_nodes, rec["op"], rec["u"], rec["v"])
                done += k

    def __iter__(self) -> Iterator[StreamUpdate]:
        for chunk in self.chunks():
            yield from chunk

    def read_all(self) -> EdgeStream:
        parts = list(self.chunks())
        if not parts:
            return EdgeStream(self.num_nodes, np.empty(0), np.empty(0), np.empty(0))
        return EdgeStream(self.num_nodes, *(np.concatenate([getattr(p, f) for p in parts])
                                            for f in ("ops", "us", "vs")))


def stream_write(path, stream: EdgeStream) -> None:
    with StreamWriter(path, stream.num_nodes) as w:
        w.write(stream)


def stream_read(path) -> EdgeStream:
    return StreamReader(path).read_all()


def write_text(path, stream: EdgeStream) -> None:
    with open(path, "w") as fh:
        fh.write(f"{stream.num_nodes} {len(stream)}\n")
        for op, u, v in zip(stream.ops.tolist(), stream.us.tolist(), stream.vs.tolist()):
            fh.write(f"{'ID'[op]} {u} {v}\n")


def read_text(path) -> EdgeStream:
    with open(path) as fh:
        first = fh.readline().split()
        if len(first) != 2:
            raise StreamFormatError("header line must be 'V N'", 0)
        V, N = int(first[0]), int(first[1])
        ops, us, vs = [], [], []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3 or parts[0] not in ("I", "D"):
                raise StreamFormatError(f"bad line {lineno}: {line.strip()!r}", lineno)
            ops.append(INSERT if parts[0] == "I" else DELETE)
            us.append(int(parts[1]))
            vs.append(int(parts[2]))
    if len(ops) != N:
        raise StreamFormatError(f"header declares {N} updates, found {len(ops)}", 0)
    stream = EdgeStream(V, ops, us, vs)
    _check_records(stream.records(), V, 0)
    return stream


def read_edge_list(path) -> tuple[int, np.ndarray]:
    """Plain ``u v`` edge list (comments with ``#``); nodes are relabelled densely."""
    raw = np.loadtxt(path, dtype=np.int64, comments=("#", "%"), ndmin=2)[:, :2]
    ids, inv = np.unique(raw, return_inverse=True)
    pairs = inv.reshape(-1, 2)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.sort(pairs, axis=1)
    pairs = np.unique(pairs, axis=0)
    return int(ids.size), pairs.astype(np.uint32)


# -- exact oracle -------------------------------------------------------------


@nb.njit(cache=True)
def _oracle_apply(bits, V, ops, us, vs):
    for i in range(ops.size):
        u, v = np.int64(us[i]), np.int64(vs[i])
        if u > v:
            u, v = v, u
        if u == v or v >= V:
            return i
        k = u * V + v
        w, b = k >> 6, np.uint64(1) << np.uint64(k & 63)
        present = (bits[w] & b) != 0
        if ops[i] == 0:
            if present:
                return i
        elif not present:
            return i
        bits[w] ^= b
    return -1


@nb.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@nb.njit(cache=True)
def _oracle_components(bits, V):
    parent = np.arange(V)
    for w in range(bits.size):
        word = bits[w]
        while word:
            low = word & (~word + np.uint64(1))
            j = 0
            t = low
            while t > np.uint64(1):
                t >>= np.uint64(1)
                j += 1
            k = w * 64 + j
            u, v = k // V, k % V
            ru, rv = _find(parent, u), _find(parent, v)
            if ru != rv:
                if ru < rv:
                    parent[rv] = ru
                else:
                    parent[ru] = rv
            word ^= low
    labels = np.empty(V, dtype=np.int64)
    for x in range(V):
        labels[x] = _find(parent, x)
    return labels


@nb.njit(cache=True)
def _oracle_edges(bits, V, out_u, out_v):
    m = 0
    for w in range(bits.size):
        word = bits[w]
        while word:
            low = word & (~word + np.uint64(1))
            j = 0
            t = low
            while t > np.uint64(1):
                t >>= np.uint64(1)
                j += 1
            k = w * 64 + j
            out_u[m] = k // V
            out_v[m] = k % V
            m += 1
            word ^= low
    return m


class AdjacencyOracle:
    """Exact graph state as a V*V bit matrix (upper triangle used)."""

    def __init__(self, num_nodes: int):
        self.num_nodes = num_nodes
        self.bits = np.zeros((num_nodes * num_nodes + 63) // 64, dtype=np.uint64)
        self.num_edges = 0

    def apply(self, update: StreamUpdate) -> None:
        self.apply_stream(EdgeStream(self.num_nodes, [int(update.op)], [update.u], [update.v]))

    def apply_stream(self, stream: EdgeStream) -> None:
        bad = _oracle_apply(self.bits, self.num_nodes, stream.ops, stream.us, stream.vs)
        if bad >= 0:
            # redo the valid prefix count for bookkeeping before reporting
            ins = int(np.count_nonzero(stream.ops[:bad] == INSERT))
            self.num_edges += ins - (bad - ins)
            op = "insert of present" if stream.ops[bad] == INSERT else "delete of absent"
            raise StreamValidityError(f"{op} edge ({stream.us[bad]}, {stream.vs[bad]})", bad)
        ins = int(np.count_nonzero(stream.ops == INSERT))
        self.num_edges += ins - (len(stream) - ins)

    def has_edge(self, u: int, v: int) -> bool:
        if u > v:
            u, v = v, u
        k = u * self.num_nodes + v
        return bool((int(self.bits[k >> 6]) >> (k & 63)) & 1)

    def components(self) -> np.ndarray:
        """Label of each node: the smallest node id in its component."""
        return _oracle_components(self.bits, self.num_nodes)

    def edges(self) -> np.ndarray:
        out_u = np.empty(self.num_edges, dtype=np.int64)
        out_v = np.empty(self.num_edges, dtype=np.int64)
        m = _oracle_edges(self.bits, self.num_nodes, out_u, out_v)
        return np.stack([out_u[:m], out_v[:m]], axis=1)


def oracle_apply(oracle: AdjacencyOracle, update: StreamUpdate) -> AdjacencyOracle:
    oracle.apply(update)
    return oracle


def oracle_components(oracle: AdjacencyOracle) -> np.ndarray:
    return oracle.components()


def canonical_partition(labels) -> np.ndarray:
    """Relabel so every node maps to the smallest node in its class."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    return first[inv]


def validate_stream(stream: EdgeStream) -> int | None:
    """Position of the first invalid update, or None if the stream is valid."""
    bits = np.zeros((stream.num_nodes ** 2 + 63) // 64, dtype=np.uint64)
    bad = _oracle_apply(bits, stream.num_nodes, stream.ops, stream.us, stream.vs)
    return None if bad < 0 else int(bad)


# -- synthesis ----------------------------------------------------------------


@nb.njit(cache=True)
def _rmat_fill(bits, V, levels, target, cum, seed):
    np.random.seed(seed)
    count = 0
    while count < target:
        u = 0
        v = 0
        for _ in range(levels):
            x = np.random.random()
            q = 0
            while q < 3 and x >= cum[q]:
                q += 1
            u = 2 * u + (q >> 1)
            v = 2 * v + (q & 1)
        if u == v or u >= V or v >= V:
            continue
        if u > v:
            u, v = v, u
        k = u * V + v
        w, b = k >> 6, np.uint64(1) << np.uint64(k & 63)
        if bits[w] & b:
            continue
        bits[w] |= b
        count += 1
    return count


def dense_graph_oracle(num_nodes: int, edge_probability: float = 0.5, seed: int = 0,
                       skew=(0.3, 0.25, 0.25, 0.2)) -> AdjacencyOracle:
    """Recursive-matrix graph held only as an adjacency bitset.

    Quadrant probabilities ``skew`` are applied at every level; duplicate
    samples and self-loops are dropped, and sampling stops once
    ``edge_probability * C(V, 2)`` distinct edges exist.
    """
    if num_nodes < 2:
        raise ValueError("num_nodes must be >= 2")
    if not 0.0 <= edge_probability <= 1.0:
        raise ValueError("edge_probability must be in [0, 1]")
    skew = np.asarray(skew, dtype=np.float64)
    if skew.shape != (4,) or np.any(skew <= 0):
        raise ValueError("skew must hold four positive quadrant probabilities")
    cum = np.cumsum(skew / skew.sum())[:3]
    levels = max(1, (num_nodes - 1).bit_length())
    target = int(round(edge_probability * num_nodes * (num_nodes - 1) / 2))
    oracle = AdjacencyOracle(num_nodes)
    _rmat_fill(oracle.bits, num_nodes, levels, target, cum, seed & 0xFFFFFFFF)
    oracle.num_edges = target
    return oracle


def generate_dense_graph(num_nodes: int, edge_probability: float = 0.5, seed: int = 0,
                         skew=(0.3, 0.25, 0.25, 0.2)) -> np.ndarray:
    """Simple undirected graph by recursive-matrix sampling.

    See :func:`dense_graph_oracle`. Returns an (m, 2) array of ``u < v``
    pairs in lexicographic order.
    """
    return dense_graph_oracle(num_nodes, edge_probability, seed, skew).edges().astype(np.uint32)


def sample_edges(oracle: AdjacencyOracle, count: int, seed: int = 0) -> np.ndarray:
    """``count`` distinct edges of ``oracle`` drawn uniformly, in random order.

    Inserting them in this order is distributed like the first ``count``
    updates of a churn-free stream for the whole graph, without ever
    materializing the full edge list.
    """
    if count > oracle.num_edges:
        raise ValueError("cannot sample more edges than the graph has")
    V = oracle.num_nodes
    rng = np.random.default_rng(seed)
    seen = np.zeros_like(oracle.bits)
    out = np.empty(0, dtype=np.int64)
    while out.size < count:
        want = count - out.size
        u = rng.integers(0, V, size=2 * want + 64)
        v = rng.integers(0, V, size=2 * want + 64)
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        k = lo * V + hi
        k = k[lo != hi]
        hit = (oracle.bits[k >> 6] >> (k & 63).astype(np.uint64)) & np.uint64(1) == 1
        k = k[hit]
        k = k[((seen[k >> 6] >> (k & 63).astype(np.uint64)) & np.uint64(1)) == 0]
        _, first = np.unique(k, return_index=True)
        k = k[np.sort(first)][:want]
        np.bitwise_or.at(seen, k >> 6, np.uint64(1) << (k & 63).astype(np.uint64))
        out = np.concatenate([out, k])
    return np.stack([out // V, out % V], axis=1).astype(np.uint32)


@nb.njit(cache=True)
def _alternate(slot_of_op, order, nslots):
    # op type = parity of how many ops of the same slot precede it in stream order
    seen = np.zeros(nslots, dtype=np.int64)
    ops = np.empty(order.size, dtype=np.uint8)
    for i in range(order.size):
        s = slot_of_op[order[i]]
        ops[i] = seen[s] & 1
        seen[s] += 1
    return ops


def synthesize_stream(edges, num_nodes: int, seed: int = 0, churn: float = 0.0,
                      disconnect_count: int = 0, noise_slots: int = 0) -> tuple[EdgeStream, np.ndarray]:
    """Turn a final graph into a random insert/delete stream.

    Every edge slot receives an alternating I, D, I, ... sequence: odd length
    for edges that survive, even length for edges incident to the
    ``disconnect_count`` randomly chosen nodes and for ``noise_slots``
    random non-edges. Extra (D, I) pairs per slot are geometric with mean
    ``churn``. Slots are interleaved by random timestamps.

    Returns ``(stream, disconnected_nodes)``.
    """
    if disconnect_count > num_nodes:
        raise ValueError("cannot disconnect more nodes than exist")
    if churn < 0:
        raise ValueError("churn must be >= 0")
    rng = np.random.default_rng(seed)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        edges = np.sort(edges, axis=1)
        if np.any(edges[:, 0] == edges[:, 1]) or int(edges.max()) >= num_nodes:
            raise ValueError("edges must be a simple graph on [0, num_nodes)")
    disconnected = np.sort(rng.choice(num_nodes, size=disconnect_count, replace=False))
    cut = np.zeros(num_nodes, dtype=bool)
    cut[disconnected] = True
    survives = ~(cut[edges[:, 0]] | cut[edges[:, 1]]) if edges.size else np.zeros(0, bool)

    noise = _sample_non_edges(edges, num_nodes, noise_slots, rng)
    slots = np.concatenate([edges, noise]).astype(np.uint32)
    parity = np.concatenate([survives.astype(np.int64), np.zeros(len(noise), np.int64)])
    # survivors need 1 op, removed slots need 2, plus extra pairs
    extra = rng.geometric(1.0 / (1.0 + churn), size=len(slots)) - 1 if churn > 0 \
        else np.zeros(len(slots), np.int64)
    lengths = np.where(parity == 1, 1, 2) + 2 * extra
    slot_of_op = np.repeat(np.arange(len(slots), dtype=np.int64), lengths)
    stamps = rng.random(slot_of_op.size, dtype=np.float32)
    order = np.argsort(stamps, kind="stable")
    ops = _alternate(slot_of_op, order, len(slots))
    chosen = slot_of_op[order]
    del stamps, order
    # random endpoint order per update
    flip = rng.random(chosen.size) < 0.5
    a = slots[chosen, 0]
    b = slots[chosen, 1]
    us = np.where(flip, b, a)
    vs = np.where(flip, a, b)
    return EdgeStream(num_nodes, ops, us, vs), disconnected


def _sample_non_edges(edges, num_nodes, count, rng) -> np.ndarray:
    if count <= 0:
        return np.zeros((0, 2), dtype=np.int64)
    total = num_nodes * (num_nodes - 1) // 2
    if count > total - len(edges):
        raise ValueError("not enough non-edges for the requested noise slots")
    present = set((edges[:, 0] * num_nodes + edges[:, 1]).tolist())
    chosen: set[int] = set()
    while len(chosen) < count:
        u = rng.integers(0, num_nodes, size=2 * count)
        v = rng.integers(0, num_nodes, size=2 * count)
        for x, y in zip(np.minimum(u, v).tolist(), np.maximum(u, v).tolist()):
            k = x * num_nodes + y
            if x != y and k not in present:
                chosen.add(k)
                if len(chosen) == count:
                    break
    keys = np.array(sorted(chosen), dtype=np.int64)
    return np.stack([keys // num_nodes, keys % num_nodes], axis=1)


def final_graph(edges, disconnected) -> np.ndarray:
    """Edges that remain after the disconnect step, as sorted (u, v) rows."""
    edges = np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1)
    cut = np.zeros(int(edges.max()) + 1 if edges.size else 1, dtype=bool)
    d = np.asarray(disconnected, dtype=np.int64)
    cut[d[d < cut.size]] = True
    keep = ~(cut[edges[:, 0]] | cut[edges[:, 1]]) if edges.size else np.zeros(0, bool)
    out = edges[keep]
    return out[np.lexsort((out[:, 1], out[:, 0]))] if out.size else out
