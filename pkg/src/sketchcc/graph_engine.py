"""Per-node CubeSketches and spanning-forest recovery.

Node ``u`` owns the characteristic vector of its incident edges over the
``V * V`` possible edge slots. Over Z2 an edge update toggles the same slot
in both endpoint vectors, so the XOR of the vectors of a node set is exactly
the indicator of the edges leaving that set. Boruvka is emulated on these
sums: every round samples one cut edge per component from a fresh set of
sketches, merges, and folds the merged components' later-round sketches
together.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .cubesketch import (
    BUCKET_DTYPE,
    HEADER as CUBE_HEADER,
    GOOD,
    ZERO,
    CubeSketch,
    SampleResult,
    SketchParams,
    cube_payload_bytes,
    cube_serialized_size,
    query_kernel,
    rows_for_length,
)
from .hashing import checksum_of, depth_of, xxh64_word

SNAPSHOT_MAGIC = b"CCSNAPSH"
SNAPSHOT_VERSION = 1
SNAPSHOT_HEADER = struct.Struct("<8sIIIIQII")


def default_rounds(num_nodes: int) -> int:
    return max(1, rows_for_length(num_nodes))


@dataclass(frozen=True)
class GraphParams:
    num_nodes: int
    rounds: int | None = None
    master_seed: int = 0
    num_columns: int = 7
    delta: float = 0.01

    def __post_init__(self):
        if self.num_nodes < 2:
            raise ValueError(f"num_nodes must be >= 2, got {self.num_nodes}")
        if self.num_nodes >= 1 << 32:
            raise ValueError("num_nodes must fit in 32 bits")
        if self.rounds is None:
            object.__setattr__(self, "rounds", default_rounds(self.num_nodes))
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")

    @property
    def vector_length(self) -> int:
        return self.num_nodes * self.num_nodes

    @property
    def num_rows(self) -> int:
        return rows_for_length(self.vector_length)

    def sketch_params(self, round_: int) -> SketchParams:
        return SketchParams(self.vector_length, self.num_columns, self.num_rows,
                            self.delta, self.master_seed, round_)


def edge_encode(u: int, v: int, num_nodes: int) -> int:
    if u == v:
        raise ValueError(f"self-loop ({u}, {v})")
    if not (0 <= u < num_nodes and 0 <= v < num_nodes):
        raise ValueError(f"edge ({u}, {v}) outside [0, {num_nodes})")
    if u > v:
        u, v = v, u
    return u * num_nodes + v


def edge_decode(idx: int, num_nodes: int) -> tuple[int, int]:
    return divmod(idx, num_nodes)


def node_sketch_bytes(params: GraphParams) -> int:
    """Bucket payload of one node sketch (all rounds, headers excluded)."""
    return params.rounds * cube_payload_bytes(params.sketch_params(0))


def snapshot_bytes(params: GraphParams) -> int:
    per_cube = cube_serialized_size(params.sketch_params(0))
    return SNAPSHOT_HEADER.size + params.num_nodes * params.rounds * per_cube


class DisjointSetUnion:
    """Union by rank with path compression."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.count = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x: int, y: int) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1
        self.count -= 1
        return True


def dsu_find(d: DisjointSetUnion, x: int) -> int:
    return d.find(x)


def dsu_union(d: DisjointSetUnion, x: int, y: int) -> bool:
    return d.union(x, y)


@dataclass
class SpanningForestResult:
    edges: list[tuple[int, int]]
    partition: list[int]
    rounds_used: int
    exhausted: bool
    round_stats: list[dict] = field(default_factory=list)

    @property
    def num_components(self) -> int:
        return len(set(self.partition))

    def components(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for node, root in enumerate(self.partition):
            groups.setdefault(root, []).append(node)
        return sorted(groups.values())


@dataclass
class NodeSketch:
    node: int
    sketches: list[CubeSketch]


@nb.njit(cache=True, nogil=True)
def apply_pairs_kernel(alpha, gamma, mkeys, ckeys, targets, others, num_nodes):
    rounds, cols, rows = alpha.shape[1], alpha.shape[2], alpha.shape[3]
    V = np.uint64(num_nodes)
    for i in range(targets.size):
        t = targets[i]
        o = others[i]
        if t < o:
            idx = np.uint64(t) * V + np.uint64(o)
        else:
            idx = np.uint64(o) * V + np.uint64(t)
        for r in range(rounds):
            for c in range(cols):
                d = depth_of(xxh64_word(idx, mkeys[r, c]), rows)
                chk = checksum_of(idx, ckeys[r, c])
                for k in range(d):
                    alpha[t, r, c, k] ^= idx
                    gamma[t, r, c, k] ^= chk


@nb.njit(cache=True)
def query_roots_kernel(alpha, gamma, ckeys, round_, roots, n):
    kinds = np.empty(roots.size, dtype=np.int64)
    idxs = np.empty(roots.size, dtype=np.uint64)
    for i in range(roots.size):
        x = roots[i]
        k, idx = query_kernel(alpha[x, round_], gamma[x, round_], ckeys[round_], n)
        kinds[i] = k
        idxs[i] = idx
    return kinds, idxs


class GraphSketch:
    """Node sketches for every node of a graph with a fixed node set."""

    def __init__(self, params: GraphParams):
        self.params = params
        V, R = params.num_nodes, params.rounds
        sp = params.sketch_params(0)
        self.alpha = np.zeros((V, R) + sp.shape, dtype=np.uint64)
        self.gamma = np.zeros((V, R) + sp.shape, dtype=np.uint32)
        self.mkeys = np.stack([params.sketch_params(r).membership_keys() for r in range(R)])
        self.ckeys = np.stack([params.sketch_params(r).checksum_keys() for r in range(R)])
        self._lock = threading.Lock()

    @property
    def num_nodes(self) -> int:
        return self.params.num_nodes

    def apply_update(self, u: int, v: int) -> None:
        """Toggle edge {u, v} in the sketches of both endpoints."""
        edge_encode(u, v, self.num_nodes)
        self.apply_pairs(np.array([u, v], dtype=np.uint32), np.array([v, u], dtype=np.uint32))

    def apply_pairs(self, targets, others) -> None:
        """Toggle edge {targets[i], others[i]} in the sketch of targets[i] only."""
        targets = np.ascontiguousarray(targets, dtype=np.uint32)
        others = np.ascontiguousarray(others, dtype=np.uint32)
        if targets.shape != others.shape:
            raise ValueError("targets and others must have equal length")
        if targets.size:
            V = self.num_nodes
            if int(targets.max()) >= V or int(others.max()) >= V or np.any(targets == others):
                raise ValueError("invalid edge in batch")
        apply_pairs_kernel(self.alpha, self.gamma, self.mkeys, self.ckeys,
                           targets, others, self.num_nodes)

    def apply_stream(self, us, vs) -> None:
        """Apply a whole array of edge toggles without buffering."""
        us = np.asarray(us, dtype=np.uint32)
        vs = np.asarray(vs, dtype=np.uint32)
        self.apply_pairs(np.concatenate([us, vs]), np.concatenate([vs, us]))

    def node_sketch(self, node: int) -> NodeSketch:
        """Views onto the R sketches of ``node``; mutations write through."""
        sketches = [CubeSketch(self.params.sketch_params(r), self.alpha[node, r], self.gamma[node, r])
                    for r in range(self.params.rounds)]
        return NodeSketch(node, sketches)

    def copy(self) -> GraphSketch:
        out = GraphSketch.__new__(GraphSketch)
        out.params = self.params
        out.alpha = self.alpha.copy()
        out.gamma = self.gamma.copy()
        out.mkeys = self.mkeys
        out.ckeys = self.ckeys
        out._lock = threading.Lock()
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraphSketch):
            return NotImplemented
        return (self.params == other.params and np.array_equal(self.alpha, other.alpha)
                and np.array_equal(self.gamma, other.gamma))

    def merged_sketch(self, nodes, round_: int) -> CubeSketch:
        """XOR of the round-``round_`` sketches of ``nodes``."""
        nodes = list(nodes)
        alpha = np.bitwise_xor.reduce(self.alpha[nodes, round_], axis=0)
        gamma = np.bitwise_xor.reduce(self.gamma[nodes, round_], axis=0)
        return CubeSketch(self.params.sketch_params(round_), alpha, gamma)

    def component_cut_sample(self, nodes, round_: int = 0) -> SampleResult:
        return self.merged_sketch(nodes, round_).query()

    def spanning_forest(self) -> SpanningForestResult:
        """Recover a spanning forest from a copy of the current sketches."""
        return spanning_forest(self)

    # -- snapshot files --------------------------------------------------

    def _blob_dtype(self) -> np.dtype:
        sp = self.params.sketch_params(0)
        return np.dtype([("n", "<u8"), ("rows", "<u4"), ("cols", "<u4"), ("seed", "<u8"),
                         ("round", "<u4"), ("pad", "<u4"),
                         ("buckets", BUCKET_DTYPE, (sp.num_rows, sp.num_columns))])

    def to_bytes(self) -> bytes:
        p = self.params
        sp = p.sketch_params(0)
        head = SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, p.num_nodes, p.rounds,
                                    p.num_columns, p.master_seed, sp.num_rows, 0)
        blobs = np.zeros((p.num_nodes, p.rounds), dtype=self._blob_dtype())
        blobs["n"] = p.vector_length
        blobs["rows"] = sp.num_rows
        blobs["cols"] = sp.num_columns
        blobs["seed"] = p.master_seed
        blobs["round"] = np.arange(p.rounds, dtype=np.uint32)[None, :]
        # storage is (col, row); the file is row-major
        blobs["buckets"]["alpha"] = np.swapaxes(self.alpha, 2, 3)
        blobs["buckets"]["gamma"] = np.swapaxes(self.gamma, 2, 3)
        assert CUBE_HEADER.size + sp.num_rows * sp.num_columns * 12 == blobs.dtype.itemsize
        return head + blobs.tobytes()

    def save(self, path) -> int:
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return len(data)

    @classmethod
    def from_bytes(cls, data: bytes, delta: float = 0.01) -> GraphSketch:
        if len(data) < SNAPSHOT_HEADER.size:
            raise ValueError("truncated snapshot header")
        magic, version, V, R, cols, seed, rows, _ = SNAPSHOT_HEADER.unpack_from(data)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        params = GraphParams(V, R, seed, cols, delta)
        if params.num_rows != rows:
            raise ValueError("row count does not match node count")
        if len(data) != snapshot_bytes(params):
            raise ValueError(f"expected {snapshot_bytes(params)} bytes, got {len(data)}")
        g = cls(params)
        blobs = np.frombuffer(data, dtype=g._blob_dtype(), offset=SNAPSHOT_HEADER.size)
        blobs = blobs.reshape(V, R)
        if np.any(blobs["round"] != np.arange(R, dtype=np.uint32)[None, :]) or np.any(blobs["seed"] != seed):
            raise ValueError("snapshot sketch headers inconsistent")
        g.alpha[...] = np.swapaxes(blobs["buckets"]["alpha"], 2, 3)
        g.gamma[...] = np.swapaxes(blobs["buckets"]["gamma"], 2, 3)
        return g

    @classmethod
    def load(cls, path, delta: float = 0.01) -> GraphSketch:
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), delta)


def spanning_forest(state: GraphSketch) -> SpanningForestResult:
    params = state.params
    V, R = params.num_nodes, params.rounds
    n = np.uint64(params.vector_length)
    alpha = state.alpha.copy()
    gamma = state.gamma.copy()
    dsu = DisjointSetUnion(V)
    roots = np.arange(V, dtype=np.int64)
    edges: list[tuple[int, int]] = []
    stats = []
    saw_fail = False
    finished = False
    rounds_used = 0
    for r in range(R):
        rounds_used = r + 1
        # phase 1: one sample per live component
        kinds, idxs = query_roots_kernel(alpha, gamma, state.ckeys, r, roots, n)
        good = zero = fail = merges = 0
        # phase 2: union endpoints of sampled edges
        for kind, idx in zip(kinds.tolist(), idxs.tolist()):
            if kind == ZERO:
                zero += 1
                continue
            u, v = edge_decode(idx, V) if kind == GOOD else (0, 0)
            if kind != GOOD or u >= v:
                fail += 1
                continue
            good += 1
            if dsu.union(u, v):
                edges.append((u, v))
                merges += 1
        saw_fail = saw_fail or fail > 0
        stats.append({"round": r, "components": int(roots.size), "good": good,
                      "zero": zero, "fail": fail, "merges": merges})
        if zero == roots.size:
            finished = True
            break
        # phase 3: fold later-round sketches of merged components into their root
        survivors = []
        for x in roots.tolist():
            y = dsu.find(x)
            if y == x:
                survivors.append(x)
            elif r + 1 < R:
                alpha[y, r + 1:] ^= alpha[x, r + 1:]
                gamma[y, r + 1:] ^= gamma[x, r + 1:]
        roots = np.array(survivors, dtype=np.int64)
    partition = [dsu.find(x) for x in range(V)]
    return SpanningForestResult(edges, partition, rounds_used,
                                exhausted=(not finished) and saw_fail, round_stats=stats)
