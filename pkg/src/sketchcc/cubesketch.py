"""CubeSketch: an l0-sampler for vectors over the integers mod 2.

Each bucket keeps an XOR of the indices routed to it (``alpha``) and an XOR
of their 32-bit checksums (``gamma``). A bucket holding exactly one nonzero
index satisfies ``gamma == checksum(alpha)``, which is how samples are
recognised. Updates touch only XORs and hashes; there is no modular
arithmetic anywhere on the update path.

Bucket arrays are stored column-major, ``alpha[col, row]``, because an update
walks down one column at a time. Serialization is row-major.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .hashing import Purpose, checksum_of, column_keys, depth_of, xxh64_word

BUCKET_BYTES = 12
HEADER = struct.Struct("<QIIQII")
BUCKET_DTYPE = np.dtype([("alpha", "<u8"), ("gamma", "<u4")])

GOOD, ZERO, FAIL = 0, 1, 2


class SampleKind(enum.Enum):
    GOOD = GOOD
    ZERO = ZERO
    FAIL = FAIL


@dataclass(frozen=True)
class SampleResult:
    kind: SampleKind
    index: int | None = None
    value: int | None = None

    @property
    def good(self) -> bool:
        return self.kind is SampleKind.GOOD


def rows_for_length(n: int) -> int:
    """ceil(log2(n)), computed exactly on integers."""
    return (n - 1).bit_length()


def columns_for_delta(delta: float, q: float = 1.0) -> int:
    return max(1, math.ceil(q * math.log2(1.0 / delta)))


@dataclass(frozen=True)
class SketchParams:
    vector_length: int
    num_columns: int | None = None
    num_rows: int | None = None
    delta: float = 0.01
    master_seed: int = 0
    round: int = 0

    def __post_init__(self):
        if self.vector_length < 2:
            raise ValueError(f"vector_length must be >= 2, got {self.vector_length}")
        if self.vector_length > 1 << 64:
            raise ValueError("vector_length must fit in 64-bit indices")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.num_columns is None:
            object.__setattr__(self, "num_columns", columns_for_delta(self.delta))
        if self.num_rows is None:
            object.__setattr__(self, "num_rows", rows_for_length(self.vector_length))
        if self.num_rows < 1 or self.num_columns < 1:
            raise ValueError("num_rows and num_columns must be >= 1")

    @property
    def shape(self) -> tuple[int, int]:
        """Storage shape of the bucket arrays, (columns, rows)."""
        return (self.num_columns, self.num_rows)

    def membership_keys(self) -> np.ndarray:
        return column_keys(self.master_seed, Purpose.MEMBERSHIP, self.round, self.num_columns)

    def checksum_keys(self) -> np.ndarray:
        return column_keys(self.master_seed, Purpose.CHECKSUM, self.round, self.num_columns)


@nb.njit(cache=True, nogil=True)
def update_kernel(alpha, gamma, mkeys, ckeys, idxs):
    cols, rows = alpha.shape
    for i in range(idxs.size):
        idx = idxs[i]
        for c in range(cols):
            d = depth_of(xxh64_word(idx, mkeys[c]), rows)
            chk = checksum_of(idx, ckeys[c])
            for r in range(d):
                alpha[c, r] ^= idx
                gamma[c, r] ^= chk


@nb.njit(cache=True, nogil=True)
def query_kernel(alpha, gamma, ckeys, n):
    cols, rows = alpha.shape
    all_zero = True
    for c in range(cols):
        for r in range(rows):
            a = alpha[c, r]
            g = gamma[c, r]
            if a == 0 and g == 0:
                continue
            all_zero = False
            if a < n and g == checksum_of(a, ckeys[c]):
                return GOOD, a
    if all_zero:
        return ZERO, np.uint64(0)
    return FAIL, np.uint64(0)


def result_from_kernel(kind: int, idx) -> SampleResult:
    if kind == GOOD:
        return SampleResult(SampleKind.GOOD, int(idx))
    return SampleResult(SampleKind(kind))


@dataclass(eq=False)
class CubeSketch:
    params: SketchParams
    alpha: np.ndarray = field(default=None, repr=False)
    gamma: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = np.zeros(self.params.shape, dtype=np.uint64)
        if self.gamma is None:
            self.gamma = np.zeros(self.params.shape, dtype=np.uint32)
        if self.alpha.shape != self.params.shape or self.gamma.shape != self.params.shape:
            raise ValueError("bucket arrays do not match params shape")
        self._mkeys = self.params.membership_keys()
        self._ckeys = self.params.checksum_keys()

    def _check_index(self, idx: int) -> None:
        if not 0 <= idx < self.params.vector_length:
            raise IndexError(f"index {idx} outside [0, {self.params.vector_length})")

    def update(self, idx: int) -> None:
        """Toggle coordinate ``idx``."""
        self._check_index(idx)
        update_kernel(self.alpha, self.gamma, self._mkeys, self._ckeys,
                      np.array([idx], dtype=np.uint64))

    def update_many(self, idxs) -> None:
        idxs = np.ascontiguousarray(idxs, dtype=np.uint64)
        if idxs.size and int(idxs.max()) >= self.params.vector_length:
            raise IndexError("index outside vector range")
        update_kernel(self.alpha, self.gamma, self._mkeys, self._ckeys, idxs)

    def query(self) -> SampleResult:
        kind, idx = query_kernel(self.alpha, self.gamma, self._ckeys,
                                 np.uint64(min(self.params.vector_length, (1 << 64) - 1)))
        return result_from_kernel(kind, idx)

    def is_zero(self) -> bool:
        return not (self.alpha.any() or self.gamma.any())

    def copy(self) -> CubeSketch:
        return CubeSketch(self.params, self.alpha.copy(), self.gamma.copy())

    def merge(self, other: CubeSketch) -> CubeSketch:
        out = self.copy()
        out.merge_inplace(other)
        return out

    def merge_inplace(self, other: CubeSketch) -> None:
        if other.params != self.params:
            raise ValueError("cannot merge sketches with different params or seeds")
        self.alpha ^= other.alpha
        self.gamma ^= other.gamma

    def __eq__(self, other) -> bool:
        if not isinstance(other, CubeSketch):
            return NotImplemented
        return (self.params == other.params
                and np.array_equal(self.alpha, other.alpha)
                and np.array_equal(self.gamma, other.gamma))

    def to_bytes(self) -> bytes:
        p = self.params
        buckets = np.empty((p.num_rows, p.num_columns), dtype=BUCKET_DTYPE)
        buckets["alpha"] = self.alpha.T
        buckets["gamma"] = self.gamma.T
        return HEADER.pack(p.vector_length, p.num_rows, p.num_columns,
                           p.master_seed, p.round, 0) + buckets.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, delta: float = 0.01) -> CubeSketch:
        if len(data) < HEADER.size:
            raise ValueError("truncated sketch header")
        n, rows, cols, seed, round_, _ = HEADER.unpack_from(data)
        params = SketchParams(n, cols, rows, delta, seed, round_)
        expected = cube_serialized_size(params)
        if len(data) != expected:
            raise ValueError(f"expected {expected} bytes, got {len(data)}")
        buckets = np.frombuffer(data, dtype=BUCKET_DTYPE, offset=HEADER.size)
        buckets = buckets.reshape(rows, cols).T
        return cls(params, np.ascontiguousarray(buckets["alpha"]),
                   np.ascontiguousarray(buckets["gamma"]))


def cube_new(params: SketchParams) -> CubeSketch:
    return CubeSketch(params)


def cube_update(sketch: CubeSketch, idx: int) -> CubeSketch:
    sketch.update(idx)
    return sketch


def cube_query(sketch: CubeSketch) -> SampleResult:
    return sketch.query()


def cube_merge(a: CubeSketch, b: CubeSketch) -> CubeSketch:
    return a.merge(b)


def cube_payload_bytes(params: SketchParams) -> int:
    return params.num_rows * params.num_columns * BUCKET_BYTES


def cube_serialized_size(params: SketchParams) -> int:
    return HEADER.size + cube_payload_bytes(params)
