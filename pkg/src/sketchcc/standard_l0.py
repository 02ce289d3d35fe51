"""General-purpose l0-sampler over the integers (the baseline).

Buckets hold ``a = sum(idx * delta)``, ``b = sum(delta)`` and
``c = sum(delta * r**idx) mod p``. Membership routing is shared with
:mod:`sketchcc.cubesketch`, so a speed comparison between the two isolates
the cost of the checksum.

Two word regimes are supported. ``w64`` works modulo the Mersenne prime
2**61 - 1 with 64-bit accumulators. ``w128`` works modulo 2**127 - 1 with
128-bit accumulators stored as (lo, hi) uint64 limb pairs; this is the
regime needed once vector indices no longer leave headroom in a machine word.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .cubesketch import SampleKind, SampleResult, columns_for_delta, rows_for_length
from .hashing import HashSeed, Purpose, column_keys, depth_of, xxh64_word

P61 = (1 << 61) - 1
P127 = (1 << 127) - 1
# largest vector length that still uses 64-bit words by default
W64_MAX_LENGTH = 1 << 32

HEADER = struct.Struct("<QIIQIB3x")

_M32 = np.uint64(0xFFFFFFFF)
_M61 = np.uint64(P61)
_M63 = np.uint64((1 << 63) - 1)
_S32 = np.uint64(32)
_Z = np.uint64(0)
_ONE = np.uint64(1)
_ALL = np.uint64((1 << 64) - 1)


class WordRegime(enum.Enum):
    W64 = 8
    W128 = 16

    @property
    def word_bytes(self) -> int:
        return self.value

    @property
    def prime(self) -> int:
        return P61 if self is WordRegime.W64 else P127


@dataclass(frozen=True)
class StdParams:
    vector_length: int
    num_columns: int | None = None
    num_rows: int | None = None
    delta: float = 0.01
    master_seed: int = 0
    round: int = 0
    word_regime: WordRegime | None = None

    def __post_init__(self):
        if self.vector_length < 2:
            raise ValueError(f"vector_length must be >= 2, got {self.vector_length}")
        if self.num_columns is None:
            object.__setattr__(self, "num_columns", columns_for_delta(self.delta))
        if self.num_rows is None:
            object.__setattr__(self, "num_rows", rows_for_length(self.vector_length))
        if self.word_regime is None:
            regime = WordRegime.W64 if self.vector_length <= W64_MAX_LENGTH else WordRegime.W128
            object.__setattr__(self, "word_regime", regime)
        if self.vector_length >= self.prime:
            raise ValueError("vector_length must be below the field prime")
        if self.vector_length > 1 << 64:
            raise ValueError("vector_length must fit in 64-bit indices")

    @property
    def shape(self) -> tuple[int, int]:
        """Storage shape of the accumulators, (columns, rows)."""
        return (self.num_columns, self.num_rows)

    @property
    def prime(self) -> int:
        return self.word_regime.prime

    def residue_bases(self) -> list[int]:
        """Per-column checksum base r[col] in [1, p)."""
        out = []
        for col in range(self.num_columns):
            lo = HashSeed(self.master_seed, Purpose.BASELINE_R, self.round, col).key
            hi = HashSeed(self.master_seed, Purpose.BASELINE_R, self.round | (1 << 23), col).key
            out.append(((hi << 64) | lo) % (self.prime - 1) + 1)
        return out

    def membership_keys(self) -> np.ndarray:
        return column_keys(self.master_seed, Purpose.MEMBERSHIP, self.round, self.num_columns)


# -- 64x64 -> 128 and Mersenne arithmetic ------------------------------------


@nb.njit(inline="always")
def _mul64(a, b):
    a_lo = a & _M32
    a_hi = a >> _S32
    b_lo = b & _M32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _M32) + (p2 & _M32)
    lo = (p0 & _M32) | (mid << _S32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return hi, lo


@nb.njit(inline="always")
def _mulmod61(a, b):
    hi, lo = _mul64(a, b)
    s = (lo & _M61) + ((lo >> np.uint64(61)) | (hi << np.uint64(3)))
    if s >= _M61:
        s -= _M61
    return s


@nb.njit(inline="always")
def _addmod61(a, b):
    s = a + b
    if s >= _M61:
        s -= _M61
    return s


@nb.njit(cache=True, nogil=True)
def powmod61(base, e):
    """Square-and-multiply; returns (base**e mod p, number of mulmods)."""
    result = _ONE
    ops = 0
    while e:
        if e & _ONE:
            result = _mulmod61(result, base)
            ops += 1
        e >>= _ONE
        if e:
            base = _mulmod61(base, base)
            ops += 1
    return result, ops


@nb.njit(inline="always")
def _add128(ah, al, bh, bl):
    lo = al + bl
    carry = _ONE if lo < al else _Z
    return ah + bh + carry, lo


@nb.njit(inline="always")
def _fold127(h, l):
    # (h, l) < 2**128 -> congruent value <= p
    top = h >> np.uint64(63)
    h = h & _M63
    return _add128(h, l, _Z, top)


@nb.njit(inline="always")
def _norm127(h, l):
    if h == _M63 and l == _ALL:
        return _Z, _Z
    return h, l


@nb.njit(inline="always")
def _addmod127(ah, al, bh, bl):
    h, l = _add128(ah, al, bh, bl)
    h, l = _fold127(h, l)
    return _norm127(h, l)


@nb.njit(inline="always")
def _mulmod127(xh, xl, yh, yl):
    h0, l0 = _mul64(xl, yl)
    h1, l1 = _mul64(xl, yh)
    h2, l2 = _mul64(xh, yl)
    h3, l3 = _mul64(xh, yh)
    w0 = l0
    w1 = h0 + l1
    c = _ONE if w1 < h0 else _Z
    t = w1 + l2
    c += _ONE if t < w1 else _Z
    w1 = t
    w2 = h1 + c
    c2 = _ONE if w2 < h1 else _Z
    t = w2 + h2
    c2 += _ONE if t < w2 else _Z
    w2 = t
    t = w2 + l3
    c2 += _ONE if t < w2 else _Z
    w2 = t
    w3 = h3 + c2
    # value = low 127 bits + (value >> 127)
    low_h = w1 & _M63
    high_l = (w1 >> np.uint64(63)) | (w2 << _ONE)
    high_h = (w2 >> np.uint64(63)) | (w3 << _ONE)
    h, l = _add128(low_h, w0, high_h, high_l)
    h, l = _fold127(h, l)
    return _norm127(h, l)


@nb.njit(cache=True, nogil=True)
def powmod127(bh, bl, e):
    rh, rl = _Z, _ONE
    ops = 0
    while e:
        if e & _ONE:
            rh, rl = _mulmod127(rh, rl, bh, bl)
            ops += 1
        e >>= _ONE
        if e:
            bh, bl = _mulmod127(bh, bl, bh, bl)
            ops += 1
    return rh, rl, ops


@nb.njit(cache=True, nogil=True)
def mulmod127(xh, xl, yh, yl):
    return _mulmod127(xh, xl, yh, yl)


# -- update kernels -----------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def update_kernel64(a, b, c, mkeys, rbases, idxs, deltas):
    cols, rows = a.shape
    ops = 0
    for i in range(idxs.size):
        idx = idxs[i]
        dl = deltas[i]
        dmod = np.uint64(dl) if dl >= 0 else _M61 - np.uint64(-dl)
        for col in range(cols):
            d = depth_of(xxh64_word(idx, mkeys[col]), rows)
            chk, k = powmod61(rbases[col], idx)
            add = _mulmod61(dmod, chk)
            ops += k + 1
            for r in range(d):
                a[col, r] += np.int64(idx) * dl
                b[col, r] += dl
                c[col, r] = _addmod61(c[col, r], add)
    return ops


@nb.njit(cache=True, nogil=True)
def update_kernel128(a, b, c, mkeys, rbases, idxs, deltas):
    # a, b: two's-complement 128-bit; c: residue mod 2**127 - 1; [..., 0] = lo
    cols, rows = a.shape[0], a.shape[1]
    ops = 0
    for i in range(idxs.size):
        idx = idxs[i]
        dl = deltas[i]
        mag = np.uint64(dl) if dl >= 0 else np.uint64(-dl)
        ph, pl = _mul64(idx, mag)
        if dl < 0:
            # negate idx * |delta|
            ph, pl = _add128(~ph, ~pl, _Z, _ONE)
            dh, dlo = _M63, _ALL - mag
            bh, bl = _ALL, np.uint64(0) - mag
        else:
            dh, dlo = _Z, mag
            bh, bl = _Z, mag
        for col in range(cols):
            d = depth_of(xxh64_word(idx, mkeys[col]), rows)
            ch, cl, k = powmod127(rbases[col, 1], rbases[col, 0], idx)
            addh, addl = _mulmod127(dh, dlo, ch, cl)
            ops += k + 1
            for r in range(d):
                h, l = _add128(a[col, r, 1], a[col, r, 0], ph, pl)
                a[col, r, 1] = h
                a[col, r, 0] = l
                h, l = _add128(b[col, r, 1], b[col, r, 0], bh, bl)
                b[col, r, 1] = h
                b[col, r, 0] = l
                h, l = _addmod127(c[col, r, 1], c[col, r, 0], addh, addl)
                c[col, r, 1] = h
                c[col, r, 0] = l
    return ops


def _signed128(lo: int, hi: int) -> int:
    v = (int(hi) << 64) | int(lo)
    return v - (1 << 128) if v >> 127 else v


@dataclass(eq=False)
class StandardL0Sketch:
    params: StdParams
    a: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)
    c: np.ndarray = field(default=None, repr=False)
    mulmod_count: int = 0

    def __post_init__(self):
        p = self.params
        wide = p.word_regime is WordRegime.W128
        shape = p.shape + ((2,) if wide else ())
        if self.a is None:
            self.a = np.zeros(shape, dtype=np.uint64 if wide else np.int64)
            self.b = np.zeros(shape, dtype=np.uint64 if wide else np.int64)
            self.c = np.zeros(shape, dtype=np.uint64)
        self._mkeys = p.membership_keys()
        self._r = p.residue_bases()
        if wide:
            self._rarr = np.array([[r & ((1 << 64) - 1), r >> 64] for r in self._r], dtype=np.uint64)
        else:
            self._rarr = np.array(self._r, dtype=np.uint64)

    @property
    def wide(self) -> bool:
        return self.params.word_regime is WordRegime.W128

    def update(self, idx: int, delta: int = 1) -> None:
        """Add ``delta`` to coordinate ``idx``."""
        self.update_many(np.array([idx], dtype=np.uint64), np.array([delta], dtype=np.int64))

    def update_many(self, idxs, deltas=None) -> None:
        idxs = np.ascontiguousarray(idxs, dtype=np.uint64)
        if deltas is None:
            deltas = np.ones(idxs.size, dtype=np.int64)
        deltas = np.ascontiguousarray(deltas, dtype=np.int64)
        if deltas.shape != idxs.shape:
            raise ValueError("idxs and deltas must have equal length")
        if idxs.size and int(idxs.max()) >= self.params.vector_length:
            raise IndexError("index outside vector range")
        if deltas.size and int(np.abs(deltas).max()) >= 1 << 32:
            raise ValueError("deltas must be small integers (|delta| < 2**32)")
        kernel = update_kernel128 if self.wide else update_kernel64
        self.mulmod_count += int(kernel(self.a, self.b, self.c, self._mkeys, self._rarr, idxs, deltas))

    def bucket(self, row: int, col: int) -> tuple[int, int, int]:
        """(a, b, c) of one bucket as Python ints."""
        if self.wide:
            a = _signed128(*self.a[col, row])
            b = _signed128(*self.b[col, row])
            c = (int(self.c[col, row, 1]) << 64) | int(self.c[col, row, 0])
            return a, b, c
        return int(self.a[col, row]), int(self.b[col, row]), int(self.c[col, row])

    def query(self) -> SampleResult:
        p = self.params.prime
        n = self.params.vector_length
        all_zero = True
        for col in range(self.params.num_columns):
            for row in range(self.params.num_rows):
                a, b, c = self.bucket(row, col)
                if a == 0 and b == 0 and c == 0:
                    continue
                all_zero = False
                if b == 0 or a % b:
                    continue
                idx = a // b
                if 0 <= idx < n and c == (b * pow(self._r[col], idx, p)) % p:
                    return SampleResult(SampleKind.GOOD, idx, b)
        return SampleResult(SampleKind.ZERO if all_zero else SampleKind.FAIL)

    def is_zero(self) -> bool:
        return not (self.a.any() or self.b.any() or self.c.any())

    def copy(self) -> StandardL0Sketch:
        return StandardL0Sketch(self.params, self.a.copy(), self.b.copy(), self.c.copy(),
                                self.mulmod_count)

    def merge(self, other: StandardL0Sketch) -> StandardL0Sketch:
        if other.params != self.params:
            raise ValueError("cannot merge sketches with different params or seeds")
        p = self.params.prime
        out = StandardL0Sketch(self.params)
        if self.wide:
            for row in range(self.params.num_rows):
                for col in range(self.params.num_columns):
                    a1, b1, c1 = self.bucket(row, col)
                    a2, b2, c2 = other.bucket(row, col)
                    out._set_wide(row, col, a1 + a2, b1 + b2, (c1 + c2) % p)
        else:
            out.a = self.a + other.a
            out.b = self.b + other.b
            out.c = (self.c + other.c) % np.uint64(p)
        return out

    def _set_wide(self, row: int, col: int, a: int, b: int, c: int) -> None:
        m = (1 << 128) - 1
        for arr, v in ((self.a, a & m), (self.b, b & m), (self.c, c)):
            arr[col, row, 0] = v & ((1 << 64) - 1)
            arr[col, row, 1] = v >> 64

    def __eq__(self, other) -> bool:
        if not isinstance(other, StandardL0Sketch):
            return NotImplemented
        return (self.params == other.params and np.array_equal(self.a, other.a)
                and np.array_equal(self.b, other.b) and np.array_equal(self.c, other.c))

    def to_bytes(self) -> bytes:
        p = self.params
        head = HEADER.pack(p.vector_length, p.num_rows, p.num_columns, p.master_seed,
                           p.round, p.word_regime.word_bytes)
        # row-major buckets, each (a, b, c); 128-bit words as (lo, hi)
        words = np.stack([self.a.view(np.uint64), self.b.view(np.uint64), self.c], axis=2)
        return head + np.swapaxes(words, 0, 1).astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, delta: float = 0.01) -> StandardL0Sketch:
        if len(data) < HEADER.size:
            raise ValueError("truncated sketch header")
        n, rows, cols, seed, round_, wb = HEADER.unpack_from(data)
        params = StdParams(n, cols, rows, delta, seed, round_, WordRegime(wb))
        expected = std_serialized_size(params)
        if len(data) != expected:
            raise ValueError(f"expected {expected} bytes, got {len(data)}")
        shape = (rows, cols, 3) + ((2,) if wb == 16 else ())
        words = np.frombuffer(data, dtype="<u8", offset=HEADER.size).reshape(shape)
        words = np.swapaxes(words, 0, 1)
        a, b, c = (np.ascontiguousarray(words[:, :, k], dtype=np.uint64) for k in range(3))
        if wb == 8:
            a, b = a.view(np.int64), b.view(np.int64)
        return cls(params, a.copy(), b.copy(), c.copy())


def std_new(params: StdParams) -> StandardL0Sketch:
    return StandardL0Sketch(params)


def std_update(sketch: StandardL0Sketch, idx: int, delta: int = 1) -> StandardL0Sketch:
    sketch.update(idx, delta)
    return sketch


def std_query(sketch: StandardL0Sketch) -> SampleResult:
    return sketch.query()


def std_merge(a: StandardL0Sketch, b: StandardL0Sketch) -> StandardL0Sketch:
    return a.merge(b)


def std_payload_bytes(params: StdParams) -> int:
    return params.num_rows * params.num_columns * 3 * params.word_regime.word_bytes


def std_serialized_size(params: StdParams) -> int:
    return HEADER.size + std_payload_bytes(params)
