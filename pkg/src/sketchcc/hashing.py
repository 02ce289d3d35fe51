"""Seeded 64-bit hashing shared by both samplers.

Every hash is XXH64 applied to a single little-endian 64-bit word. Hash
functions are keyed by ``(master_seed, purpose, round, column)``; the tuple
is folded into one 64-bit key with the same primitive, so changing any field
gives an unrelated function.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba as nb
import numpy as np
from numba.cpython.unsafe.numbers import trailing_zeros

_P1 = np.uint64(0x9E3779B185EBCA87)
_P2 = np.uint64(0xC2B2AE3D27D4EB4F)
_P3 = np.uint64(0x165667B19E3779F9)
_P4 = np.uint64(0x85EBCA77C2B2AE63)
_P5 = np.uint64(0x27D4EB2F165667C5)
_EIGHT = np.uint64(8)
_MASK32 = np.uint64(0xFFFFFFFF)
_ONE = np.uint64(1)

MASK64 = (1 << 64) - 1


@nb.njit(inline="always")
def _rotl(x, r):
    return (x << np.uint64(r)) | (x >> np.uint64(64 - r))


@nb.njit(cache=True, nogil=True)
def xxh64_word(word, seed):
    """XXH64 of the 8-byte little-endian encoding of ``word``."""
    h = seed + _P5 + _EIGHT
    k = word * _P2
    k = _rotl(k, 31) * _P1
    h ^= k
    h = _rotl(h, 27) * _P1 + _P4
    h ^= h >> np.uint64(33)
    h *= _P2
    h ^= h >> np.uint64(29)
    h *= _P3
    h ^= h >> np.uint64(32)
    return h


@nb.njit(cache=True, nogil=True)
def depth_of(h, num_rows):
    # row r > 0 is included iff the low r bits of h are zero; the sentinel
    # bit caps the count at num_rows
    return 1 + trailing_zeros(h | (_ONE << np.uint64(num_rows - 1)))


@nb.njit(cache=True, nogil=True)
def checksum_of(idx, key):
    return np.uint32(xxh64_word(idx, key) & _MASK32)


class Purpose(enum.IntEnum):
    MEMBERSHIP = 1
    CHECKSUM = 2
    BASELINE_R = 3


@dataclass(frozen=True)
class HashSeed:
    master_seed: int
    purpose: Purpose
    round: int = 0
    column: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if not 0 <= self.round < (1 << 24) or not 0 <= self.column < (1 << 24):
            raise ValueError("round and column must be in [0, 2**24)")

    @property
    def key(self) -> int:
        word = (int(self.purpose) << 56) | (self.round << 24) | self.column
        return int(xxh64_word(np.uint64(word), np.uint64(self.master_seed)))

    def with_purpose(self, purpose: Purpose) -> HashSeed:
        return HashSeed(self.master_seed, purpose, self.round, self.column)


def column_keys(master_seed: int, purpose: Purpose, round_: int, num_columns: int) -> np.ndarray:
    """Keys for every column of one sketch, as a uint64 array."""
    return np.array(
        [HashSeed(master_seed, purpose, round_, c).key for c in range(num_columns)],
        dtype=np.uint64,
    )


def membership_hash(seed: HashSeed, idx: int) -> int:
    if seed.purpose != Purpose.MEMBERSHIP:
        raise ValueError("membership_hash needs a MEMBERSHIP seed")
    return int(xxh64_word(np.uint64(idx), np.uint64(seed.key)))


def checksum_hash(seed: HashSeed, idx: int) -> int:
    if seed.purpose != Purpose.CHECKSUM:
        raise ValueError("checksum_hash needs a CHECKSUM seed")
    return int(checksum_of(np.uint64(idx), np.uint64(seed.key)))


def bucket_depth(h: int, num_rows: int) -> int:
    """Number of rows (starting at row 0) that an index with hash ``h`` lands in."""
    if num_rows < 1:
        raise ValueError("num_rows must be >= 1")
    h &= MASK64
    if h == 0:
        return num_rows
    tz = (h & -h).bit_length() - 1
    return min(num_rows, 1 + tz)
