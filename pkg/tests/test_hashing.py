import numpy as np
import pytest
from hypothesis import given, strategies as st

from sketchcc.hashing import (
    HashSeed,
    Purpose,
    bucket_depth,
    checksum_hash,
    depth_of,
    membership_hash,
    xxh64_word,
)

from conftest import ref_hash, ref_key, trailing_zeros

u64 = st.integers(0, (1 << 64) - 1)


@given(u64, u64)
def test_xxh64_word_matches_reference_package(word, seed):
    assert int(xxh64_word(np.uint64(word), np.uint64(seed))) == ref_hash(word, seed)


@given(st.integers(0, (1 << 40) - 1), st.sampled_from(list(Purpose)),
       st.integers(0, 100), st.integers(0, 20))
def test_seed_key_derivation(master, purpose, round_, column):
    assert HashSeed(master, purpose, round_, column).key == ref_key(master, purpose, round_, column)


def test_membership_hash_is_deterministic():
    s = HashSeed(7, Purpose.MEMBERSHIP, 0, 3)
    assert membership_hash(s, 5) == membership_hash(s, 5)


def test_distinct_seeds_disagree(rng):
    idxs = rng.integers(0, 1 << 62, size=10_000)
    masters = rng.integers(0, 1 << 62, size=(10_000, 2))
    differ = 0
    for i, (a, b) in zip(idxs.tolist(), masters.tolist()):
        h1 = membership_hash(HashSeed(a, Purpose.MEMBERSHIP), i)
        h2 = membership_hash(HashSeed(b, Purpose.MEMBERSHIP), i)
        differ += h1 != h2
    assert differ >= 9_900


@pytest.mark.parametrize("field", ["master_seed", "purpose", "round", "column"])
def test_every_seed_field_separates(field, rng):
    base = dict(master_seed=11, purpose=Purpose.MEMBERSHIP, round=2, column=3)
    other = dict(base)
    other[field] = {"master_seed": 12, "purpose": Purpose.CHECKSUM, "round": 3, "column": 4}[field]
    k1, k2 = HashSeed(**base).key, HashSeed(**other).key
    idxs = rng.integers(0, 1 << 62, size=2000, dtype=np.uint64)
    same = sum(int(xxh64_word(i, np.uint64(k1))) == int(xxh64_word(i, np.uint64(k2))) for i in idxs)
    assert same <= 20


def test_depth_of_hash_for_index_zero_matches_bit_inspection():
    s = HashSeed(99, Purpose.MEMBERSHIP)
    h = membership_hash(s, 0)
    assert bucket_depth(h, 40) == min(40, 1 + trailing_zeros(h))


@pytest.mark.parametrize("h, rows, expected", [
    (0b1011, 40, 1),
    (0b1000, 40, 4),
    (0, 40, 40),
    (1 << 63, 40, 40),
    (1 << 63, 64, 64),
    (6, 1, 1),
])
def test_bucket_depth_examples(h, rows, expected):
    assert bucket_depth(h, rows) == expected
    assert depth_of(np.uint64(h), rows) == expected


@given(u64, st.integers(1, 64))
def test_fast_depth_matches_bit_loop(h, rows):
    assert depth_of(np.uint64(h), rows) == min(rows, 1 + trailing_zeros(h))


def test_bucket_depth_rejects_zero_rows():
    with pytest.raises(ValueError):
        bucket_depth(5, 0)


def test_checksum_hash_properties(rng):
    s = HashSeed(5, Purpose.CHECKSUM, 1, 2)
    assert checksum_hash(s, 77) == checksum_hash(s, 77)
    assert checksum_hash(s, 77) ^ checksum_hash(s, 77) == 0
    assert 0 <= checksum_hash(s, 77) < 1 << 32
    idxs = rng.choice(1 << 40, size=20_000, replace=False)
    a, b = idxs[:10_000].tolist(), idxs[10_000:].tolist()
    assert sum(checksum_hash(s, x) == checksum_hash(s, y) for x, y in zip(a, b)) == 0


def test_purpose_is_checked():
    with pytest.raises(ValueError):
        membership_hash(HashSeed(1, Purpose.CHECKSUM), 3)
    with pytest.raises(ValueError):
        checksum_hash(HashSeed(1, Purpose.MEMBERSHIP), 3)
    with pytest.raises(ValueError):
        HashSeed(-1, Purpose.MEMBERSHIP)
