import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sketchcc.cubesketch import SampleKind, SketchParams, cube_payload_bytes
from sketchcc.standard_l0 import (
    P61,
    P127,
    StandardL0Sketch,
    StdParams,
    WordRegime,
    mulmod127,
    powmod61,
    powmod127,
    std_merge,
    std_new,
    std_payload_bytes,
    std_query,
    std_serialized_size,
    std_update,
)

from conftest import ref_hash, ref_key, trailing_zeros


def reference_buckets(params: StdParams, updates):
    """Dense replay of the routing with Python integers, indexed [row][col]."""
    p = params.prime
    bases = params.residue_bases()
    rows, cols = params.num_rows, params.num_columns
    out = [[[0, 0, 0] for _ in range(cols)] for _ in range(rows)]
    for idx, delta in updates:
        for c in range(cols):
            h = ref_hash(idx, ref_key(params.master_seed, 1, params.round, c))
            for r in range(min(rows, 1 + trailing_zeros(h))):
                bk = out[r][c]
                bk[0] += idx * delta
                bk[1] += delta
                bk[2] = (bk[2] + delta * pow(bases[c], idx, p)) % p
    return out


def all_buckets(s: StandardL0Sketch):
    return [[list(s.bucket(r, c)) for c in range(s.params.num_columns)]
            for r in range(s.params.num_rows)]


def built(params, updates):
    s = std_new(params)
    if updates:
        idxs, deltas = zip(*updates)
        s.update_many(np.array(idxs, dtype=np.uint64), np.array(deltas, dtype=np.int64))
    return s


def test_mulmod_and_powmod_agree_with_python():
    rng = np.random.default_rng(1)
    for _ in range(200):
        x = int(rng.integers(0, 2**63)) << 64 | int(rng.integers(0, 2**63))
        y = int(rng.integers(0, 2**63)) << 64 | int(rng.integers(0, 2**63))
        x, y = x % P127, y % P127
        h, l = mulmod127(np.uint64(x >> 64), np.uint64(x & (2**64 - 1)),
                         np.uint64(y >> 64), np.uint64(y & (2**64 - 1)))
        assert (int(h) << 64 | int(l)) == x * y % P127
        e = int(rng.integers(0, 2**40))
        v, _ = powmod61(np.uint64(x % P61), np.uint64(e))
        assert int(v) == pow(x % P61, e, P61)
        vh, vl, _ = powmod127(np.uint64(x >> 64), np.uint64(x & (2**64 - 1)), np.uint64(e))
        assert (int(vh) << 64 | int(vl)) == pow(x, e, P127)


def test_regime_selection():
    assert StdParams(10**6).word_regime is WordRegime.W64
    assert StdParams(2**32).word_regime is WordRegime.W64
    assert StdParams(2**32 + 1).word_regime is WordRegime.W128
    assert StdParams(10**12).word_regime is WordRegime.W128
    with pytest.raises(ValueError):
        StdParams(P61 + 1, word_regime=WordRegime.W64)


def test_residue_bases_in_field():
    for n in (1000, 10**12):
        params = StdParams(n, master_seed=9)
        bases = params.residue_bases()
        assert len(bases) == 7 and all(1 <= r < params.prime for r in bases)
        assert len(set(bases)) == 7


@pytest.mark.parametrize("n", [1000, 10**12])
def test_single_update_buckets(n):
    params = StdParams(n, master_seed=4)
    s = std_update(std_new(params), 3, 2)
    r3 = [pow(r, 3, params.prime) for r in params.residue_bases()]
    for c in range(params.num_columns):
        routed = [s.bucket(r, c) for r in range(params.num_rows)]
        assert routed[0] == (6, 2, 2 * r3[c] % params.prime)
        for bk in routed:
            assert bk in ((0, 0, 0), (6, 2, 2 * r3[c] % params.prime))
    q = std_query(s)
    assert q.kind is SampleKind.GOOD and (q.index, q.value) == (3, 2)


@pytest.mark.parametrize("n", [1000, 10**12])
def test_cancellation(n):
    s = std_new(StdParams(n))
    s.update(3, 1)
    s.update(3, -1)
    assert s.is_zero()
    assert std_query(s).kind is SampleKind.ZERO


@pytest.mark.parametrize("n", [1000, 10**12])
def test_random_updates_match_reference(n, rng):
    params = StdParams(n, master_seed=77)
    updates = [(int(rng.integers(0, min(n, 1000))), int(rng.choice([-1, 1]))) for _ in range(300)]
    s = built(params, updates)
    assert all_buckets(s) == reference_buckets(params, updates)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 999), st.integers(-5, 5)), max_size=25),
       st.integers(0, 2**32), st.booleans())
def test_linearity(updates, seed, wide):
    regime = WordRegime.W128 if wide else WordRegime.W64
    params = StdParams(1000, master_seed=seed, word_regime=regime)
    half = len(updates) // 2
    merged = std_merge(built(params, updates[:half]), built(params, updates[half:]))
    assert merged == built(params, updates)
    negated = built(params, [(i, -d) for i, d in updates])
    assert std_merge(built(params, updates), negated).is_zero()


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 999), st.sampled_from([-1, 1])), max_size=40),
       st.randoms(use_true_random=False))
def test_order_independence(updates, rnd):
    params = StdParams(1000, master_seed=2)
    shuffled = list(updates)
    rnd.shuffle(shuffled)
    assert built(params, updates) == built(params, shuffled)


def test_merge_rejects_mismatch():
    with pytest.raises(ValueError):
        std_new(StdParams(1000, master_seed=1)).merge(std_new(StdParams(1000, master_seed=2)))


def test_out_of_range_rejected():
    with pytest.raises(IndexError):
        std_new(StdParams(1000)).update(1000)


def test_failure_rate_hundred_nonzeros(rng):
    n = 10_000
    support = rng.choice(n, size=100, replace=False).astype(np.uint64)
    truth = set(support.tolist())
    fails = bad = 0
    for seed in range(10_000):
        s = StandardL0Sketch(StdParams(n, master_seed=seed))
        s.update_many(support)
        q = s.query()
        fails += q.kind is SampleKind.FAIL
        bad += q.kind is SampleKind.GOOD and (q.index not in truth or q.value != 1)
    assert fails / 10_000 <= 0.02
    assert bad == 0


def test_soundness_with_values(rng):
    n = 1 << 16
    violations = 0
    for trial in range(100_000):
        k = int(rng.integers(1, 20))
        idxs = rng.choice(n, size=k, replace=False)
        vals = rng.integers(1, 4, size=k) * rng.choice([-1, 1], size=k)
        s = StandardL0Sketch(StdParams(n, master_seed=trial))
        s.update_many(idxs.astype(np.uint64), vals.astype(np.int64))
        q = s.query()
        if q.kind is SampleKind.GOOD:
            truth = dict(zip(idxs.tolist(), vals.tolist()))
            violations += truth.get(q.index) != q.value
    assert violations == 0


@pytest.mark.parametrize("n", [10**6, 10**12])
def test_exponentiation_cost_is_logarithmic(n):
    s = std_new(StdParams(n))
    idx = n - 1
    s.update(idx)
    assert s.mulmod_count >= s.params.num_columns * idx.bit_length()


def test_sizes():
    p64 = StdParams(10**6)
    assert (p64.num_rows, p64.num_columns) == (20, 7)
    assert std_payload_bytes(p64) == 3360
    assert std_payload_bytes(p64) == 2 * cube_payload_bytes(SketchParams(10**6))
    p128 = StdParams(10**12)
    assert std_payload_bytes(p128) == 4 * cube_payload_bytes(SketchParams(10**12))
    assert std_serialized_size(p64) > std_payload_bytes(p64)


@pytest.mark.parametrize("n", [1000, 10**12])
def test_serialization_roundtrip(n, rng):
    params = StdParams(n, master_seed=31)
    s = built(params, [(int(rng.integers(0, 1000)), int(rng.choice([-2, 1]))) for _ in range(50)])
    data = s.to_bytes()
    assert len(data) == std_serialized_size(params)
    back = StandardL0Sketch.from_bytes(data)
    assert back == s and all_buckets(back) == all_buckets(s)
    with pytest.raises(ValueError):
        StandardL0Sketch.from_bytes(data[:-8])
