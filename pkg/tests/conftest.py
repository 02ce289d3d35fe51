import struct

import pytest
import xxhash

MASK64 = (1 << 64) - 1


def ref_key(master_seed: int, purpose: int, round_: int, column: int) -> int:
    """Seed derivation recomputed with the reference xxhash package."""
    word = (purpose << 56) | (round_ << 24) | column
    return xxhash.xxh64_intdigest(struct.pack("<Q", word), seed=master_seed)


def ref_hash(idx: int, key: int) -> int:
    return xxhash.xxh64_intdigest(struct.pack("<Q", idx), seed=key)


def trailing_zeros(h: int) -> int:
    if h == 0:
        return 64
    n = 0
    while not (h >> n) & 1:
        n += 1
    return n


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request, capsys):
    """Call ``criterion(number, ok, detail)`` to emit one PASS/FAIL line."""

    def emit(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash.setdefault(_ACCEPTANCE, []).append(line)
        with capsys.disabled():
            print(f"\n{line}")

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
