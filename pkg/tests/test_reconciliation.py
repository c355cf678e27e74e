import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lockey.reconciliation import (
    BitSequence,
    CascadeConfig,
    CascadeTranscript,
    DifferenceIndexer2D,
    DistanceIndexer1D,
    GrayCoder,
    bmr,
    cascade,
    first_pass_block_length,
)


def test_bit_sequence_round_trip():
    seq = BitSequence([1, 0, 1, 1, 0, 0, 1])
    again = BitSequence.from_bytes(seq.to_bytes(), len(seq))
    assert again == seq
    with pytest.raises(ValueError):
        BitSequence([0, 2])
    with pytest.raises(ValueError):
        BitSequence.from_bytes(b"\x00", 9)


def test_bmr_counts_mismatches():
    a = BitSequence([0, 1, 1, 0])
    b = BitSequence([0, 1, 0, 1])
    assert bmr(a, b) == 0.5
    assert bmr(a, a) == 0.0


def test_gray_tables():
    assert [GrayCoder(2).decode(GrayCoder(2).encode(i)) for i in range(4)] == [0, 1, 2, 3]
    codes2 = [int("".join(map(str, GrayCoder(2).encode(i).bits)), 2) for i in range(4)]
    assert codes2 == [0b00, 0b01, 0b11, 0b10]
    codes3 = [int("".join(map(str, GrayCoder(3).encode(i).bits)), 2) for i in range(8)]
    assert codes3 == [0, 1, 3, 2, 6, 7, 5, 4]


@given(st.integers(1, 12), st.data())
def test_gray_round_trip_and_adjacency(bits, data):
    coder = GrayCoder(bits)
    i = data.draw(st.integers(0, (1 << bits) - 2))
    assert coder.decode(coder.encode(i)) == i
    # neighbors differ in exactly one bit
    a, b = coder.encode(i), coder.encode(i + 1)
    assert int(np.sum(a.bits != b.bits)) == 1


def test_gray_range_check():
    with pytest.raises(ValueError):
        GrayCoder(2).encode_array(np.array([4]))
    with pytest.raises(ValueError):
        GrayCoder(0)


def test_snake_indexer_adjacency_and_clamp():
    ix = DifferenceIndexer2D(span=2, bits=5)
    # all 25 differences get distinct indices covering 0..24
    diffs = np.array([[dx, dy] for dy in range(-2, 3) for dx in range(-2, 3)])
    idx = ix.index(diffs)
    assert sorted(idx.tolist()) == list(range(25))
    # consecutive enumeration positions are lattice neighbors
    order = np.empty(25, dtype=int)
    order[idx] = np.arange(25)
    walk = diffs[order]
    steps = np.abs(np.diff(walk, axis=0)).sum(axis=1)
    assert np.all(steps == 1)
    # out-of-range differences clamp instead of wrapping
    assert ix.index(np.array([9, 9])) == ix.index(np.array([2, 2]))
    narrow = DifferenceIndexer2D(span=2, bits=3)
    assert narrow.index(np.array([2, 2])) == 7


def test_distance_indexer_oracle():
    ix = DistanceIndexer1D(step=3.0, bits=2)
    # nearest multiple of 3 to 4.4 is 3 -> index 1
    assert ix.index(np.array([4.4]))[0] == 1
    assert ix.index(np.array([100.0]))[0] == 3
    offset = DistanceIndexer1D(step=3.0, bits=2, offset=1)
    assert offset.index(np.array([4.4]))[0] == 0


def test_first_pass_block_length_oracles():
    assert first_pass_block_length(0.5, 2000) == 2
    assert first_pass_block_length(0.121, 2000) == 10
    assert first_pass_block_length(0.3740, 2000) == 3
    assert first_pass_block_length(1e-9, 2000) == 2000
    with pytest.raises(ValueError):
        first_pass_block_length(0.0, 100)
    with pytest.raises(ValueError):
        first_pass_block_length(0.6, 100)


def test_binary_leakage_oracle(rng):
    # a single error in 16 bits, one pass, no pilot: 1 top-level parity
    # exchange plus log2(16) bisection levels = 5 bits per direction
    v1 = BitSequence(np.zeros(16, dtype=np.uint8))
    flipped = np.zeros(16, dtype=np.uint8)
    flipped[9] = 1
    v2 = BitSequence(flipped)
    cfg = CascadeConfig(passes=1, pilot_fraction=0.0, first_pass_length=16)
    u1, u2, tr = cascade(v1, v2, cfg, rng)
    assert u1 == u2
    assert tr.t_per_direction == 5


def test_cascade_pilot_accounting(rng):
    n = 400
    bits = rng.integers(0, 2, n, dtype=np.uint8)
    noise = rng.random(n) < 0.1
    v1 = BitSequence(bits)
    v2 = BitSequence(bits ^ noise.astype(np.uint8))
    u1, u2, tr = cascade(v1, v2, CascadeConfig(), rng)
    assert tr.pilot_len == 20
    assert len(u1) == len(u2) == n - tr.pilot_len
    assert np.array_equal(tr.pilot_master, bits[:20])
    # per-direction leakage: pilot plus half the symmetric parity stream
    assert tr.t_per_direction == tr.pilot_len + len(tr.stream) // 2
    assert u1 == BitSequence(bits[20:])


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.25))
def test_cascade_corrects_and_replays(seed, p):
    rng = np.random.default_rng(seed)
    n = 300
    bits = rng.integers(0, 2, n, dtype=np.uint8)
    noise = (rng.random(n) < p).astype(np.uint8)
    v1, v2 = BitSequence(bits), BitSequence(bits ^ noise)
    u1, u2, tr = cascade(v1, v2, CascadeConfig(), np.random.default_rng(seed))
    # every BINARY flip lands on a true mismatch, so errors never increase
    before = bmr(BitSequence(bits[tr.pilot_len:]),
                 BitSequence((bits ^ noise)[tr.pilot_len:]))
    assert bmr(u1, u2) <= before
    # the master's string is never altered
    assert u1 == BitSequence(bits[tr.pilot_len:])
    # the public transcript alone reproduces the responder's correction
    replayed = tr.replay(v2)
    assert replayed == u2
    again = CascadeTranscript.deserialize(tr.serialize())
    assert again.replay(v2) == u2


def test_cascade_requires_sizing_information(rng):
    v = BitSequence(np.zeros(50, dtype=np.uint8))
    with pytest.raises(ValueError):
        cascade(v, v, CascadeConfig(pilot_fraction=0.0), rng)
    # hint works without a pilot
    u1, u2, tr = cascade(v, v, CascadeConfig(pilot_fraction=0.0, bmr_hint=0.1), rng)
    assert tr.pilot_len == 0 and u1 == v


def test_cascade_rejects_mismatched_lengths(rng):
    with pytest.raises(ValueError):
        cascade(BitSequence([0, 1]), BitSequence([0, 1, 1]), CascadeConfig(), rng)
