import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lockey.amplification import (
    CompressedKey,
    HashField,
    binary_entropy,
    compress,
    decompress,
    privacy_amplify,
    select_rate,
    smallest_irreducible,
)
from lockey.reconciliation import BitSequence

# (degree, polynomial as integer including the x^degree bit)
_POLY_TABLE = {
    1: 2, 2: 7, 3: 11, 4: 19, 5: 37, 6: 67,
    7: 131, 8: 283, 9: 515, 10: 1033, 11: 2053, 12: 4105,
}


def test_binary_entropy_oracles():
    assert binary_entropy(0.5) == 1.0
    assert abs(binary_entropy(0.374) - 0.953694) < 1e-6
    assert binary_entropy(0.2) == binary_entropy(0.8)
    with pytest.raises(ValueError):
        binary_entropy(0.0)
    with pytest.raises(ValueError):
        binary_entropy(1.0)


def test_select_rate_oracles():
    assert abs(select_rate(0.374, 1504, 1000, 2, 0.724) - 0.292053) < 1e-6
    assert select_rate(0.5, 0, 100, 1, 1.0) == 1.0
    # leakage exceeding the budget clamps at zero
    assert select_rate(0.1, 10_000, 100, 1, 1.0) == 0.0


def test_smallest_irreducible_table():
    for degree, poly in _POLY_TABLE.items():
        assert smallest_irreducible(degree) == poly
    with pytest.raises(ValueError):
        smallest_irreducible(0)


def test_hash_field_oracle_degree3():
    f = HashField(3)
    assert f.poly == 0b1011 and f.tail == 0b011
    # x * (x + 1) = x^2 + x, no reduction needed
    assert f.mul(0b010, 0b011) == 0b110
    # x^2 * x = x^3 = x + 1 under x^3 + x + 1
    assert f.mul(0b100, 0b010) == 0b011


@given(st.integers(1, 10), st.data())
def test_hash_field_ring_axioms(degree, data):
    f = HashField(degree)
    mask = (1 << degree) - 1
    ints = st.integers(0, mask)
    a, b, c = (data.draw(ints) for _ in range(3))
    assert f.mul(a, b) == f.mul(b, a)
    assert f.mul(a, f.mul(b, c)) == f.mul(f.mul(a, b), c)
    assert f.mul(a, 1) == a
    # distributivity over xor
    assert f.mul(a, b ^ c) == f.mul(a, b) ^ f.mul(a, c)


@given(st.integers(2, 12), st.data())
def test_mul_array_matches_scalar(degree, data):
    f = HashField(degree)
    mask = (1 << degree) - 1
    b = data.draw(st.integers(1, mask))
    a = np.array([data.draw(st.integers(0, mask)) for _ in range(8)], dtype=np.uint64)
    got = f.mul_array(a, b)
    want = [f.mul(int(x), b) for x in a]
    assert got.tolist() == want


def _bits(arr):
    return BitSequence(np.asarray(arr, dtype=np.uint8))


def test_compress_round_trips():
    rng = np.random.default_rng(3)
    cases = [
        rng.integers(0, 2, 500, dtype=np.uint8),
        np.zeros(300, dtype=np.uint8),
        np.ones(300, dtype=np.uint8),
        np.tile([0, 1], 200).astype(np.uint8),
        np.array([1], dtype=np.uint8),
    ]
    for bits in cases:
        ck = compress(_bits(bits))
        assert decompress(ck) == _bits(bits)
        assert ck.alpha * len(bits) == pytest.approx(len(ck.bits))
    # redundant input compresses well below unity
    assert compress(_bits(np.zeros(300, dtype=np.uint8))).alpha < 0.2


@given(st.lists(st.integers(0, 1), min_size=1, max_size=400))
def test_compress_round_trip_property(bits):
    seq = _bits(bits)
    assert decompress(compress(seq)) == seq


def test_compress_deterministic():
    rng = np.random.default_rng(5)
    bits = _bits(rng.integers(0, 2, 256, dtype=np.uint8))
    assert compress(bits).bits == compress(bits).bits


def test_privacy_amplify_seed_forms_agree():
    x = _bits([1, 0, 1, 1, 0, 1, 0, 0])
    seed_int = 0b10110100
    seed_bits = _bits([1, 0, 1, 1, 0, 1, 0, 0])
    a = privacy_amplify(x, seed_int, 5).bits
    b = privacy_amplify(x, seed_bits, 5).bits
    assert a == b
    assert len(a) == 5


def test_privacy_amplify_is_linear_in_input():
    rng = np.random.default_rng(9)
    deg = 16
    a = int(rng.integers(1, 1 << deg))
    x = rng.integers(0, 2, deg, dtype=np.uint8)
    y = rng.integers(0, 2, deg, dtype=np.uint8)
    hx = privacy_amplify(_bits(x), a, 10).bits.bits
    hy = privacy_amplify(_bits(y), a, 10).bits.bits
    hxy = privacy_amplify(_bits(x ^ y), a, 10).bits.bits
    assert np.array_equal(hx ^ hy, hxy)


def test_privacy_amplify_accepts_compressed_key():
    ck = compress(_bits(np.tile([1, 1, 0], 60).astype(np.uint8)))
    out = privacy_amplify(ck, 3, min(8, len(ck.bits)))
    assert len(out.bits) == min(8, len(ck.bits))


def test_universality_small_field():
    # quick version of the collision gate at degree 6 (full sweep in acceptance)
    deg, out_len = 6, 3
    f = HashField(deg)
    size = 1 << deg
    mask_out = (1 << out_len) - 1
    seeds = np.arange(size, dtype=np.uint64)
    collisions = total = 0
    for d in range(1, size):
        prods = f.mul_array(seeds, d)
        hits = int(np.count_nonzero((prods & mask_out) == 0))
        # each nonzero difference d corresponds to size/2 unordered pairs (x, x^d)
        collisions += hits * (size // 2)
        total += size * (size // 2)
    assert collisions / total <= 2.0 ** -out_len + 2.0 ** -deg
