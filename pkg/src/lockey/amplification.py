"""Compression and privacy amplification of the reconciled bits.

Reconciled strings are first compressed with an adaptive binary
arithmetic coder (order-3 contexts, Krichevsky-Trofimov estimator) to
strip the redundancy of slowly moving location symbols; the achieved
ratio ``alpha`` discounts the selectable key rate.  The compressed
string is then hashed through multiplication by a public random element
of GF(2^D), a 2-universal family, keeping only as many output bits as
the rate selection allows for the eavesdropper's knowledge and the
reconciliation leakage.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np

from .reconciliation import BitSequence, bmr

__all__ = [
    "CompressedKey",
    "FinalKey",
    "compress",
    "decompress",
    "HashField",
    "privacy_amplify",
    "binary_entropy",
    "select_rate",
    "estimate_bmr_e",
]

_TOP = 1 << 32
_HALF = _TOP >> 1
_QUARTER = _TOP >> 2
_MASK = _TOP - 1
_ORDER = 3
_LEN_BITS = 32


@dataclass(frozen=True)
class CompressedKey:
    """Compressed bit string with its accounting.

    ``alpha`` is the output-to-input length ratio including the one-bit
    container flag and, for coded payloads, the length prefix, so the
    rate discount never flatters the coder.
    """

    bits: BitSequence
    alpha: float
    coded: bool
    original_len: int


@dataclass(frozen=True)
class FinalKey:
    """Amplified secret key; ``rate`` is attached by the pipeline."""

    bits: BitSequence
    rate: Optional[float] = None


class _KtModel:
    """Per-context Krichevsky-Trofimov bit predictor."""

    def __init__(self, order: int):
        self.order = order
        self.c0 = [0] * (1 << order)
        self.c1 = [0] * (1 << order)
        self.ctx = 0
        self.mask = (1 << order) - 1

    def split(self, low: int, high: int) -> int:
        c0, c1 = self.c0[self.ctx], self.c1[self.ctx]
        span = high - low + 1
        mid = low + (span * (2 * c0 + 1)) // (2 * (c0 + c1) + 2) - 1
        return min(max(mid, low), high - 1)

    def consume(self, bit: int) -> None:
        if bit:
            self.c1[self.ctx] += 1
        else:
            self.c0[self.ctx] += 1
        self.ctx = ((self.ctx << 1) | bit) & self.mask


def _ac_encode(bits: np.ndarray, order: int) -> list:
    model = _KtModel(order)
    low, high, pending = 0, _MASK, 0
    out: list = []

    def emit(b: int) -> None:
        nonlocal pending
        out.append(b)
        out.extend([1 - b] * pending)
        pending = 0

    for bit in bits:
        bit = int(bit)
        mid = model.split(low, high)
        if bit == 0:
            high = mid
        else:
            low = mid + 1
        model.consume(bit)
        while True:
            if high < _HALF:
                emit(0)
            elif low >= _HALF:
                emit(1)
                low -= _HALF
                high -= _HALF
            elif low >= _QUARTER and high < 3 * _QUARTER:
                pending += 1
                low -= _QUARTER
                high -= _QUARTER
            else:
                break
            low <<= 1
            high = (high << 1) | 1
    pending += 1
    emit(0 if low < _QUARTER else 1)
    return out


def _ac_decode(code: np.ndarray, n: int, order: int) -> np.ndarray:
    model = _KtModel(order)
    low, high = 0, _MASK
    pos = 0

    def read() -> int:
        nonlocal pos
        b = int(code[pos]) if pos < len(code) else 0
        pos += 1
        return b

    value = 0
    for _ in range(32):
        value = (value << 1) | read()
    out = np.empty(n, dtype=np.uint8)
    for i in range(n):
        mid = model.split(low, high)
        if value <= mid:
            bit = 0
            high = mid
        else:
            bit = 1
            low = mid + 1
        out[i] = bit
        model.consume(bit)
        while True:
            if high < _HALF:
                pass
            elif low >= _HALF:
                low -= _HALF
                high -= _HALF
                value -= _HALF
            elif low >= _QUARTER and high < 3 * _QUARTER:
                low -= _QUARTER
                high -= _QUARTER
                value -= _QUARTER
            else:
                break
            low <<= 1
            high = (high << 1) | 1
            value = (value << 1) | read()
    return out


def compress(u: BitSequence, order: int = _ORDER) -> CompressedKey:
    """Compress; falls back to a verbatim container when coding loses.

    Container layout (bits): ``[flag]`` then either the raw input
    (``flag=0``) or a 32-bit big-endian original length followed by the
    arithmetic code (``flag=1``).
    """
    n = len(u)
    if n == 0:
        raise ValueError("cannot compress an empty sequence")
    if n >= 1 << _LEN_BITS:
        raise ValueError("input too long for the container length field")
    code = _ac_encode(u.bits, order)
    coded = len(code) + _LEN_BITS < n
    if coded:
        header = [(n >> (_LEN_BITS - 1 - i)) & 1 for i in range(_LEN_BITS)]
        payload = np.asarray([1] + header + code, dtype=np.uint8)
    else:
        payload = np.concatenate([[0], u.bits]).astype(np.uint8)
    return CompressedKey(BitSequence(payload), len(payload) / n, coded, n)


def decompress(ck: Union[CompressedKey, BitSequence], order: int = _ORDER) -> BitSequence:
    bits = ck.bits if isinstance(ck, CompressedKey) else ck
    if len(bits) < 1:
        raise ValueError("empty container")
    if bits[0] == 0:
        return bits[1:]
    if len(bits) < 1 + _LEN_BITS:
        raise ValueError("truncated container header")
    n = 0
    for i in range(_LEN_BITS):
        n = (n << 1) | bits[1 + i]
    return BitSequence(_ac_decode(bits.bits[1 + _LEN_BITS :], n, order))


# ---------------------------------------------------------------------------
# GF(2^D) hashing


def _poly_deg(a: int) -> int:
    return a.bit_length() - 1


def _poly_mod(a: int, b: int) -> int:
    db = _poly_deg(b)
    while a.bit_length() - 1 >= db and a:
        a ^= b << (a.bit_length() - 1 - db)
    return a


def _poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, _poly_mod(a, b)
    return a


def _poly_mulmod_small(a: int, b: int, p: int) -> int:
    acc = 0
    while b:
        if b & 1:
            acc ^= a
        b >>= 1
        a <<= 1
    return _poly_mod(acc, p)


def _poly_x_pow_mod(exp: int, p: int) -> int:
    # x**exp mod p by square and multiply on the exponent's bits
    result = _poly_mod(1, p) if p == 1 else 1
    base = _poly_mod(2, p)
    while exp:
        if exp & 1:
            result = _poly_mulmod_small(result, base, p)
        base = _poly_mulmod_small(base, base, p)
        exp >>= 1
    return result


@lru_cache(maxsize=1)
def _small_irreducibles(max_deg: int = 10) -> Tuple[int, ...]:
    irr = []
    for f in range(2, 1 << (max_deg + 1)):
        d = _poly_deg(f)
        if any(_poly_deg(p) <= d // 2 and _poly_mod(f, p) == 0 for p in irr):
            continue
        irr.append(f)
    return tuple(irr)


def _build_spread() -> list:
    table = []
    for byte in range(256):
        v = 0
        for j in range(8):
            if byte & (1 << j):
                v |= 1 << (2 * j)
        table.append(v.to_bytes(2, "little"))
    return table


_SPREAD = _build_spread()


def _poly_square(a: int) -> int:
    nb = max(1, (a.bit_length() + 7) // 8)
    raw = a.to_bytes(nb, "little")
    return int.from_bytes(b"".join(_SPREAD[b] for b in raw), "little")


class HashField:
    """GF(2^degree) under the lexicographically smallest irreducible
    modulus, which always has the sparse form ``x^degree + tail`` with a
    short tail; reduction therefore folds the high part down with a few
    shifted xors."""

    def __init__(self, degree: int):
        if degree < 1:
            raise ValueError("field degree must be positive")
        self.degree = degree
        self.poly = smallest_irreducible(degree)
        self.tail = self.poly ^ (1 << degree)
        self._mask = (1 << degree) - 1

    def reduce(self, v: int) -> int:
        d = self.degree
        tail = self.tail
        if tail == 0:
            return v & self._mask
        while v >> d:
            hi = v >> d
            v &= self._mask
            t = tail
            while t:
                low = t & -t
                v ^= hi * low  # single-bit multiply is a shift
                t ^= low
        return v

    def mul(self, a: int, b: int) -> int:
        if not (0 <= a <= self._mask and 0 <= b <= self._mask):
            raise ValueError("operands outside the field")
        acc = 0
        while b:
            if b & 1:
                acc ^= a
            a <<= 1
            b >>= 1
        return self.reduce(acc)

    def square_mod(self, a: int) -> int:
        return self.reduce(_poly_square(a))

    def mul_array(self, a: np.ndarray, b: int) -> np.ndarray:
        """Multiply every element of ``a`` by ``b``, vectorized; only for
        degrees small enough that products fit in 64-bit words."""
        if self.degree > 26:
            raise ValueError("vectorized multiply supports degrees up to 26")
        a = np.asarray(a, dtype=np.uint64)
        acc = np.zeros_like(a)
        bb = int(b)
        shift = 0
        while bb:
            if bb & 1:
                acc ^= a << np.uint64(shift)
            bb >>= 1
            shift += 1
        d = self.degree
        for i in range(2 * d - 1, d - 1, -1):
            hit = (acc >> np.uint64(i)) & np.uint64(1)
            acc ^= hit * np.uint64(self.poly << (i - d))
        return acc


def _is_irreducible(f: int) -> bool:
    d = _poly_deg(f)
    if d == 1:
        return True
    if f & 1 == 0:
        return False
    if bin(f).count("1") % 2 == 0:  # divisible by x + 1
        return False
    for p in _small_irreducibles():
        dp = _poly_deg(p)
        if dp > min(10, d // 2):
            break
        if (_poly_x_pow_mod(d, p) ^ _poly_mod(f ^ (1 << d), p)) == 0:
            # f = x^d + tail vanishes mod p
            return False
    # Rabin: x^(2^d) == x mod f, and x^(2^(d/q)) - x coprime with f for
    # every prime divisor q of d
    field = object.__new__(HashField)
    field.degree = d
    field.poly = f
    field.tail = f ^ (1 << d)
    field._mask = (1 << d) - 1

    def x_pow_2k(k: int) -> int:
        v = 2  # the polynomial x
        for _ in range(k):
            v = field.square_mod(v)
        return v

    primes = []
    dd = d
    q = 2
    while q * q <= dd:
        if dd % q == 0:
            primes.append(q)
            while dd % q == 0:
                dd //= q
        q += 1
    if dd > 1:
        primes.append(dd)
    for q in primes:
        h = x_pow_2k(d // q) ^ 2
        if _poly_gcd(f, h) != 1:
            return False
    return x_pow_2k(d) == 2


@lru_cache(maxsize=None)
def smallest_irreducible(degree: int) -> int:
    """Lexicographically smallest (as an integer) irreducible polynomial
    of the given degree over GF(2)."""
    if degree < 1:
        raise ValueError("degree must be positive")
    top = 1 << degree
    for tail in range(top):
        if _is_irreducible(top | tail):
            return top | tail
    raise RuntimeError("unreachable: irreducible polynomials exist for every degree")


def _bits_to_int(bits: BitSequence) -> int:
    v = 0
    for b in bits.bits:
        v = (v << 1) | int(b)
    return v


def privacy_amplify(q: Union[CompressedKey, BitSequence], a: Union[int, BitSequence], out_len: int) -> FinalKey:
    """Hash ``q`` by field multiplication with the public element ``a``.

    The input's length fixes the field degree; the output keeps the
    ``out_len`` least significant bits of the product (emitted most
    significant first).  Multiplication by a uniformly drawn ``a`` is a
    2-universal family, so any fixed number of surplus bits known to the
    eavesdropper is washed out up to the leftover-hash penalty.
    """
    bits = q.bits if isinstance(q, CompressedKey) else q
    d = len(bits)
    if d < 1:
        raise ValueError("cannot amplify an empty string")
    if not 1 <= out_len <= d:
        raise ValueError("output length must lie in [1, input length]")
    field = HashField(d)
    aa = _bits_to_int(a) if isinstance(a, BitSequence) else int(a)
    if not 0 <= aa < (1 << d):
        raise ValueError("hash element outside the field")
    prod = field.mul(_bits_to_int(bits), aa)
    out = [(prod >> (out_len - 1 - i)) & 1 for i in range(out_len)]
    return FinalKey(BitSequence(np.asarray(out, dtype=np.uint8)))


def binary_entropy(p: float) -> float:
    """Entropy in bits of a Bernoulli(p) variable, ``p`` in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError("entropy argument must lie strictly inside (0, 1)")
    return float(-p * np.log2(p) - (1.0 - p) * np.log2(1.0 - p))


def select_rate(bmr_e: float, t: int, n: int, m: int, alpha: float) -> float:
    """Secret-key rate (bits per slot) supported by the run's accounting.

    ``bmr_e`` is the eavesdropper's bit mismatch rate against the
    master's string, ``t`` the public parity bits revealed per direction,
    ``n`` the slot count, ``m`` the bits per slot and ``alpha`` the
    achieved compression ratio.  Negative budgets clamp to zero (the run
    then refuses to emit a key rather than emit a known one).
    """
    if not 0.0 < bmr_e <= 0.5:
        raise ValueError("eavesdropper mismatch rate must lie in (0, 0.5]")
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    if t < 0:
        raise ValueError("leakage count cannot be negative")
    if not alpha > 0:
        raise ValueError("compression ratio must be positive")
    return max(0.0, alpha * (m * binary_entropy(bmr_e) - t / n))


def estimate_bmr_e(scenario, trials: int, rng: np.random.Generator) -> Tuple[float, float]:
    """Monte-Carlo estimate (mean, standard error) of the eavesdropper's
    bit mismatch rate under a scenario, from independent end-to-end
    trials of the bit-generation front end."""
    from . import pipeline  # runtime import; pipeline depends on this module

    if trials < 2:
        raise ValueError("at least two trials needed for a standard error")
    vals = np.empty(trials)
    for t in range(trials):
        run = pipeline.generate_bit_sequences(scenario, rng)
        vals[t] = bmr(run.v1, run.ve)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(trials))
