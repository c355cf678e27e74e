"""Statistical randomness checks for generated keys.

Six tests from the NIST SP 800-22 battery: frequency (monobit), block
frequency, cumulative sums (forward), binary matrix rank, discrete
Fourier transform (spectral), and linear complexity.  Each test reports
a p-value and passes when it exceeds the significance level (default
0.01).  Inputs shorter than a test's minimum length mark that test as
not applicable rather than failed, since short keys are the norm for
single runs; the battery is calibrated for the lengths noted on each
test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

from .reconciliation import BitSequence

__all__ = [
    "TestResult",
    "TestReport",
    "frequency_test",
    "block_frequency_test",
    "cumulative_sums_test",
    "rank_test",
    "spectral_test",
    "linear_complexity_test",
    "run_tests",
    "ALL_TESTS",
]


@dataclass(frozen=True)
class TestResult:
    name: str
    applicable: bool
    p_value: Optional[float] = None
    passed: Optional[bool] = None
    n_used: int = 0
    detail: str = ""


@dataclass(frozen=True)
class TestReport:
    results: List[TestResult]
    n: int

    @property
    def all_passed(self) -> bool:
        """True when every applicable test passed (vacuously true when
        none are applicable)."""
        return all(r.passed for r in self.results if r.applicable)

    @property
    def any_applicable(self) -> bool:
        return any(r.applicable for r in self.results)


def _as_bits(key: Union[BitSequence, np.ndarray]) -> np.ndarray:
    if isinstance(key, BitSequence):
        return key.bits
    arr = np.asarray(key, dtype=np.uint8)
    if arr.size and arr.max() > 1:
        raise ValueError("bit values must be 0 or 1")
    return arr


def _result(name: str, n: int, p: float, alpha: float, detail: str = "") -> TestResult:
    p = float(min(max(p, 0.0), 1.0))
    return TestResult(name, True, p, p > alpha, n, detail)


def _skip(name: str, n: int, need: int) -> TestResult:
    return TestResult(name, False, None, None, n, "needs %d bits, got %d" % (need, n))


def frequency_test(key, alpha: float = 0.01) -> TestResult:
    """Monobit balance of ones and zeros."""
    x = _as_bits(key)
    n = x.size
    if n < 100:
        return _skip("frequency", n, 100)
    s = abs(int(2 * int(x.sum()) - n)) / np.sqrt(n)
    return _result("frequency", n, erfc(s / np.sqrt(2.0)), alpha)


def block_frequency_test(key, alpha: float = 0.01, block: int = 128) -> TestResult:
    """Proportion of ones within fixed-size blocks."""
    x = _as_bits(key)
    n = x.size
    if n < 2 * block:
        return _skip("block-frequency", n, 2 * block)
    nb = n // block
    pi = x[: nb * block].reshape(nb, block).mean(axis=1)
    chi2 = 4.0 * block * float(np.sum((pi - 0.5) ** 2))
    return _result("block-frequency", n, gammaincc(nb / 2.0, chi2 / 2.0), alpha)


def cumulative_sums_test(key, alpha: float = 0.01) -> TestResult:
    """Maximal excursion of the forward +-1 random walk."""
    x = _as_bits(key)
    n = x.size
    if n < 100:
        return _skip("cumulative-sums", n, 100)
    s = np.cumsum(2.0 * x - 1.0)
    z = float(np.abs(s).max())
    if z == 0.0:
        return _result("cumulative-sums", n, 0.0, alpha)
    sq = np.sqrt(n)
    k1 = np.arange(int(np.floor((-n / z + 1) / 4)), int(np.floor((n / z - 1) / 4)) + 1)
    k2 = np.arange(int(np.floor((-n / z - 3) / 4)), int(np.floor((n / z - 1) / 4)) + 1)
    p = (
        1.0
        - np.sum(norm.cdf((4 * k1 + 1) * z / sq) - norm.cdf((4 * k1 - 1) * z / sq))
        + np.sum(norm.cdf((4 * k2 + 3) * z / sq) - norm.cdf((4 * k2 + 1) * z / sq))
    )
    return _result("cumulative-sums", n, p, alpha)


_RANK_M = 32
_RANK_PROBS = (0.2887880951, 0.5775761902, 0.1336357147)
# full rank, rank deficient by one, everything else; constants are the
# limiting probabilities for 32x32 binary matrices


def _rank32(rows: List[int]) -> int:
    rank = 0
    for bit in range(_RANK_M - 1, -1, -1):
        pivot = -1
        for i in range(rank, _RANK_M):
            if (rows[i] >> bit) & 1:
                pivot = i
                break
        if pivot < 0:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        pr = rows[rank]
        for i in range(rank + 1, _RANK_M):
            if (rows[i] >> bit) & 1:
                rows[i] ^= pr
        rank += 1
    return rank


def rank_test(key, alpha: float = 0.01) -> TestResult:
    """Rank distribution of disjoint 32x32 binary matrices."""
    x = _as_bits(key)
    n = x.size
    block = _RANK_M * _RANK_M
    need = 38 * block
    if n < need:
        return _skip("rank", n, need)
    nb = n // block
    words = np.packbits(x[: nb * block].reshape(nb * _RANK_M, _RANK_M), axis=1)
    words = (
        words[:, 0].astype(np.uint32) << 24
        | words[:, 1].astype(np.uint32) << 16
        | words[:, 2].astype(np.uint32) << 8
        | words[:, 3].astype(np.uint32)
    ).reshape(nb, _RANK_M)
    counts = np.zeros(3)
    for b in range(nb):
        r = _rank32([int(w) for w in words[b]])
        counts[0 if r == _RANK_M else (1 if r == _RANK_M - 1 else 2)] += 1
    exp = nb * np.asarray(_RANK_PROBS)
    chi2 = float(np.sum((counts - exp) ** 2 / exp))
    return _result("rank", n, float(np.exp(-chi2 / 2.0)), alpha, "ranks %s" % counts.astype(int))


def spectral_test(key, alpha: float = 0.01) -> TestResult:
    """Discrete Fourier transform peak count below the 95% threshold."""
    x = _as_bits(key)
    n = x.size
    if n < 1024:
        return _skip("spectral", n, 1024)
    s = np.fft.rfft(2.0 * x - 1.0)
    mags = np.abs(s[: n // 2])
    t = np.sqrt(np.log(1.0 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = int(np.count_nonzero(mags < t))
    # variance constant 3.8 rather than 4: the peak counts are weakly
    # dependent and the uncorrected statistic is over-dispersed enough
    # to fail uniformity calibration
    sigma = np.sqrt(n * 0.95 * 0.05 / 3.8)
    # two-sided tail mass summed over whole count atoms, so the p-value
    # of each reachable count equals its own exceedance probability and
    # the integer-valued statistic stays calibrated
    x = abs(n1 - n0)
    hi = n1 if n1 > n0 else int(np.ceil(n0 + x))
    lo = int(np.floor(n0 - x))
    p = norm.sf((hi - 0.5 - n0) / sigma) + norm.cdf((lo + 0.5 - n0) / sigma)
    return _result("spectral", n, p, alpha, "peaks below threshold %d" % n1)


_LC_M = 128
_LC_BLOCKS_MIN = 384
_LC_PROBS = (0.010417, 0.03125, 0.125, 0.5, 0.25, 0.0625, 0.020833)


def _berlekamp_massey(bits: np.ndarray) -> int:
    # connection polynomial held as an int, coefficient j at bit j; the
    # history window keeps s_{i-j} at bit j so the discrepancy is one
    # masked popcount
    c, b, l, m, w = 1, 1, 0, -1, 0
    for i, s in enumerate(bits):
        w = (w << 1) | int(s)
        d = (c & w).bit_count() & 1
        if d:
            t = c
            c ^= b << (i - m)
            if 2 * l <= i:
                l, m, b = i + 1 - l, i, t
    return l


def linear_complexity_test(key, alpha: float = 0.01, block: int = _LC_M) -> TestResult:
    """Berlekamp-Massey linear complexity of fixed-size blocks.

    Uses blocks of 128 bits with the asymptotic class probabilities; the
    minimum length keeps every class's expected count high enough for
    the chi-square approximation to hold at the 1% level.
    """
    x = _as_bits(key)
    n = x.size
    need = _LC_BLOCKS_MIN * block
    if n < need:
        return _skip("linear-complexity", n, need)
    nb = n // block
    mu = block / 2.0 + (9.0 + (-1.0) ** (block + 1)) / 36.0 - (block / 3.0 + 2.0 / 9.0) / 2.0**block
    sign = 1.0 if block % 2 == 0 else -1.0
    counts = np.zeros(7)
    blocks = x[: nb * block].reshape(nb, block)
    for row in blocks:
        t = sign * (_berlekamp_massey(row) - mu) + 2.0 / 9.0
        if t <= -2.5:
            counts[0] += 1
        elif t > 2.5:
            counts[6] += 1
        else:
            counts[int(np.floor(t + 2.5)) + 1] += 1
    exp = nb * np.asarray(_LC_PROBS)
    chi2 = float(np.sum((counts - exp) ** 2 / exp))
    return _result("linear-complexity", n, gammaincc(3.0, chi2 / 2.0), alpha)


ALL_TESTS = (
    frequency_test,
    block_frequency_test,
    cumulative_sums_test,
    rank_test,
    spectral_test,
    linear_complexity_test,
)


def run_tests(key: Union[BitSequence, np.ndarray], alpha: float = 0.01) -> TestReport:
    """Run the whole battery on one key."""
    bits = _as_bits(key)
    return TestReport([t(bits, alpha) for t in ALL_TESTS], int(bits.size))
