"""Information reconciliation of the per-slot location symbols.

The two nodes hold bit strings derived from their own location estimates
and run the Cascade protocol over a public channel to make them equal:
a short pilot prefix is revealed outright to size the first-pass blocks,
then several passes of block parities with binary search locate and flip
mismatches, later passes re-permuting the string and back-propagating
into earlier blocks whose parity turns odd again.

Everything exchanged (pilot values and every parity bit, both
directions) is recorded in a :class:`CascadeTranscript`; the per
direction count feeds the leakage term of the final key-rate selection.
The transcript replays against the responder's original string alone,
reproducing the corrected output bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "BitSequence",
    "bmr",
    "GrayCoder",
    "DifferenceIndexer2D",
    "DistanceIndexer1D",
    "first_pass_block_length",
    "CascadeConfig",
    "CascadeTranscript",
    "cascade",
]


class BitSequence:
    """Immutable-by-convention vector of bits backed by a uint8 array."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1:
            arr = arr.ravel()
        if arr.size and arr.max() > 1:
            raise ValueError("bit values must be 0 or 1")
        self.bits = arr

    @classmethod
    def zeros(cls, n: int) -> "BitSequence":
        return cls(np.zeros(n, dtype=np.uint8))

    @classmethod
    def from_bytes(cls, data: bytes, n: int) -> "BitSequence":
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if bits.size < n:
            raise ValueError("byte payload shorter than the declared bit count")
        return cls(bits[:n])

    def to_bytes(self) -> bytes:
        """Pack most-significant-bit first, zero padded to a byte edge."""
        return np.packbits(self.bits).tobytes()

    def __len__(self) -> int:
        return int(self.bits.size)

    def __getitem__(self, key):
        if isinstance(key, slice):
            return BitSequence(self.bits[key])
        return int(self.bits[key])

    def __xor__(self, other: "BitSequence") -> "BitSequence":
        if len(self) != len(other):
            raise ValueError("xor needs equal lengths")
        return BitSequence(np.bitwise_xor(self.bits, other.bits))

    def __eq__(self, other) -> bool:
        return isinstance(other, BitSequence) and np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        head = "".join(str(b) for b in self.bits[:32])
        tail = "..." if len(self) > 32 else ""
        return "BitSequence(%d: %s%s)" % (len(self), head, tail)

    def copy(self) -> "BitSequence":
        return BitSequence(self.bits.copy())

    def parity(self) -> int:
        return int(self.bits.sum() & 1)

    def count(self) -> int:
        return int(self.bits.sum())

    def permute(self, perm: np.ndarray) -> "BitSequence":
        return BitSequence(self.bits[np.asarray(perm)])

    def concat(self, other: "BitSequence") -> "BitSequence":
        return BitSequence(np.concatenate([self.bits, other.bits]))


def bmr(a: BitSequence, b: BitSequence) -> float:
    """Bit mismatch rate between two equal-length sequences."""
    if len(a) != len(b):
        raise ValueError("bit mismatch rate needs equal lengths")
    if len(a) == 0:
        raise ValueError("bit mismatch rate of empty sequences is undefined")
    return float(np.count_nonzero(a.bits != b.bits)) / len(a)


class GrayCoder:
    """Fixed-width reflected binary code.

    Adjacent integers map to words differing in one bit, so a location
    estimate that lands one quantizer cell off corrupts a single key bit.
    Words are emitted most-significant-bit first.
    """

    def __init__(self, bits: int):
        if bits < 1:
            raise ValueError("word width must be at least one bit")
        self.bits = bits

    def encode(self, index: int) -> BitSequence:
        return BitSequence(self.encode_array(np.asarray([index]))[0])

    def encode_array(self, indices: np.ndarray) -> np.ndarray:
        """Encode integers in ``[0, 2**bits)``; shape ``(k, bits)``."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= (1 << self.bits)):
            raise ValueError("index out of range for a %d-bit code" % self.bits)
        g = idx ^ (idx >> 1)
        shifts = np.arange(self.bits - 1, -1, -1)
        return ((g[:, None] >> shifts[None, :]) & 1).astype(np.uint8)

    def decode(self, word: BitSequence) -> int:
        if len(word) != self.bits:
            raise ValueError("word length does not match the code width")
        g = 0
        for b in word.bits:
            g = (g << 1) | int(b)
        i = g
        while g:
            g >>= 1
            i ^= g
        return i


class DifferenceIndexer2D:
    """Boustrophedon (snake) enumeration of 2-D quantizer differences.

    Integer difference vectors in ``[-span, span]**2`` are walked row by
    row with alternating direction, so consecutive positions are lattice
    neighbors; composed with a Gray code, neighboring differences then
    disagree in a single bit.  Positions beyond the word range clamp to
    the last codeword.
    """

    def __init__(self, span: int, bits: int):
        if span < 0:
            raise ValueError("span must be nonnegative")
        self.span = span
        self.bits = bits
        self.side = 2 * span + 1

    def index(self, diff: np.ndarray) -> np.ndarray:
        d = np.asarray(diff, dtype=np.int64)
        d = np.clip(d, -self.span, self.span)
        row = d[..., 1] + self.span
        col = d[..., 0] + self.span
        pos = row * self.side + np.where(row % 2 == 0, col, self.side - 1 - col)
        return np.clip(pos, 0, (1 << self.bits) - 1)


class DistanceIndexer1D:
    """Quantized scalar distances to codeword indices with an offset."""

    def __init__(self, step: float, bits: int, offset: int = 0):
        if not step > 0:
            raise ValueError("step must be positive")
        self.step = step
        self.bits = bits
        self.offset = offset

    def index(self, d: np.ndarray) -> np.ndarray:
        q = np.ceil(np.asarray(d, dtype=float) / self.step - 0.5).astype(np.int64)
        return np.clip(q - self.offset, 0, (1 << self.bits) - 1)


def first_pass_block_length(bmr_est: float, n: int) -> int:
    """Smallest block length whose probability of containing at least
    one mismatch reaches 70%, clamped into ``[1, n]``."""
    if not 0.0 < bmr_est <= 0.5:
        raise ValueError("bit mismatch estimate must lie in (0, 0.5]")
    if n < 1:
        raise ValueError("string length must be positive")
    m = int(np.ceil(np.log(0.3) / np.log1p(-bmr_est)))
    return max(1, min(m, n))


@dataclass(frozen=True)
class CascadeConfig:
    """Protocol knobs.

    ``pilot_fraction`` of the string is revealed both ways up front to
    estimate the mismatch rate (those bits never reach the key);
    ``first_pass_length`` or ``bmr_hint`` replace the pilot estimate
    when no pilot is configured.
    """

    passes: int = 4
    pilot_fraction: float = 0.05
    first_pass_length: Optional[int] = None
    bmr_hint: Optional[float] = None

    def __post_init__(self) -> None:
        if self.passes < 1:
            raise ValueError("at least one pass required")
        if not 0.0 <= self.pilot_fraction < 1.0:
            raise ValueError("pilot fraction must lie in [0, 1)")
        if self.first_pass_length is not None and self.first_pass_length < 1:
            raise ValueError("first pass block length must be positive")
        if self.bmr_hint is not None and not 0.0 < self.bmr_hint <= 0.5:
            raise ValueError("bmr hint must lie in (0, 0.5]")


_MAGIC = b"LKC1"


@dataclass
class CascadeTranscript:
    """Everything the protocol put on the public channel, in order."""

    n: int
    pilot_len: int
    m1: int
    block_lengths: List[int]
    seeds: List[int]
    pilot_master: np.ndarray
    pilot_responder: np.ndarray
    stream: np.ndarray

    @property
    def passes(self) -> int:
        return len(self.block_lengths)

    @property
    def t_per_direction(self) -> int:
        """Public bits revealed by each side: pilot plus every parity
        (exchanges are symmetric, each master parity draws a reply)."""
        return self.pilot_len + len(self.stream) // 2

    def serialize(self) -> bytes:
        out = [
            _MAGIC,
            struct.pack("<IIIB", self.n, self.pilot_len, self.m1, self.passes),
        ]
        for mp, seed in zip(self.block_lengths, self.seeds):
            out.append(struct.pack("<IQ", mp, seed))
        for arr in (self.pilot_master, self.pilot_responder):
            out.append(np.packbits(arr).tobytes())
        out.append(struct.pack("<I", len(self.stream)))
        out.append(np.packbits(self.stream).tobytes())
        return b"".join(out)

    @classmethod
    def deserialize(cls, data: bytes) -> "CascadeTranscript":
        if data[:4] != _MAGIC:
            raise ValueError("not a cascade transcript")
        off = 4
        n, pilot_len, m1, passes = struct.unpack_from("<IIIB", data, off)
        off += struct.calcsize("<IIIB")
        block_lengths, seeds = [], []
        for _ in range(passes):
            mp, seed = struct.unpack_from("<IQ", data, off)
            off += struct.calcsize("<IQ")
            block_lengths.append(mp)
            seeds.append(seed)
        nbytes = (pilot_len + 7) // 8
        pilots = []
        for _ in range(2):
            bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=off))
            pilots.append(bits[:pilot_len].astype(np.uint8))
            off += nbytes
        (nstream,) = struct.unpack_from("<I", data, off)
        off += 4
        sbytes = (nstream + 7) // 8
        stream = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=sbytes, offset=off))[:nstream]
        return cls(n, pilot_len, m1, block_lengths, seeds, pilots[0], pilots[1], stream.astype(np.uint8))

    def replay(self, v2: BitSequence) -> BitSequence:
        """Reproduce the responder's corrected string from its original
        string and this transcript alone."""
        if len(v2) != self.n:
            raise ValueError("responder string length does not match the transcript")
        if not np.array_equal(v2.bits[: self.pilot_len], self.pilot_responder):
            raise ValueError("responder pilot does not match the transcript")
        work = v2.bits[self.pilot_len :].copy()
        cursor = _StreamCursor(self.stream)
        _protocol(None, work, self.m1, self.block_lengths, self.seeds, cursor.master, cursor.responder)
        cursor.done()
        return BitSequence(work)


class _StreamCursor:
    """Replay source: master bits pop from the record, responder bits
    recomputed by the caller are checked against it."""

    def __init__(self, stream: np.ndarray):
        self.stream = stream
        self.pos = 0

    def _take(self) -> int:
        if self.pos >= len(self.stream):
            raise ValueError("transcript stream exhausted")
        b = int(self.stream[self.pos])
        self.pos += 1
        return b

    def master(self, thunk) -> int:
        return self._take()

    def responder(self, bit: int) -> int:
        if self._take() != bit:
            raise ValueError("transcript inconsistent with the responder string")
        return bit

    def done(self) -> None:
        if self.pos != len(self.stream):
            raise ValueError("transcript stream has trailing bits")


class _StreamRecorder:
    def __init__(self):
        self.stream: List[int] = []

    def master(self, thunk) -> int:
        b = int(thunk())
        self.stream.append(b)
        return b

    def responder(self, bit: int) -> int:
        self.stream.append(int(bit))
        return int(bit)


def _protocol(v1w, v2w, m1: int, block_lengths: Sequence[int], seeds: Sequence[int], mbit, rbit) -> None:
    """Shared master/responder parity schedule.

    ``v1w`` is ``None`` during replay; every master parity then comes
    from the recorded stream instead of being computed.  ``v2w`` is
    corrected in place.
    """
    n_ = len(v2w)
    perms: List[np.ndarray] = []
    inv: List[np.ndarray] = []
    odd = set()

    def mpar(idx):
        return mbit((lambda ii=idx: int(v1w[ii].sum() & 1)) if v1w is not None else None)

    def rpar(idx):
        return rbit(int(v2w[idx].sum() & 1))

    def segment(q: int, b: int) -> np.ndarray:
        mq = block_lengths[q]
        return perms[q][b * mq : min((b + 1) * mq, n_)]

    def binary(q: int, b: int) -> int:
        seg = segment(q, b)
        while len(seg) > 1:
            half = (len(seg) + 1) // 2
            left = seg[:half]
            if mpar(left) != rpar(left):
                seg = left
            else:
                seg = seg[half:]
        return int(seg[0])

    for p, mp in enumerate(block_lengths):
        if p == 0:
            perm = np.arange(n_)
        else:
            perm = np.random.default_rng(np.uint64(seeds[p])).permutation(n_)
        perms.append(perm)
        inv.append(np.argsort(perm))
        nb = -(-n_ // mp)
        for b in range(nb):
            seg = segment(p, b)
            if mpar(seg) != rpar(seg):
                odd.add((p, b))
        while odd:
            q, b = min(odd, key=lambda t: (len(segment(*t)), t))
            pos = binary(q, b)
            v2w[pos] ^= 1
            for q2 in range(len(perms)):
                key = (q2, int(inv[q2][pos]) // block_lengths[q2])
                if key in odd:
                    odd.discard(key)
                else:
                    odd.add(key)


def cascade(
    v1: BitSequence,
    v2: BitSequence,
    cfg: CascadeConfig,
    rng: np.random.Generator,
) -> Tuple[BitSequence, BitSequence, CascadeTranscript]:
    """Reconcile ``v2`` toward ``v1``.

    Returns ``(u1, u2, transcript)`` where ``u1``/``u2`` exclude the
    revealed pilot prefix.  ``rng`` drives the master's public
    permutation seeds (they appear in the transcript, so determinism of
    a run is decided by the caller's seeding discipline).
    """
    if len(v1) != len(v2):
        raise ValueError("strings must have equal length")
    n = len(v1)
    if n < 2:
        raise ValueError("strings too short to reconcile")

    pilot_len = 0
    if cfg.pilot_fraction > 0.0:
        pilot_len = max(1, int(round(cfg.pilot_fraction * n)))
    if pilot_len >= n:
        raise ValueError("pilot would consume the whole string")

    pilot_master = v1.bits[:pilot_len].copy()
    pilot_responder = v2.bits[:pilot_len].copy()
    v1w = v1.bits[pilot_len:].copy()
    v2w = v2.bits[pilot_len:].copy()
    n_ = n - pilot_len

    if cfg.first_pass_length is not None:
        m1 = min(cfg.first_pass_length, n_)
    else:
        if pilot_len > 0:
            k = int(np.count_nonzero(pilot_master != pilot_responder))
            est = min(0.5, (k + 0.5) / (pilot_len + 1.0))
        elif cfg.bmr_hint is not None:
            est = cfg.bmr_hint
        else:
            raise ValueError("no pilot, hint or explicit block length to size the first pass")
        m1 = first_pass_block_length(est, n_)

    block_lengths = [min(m1 << p, n_) for p in range(cfg.passes)]
    seeds = [0] + [int(rng.integers(0, 2**63, dtype=np.uint64)) for _ in range(cfg.passes - 1)]

    rec = _StreamRecorder()
    _protocol(v1w, v2w, m1, block_lengths, seeds, rec.master, rec.responder)

    transcript = CascadeTranscript(
        n=n,
        pilot_len=pilot_len,
        m1=m1,
        block_lengths=block_lengths,
        seeds=seeds,
        pilot_master=pilot_master,
        pilot_responder=pilot_responder,
        stream=np.asarray(rec.stream, dtype=np.uint8),
    )
    return BitSequence(v1w), BitSequence(v2w), transcript
