"""Key generation from externally collected distance traces.

Field recordings replace the simulated observation stage: each record
carries per-slot RSSI readings (or pre-converted distances) for the two
legitimate channels and optionally an eavesdropper channel.  The
remaining pipeline is the no-statistics variant of the simulated one: a
1-D quantizer on the distances, Gray coding, Cascade, compression,
rate selection and amplification, with a randomness report on the
emitted key.
"""

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .amplification import compress, privacy_amplify
from .pipeline import _secure_rate
from .randomness import TestReport, run_tests
from .reconciliation import (
    BitSequence,
    CascadeConfig,
    DistanceIndexer1D,
    GrayCoder,
    bmr,
    cascade,
)

__all__ = [
    "TraceRecord",
    "TraceConfig",
    "TraceReadResult",
    "TraceResult",
    "rssi_to_distance",
    "read_trace_csv",
    "trace_bit_sequences",
    "run_trace_pipeline",
]

_PATH_LOSS_SLOPE = -22.0
_PATH_LOSS_OFFSET = -44.8


@dataclass
class TraceRecord:
    """One slot of a recorded run, in meters."""

    slot: int
    d1: float
    d2: float
    de: Optional[float] = None


@dataclass
class TraceReadResult:
    """Parsed trace plus ingest counters."""

    records: List[TraceRecord]
    dropped: int = 0
    clamped: int = 0

    @property
    def has_eve(self) -> bool:
        return bool(self.records) and self.records[0].de is not None


def rssi_to_distance(rssi: float) -> float:
    """Path-loss inversion of a raw signal-strength indicator.

    The fitted model maps indicator ``r`` to ``-22 log10(r) - 44.8``
    meters; readings strong enough to imply a negative range clamp to
    zero.  The caller counts clamps and rejects nonpositive indicators
    (outside the logarithm's domain).
    """
    if not rssi > 0.0:
        raise ValueError("signal indicator must be positive")
    return max(0.0, _PATH_LOSS_SLOPE * float(np.log10(rssi)) + _PATH_LOSS_OFFSET)


_HEADERS = {
    ("slot", "rssi_1", "rssi_2"): ("rssi", False),
    ("slot", "rssi_1", "rssi_2", "rssi_e"): ("rssi", True),
    ("slot", "d1", "d2"): ("meters", False),
    ("slot", "d1", "d2", "de"): ("meters", True),
}


def read_trace_csv(path: str) -> TraceReadResult:
    """Load a trace file, converting RSSI columns to meters.

    Two headers are accepted: ``slot,rssi_1,rssi_2[,rssi_e]`` for raw
    indicators and ``slot,d1,d2[,de]`` for pre-converted distances.
    Rows with a nonpositive indicator are dropped (counted); negative
    converted distances clamp to zero (counted).  Slot indices must be
    strictly increasing.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(h.strip() for h in next(reader))
        except StopIteration:
            raise ValueError("trace file is empty") from None
        if header not in _HEADERS:
            raise ValueError("unrecognized trace header %r" % (header,))
        unit, has_eve = _HEADERS[header]

        out = TraceReadResult(records=[])
        last_slot = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError("line %d: expected %d fields" % (lineno, len(header)))
            slot = int(row[0])
            if last_slot is not None and slot <= last_slot:
                raise ValueError("line %d: slot indices must be strictly increasing" % lineno)
            last_slot = slot
            vals = [float(x) for x in row[1:]]
            if unit == "rssi":
                if any(v <= 0.0 for v in vals):
                    out.dropped += 1
                    continue
                conv = []
                for v in vals:
                    d = _PATH_LOSS_SLOPE * float(np.log10(v)) + _PATH_LOSS_OFFSET
                    if d < 0.0:
                        out.clamped += 1
                        d = 0.0
                    conv.append(d)
                vals = conv
            de = vals[2] if has_eve else None
            out.records.append(TraceRecord(slot, vals[0], vals[1], de))
    return out


@dataclass
class TraceConfig:
    """Quantizer and protocol knobs of the experiment pipeline."""

    step: float = 3.0
    gray_bits: int = 2
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    worst_case_bmr_e: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError("quantizer step must be positive")
        if self.gray_bits < 1:
            raise ValueError("gray_bits must be at least 1")
        if self.worst_case_bmr_e is not None and not 0.0 < self.worst_case_bmr_e <= 0.5:
            raise ValueError("worst_case_bmr_e must lie in (0, 0.5]")


@dataclass
class TraceResult:
    """Statistics row of one experiment run: mismatch rates before and
    after discussion, leakage, compression and the selected rate, plus
    the randomness report of the emitted key."""

    n_slots: int
    dropped: int
    clamped: int
    bmr_12: float
    bmr_e: Optional[float]
    residual_bmr: float
    t_per_direction: int
    alpha: float
    rate: float
    out_len: int
    failed: bool
    reason: str = ""
    key1: Optional[BitSequence] = None
    key2: Optional[BitSequence] = None
    hash_seed: Optional[BitSequence] = None
    randomness: Optional[TestReport] = None

    @property
    def key_match(self) -> bool:
        return self.key1 is not None and self.key1 == self.key2


def trace_bit_sequences(
    records: Sequence[TraceRecord], cfg: TraceConfig
) -> Tuple[BitSequence, BitSequence, Optional[BitSequence]]:
    """Quantize and Gray-encode the recorded distances."""
    if not records:
        raise ValueError("trace holds no usable records")
    coder = GrayCoder(cfg.gray_bits)
    indexer = DistanceIndexer1D(step=cfg.step, bits=cfg.gray_bits)

    def encode(vals: np.ndarray) -> BitSequence:
        return BitSequence(coder.encode_array(indexer.index(vals)).reshape(-1))

    d1 = np.array([r.d1 for r in records])
    d2 = np.array([r.d2 for r in records])
    v1, v2 = encode(d1), encode(d2)
    ve = None
    if records[0].de is not None:
        ve = encode(np.array([r.de for r in records]))
    return v1, v2, ve


def run_trace_pipeline(
    trace: TraceReadResult,
    cfg: TraceConfig,
    rng: np.random.Generator,
) -> TraceResult:
    """Run the recorded distances through the key pipeline.

    Without an eavesdropper channel the mismatch rate for rate selection
    must come from ``cfg.worst_case_bmr_e``; if neither is available the
    run refuses to emit a key.
    """
    records = trace.records
    v1, v2, ve = trace_bit_sequences(records, cfg)
    n_slots = len(records)
    base = dict(n_slots=n_slots, dropped=trace.dropped, clamped=trace.clamped)

    mismatch = bmr(v1, v2)
    u1, u2, transcript = cascade(v1, v2, cfg.cascade, rng)
    t = transcript.t_per_direction
    residual = bmr(u1, u2)
    measured_e = None
    if ve is not None:
        measured_e = bmr(u1, ve[transcript.pilot_len:])
    base.update(bmr_12=mismatch, bmr_e=measured_e, residual_bmr=residual,
                t_per_direction=t)

    rate_bmr_e = measured_e if measured_e is not None else cfg.worst_case_bmr_e
    if rate_bmr_e is None:
        return TraceResult(
            **base, alpha=float("nan"), rate=0.0, out_len=0, failed=True,
            reason="no eavesdropper channel and no configured worst-case mismatch rate",
        )
    if not 0.0 < rate_bmr_e <= 0.5:
        return TraceResult(
            **base, alpha=float("nan"), rate=0.0, out_len=0, failed=True,
            reason="eavesdropper mismatch rate outside (0, 0.5]",
        )

    q1 = compress(u1)
    q2 = compress(u2)
    if len(q1.bits) != len(q2.bits):
        return TraceResult(
            **base, alpha=q1.alpha, rate=0.0, out_len=0, failed=True,
            reason="compressed lengths differ (residual errors)",
        )
    rate = _secure_rate(q1.alpha, len(u1), rate_bmr_e, t, n_slots)
    degree = len(q1.bits)
    out_len = min(int(round(rate * n_slots)), degree)
    if out_len == 0:
        return TraceResult(
            **base, alpha=q1.alpha, rate=rate, out_len=0, failed=True,
            reason="no positive key budget",
        )

    seed_bits = rng.integers(0, 2, size=degree, dtype=np.uint8)
    if not seed_bits.any():
        seed_bits[-1] = 1
    seed = BitSequence(seed_bits)
    key1 = privacy_amplify(q1, seed, out_len).bits
    key2 = privacy_amplify(q2, seed, out_len).bits
    return TraceResult(
        **base, alpha=q1.alpha, rate=rate, out_len=out_len, failed=False,
        key1=key1, key2=key2, hash_seed=seed, randomness=run_tests(key1),
    )
