"""End-to-end key generation from simulated runs.

Chains the stages in protocol order: sample a run (with the beacon
policy in the loop when configured), estimate the relative location at
every party, Gray-encode the quantized estimates into bit strings,
reconcile with Cascade, compress, select the secure rate from the
leakage ledger, and amplify.  All public randomness (permutation seeds,
hash seed) is drawn from the caller's generator, so a seed pins every
byte of the output.

Each party encodes the same target quantity from its own observations.
With perfect side location information that quantity is the per-slot
2-D difference ``l1 - l2`` of the estimated positions; without it the
nodes hold no usable 2-D information and the encoded statistic is the
1-D distance estimate (the eavesdropper's being her cosine-rule
reconstruction from her two distances and vertex angle).  Skipped slots
produce no bits for anyone but still count in the rate denominator.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .amplification import (
    CompressedKey,
    FinalKey,
    binary_entropy,
    compress,
    privacy_amplify,
)
from .localization import (
    DEFAULT_VITERBI_STATE_CAP,
    HmmModel,
    quantize_index,
    viterbi_ml_sequence,
)
from .mobility import StaticPosition
from .observation import ObservationSeries
from .opportunistic import linearized_eve_distance
from .reconciliation import (
    BitSequence,
    CascadeConfig,
    DifferenceIndexer2D,
    DistanceIndexer1D,
    GrayCoder,
    bmr,
    cascade,
)
from .scenario import Run, Scenario, sample_run

__all__ = [
    "BitRun",
    "KeyGenResult",
    "default_delta",
    "default_gray_bits",
    "generate_bit_sequences",
    "run_key_generation",
]


def default_delta(scenario: Scenario) -> float:
    """Quantizer resolution whose lattice coincides with the mobility
    grid (pitch ``A/M``)."""
    return float(np.sqrt(2.0) * scenario.grid.a / scenario.grid.m)


def default_gray_bits(scenario: Scenario) -> int:
    """Smallest word width covering the encoded symbol set.

    Perfect GLI encodes 2-D differences of grid points, ``(2M-1)**2``
    symbols; no GLI encodes quantized distances, whose multiples of the
    grid pitch reach the field diagonal.
    """
    if scenario.mode == "perfect":
        side = 2 * scenario.grid.m - 1
        return int(np.ceil(np.log2(side * side)))
    top = np.sqrt(2.0) * scenario.grid.a * (scenario.grid.m - 1) / scenario.grid.m
    pitch = scenario.grid.a / scenario.grid.m
    return max(1, int(np.ceil(np.log2(np.floor(top / pitch) + 1))))


@dataclass
class BitRun:
    """Bit strings of one run, plus the schedule they were earned on."""

    v1: BitSequence
    v2: BitSequence
    ve: BitSequence
    skipped: np.ndarray
    m_bits: int

    @property
    def n_slots(self) -> int:
        return int(self.skipped.shape[0])

    @property
    def n_transmitted(self) -> int:
        return int(self.skipped.shape[0] - self.skipped.sum())


def _unit(angle: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def _direct_differences(series: ObservationSeries) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Perfect GLI: each party places the peer at its own exact location
    # displaced by the observed polar offset; own locations cancel in
    # the difference, leaving pure observation arithmetic.
    d1 = -series.d1[:, None] * _unit(series.phi1)
    d2 = series.d2[:, None] * _unit(series.phi2)
    if series.phi_1e is None or series.phi_2e is None:
        raise ValueError("perfect-GLI pipeline needs the eavesdropper bearings")
    de = series.d1e[:, None] * _unit(series.phi_1e) - series.d2e[:, None] * _unit(series.phi_2e)
    return d1, d2, de


def _viterbi_differences(
    scenario: Scenario, run: Run, viterbi_cap: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Smoothed variant of the perfect-GLI estimates: each party decodes
    # the pair path jointly over all slots.  The eavesdropper knows her
    # own positions, so her model pins them per slot instead of
    # enlarging the state space.
    common = dict(
        grid=scenario.grid,
        noise=scenario.noise,
        mode=scenario.mode,
        burn_in=scenario.burn_in,
    )
    eve_kw = {}
    att = scenario.attacker
    if isinstance(att, StaticPosition):
        eve_kw["static_le"] = tuple(scenario.eve_point)
    else:
        eve_kw["eve_path"] = run.trajectory.points()[:, 2]
    out = []
    for observer, kw in (("node1", {}), ("node2", {}), ("eve", eve_kw)):
        model = HmmModel(observer=observer, **common, **kw)
        track = viterbi_ml_sequence(run.series, model, state_cap=viterbi_cap)
        out.append(track.est1 - track.est2)
    return out[0], out[1], out[2]


def _distance_statistics(series: ObservationSeries) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # No GLI: the nodes hold no usable 2-D information, so the encoded
    # statistic is the raw distance observation; the eavesdropper
    # reconstructs the pair distance from her triangle.
    if series.phi_e is None:
        raise ValueError("eavesdropper angle observations are required to form her statistic")
    de = linearized_eve_distance(series.d1e, series.d2e, series.phi_e)
    return series.d1, series.d2, de


def generate_bit_sequences(
    scenario: Scenario,
    rng: np.random.Generator,
    n: int = 400,
    delta: Optional[float] = None,
    m_bits: Optional[int] = None,
    use_viterbi: Optional[bool] = None,
    viterbi_cap: int = DEFAULT_VITERBI_STATE_CAP,
) -> BitRun:
    """Simulate one run and return the three parties' bit strings.

    The eavesdropper is run through the same estimate/quantize/encode
    stages as the legitimate nodes, with her own observations and her
    knowledge of her own path.  ``use_viterbi`` replaces the perfect-GLI
    per-slot estimates with jointly decoded ones; the default enables it
    whenever the pair state space fits under ``viterbi_cap``.  Without
    GLI the slot statistic is 1-D and no decoding applies.
    """
    run = sample_run(scenario, n, rng)
    if delta is None:
        delta = default_delta(scenario)
    if m_bits is None:
        m_bits = default_gray_bits(scenario)
    keep = ~run.series.skipped
    coder = GrayCoder(m_bits)

    if scenario.mode == "perfect":
        if use_viterbi is None:
            use_viterbi = scenario.grid.m ** 4 <= viterbi_cap
        if use_viterbi:
            diff1, diff2, diffe = _viterbi_differences(scenario, run, viterbi_cap)
        else:
            diff1, diff2, diffe = _direct_differences(run.series)
        indexer2 = DifferenceIndexer2D(span=scenario.grid.m - 1, bits=m_bits)
        symbols = [indexer2.index(quantize_index(s[keep], delta)) for s in (diff1, diff2, diffe)]
    else:
        d1, d2, de = _distance_statistics(run.series)
        indexer1 = DistanceIndexer1D(step=delta / np.sqrt(2.0), bits=m_bits)
        symbols = [indexer1.index(s[keep]) for s in (d1, d2, de)]

    seqs = [BitSequence(coder.encode_array(ix).reshape(-1)) for ix in symbols]
    return BitRun(seqs[0], seqs[1], seqs[2], run.series.skipped.copy(), m_bits)


@dataclass
class KeyGenResult:
    """Statistics row of one key-generation attempt.

    ``failed`` marks secure refusals (no transmitted slots, compressed
    length mismatch, empty key budget); ``key_match`` reports whether
    both final keys agree when keys were emitted.
    """

    n_slots: int
    n_transmitted: int
    m_bits: int
    bmr_12: float
    bmr_e: float
    residual_bmr: float
    t_per_direction: int
    alpha: float
    rate: float
    out_len: int
    skip_fraction: float
    failed: bool
    reason: str = ""
    key1: Optional[FinalKey] = None
    key2: Optional[FinalKey] = None
    hash_seed: Optional[BitSequence] = None
    compressed: Optional[CompressedKey] = None

    @property
    def key_match(self) -> bool:
        return (
            self.key1 is not None
            and self.key2 is not None
            and self.key1.bits == self.key2.bits
        )


def _secure_rate(alpha: float, kept_bits: int, bmr_e: float, t: int, n_slots: int) -> float:
    # Per-slot generalization of the closed-form rate selection: the
    # eavesdropper-entropy budget is earned only on transmitted,
    # post-pilot bits while the denominator counts every slot.
    budget = kept_bits * binary_entropy(bmr_e) - t
    return max(0.0, alpha * budget / n_slots)


def run_key_generation(
    scenario: Scenario,
    rng: np.random.Generator,
    n: int = 400,
    delta: Optional[float] = None,
    m_bits: Optional[int] = None,
    cascade_cfg: Optional[CascadeConfig] = None,
    bmr_e: Optional[float] = None,
    use_viterbi: Optional[bool] = None,
    viterbi_cap: int = DEFAULT_VITERBI_STATE_CAP,
) -> KeyGenResult:
    """One full protocol execution.

    ``bmr_e`` fixes the eavesdropper mismatch rate used in rate
    selection (e.g. a Monte-Carlo estimate over many runs); by default
    the run's own realized rate is used.
    """
    bits = generate_bit_sequences(
        scenario, rng, n, delta, m_bits, use_viterbi=use_viterbi, viterbi_cap=viterbi_cap
    )
    stats = dict(
        n_slots=bits.n_slots,
        n_transmitted=bits.n_transmitted,
        m_bits=bits.m_bits,
        skip_fraction=float(bits.skipped.mean()),
    )
    if bits.n_transmitted == 0:
        return KeyGenResult(
            **stats, bmr_12=float("nan"), bmr_e=float("nan"), residual_bmr=float("nan"),
            t_per_direction=0, alpha=float("nan"), rate=0.0, out_len=0,
            failed=True, reason="no beacons were exchanged",
        )

    cfg = cascade_cfg if cascade_cfg is not None else CascadeConfig()
    mismatch = bmr(bits.v1, bits.v2)
    u1, u2, transcript = cascade(bits.v1, bits.v2, cfg, rng)
    t = transcript.t_per_direction
    residual = bmr(u1, u2)
    ve_kept = bits.ve[transcript.pilot_len:]
    measured_bmr_e = bmr(u1, ve_kept)
    rate_bmr_e = measured_bmr_e if bmr_e is None else bmr_e
    stats.update(bmr_12=mismatch, bmr_e=measured_bmr_e, residual_bmr=residual,
                 t_per_direction=t)

    q1 = compress(u1)
    q2 = compress(u2)
    if len(q1.bits) != len(q2.bits):
        return KeyGenResult(
            **stats, alpha=q1.alpha, rate=0.0, out_len=0,
            failed=True, reason="compressed lengths differ (residual errors)",
        )

    # Degenerate mismatch rates fall outside the entropy model; refuse.
    if not 0.0 < rate_bmr_e <= 0.5:
        return KeyGenResult(
            **stats, alpha=q1.alpha, rate=0.0, out_len=0,
            failed=True, reason="eavesdropper mismatch rate outside (0, 0.5]",
        )
    rate = _secure_rate(q1.alpha, len(u1), rate_bmr_e, t, bits.n_slots)
    degree = len(q1.bits)
    out_len = min(int(round(rate * bits.n_slots)), degree)
    if out_len == 0:
        return KeyGenResult(
            **stats, alpha=q1.alpha, rate=rate, out_len=0,
            failed=True, reason="no positive key budget",
        )

    seed_bits = rng.integers(0, 2, size=degree, dtype=np.uint8)
    if not seed_bits.any():
        seed_bits[-1] = 1
    seed = BitSequence(seed_bits)
    key1 = privacy_amplify(q1, seed, out_len)
    key2 = privacy_amplify(q2, seed, out_len)
    return KeyGenResult(
        **stats, alpha=q1.alpha, rate=rate, out_len=out_len,
        failed=False, key1=key1, key2=key2, hash_seed=seed, compressed=q1,
    )
