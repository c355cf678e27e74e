"""Opportunistic beacon-exchange policy.

Every slot the master decides whether to transmit beacons or stay
silent.  The decision compares the legitimate ranging noise against the
effective noise of the eavesdropper's best linearized estimate of the
pair distance, assembled from her two ranges and the angle under which
she sees the pair.  Skipping slots where she would learn the distance
more accurately than the parties themselves trades key length for
secrecy.  Beacon power cancels from the comparison, so the decision
depends only on geometry and the noise scales.

The true geometry is hidden, so the deployed rule thresholds the
posterior probability of the advantage event under the master's filter,
with a cap on consecutive skips so the key stream cannot starve.  The
genie variant uses the true geometry and serves as a reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .localization import MiddleChain, PairChain, TripleChain, _cosine_angle
from .mobility import StateTriple, axis_marginal
from .observation import NoiseModel

__all__ = [
    "PolicyConfig",
    "SkipPolicy",
    "eve_distance_variance",
    "linearized_eve_distance",
    "advantage_indicator",
    "genie_advantage",
    "pair_advantage_table",
    "group_advantage_table",
    "triple_advantage_table",
    "eve_marginal_advantage",
    "advantage_probability",
]


@dataclass(frozen=True)
class PolicyConfig:
    """Threshold on the advantage probability and the skip-run cap."""

    tau: float = 0.5
    max_skip_run: int = 4

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.max_skip_run < 1:
            raise ValueError("max_skip_run must be at least 1")


class SkipPolicy:
    """Stateful skip rule: skip while the advantage probability stays
    below ``tau``, but never more than ``max_skip_run`` slots in a row."""

    def __init__(self, config: PolicyConfig | None = None):
        self.config = PolicyConfig() if config is None else config
        self.run = 0

    def decide(self, p_advantage: float) -> bool:
        skip = p_advantage < self.config.tau and self.run < self.config.max_skip_run
        self.run = self.run + 1 if skip else 0
        return skip


def linearized_eve_distance(d1e, d2e, phi_e):
    """The eavesdropper's point estimate of the pair distance, via the
    cosine rule on her two ranges and vertex angle."""
    d1e = np.asarray(d1e, dtype=float)
    sq = d1e * d1e + np.square(d2e) - 2.0 * d1e * np.asarray(d2e) * np.cos(phi_e)
    return np.sqrt(np.maximum(sq, 0.0))


def eve_distance_variance(d1e, d2e, phi_e, noise: NoiseModel):
    """Effective variance (times power) of the linearized estimate.

    First-order error propagation through the cosine rule: the range
    errors enter through the partial derivatives of the squared distance
    and the angle error through the opposite-side term.  Degenerate
    geometry with coincident nodes returns zero, which marks the slot as
    offering the parties no advantage.
    """
    d1e = np.asarray(d1e, dtype=float)
    d2e = np.asarray(d2e, dtype=float)
    phi_e = np.asarray(phi_e, dtype=float)
    cos = np.cos(phi_e)
    d12sq = d1e * d1e + d2e * d2e - 2.0 * d1e * d2e * cos
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (
            np.square(d1e - d2e * cos) * noise.gamma(d1e)
            + np.square(d2e - d1e * cos) * noise.gamma(d2e)
        ) / d12sq
        b = np.square(d1e * d2e * np.sin(phi_e)) * noise.gamma_phi(d1e, d2e) / d12sq
    return np.where(d12sq > 0.0, (a + b) * noise.rho_e, 0.0)


def advantage_indicator(d12, d1e, d2e, phi_e, noise: NoiseModel):
    """True where the legitimate ranging noise beats the eavesdropper's
    effective noise.  Power cancels; the weaker party's scale governs."""
    d12 = np.asarray(d12, dtype=float)
    rho_max = max(noise.rho1, noise.rho2)
    var_e = eve_distance_variance(d1e, d2e, phi_e, noise)
    return (d12 > 0.0) & (noise.gamma(d12) * rho_max < var_e)


def genie_advantage(state: StateTriple, noise: NoiseModel) -> bool:
    """Advantage indicator on the true geometry of one slot."""
    return bool(advantage_indicator(state.d12, state.d1e, state.d2e, state.phi_e, noise))


# ---------------------------------------------------------------------------
# indicator tables over chain states


def pair_advantage_table(pair: PairChain, noise: NoiseModel, le_point) -> np.ndarray:
    """Indicator over pair states with the eavesdropper at a fixed
    point, axes (x1, y1, x2, y2)."""
    le = np.asarray(le_point, dtype=float)
    d = pair.dist_to_point(le)
    return advantage_indicator(
        pair.d12(),
        d[:, :, None, None],
        d[None, None, :, :],
        pair.vertex_angle_at(le),
        noise,
    )


def group_advantage_table(mc: MiddleChain, noise: NoiseModel) -> np.ndarray:
    """Indicator per midpoint group, axes (group, x1, y1, x2, y2)."""
    return np.stack([pair_advantage_table(mc.pair, noise, p) for p in mc.group_points])


def triple_advantage_table(tc: TripleChain, noise: NoiseModel) -> np.ndarray:
    """Indicator over triple states, axes (x1, y1, x2, y2, xe, ye)."""
    pair = tc.pair_geometry()
    d4 = pair.dist4()
    d1e = d4[:, :, None, None, :, :]
    d2e = d4[None, None, :, :, :, :]
    ang = _cosine_angle(d1e, d2e, pair.d12()[..., None, None])
    return advantage_indicator(pair.d12()[..., None, None], d1e, d2e, ang, noise)


def eve_marginal_advantage(tc: TripleChain, noise: NoiseModel, slot: int) -> np.ndarray:
    """Advantage probability per pair state for an independently moving
    eavesdropper, her position integrated out of the triple indicator
    under her marginal law at ``slot``.  Her chain never conditions on
    the master's own observations, so the factorization is exact."""
    adv = triple_advantage_table(tc, noise)
    p = tc.priors[4]
    k = tc.kernels[4]
    for _ in range(slot):
        p = p @ k
    return np.einsum("abcdef,e,f->abcd", adv, p, p)


def advantage_probability(predictive: np.ndarray, table: np.ndarray) -> float:
    """Contract a pair-state predictive law with an indicator (or
    probability) table of the same shape."""
    return float(np.sum(predictive * table))
