"""Scenario assembly: mobility, noise, attacker and exchange policy.

A :class:`Scenario` bundles everything needed to sample one run of the
system.  :func:`sample_run` draws the joint trajectory, samples the
observations and, when a policy is configured, replays the master's
slot-by-slot beacon decisions against his own filter so the returned
series carries the realized skip pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .localization import MiddleChain, PairChain, PairFilter, TripleChain
from .mobility import (
    GridParams,
    MobileMiddle,
    RandomMobility,
    StaticPosition,
    Trajectory,
    nearest_cell,
    sample_trajectory,
)
from .observation import (
    BiasModel,
    LegitObservation,
    NoiseModel,
    ObservationSeries,
    gauss_logpdf,
    mask_skipped,
    observe_trajectory,
    wrapped_gauss_logpdf,
)
from .opportunistic import (
    PolicyConfig,
    SkipPolicy,
    genie_advantage,
    group_advantage_table,
    pair_advantage_table,
    triple_advantage_table,
)

Attacker = Union[StaticPosition, RandomMobility, MobileMiddle]

__all__ = ["Scenario", "Run", "sample_run"]


@dataclass
class Scenario:
    """One simulated deployment.

    ``policy=None`` exchanges beacons every slot.  With a policy, the
    master (node 1) thresholds the advantage probability under his own
    filter; ``genie=True`` replaces the filter with the true geometry.
    """

    grid: GridParams
    noise: NoiseModel
    mode: str = "none"
    attacker: Attacker = field(default_factory=RandomMobility)
    policy: Optional[PolicyConfig] = None
    genie: bool = False
    burn_in: Optional[int] = None
    bias: BiasModel = None
    # False removes the eavesdropper's angular observations, leaving her
    # two ranges only
    eve_angle: bool = True

    def __post_init__(self) -> None:
        if self.genie and self.policy is None:
            raise ValueError("genie decisions need a policy")

    @property
    def eve_kind(self) -> str:
        if isinstance(self.attacker, StaticPosition):
            return "static"
        if isinstance(self.attacker, MobileMiddle):
            return "middle"
        return "random"

    @property
    def eve_point(self) -> np.ndarray:
        """Fixed eavesdropper position (static attacker only)."""
        cell = self.attacker.cell(self.grid)
        return self.grid.cell_to_point(cell)

    @cached_property
    def pair_chain(self) -> PairChain:
        return PairChain(self.grid, self.burn_in)

    @cached_property
    def triple_chain(self) -> TripleChain:
        eve_b = self.attacker.b if isinstance(self.attacker, RandomMobility) else None
        return TripleChain(self.grid, eve_b, self.burn_in)

    @cached_property
    def middle_chain(self) -> MiddleChain:
        return MiddleChain(self.grid, self.burn_in)

    def with_power(self, power: float) -> "Scenario":
        """Same scenario at a different beacon power."""
        return replace(self, noise=replace(self.noise, power=power))

    # advantage tables for the policy loop --------------------------------
    @cached_property
    def _static_advantage(self) -> np.ndarray:
        return pair_advantage_table(self.pair_chain, self.noise, self.eve_point)

    @cached_property
    def _group_advantage(self) -> np.ndarray:
        return group_advantage_table(self.middle_chain, self.noise)

    def _random_advantage(self, n: int) -> np.ndarray:
        """Per-slot advantage probability tables for an independently
        moving eavesdropper, (n, m, m, m, m)."""
        tc = self.triple_chain
        adv = triple_advantage_table(tc, self.noise).astype(float)
        p = tc.priors[4]
        k = tc.kernels[4]
        margs = np.empty((n, p.size))
        for i in range(n):
            margs[i] = p
            p = p @ k
        return np.einsum("abcdef,ie,if->iabcd", adv, margs, margs)


@dataclass
class Run:
    """One sampled run: trajectory, observations (with the realized skip
    pattern) and the per-slot advantage probabilities seen by the
    decision rule (None when no policy is configured)."""

    trajectory: Trajectory
    series: ObservationSeries
    p_advantage: Optional[np.ndarray] = None

    @property
    def skip_fraction(self) -> float:
        return float(self.series.skipped.mean())


def _master_log_emission(scenario: Scenario):
    pair = scenario.pair_chain
    noise = scenario.noise
    d12 = pair.d12()
    vd = noise.dist_var(d12, noise.rho1)
    if scenario.mode == "perfect":
        b12 = pair.bearing_12()
        vb = noise.bearing_var(d12, noise.rho1)
    m = scenario.grid.m

    def log_e(i: int, obs: LegitObservation) -> np.ndarray:
        t = gauss_logpdf(obs.d, d12, vd)
        if scenario.mode == "perfect":
            t = t + wrapped_gauss_logpdf(obs.phi, b12, vb)
            cx, cy = nearest_cell(np.asarray(obs.loc), scenario.grid)
            pin = np.full((m, m, 1, 1), -np.inf)
            pin[cx, cy] = 0.0
            t = t + pin
        return t

    return log_e


def sample_run(scenario: Scenario, n: int, rng: np.random.Generator) -> Run:
    """Draw one run of ``n`` slots under the scenario's policy."""
    traj = sample_trajectory(n, scenario.grid, scenario.attacker, rng, burn_in=scenario.burn_in)
    series = observe_trajectory(
        traj, scenario.mode, scenario.noise, rng, bias=scenario.bias, eve_angle=scenario.eve_angle
    )
    if scenario.policy is None:
        return Run(traj, series)

    policy = SkipPolicy(scenario.policy)
    p_adv = np.empty(n)
    skipped = np.zeros(n, dtype=bool)
    kind = scenario.eve_kind

    if scenario.genie:
        for i in range(n):
            p_adv[i] = 1.0 if genie_advantage(traj[i], scenario.noise) else 0.0
            skipped[i] = policy.decide(p_adv[i])
        return Run(traj, mask_skipped(series, skipped), p_adv)

    filt = PairFilter(scenario.pair_chain, _master_log_emission(scenario))
    tables = scenario._random_advantage(n) if kind == "random" else None
    gadv = scenario._group_advantage if kind == "middle" else None
    mc = scenario.middle_chain if kind == "middle" else None

    for i in range(n):
        if kind == "middle":
            grouped = mc.initial_grouped() if i == 0 else mc.grouped_step(filt.alpha)
            p = float(np.sum(grouped * gadv))
        else:
            pred = filt.predictive()
            table = scenario._static_advantage if kind == "static" else tables[i]
            p = float(np.sum(pred * table))
        p_adv[i] = p
        skip = policy.decide(p)
        skipped[i] = skip
        if skip:
            filt.advance(None)
        else:
            obs = LegitObservation(
                float(series.d1[i]),
                None if series.phi1 is None else float(series.phi1[i]),
                None if series.loc1 is None else tuple(series.loc1[i]),
            )
            filt.advance(obs)
    return Run(traj, mask_skipped(series, skipped), p_adv)
