import numpy as np
import pytest

from lockey.mobility import GridParams, RandomMobility, StateTriple
from lockey.observation import NoiseModel
from lockey.opportunistic import (
    PolicyConfig,
    SkipPolicy,
    advantage_indicator,
    eve_distance_variance,
    genie_advantage,
    linearized_eve_distance,
)
from lockey.scenario import Scenario, sample_run


def test_policy_config_validation():
    PolicyConfig(tau=0.0, max_skip_run=1)
    with pytest.raises(ValueError):
        PolicyConfig(tau=1.5)
    with pytest.raises(ValueError):
        PolicyConfig(max_skip_run=0)


def test_skip_policy_run_cap():
    policy = SkipPolicy(PolicyConfig(tau=0.5, max_skip_run=4))
    decisions = [policy.decide(0.0) for _ in range(12)]
    # four skips, one forced send, repeating
    assert decisions == [True] * 4 + [False] + [True] * 4 + [False] + [True] * 2
    # a confident slot resets nothing because the run is already over
    assert policy.decide(0.9) is False
    assert policy.run == 0


def test_linearized_distance_oracles():
    assert linearized_eve_distance(3.0, 4.0, np.pi / 2) == pytest.approx(5.0)
    # numerically negative squares clamp to zero
    assert linearized_eve_distance(1.0, 1.0, 1e-9) == pytest.approx(0.0, abs=1e-6)


def test_eve_variance_oracles():
    nm = NoiseModel(rho_e=1.0)
    # collinear geometry kills the angle term
    assert eve_distance_variance(1.0, 2.0, 0.0, nm) == pytest.approx(5.2)
    assert eve_distance_variance(1.0, 2.0, 0.0, NoiseModel(rho_e=2.0)) == pytest.approx(10.4)
    # side 2 equilateral triangle: range term 2.05, angle term 8.389088
    assert eve_distance_variance(2.0, 2.0, np.pi / 3, nm) == pytest.approx(10.439088, abs=1e-5)
    # coincident nodes give a zero, never a NaN
    assert eve_distance_variance(1.0, 1.0, 0.0, nm) == 0.0


def test_advantage_indicator_degenerate_and_monotone():
    quiet = NoiseModel(rho_e=1e-6)
    loud = NoiseModel(rho_e=1e6)
    assert not advantage_indicator(0.0, 1.0, 1.0, 1.0, loud)
    assert not advantage_indicator(2.0, 2.0, 2.0, np.pi / 3, quiet)
    assert advantage_indicator(2.0, 2.0, 2.0, np.pi / 3, loud)


def test_genie_matches_indicator():
    state = StateTriple((0.0, 0.0), (3.0, 4.0), (0.0, 4.0))
    assert state.d12 == pytest.approx(5.0)
    assert state.d1e == pytest.approx(4.0)
    assert state.d2e == pytest.approx(3.0)
    for rho_e in (0.01, 1.0, 100.0):
        nm = NoiseModel(rho_e=rho_e)
        want = bool(advantage_indicator(state.d12, state.d1e, state.d2e, state.phi_e, nm))
        assert genie_advantage(state, nm) == want


def _longest_run(mask):
    best = cur = 0
    for s in mask:
        cur = cur + 1 if s else 0
        best = max(best, cur)
    return best


def test_sampled_run_respects_policy():
    grid = GridParams(5, 5.0, 1)
    sc = Scenario(
        grid,
        NoiseModel(rho_e=0.5, power=10.0),
        "none",
        RandomMobility(),
        policy=PolicyConfig(tau=0.5, max_skip_run=4),
    )
    run = sample_run(sc, 300, np.random.default_rng(3))
    skipped = run.series.skipped
    assert _longest_run(skipped) <= 4
    assert run.p_advantage.shape == (300,)
    # every skip was taken because the advantage looked unlikely
    assert np.all(run.p_advantage[skipped] < 0.5)
    assert run.skip_fraction == pytest.approx(skipped.mean())


def test_genie_run_uses_binary_probabilities():
    grid = GridParams(5, 5.0, 1)
    sc = Scenario(
        grid,
        NoiseModel(rho_e=0.5, power=10.0),
        "none",
        RandomMobility(),
        policy=PolicyConfig(),
        genie=True,
    )
    run = sample_run(sc, 200, np.random.default_rng(4))
    assert set(np.unique(run.p_advantage)) <= {0.0, 1.0}
    assert _longest_run(run.series.skipped) <= 4


def test_run_without_policy_never_skips():
    grid = GridParams(4, 4.0, 1)
    sc = Scenario(grid, NoiseModel(power=10.0), "none", RandomMobility())
    run = sample_run(sc, 50, np.random.default_rng(5))
    assert run.p_advantage is None
    assert run.skip_fraction == 0.0
