import numpy as np
import pytest

from lockey.mobility import GridParams, MobileMiddle, RandomMobility, StaticPosition
from lockey.observation import NoiseModel
from lockey.opportunistic import PolicyConfig
from lockey.scenario import Scenario, sample_run


@pytest.fixture
def grid():
    return GridParams(5, 5.0, 1)


def test_genie_requires_policy(grid):
    with pytest.raises(ValueError):
        Scenario(grid, NoiseModel(), genie=True)
    Scenario(grid, NoiseModel(), policy=PolicyConfig(), genie=True)


def test_eve_kind_dispatch(grid):
    assert Scenario(grid, NoiseModel()).eve_kind == "random"
    assert Scenario(grid, NoiseModel(), attacker=MobileMiddle()).eve_kind == "middle"
    point = grid.cell_to_point([2, 2])
    sc = Scenario(grid, NoiseModel(), attacker=StaticPosition(*point))
    assert sc.eve_kind == "static"
    assert sc.eve_point == pytest.approx(point)


def test_eve_point_requires_static(grid):
    with pytest.raises(AttributeError):
        Scenario(grid, NoiseModel()).eve_point


def test_with_power_only_touches_noise(grid):
    sc = Scenario(grid, NoiseModel(power=1.0, rho_e=0.7), "perfect")
    hot = sc.with_power(250.0)
    assert hot.noise.power == 250.0
    assert hot.noise.rho_e == 0.7
    assert hot.mode == "perfect"
    assert sc.noise.power == 1.0  # original untouched


def test_sample_run_shapes(grid):
    sc = Scenario(grid, NoiseModel(power=10.0), "perfect")
    run = sample_run(sc, 60, np.random.default_rng(0))
    assert run.trajectory.idx.shape == (60, 3, 2)
    assert run.series.d1.shape == (60,)
    assert run.series.skipped.shape == (60,)
    assert not run.series.skipped.any()
    assert run.p_advantage is None


def test_sample_run_is_deterministic(grid):
    sc = Scenario(grid, NoiseModel(power=10.0), "none", policy=PolicyConfig())
    a = sample_run(sc, 80, np.random.default_rng(42))
    b = sample_run(sc, 80, np.random.default_rng(42))
    assert np.array_equal(a.trajectory.idx, b.trajectory.idx)
    assert np.array_equal(a.series.skipped, b.series.skipped)
    assert np.allclose(a.p_advantage, b.p_advantage)


def test_skipped_slots_mask_observations(grid):
    sc = Scenario(
        grid,
        NoiseModel(rho_e=0.5, power=10.0),
        "none",
        policy=PolicyConfig(tau=0.5, max_skip_run=4),
    )
    run = sample_run(sc, 200, np.random.default_rng(7))
    skipped = run.series.skipped
    assert 0 < skipped.sum() < 200
    assert np.isnan(run.series.d1[skipped]).all()
    assert np.isfinite(run.series.d1[~skipped]).all()


def test_middle_attacker_tracks_midpoint(grid):
    sc = Scenario(grid, NoiseModel(power=10.0), "none", attacker=MobileMiddle())
    run = sample_run(sc, 40, np.random.default_rng(9))
    pts = run.trajectory.points()
    from lockey.mobility import attacker_middle_target

    for t in range(1, 40):
        want = attacker_middle_target(pts[t - 1, 0], pts[t - 1, 1], grid)
        assert pts[t, 2] == pytest.approx(want)
