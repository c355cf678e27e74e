import numpy as np
import pytest

from lockey.bounds import (
    LN2,
    EtaBound,
    RateBounds,
    _eta_terms,
    asymptotic_slope,
    entropy_rate,
    eta_bound,
    iid_bounds,
    key_rate_bounds,
)
from lockey.mobility import GridParams, MobileMiddle, RandomMobility, StaticPosition
from lockey.observation import NoiseModel
from lockey.opportunistic import PolicyConfig
from lockey.scenario import Scenario


def _eta_of(q, tref):
    return (0.5 * np.log(2.0 * np.pi * q) - tref) / LN2


def test_eta_terms_oracles():
    q, tref = _eta_terms(np.array(2.0), np.array(1.5), np.array(2.2), NoiseModel(rho_e=0.6))
    assert q == pytest.approx(1463.212372, abs=1e-5)
    assert tref == pytest.approx(1.624432, abs=1e-6)
    assert _eta_of(q, tref) == pytest.approx(4.239650, abs=1e-5)

    q, tref = _eta_terms(np.array(1.0), np.array(1.0), np.array(1.0), NoiseModel())
    assert _eta_of(q, tref) == pytest.approx(4.778320, abs=1e-5)


def test_eta_bound_static_and_middle():
    grid = GridParams(4, 4.0, 1)
    static = Scenario(grid, NoiseModel(rho_e=0.5), attacker=StaticPosition(*grid.cell_to_point([1, 1])))
    eb = eta_bound(static, samples=2000, rng=np.random.default_rng(0))
    assert isinstance(eb, EtaBound)
    assert np.isfinite(eb.eta) and eb.stderr >= 0.0
    assert 0.0 <= eb.excluded < 1.0
    assert eb.samples <= 2000

    middle = Scenario(grid, NoiseModel(rho_e=0.5), attacker=MobileMiddle())
    em = eta_bound(middle, samples=2000, rng=np.random.default_rng(0))
    assert np.isfinite(em.eta)


def test_eta_bound_is_deterministic_under_seed():
    grid = GridParams(3, 3.0, 1)
    sc = Scenario(grid, NoiseModel(rho_e=0.8))
    a = eta_bound(sc, samples=1500, rng=np.random.default_rng(5))
    b = eta_bound(sc, samples=1500, rng=np.random.default_rng(5))
    assert a == b


def test_asymptotic_slope():
    powers = [1.0, 2.0, 4.0, 8.0]
    rates = 0.5 * np.log2(powers) + 3.0
    assert asymptotic_slope(powers, rates) == pytest.approx(0.5)
    assert asymptotic_slope(powers, [2.0] * 4) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        asymptotic_slope([10.0], [1.0])


def test_key_rate_bounds_requires_trials():
    sc = Scenario(GridParams(2, 2.0, 1), NoiseModel(power=10.0))
    with pytest.raises(ValueError):
        key_rate_bounds(sc, n=10, trials=1)


def test_bound_consistency():
    sc = Scenario(GridParams(3, 3.0, 1), NoiseModel(rho_e=0.7, power=10.0))
    rb = key_rate_bounds(sc, n=40, trials=12, rng=np.random.default_rng(2))
    assert isinstance(rb, RateBounds)
    assert rb.upper >= rb.lower >= 0.0
    assert rb.upper == pytest.approx(min(rb.i12, rb.i12_given_e))
    assert rb.lower == pytest.approx(max(0.0, rb.i12 - min(rb.i1e, rb.i2e)))
    assert rb.skip_fraction is None
    assert rb.n == 40 and rb.trials == 12


def test_skip_fraction_reported_with_policy():
    sc = Scenario(
        GridParams(3, 3.0, 1),
        NoiseModel(rho_e=0.5, power=10.0),
        policy=PolicyConfig(),
    )
    rb = key_rate_bounds(sc, n=30, trials=4, rng=np.random.default_rng(3))
    assert rb.skip_fraction is not None
    assert 0.0 <= rb.skip_fraction <= 1.0


def test_memoryless_grid_matches_forward_pass():
    # with the step bound spanning the lattice the chain is memoryless,
    # so the forward recursion and direct per-slot marginalization must
    # produce identical bounds on identical runs
    grid = GridParams(2, 2.0, 1)
    sc = Scenario(grid, NoiseModel(rho_e=0.7, power=10.0))
    fw = key_rate_bounds(sc, n=50, trials=60, rng=np.random.default_rng(11))
    sw = iid_bounds(sc, n=50, trials=60, rng=np.random.default_rng(11))
    for field in ("lower", "upper", "i12", "i1e", "i2e", "i12_given_e"):
        assert abs(getattr(fw, field) - getattr(sw, field)) < 1e-9


def test_iid_bounds_rejects_unsupported():
    grid = GridParams(2, 2.0, 1)
    with pytest.raises(ValueError):
        iid_bounds(Scenario(grid, NoiseModel(), policy=PolicyConfig()))
    with pytest.raises(ValueError):
        iid_bounds(Scenario(grid, NoiseModel(), attacker=MobileMiddle()))


def test_entropy_rate():
    sc = Scenario(GridParams(2, 2.0, 1), NoiseModel(power=10.0))
    val, err = entropy_rate(sc, "12", n=20, trials=5, rng=np.random.default_rng(1))
    assert np.isfinite(val) and err >= 0.0
    with pytest.raises(ValueError):
        entropy_rate(sc, "nonsense", n=10, trials=3)
