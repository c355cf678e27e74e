import numpy as np
import pytest
from scipy.integrate import simpson
from scipy.stats import norm

from lockey.mobility import GridParams, RandomMobility, expected_distance, sample_trajectory
from lockey.observation import (
    ClockMismatch,
    Multipath,
    NoiseModel,
    default_gamma,
    default_gamma_phi,
    default_gamma_phi_bearing,
    estimate_clock_bias,
    gauss_logpdf,
    mask_skipped,
    observe_trajectory,
    wrapped_gauss_logpdf,
)

GRID = GridParams(5, 5.0, 1)


def test_profile_oracles():
    assert np.allclose(default_gamma([0.0, 1.0, 3.0]), [0.1, 1.1, 9.1])
    assert abs(default_gamma_phi(0.0, 0.0) - 0.285599) < 1e-6
    assert abs(default_gamma_phi_bearing(1.0) - 1.645596) < 1e-6


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(power=0.0)
    with pytest.raises(ValueError):
        NoiseModel(rho_e=-1.0)
    nm = NoiseModel(power=4.0, rho1=2.0)
    assert abs(nm.dist_var(1.0, nm.rho1) - 1.1 * 2.0 / 4.0) < 1e-12


def test_series_fields_by_mode(rng):
    traj = sample_trajectory(40, GRID, RandomMobility(), rng)
    s_none = observe_trajectory(traj, "none", NoiseModel(), rng)
    assert s_none.phi_e is not None and s_none.phi1 is None and s_none.loc1 is None
    s_blind = observe_trajectory(traj, "none", NoiseModel(), rng, eve_angle=False)
    assert s_blind.phi_e is None
    s_perf = observe_trajectory(traj, "perfect", NoiseModel(), rng)
    assert s_perf.phi1 is not None and s_perf.phi_1e is not None
    assert np.allclose(s_perf.loc1, traj.points()[:, 0])
    s_pb = observe_trajectory(traj, "perfect", NoiseModel(), rng, eve_angle=False)
    assert s_pb.phi_1e is None and s_pb.phi_2e is None and s_pb.phi1 is not None
    with pytest.raises(ValueError):
        observe_trajectory(traj, "partial", NoiseModel(), rng)


def test_high_power_concentration(rng):
    traj = sample_trajectory(200, GRID, RandomMobility(), rng)
    s = observe_trajectory(traj, "none", NoiseModel(power=1e12), rng)
    pts = traj.points()
    d12 = np.hypot(*(pts[:, 0] - pts[:, 1]).T)
    assert np.max(np.abs(s.d1 - d12)) < 1e-3
    assert np.max(np.abs(s.d2 - d12)) < 1e-3


def test_skip_masking(rng):
    traj = sample_trajectory(30, GRID, RandomMobility(), rng)
    skipped = np.zeros(30, dtype=bool)
    skipped[::3] = True
    s = observe_trajectory(traj, "none", NoiseModel(), rng, skipped=skipped)
    assert np.all(np.isnan(s.d1[skipped])) and np.all(np.isnan(s.phi_e[skipped]))
    assert not np.any(np.isnan(s.d1[~skipped]))
    o1, o2, oe = s.slot(0)
    assert o1 is None and o2 is None and oe is None


def test_mask_after_sampling_matches_unmasked_elsewhere(rng):
    traj = sample_trajectory(30, GRID, RandomMobility(), rng)
    state = rng.bit_generator.state
    full = observe_trajectory(traj, "none", NoiseModel(), np.random.default_rng(9))
    mask = np.zeros(30, dtype=bool)
    mask[5:10] = True
    masked = mask_skipped(full, mask)
    assert np.all(np.isnan(masked.d1[mask]))
    assert np.array_equal(masked.d1[~mask], full.d1[~mask])
    # original series untouched
    assert not np.any(np.isnan(full.d1))
    del state


def test_clock_bias_shifts_and_is_recoverable(rng):
    traj = sample_trajectory(4000, GRID, RandomMobility(), rng)
    s = observe_trajectory(traj, "none", NoiseModel(power=100.0), rng,
                           bias=ClockMismatch(w1=0.7, w2=-0.4))
    ref = expected_distance(GRID)
    assert abs(estimate_clock_bias(s.d1, ref) - 0.7) < 0.08
    assert abs(estimate_clock_bias(s.d2, ref) + 0.4) < 0.08
    with pytest.raises(ValueError):
        estimate_clock_bias(np.array([np.nan]), ref)


def test_multipath_inflates_spread(rng):
    traj = sample_trajectory(3000, GRID, RandomMobility(), rng)
    pts = traj.points()
    d12 = np.hypot(*(pts[:, 0] - pts[:, 1]).T)
    clean = observe_trajectory(traj, "none", NoiseModel(power=1000.0),
                               np.random.default_rng(3))
    noisy = observe_trajectory(traj, "none", NoiseModel(power=1000.0),
                               np.random.default_rng(3), bias=Multipath(sigma=0.5))
    assert np.std(noisy.d1 - d12) > 3 * np.std(clean.d1 - d12)


def test_gauss_logpdf_matches_scipy():
    x = np.linspace(-3, 3, 7)
    assert np.allclose(gauss_logpdf(x, 0.5, 2.0), norm.logpdf(x, 0.5, np.sqrt(2.0)))


def test_wrapped_gauss_normalizes_on_circle():
    xs = np.linspace(-np.pi, np.pi, 4001)
    for var in (0.05, 1.0, 4.0):
        dens = np.exp(wrapped_gauss_logpdf(xs, 0.7, var))
        assert abs(simpson(dens, x=xs) - 1.0) < 1e-3
