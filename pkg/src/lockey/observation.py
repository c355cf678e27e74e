"""Per-slot beacon observation models.

Each transmitted beacon yields Gaussian distance estimates whose variance
grows with distance and shrinks with beacon power ``P``: a distance
observation at true distance ``d`` taken by a receiver with noise factor
``rho`` has variance ``gamma(d) * rho / P``.  Angle observations follow a
wrapped Gaussian with variances driven by ``gamma_phi`` (the angle under
which the eavesdropper sees the node pair) or by the single-distance
bearing profile (geolocation-aided modes).

Two geolocation information (GLI) modes are supported:

* ``"none"``: node ``j`` sees only the distance estimate of the peer
  link; the eavesdropper sees distance estimates to both nodes plus a
  noisy copy of the vertex angle under which she sees them.
* ``"perfect"``: every receiver additionally knows its own position
  exactly and measures a noisy bearing to each transmitter.

Observed values are real numbers (distance estimates may go negative at
low power); skipped slots carry NaN and a ``skipped`` flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .geometry import TWO_PI, angle_at, bearing, dist, wrap_angle
from .mobility import StateTriple, Trajectory

__all__ = [
    "GLI_MODES",
    "default_gamma",
    "default_gamma_phi",
    "default_gamma_phi_bearing",
    "NoiseModel",
    "ClockMismatch",
    "Multipath",
    "LegitObservation",
    "EveObservation",
    "ObservationSeries",
    "observe_slot",
    "observe_trajectory",
    "estimate_clock_bias",
    "gauss_logpdf",
    "wrapped_gauss_logpdf",
]

GLI_MODES = ("none", "perfect")


def default_gamma(d):
    """Distance-noise profile ``0.1 + d**2``; strictly positive."""
    d = np.asarray(d, dtype=float)
    return 0.1 + d * d


def default_gamma_phi(d1e, d2e):
    """Vertex-angle noise profile ``pi - pi / (1.1 + d1e**2 + d2e**2)``.

    Grows toward ``pi`` as the eavesdropper recedes from both nodes and
    stays bounded away from zero, so the angle observation is always
    noisy but never degenerate.
    """
    d1e = np.asarray(d1e, dtype=float)
    d2e = np.asarray(d2e, dtype=float)
    return np.pi - np.pi / (1.1 + d1e * d1e + d2e * d2e)


def default_gamma_phi_bearing(d):
    """Bearing-noise profile ``pi - pi / (1.1 + d**2)`` for GLI modes."""
    d = np.asarray(d, dtype=float)
    return np.pi - np.pi / (1.1 + d * d)


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise configuration.

    ``rho1``, ``rho2``, ``rho_e`` scale the noise of node 1, node 2 and
    the eavesdropper; ``power`` is the common beacon power ``P``.  All
    variances take the form ``profile(distance) * rho / power``.
    """

    power: float = 1.0
    rho1: float = 1.0
    rho2: float = 1.0
    rho_e: float = 1.0
    gamma: Callable = field(default=default_gamma)
    gamma_phi: Callable = field(default=default_gamma_phi)
    gamma_phi_bearing: Callable = field(default=default_gamma_phi_bearing)

    def __post_init__(self) -> None:
        for name in ("power", "rho1", "rho2", "rho_e"):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be positive" % name)

    def dist_var(self, d, rho: float):
        return self.gamma(d) * (rho / self.power)

    def vertex_var(self, d1e, d2e):
        return self.gamma_phi(d1e, d2e) * (self.rho_e / self.power)

    def bearing_var(self, d, rho: float):
        return self.gamma_phi_bearing(d) * (rho / self.power)


@dataclass(frozen=True)
class ClockMismatch:
    """Constant unknown ranging offsets added to the two nodes' distance
    estimates (imperfect clock synchronization)."""

    w1: float
    w2: float


@dataclass(frozen=True)
class Multipath:
    """Extra zero-mean Gaussian error of standard deviation ``sigma``
    added per slot to the legitimate nodes' distance estimates."""

    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise ValueError("multipath sigma must be nonnegative")


BiasModel = Union[ClockMismatch, Multipath, None]


@dataclass(frozen=True)
class LegitObservation:
    """One node's observation in one slot: distance estimate of the peer
    link, plus bearing to the peer and own exact location under perfect
    GLI."""

    d: float
    phi: Optional[float] = None
    loc: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class EveObservation:
    """Eavesdropper observation in one slot: distance estimates to both
    nodes, plus either the noisy vertex angle (no GLI) or bearings to
    both nodes and her own exact location (perfect GLI)."""

    d1: float
    d2: float
    phi: Optional[float] = None
    phi1: Optional[float] = None
    phi2: Optional[float] = None
    loc: Optional[Tuple[float, float]] = None


@dataclass
class ObservationSeries:
    """Bulk per-slot observations for a whole trajectory.

    Arrays have length ``n``; fields absent in the configured GLI mode
    are ``None``.  Skipped slots hold NaN and set ``skipped``.
    """

    mode: str
    skipped: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d1e: np.ndarray
    d2e: np.ndarray
    phi_e: Optional[np.ndarray] = None
    phi1: Optional[np.ndarray] = None
    phi2: Optional[np.ndarray] = None
    phi_1e: Optional[np.ndarray] = None
    phi_2e: Optional[np.ndarray] = None
    loc1: Optional[np.ndarray] = None
    loc2: Optional[np.ndarray] = None
    loc_e: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.skipped.shape[0]

    def slot(self, i: int) -> Tuple[Optional[LegitObservation], Optional[LegitObservation], Optional[EveObservation]]:
        """Per-slot records; all three are ``None`` on a skipped slot."""
        if self.skipped[i]:
            return None, None, None
        if self.mode == "perfect":
            o1 = LegitObservation(self.d1[i], float(self.phi1[i]), tuple(self.loc1[i]))
            o2 = LegitObservation(self.d2[i], float(self.phi2[i]), tuple(self.loc2[i]))
            b1 = None if self.phi_1e is None else float(self.phi_1e[i])
            b2 = None if self.phi_2e is None else float(self.phi_2e[i])
            oe = EveObservation(self.d1e[i], self.d2e[i], None, b1, b2, tuple(self.loc_e[i]))
        else:
            o1 = LegitObservation(self.d1[i])
            o2 = LegitObservation(self.d2[i])
            phi = None if self.phi_e is None else float(self.phi_e[i])
            oe = EveObservation(self.d1e[i], self.d2e[i], phi)
        return o1, o2, oe


def _check_mode(mode: str) -> None:
    if mode not in GLI_MODES:
        raise ValueError("unknown GLI mode %r; expected one of %s" % (mode, GLI_MODES))


def observe_slot(
    state: StateTriple,
    mode: str,
    noise: NoiseModel,
    rng: np.random.Generator,
    bias: BiasModel = None,
) -> Tuple[LegitObservation, LegitObservation, EveObservation]:
    """Sample one slot of observations for all three receivers."""
    _check_mode(mode)
    p = noise.power
    d12, d1e, d2e = state.d12, state.d1e, state.d2e

    def gdist(d, rho):
        return d + rng.normal(0.0, np.sqrt(noise.dist_var(d, rho)))

    def gangle(mu, var):
        return float(wrap_angle(mu + rng.normal(0.0, np.sqrt(var))))

    d1 = gdist(d12, noise.rho1)
    d2 = gdist(d12, noise.rho2)
    if isinstance(bias, ClockMismatch):
        d1 += bias.w1
        d2 += bias.w2
    elif isinstance(bias, Multipath) and bias.sigma > 0:
        d1 += rng.normal(0.0, bias.sigma)
        d2 += rng.normal(0.0, bias.sigma)
    de1 = gdist(d1e, noise.rho_e)
    de2 = gdist(d2e, noise.rho_e)

    if mode == "perfect":
        o1 = LegitObservation(d1, gangle(state.phi_12, noise.bearing_var(d12, noise.rho1)), state.l1)
        o2 = LegitObservation(d2, gangle(state.phi_21, noise.bearing_var(d12, noise.rho2)), state.l2)
        oe = EveObservation(
            de1,
            de2,
            None,
            gangle(state.phi_1e, noise.bearing_var(d1e, noise.rho_e)),
            gangle(state.phi_2e, noise.bearing_var(d2e, noise.rho_e)),
            state.le,
        )
    else:
        o1 = LegitObservation(d1)
        o2 = LegitObservation(d2)
        oe = EveObservation(de1, de2, gangle(state.phi_e, noise.vertex_var(d1e, d2e)))
    return o1, o2, oe


def observe_trajectory(
    traj: Trajectory,
    mode: str,
    noise: NoiseModel,
    rng: np.random.Generator,
    bias: BiasModel = None,
    skipped: Optional[np.ndarray] = None,
    eve_angle: bool = True,
) -> ObservationSeries:
    """Sample observations for every slot of a trajectory at once.

    ``skipped`` marks slots without a beacon exchange; their fields are
    NaN.  Draws are made for every slot regardless, so the result depends
    only on ``(traj, rng state, skipped)`` and not on the skip pattern's
    interleaving with sampling.  ``eve_angle=False`` strips the
    eavesdropper's angular fields, leaving her ranging only.
    """
    _check_mode(mode)
    n = len(traj)
    pts = traj.points()
    p1, p2, pe = pts[:, 0], pts[:, 1], pts[:, 2]
    d12, d1e, d2e = dist(p1, p2), dist(p1, pe), dist(p2, pe)

    def gdist(d, rho):
        return d + rng.normal(size=n) * np.sqrt(noise.dist_var(d, rho))

    def gangle(mu, var):
        return wrap_angle(mu + rng.normal(size=n) * np.sqrt(var))

    d1 = gdist(d12, noise.rho1)
    d2 = gdist(d12, noise.rho2)
    if isinstance(bias, ClockMismatch):
        d1 = d1 + bias.w1
        d2 = d2 + bias.w2
    elif isinstance(bias, Multipath) and bias.sigma > 0:
        d1 = d1 + rng.normal(size=n) * bias.sigma
        d2 = d2 + rng.normal(size=n) * bias.sigma
    de1 = gdist(d1e, noise.rho_e)
    de2 = gdist(d2e, noise.rho_e)

    series = ObservationSeries(
        mode=mode,
        skipped=np.zeros(n, dtype=bool) if skipped is None else np.asarray(skipped, dtype=bool).copy(),
        d1=d1,
        d2=d2,
        d1e=de1,
        d2e=de2,
    )
    if mode == "perfect":
        series.phi1 = gangle(bearing(p1, p2), noise.bearing_var(d12, noise.rho1))
        series.phi2 = gangle(bearing(p2, p1), noise.bearing_var(d12, noise.rho2))
        if eve_angle:
            series.phi_1e = gangle(bearing(pe, p1), noise.bearing_var(d1e, noise.rho_e))
            series.phi_2e = gangle(bearing(pe, p2), noise.bearing_var(d2e, noise.rho_e))
        series.loc1 = p1.copy()
        series.loc2 = p2.copy()
        series.loc_e = pe.copy()
    elif eve_angle:
        series.phi_e = gangle(angle_at(pe, p1, p2), noise.vertex_var(d1e, d2e))

    if series.skipped.any():
        _hide_skipped(series)
    return series


def _hide_skipped(series: ObservationSeries) -> None:
    hide = series.skipped
    for name in ("d1", "d2", "d1e", "d2e", "phi_e", "phi1", "phi2", "phi_1e", "phi_2e", "loc1", "loc2", "loc_e"):
        arr = getattr(series, name)
        if arr is not None:
            arr[hide] = np.nan


def mask_skipped(series: ObservationSeries, skipped: np.ndarray) -> ObservationSeries:
    """Copy of a series with the given slots hidden.

    Sampling a fully observed series first and masking afterwards is
    equivalent to never drawing the skipped slots, since per-slot draws
    are independent; it keeps the noise realization identical across
    policies over the same trajectory.
    """
    skipped = np.asarray(skipped, dtype=bool)
    if skipped.shape != series.skipped.shape:
        raise ValueError("skip mask length must match the series")
    fields = {"mode": series.mode, "skipped": series.skipped | skipped}
    for name in ("d1", "d2", "d1e", "d2e", "phi_e", "phi1", "phi2", "phi_1e", "phi_2e", "loc1", "loc2", "loc_e"):
        arr = getattr(series, name)
        fields[name] = None if arr is None else arr.copy()
    out = ObservationSeries(**fields)
    _hide_skipped(out)
    return out


def estimate_clock_bias(observations: np.ndarray, mean_distance: float) -> float:
    """Estimate a constant ranging offset as the gap between the mean
    observed distance and the model's mean node separation.  NaN entries
    (skipped slots) are ignored."""
    obs = np.asarray(observations, dtype=float)
    obs = obs[~np.isnan(obs)]
    if obs.size == 0:
        raise ValueError("no observations available for bias estimation")
    return float(obs.mean() - mean_distance)


def gauss_logpdf(x, mean, var):
    """Gaussian log-density, broadcasting over all arguments."""
    x = np.asarray(x, dtype=float)
    d = x - mean
    return -0.5 * (d * d / var + np.log(TWO_PI * var))


def wrapped_gauss_logpdf(x, mean, var):
    """Log-density on ``(-pi, pi]`` of a Gaussian wrapped onto the circle.

    The shift range covers four standard deviations of the widest
    component so the truncated sum matches the sampled distribution
    (sample, then wrap) to floating-point accuracy at every variance used
    in practice.  Accumulation loops over shifts to keep peak memory at a
    few copies of the broadcast result, which matters for the larger
    state-space emission tables.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    sig_max = float(np.sqrt(var.max())) if var.size else 0.0
    k_max = int(np.ceil(4.0 * sig_max / TWO_PI)) + 1
    shifts = TWO_PI * np.arange(-k_max, k_max + 1)
    diff = x - mean
    top = None
    for s in shifts:
        lp = gauss_logpdf(diff, s, var)
        top = lp if top is None else np.maximum(top, lp)
    acc = np.zeros_like(top)
    for s in shifts:
        acc += np.exp(gauss_logpdf(diff, s, var) - top)
    return top + np.log(acc)
