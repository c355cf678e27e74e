"""HMM localization over the joint mobility state.

The hidden state is the tuple of grid cells occupied by the nodes (and,
when attacker statistics are modeled, the eavesdropper).  Chains factor
per axis: every transition kernel is a product of per-axis window
kernels, so propagation runs as a sequence of small matrix contractions
instead of one multiplication by the full joint kernel.

Emission densities factor per observed field.  A :class:`Factor` stores
the log-density of one field as a table over the minimal subset of state
axes the field depends on (a distance estimate between node 1 and the
eavesdropper needs only their four axes, for example), built lazily in
slot chunks to bound memory.  The forward pass and the Viterbi recursion
consume these factors directly:

* forward: linear domain with per-slot normalization, accumulating the
  log-likelihood from the normalizers plus per-factor max shifts;
* Viterbi: log domain, maximizing per axis from the last state axis to
  the first so that ties resolve to the lexicographically smallest
  predecessor, matching a flat argmax in C order.

Skipped slots (no beacon) contribute no emission and propagate the state
law unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import wrap_angle
from .mobility import GridParams, axis_marginal
from .observation import (
    EveObservation,
    LegitObservation,
    NoiseModel,
    ObservationSeries,
    gauss_logpdf,
    wrapped_gauss_logpdf,
)

__all__ = [
    "quantize",
    "quantize_index",
    "quantize_scalar",
    "PairChain",
    "TripleChain",
    "MiddleChain",
    "Factor",
    "emission_factors",
    "forward_tuples",
    "HmmModel",
    "ForwardResult",
    "EstimateTrack",
    "forward_posterior",
    "viterbi_ml_sequence",
    "PairFilter",
    "direct_estimate",
    "DEFAULT_VITERBI_STATE_CAP",
]

DEFAULT_VITERBI_STATE_CAP = 10_000


# ---------------------------------------------------------------------------
# location quantizer


def quantize_scalar(x, step):
    """Nearest multiple of ``step``; exact midpoints round down."""
    x = np.asarray(x, dtype=float)
    return step * np.ceil(x / step - 0.5)


def quantize_index(point, delta) -> np.ndarray:
    """Integer lattice index of :func:`quantize` (last axis length 2)."""
    if not delta > 0:
        raise ValueError("quantizer step delta must be positive")
    pitch = delta / np.sqrt(2.0)
    t = np.asarray(point, dtype=float) / pitch
    return np.ceil(t - 0.5).astype(np.int64)


def quantize(point, delta) -> np.ndarray:
    """Quantize a point onto the lattice ``{u * delta / sqrt(2)}**2``.

    The lattice pitch ``delta / sqrt(2)`` makes ``delta`` the diagonal of
    one lattice cell, i.e. the largest displacement that cannot cross
    more than one lattice point per axis.  Ties round toward the
    lexicographically smaller lattice point.
    """
    return quantize_index(point, delta) * (delta / np.sqrt(2.0))


# ---------------------------------------------------------------------------
# chains


class _ProductChain:
    """Markov chain whose kernel and initial law factor per axis."""

    def __init__(self, kernels: Sequence[np.ndarray], priors: Sequence[np.ndarray]):
        if len(kernels) != len(priors):
            raise ValueError("one prior per axis kernel required")
        self.kernels = [np.asarray(k, dtype=float) for k in kernels]
        self.priors = [np.asarray(p, dtype=float) for p in priors]
        self.rank = len(kernels)
        self.shape = tuple(k.shape[0] for k in self.kernels)
        self.size = int(np.prod(self.shape))

    def prior_tensor(self) -> np.ndarray:
        out = np.ones(())
        for p in self.priors:
            out = np.multiply.outer(out, p)
        return out.reshape(self.shape)

    def log_prior_tensor(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            out = np.zeros(self.shape)
            for a, p in enumerate(self.priors):
                out += np.log(p).reshape([-1 if i == a else 1 for i in range(self.rank)])
        return out

    def propagate(self, alpha: np.ndarray) -> np.ndarray:
        """One transition step applied to ``alpha`` of shape
        ``(batch..., *self.shape)``; batch axes stay in front."""
        lead = alpha.shape[: alpha.ndim - self.rank]
        flat = alpha.reshape((-1,) + self.shape)
        for k in self.kernels:
            # contract the leading state axis; the renewed axis lands at
            # the back, so one sweep over all axes restores the layout
            flat = np.tensordot(flat, k, axes=(1, 0))
        return flat.reshape(lead + self.shape)


class PairChain(_ProductChain):
    """Joint chain of the two legitimate nodes: axes (x1, y1, x2, y2)."""

    def __init__(self, grid: GridParams, burn_in: Optional[int] = None):
        self.grid = grid
        self.burn_in = grid.default_burn_in if burn_in is None else burn_in
        k = grid.axis_kernel()
        p = axis_marginal(grid, self.burn_in)
        super().__init__([k] * 4, [p] * 4)
        self._cache: dict = {}

    # geometry tables ------------------------------------------------
    def _coords(self) -> np.ndarray:
        return self.grid.coords()

    def dist4(self) -> np.ndarray:
        """Distance between two generic grid points, axes (x,y,x',y')."""
        if "dist4" not in self._cache:
            c = self._coords()
            dx = c[:, None] - c[None, :]
            self._cache["dist4"] = np.hypot(dx[:, None, :, None], dx[None, :, None, :])
        return self._cache["dist4"]

    def bear4(self) -> np.ndarray:
        """Bearing from the second generic point toward the first,
        axes (x_target, y_target, x_origin, y_origin)."""
        if "bear4" not in self._cache:
            c = self._coords()
            dx = c[:, None] - c[None, :]
            self._cache["bear4"] = np.arctan2(dx[None, :, None, :], dx[:, None, :, None])
        return self._cache["bear4"]

    def d12(self) -> np.ndarray:
        return self.dist4()

    def bearing_12(self) -> np.ndarray:
        """Bearing of node 2 as seen from node 1, axes (x1, y1, x2, y2)."""
        return self.bear4().transpose(2, 3, 0, 1)

    def bearing_21(self) -> np.ndarray:
        return self.bear4()

    def dist_to_point(self, point) -> np.ndarray:
        """Distance from a generic grid point to a fixed point, (m, m)."""
        c = self._coords()
        return np.hypot(c[:, None] - point[0], c[None, :] - point[1])

    def bearing_from_point(self, point) -> np.ndarray:
        """Bearing of a generic grid point as seen from a fixed point."""
        c = self._coords()
        return np.arctan2(c[None, :] - point[1], c[:, None] - point[0])

    def vertex_angle_at(self, point) -> np.ndarray:
        """Angle under which a fixed point sees the node pair, (m,)*4."""
        d = self.dist_to_point(point)
        return _cosine_angle(
            d[:, :, None, None],
            d[None, None, :, :],
            self.d12(),
        )


class TripleChain(_ProductChain):
    """Joint chain including the eavesdropper: axes
    (x1, y1, x2, y2, xe, ye); the eavesdropper has her own step bound."""

    def __init__(self, grid: GridParams, eve_b: Optional[int] = None, burn_in: Optional[int] = None):
        self.grid = grid
        self.burn_in = grid.default_burn_in if burn_in is None else burn_in
        k = grid.axis_kernel()
        eve_grid = GridParams(grid.m, grid.a, grid.b if eve_b is None else eve_b)
        ke = eve_grid.axis_kernel()
        p = axis_marginal(grid, self.burn_in)
        pe = axis_marginal(eve_grid, self.burn_in)
        super().__init__([k] * 4 + [ke] * 2, [p] * 4 + [pe] * 2)
        self._pair = PairChain(grid, self.burn_in)

    def pair_geometry(self) -> PairChain:
        return self._pair


class MiddleChain:
    """Pair chain augmented with the midpoint eavesdropper.

    Her position in slot ``i`` is the deterministic lattice point nearest
    the midpoint of the previous pair state, so conditioning on her
    observations couples consecutive pair states.  The forward pass
    therefore propagates the filtered pair law separately for every
    previous-midpoint group and reweights each group by the eavesdropper
    emission before summing.

    In the first returned slot her position derives from the final
    burn-in state, modeled exactly by one grouped step from the marginal
    one slot before the trajectory starts (uniform mixture over the
    lattice when there is no burn-in).
    """

    def __init__(self, grid: GridParams, burn_in: Optional[int] = None):
        self.grid = grid
        self.burn_in = grid.default_burn_in if burn_in is None else burn_in
        self.pair = PairChain(grid, self.burn_in)
        self.shape = self.pair.shape
        self.rank = 4
        m = grid.m
        self.n_groups = m * m
        # group of a pair state: lattice index of the point nearest the
        # midpoint, encoded as xe * m + ye
        c = grid.coords()
        midx = 0.5 * (c[:, None] + c[None, :])
        ix = np.clip(np.ceil(midx / grid.pitch - 1.5).astype(np.int64), 0, m - 1)
        # ix[u, u'] is the per-axis midpoint cell; axes of the map are
        # (x1, y1, x2, y2), group id encodes (xe, ye) as xe * m + ye
        self.group_map = ix[:, None, :, None] * m + ix[None, :, None, :]
        onehot = np.zeros((self.n_groups,) + self.shape)
        np.put_along_axis(onehot, self.group_map[None], 1.0, axis=0)
        self.group_onehot = onehot
        gi = np.arange(m * m)
        self.group_points = np.stack([c[gi // m], c[gi % m]], axis=-1)
        if self.burn_in >= 1:
            p0 = axis_marginal(grid, self.burn_in - 1)
            self._pre_prior = [p0] * 4
        else:
            self._pre_prior = None

    def masked_by_group(self, alpha: np.ndarray) -> np.ndarray:
        """Split ``(..., *shape)`` into ``(..., n_groups, *shape)`` with
        each slab carrying the mass of one midpoint group."""
        return alpha[..., None, :, :, :, :] * self.group_onehot

    def grouped_step(self, alpha: np.ndarray) -> np.ndarray:
        """Propagate one slot, keeping the previous-midpoint group axis:
        returns ``(..., n_groups, *shape)``."""
        return self.pair.propagate(self.masked_by_group(alpha))

    def initial_grouped(self) -> np.ndarray:
        """Slot-1 law split by the eavesdropper's slot-1 group,
        ``(n_groups, *shape)``."""
        if self._pre_prior is None:
            prior = self.pair.prior_tensor()
            return np.broadcast_to(prior / self.n_groups, (self.n_groups,) + self.shape).copy()
        p0 = np.ones(())
        for p in self._pre_prior:
            p0 = np.multiply.outer(p0, p)
        return self.grouped_step(p0.reshape(self.shape))


def _cosine_angle(d1, d2, d12):
    denom = 2.0 * d1 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (d1 * d1 + d2 * d2 - d12 * d12) / denom
    c = np.where(denom > 0.0, c, 1.0)
    return np.arccos(np.clip(c, -1.0, 1.0))


# ---------------------------------------------------------------------------
# emission factors


@dataclass
class Factor:
    """Log-density of one observed field over a subset of state axes.

    ``rows(lo, hi)`` returns the table for slots ``lo..hi-1`` with shape
    ``(hi - lo, *sub_shape)``; tables are built on demand so a forward
    pass over a long trajectory never materializes the full tensor.
    ``active`` masks slots where the field carries information (skipped
    slots do not).
    """

    axes: Tuple[int, ...]
    sub_shape: Tuple[int, ...]
    rows_fn: Callable[[int, int], np.ndarray]
    active: np.ndarray
    _chunk: Optional[Tuple[int, int, np.ndarray]] = field(default=None, repr=False)

    def rows(self, lo: int, hi: int) -> np.ndarray:
        if self._chunk is None or self._chunk[0] != lo or self._chunk[1] != hi:
            self._chunk = (lo, hi, self.rows_fn(lo, hi))
        return self._chunk[2]

    def broadcast_shape(self, rank: int) -> Tuple[int, ...]:
        shape = [1] * rank
        for a, s in zip(self.axes, self.sub_shape):
            shape[a] = s
        return tuple(shape)


def _auto_chunk(factors, chunk: int, budget: int = 2_000_000) -> int:
    # keep any one chunked emission table under the element budget
    big = 1
    for f in factors:
        big = max(big, int(np.prod(f.sub_shape)))
    return max(1, min(chunk, budget // big))


def _clean(obs: np.ndarray, active: np.ndarray) -> np.ndarray:
    out = np.asarray(obs, dtype=float).copy()
    out[~active] = 0.0
    return out


def _gauss_factor(axes, mean, var, obs, active, wrapped=False) -> Factor:
    """Factor for a Gaussian (or wrapped Gaussian) field whose mean and
    variance tables are fixed over slots."""
    mean = np.asarray(mean, dtype=float)
    sub_shape = mean.shape
    flat_mean = np.ascontiguousarray(mean).ravel()
    flat_var = np.broadcast_to(np.asarray(var, dtype=float), sub_shape).ravel()
    obs = _clean(obs, active)
    fn = wrapped_gauss_logpdf if wrapped else gauss_logpdf

    def rows(lo, hi):
        tab = fn(obs[lo:hi, None], flat_mean[None, :], flat_var[None, :])
        return tab.reshape((hi - lo,) + sub_shape)

    return Factor(tuple(axes), sub_shape, rows, np.asarray(active, dtype=bool))


def _gauss_factor_per_slot(axes, mean_path, var_path, obs, active, wrapped=False) -> Factor:
    """Same as :func:`_gauss_factor` with per-slot mean and variance
    tables (eavesdropper geometry changes every slot)."""
    sub_shape = mean_path.shape[1:]
    obs = _clean(obs, active)
    fn = wrapped_gauss_logpdf if wrapped else gauss_logpdf

    def rows(lo, hi):
        o = obs[lo:hi].reshape((hi - lo,) + (1,) * len(sub_shape))
        return fn(o, mean_path[lo:hi], var_path[lo:hi])

    return Factor(tuple(axes), sub_shape, rows, np.asarray(active, dtype=bool))


def _cell_indicator_factor(axes, m, pitch, loc_path, active) -> Factor:
    """Exact own-location observation: zero log-density at the observed
    cell, minus infinity elsewhere."""
    idx = np.zeros((len(active), 2), dtype=np.int64)
    ok = np.asarray(active, dtype=bool)
    if ok.any():
        idx[ok] = np.round(np.asarray(loc_path, dtype=float)[ok] / pitch - 1.0).astype(np.int64)

    def rows(lo, hi):
        tab = np.full((hi - lo, m, m), -np.inf)
        for r, i in enumerate(range(lo, hi)):
            if ok[i]:
                tab[r, idx[i, 0], idx[i, 1]] = 0.0
            else:
                tab[r, :, :] = 0.0
        return tab

    return Factor(tuple(axes), (m, m), rows, ok)


def emission_factors(
    chain: Union[PairChain, TripleChain],
    series: ObservationSeries,
    who: str,
    noise: NoiseModel,
    static_le=None,
    eve_path: Optional[np.ndarray] = None,
) -> List[Factor]:
    """Build the emission factors of one observer's fields.

    ``who`` is ``"node1"``, ``"node2"`` or ``"eve"``.  Eavesdropper
    factors need her position: on a :class:`TripleChain` it is part of
    the state; on a :class:`PairChain` pass either ``static_le`` (fixed
    point) or ``eve_path`` (her realized positions, shape ``(n, 2)``).
    """
    active = ~series.skipped
    pair = chain.pair_geometry() if isinstance(chain, TripleChain) else chain
    triple = isinstance(chain, TripleChain)
    m = pair.grid.m
    facs: List[Factor] = []

    if who in ("node1", "node2"):
        rho = noise.rho1 if who == "node1" else noise.rho2
        obs_d = series.d1 if who == "node1" else series.d2
        d12 = pair.d12()
        facs.append(_gauss_factor((0, 1, 2, 3), d12, noise.dist_var(d12, rho), obs_d, active))
        if series.mode == "perfect":
            obs_phi = series.phi1 if who == "node1" else series.phi2
            bear = pair.bearing_12() if who == "node1" else pair.bearing_21()
            facs.append(
                _gauss_factor((0, 1, 2, 3), bear, noise.bearing_var(d12, rho), obs_phi, active, wrapped=True)
            )
            loc = series.loc1 if who == "node1" else series.loc2
            own_axes = (0, 1) if who == "node1" else (2, 3)
            facs.append(_cell_indicator_factor(own_axes, m, pair.grid.pitch, loc, active))
        return facs

    if who != "eve":
        raise ValueError("who must be 'node1', 'node2' or 'eve'")

    if triple:
        d4 = pair.dist4()
        v1 = noise.dist_var(d4, noise.rho_e)
        facs.append(_gauss_factor((0, 1, 4, 5), d4, v1, series.d1e, active))
        facs.append(_gauss_factor((2, 3, 4, 5), d4, v1, series.d2e, active))
        if series.mode == "perfect":
            if series.phi_1e is not None:
                bear = pair.bear4()
                vb = noise.bearing_var(d4, noise.rho_e)
                facs.append(_gauss_factor((0, 1, 4, 5), bear, vb, series.phi_1e, active, wrapped=True))
                facs.append(_gauss_factor((2, 3, 4, 5), bear, vb, series.phi_2e, active, wrapped=True))
            facs.append(_cell_indicator_factor((4, 5), m, pair.grid.pitch, series.loc_e, active))
        elif series.phi_e is not None:
            d1e = d4[:, :, None, None, :, :]
            d2e = d4[None, None, :, :, :, :]
            ang = _cosine_angle(d1e, d2e, pair.d12()[..., None, None])
            var = noise.vertex_var(d1e, d2e)
            facs.append(_gauss_factor((0, 1, 2, 3, 4, 5), ang, var, series.phi_e, active, wrapped=True))
        return facs

    if static_le is not None:
        le = np.asarray(static_le, dtype=float)
        d1e = pair.dist_to_point(le)
        d2e = d1e
        facs.append(_gauss_factor((0, 1), d1e, noise.dist_var(d1e, noise.rho_e), series.d1e, active))
        facs.append(_gauss_factor((2, 3), d2e, noise.dist_var(d2e, noise.rho_e), series.d2e, active))
        if series.mode == "perfect":
            if series.phi_1e is not None:
                bear = pair.bearing_from_point(le)
                facs.append(
                    _gauss_factor((0, 1), bear, noise.bearing_var(d1e, noise.rho_e), series.phi_1e, active, wrapped=True)
                )
                facs.append(
                    _gauss_factor((2, 3), bear, noise.bearing_var(d2e, noise.rho_e), series.phi_2e, active, wrapped=True)
                )
        elif series.phi_e is not None:
            ang = pair.vertex_angle_at(le)
            var = noise.vertex_var(d1e[:, :, None, None], d2e[None, None, :, :])
            facs.append(_gauss_factor((0, 1, 2, 3), ang, var, series.phi_e, active, wrapped=True))
        return facs

    if eve_path is None:
        raise ValueError("eavesdropper factors on a pair chain need static_le or eve_path")

    path = np.asarray(eve_path, dtype=float)
    c = pair.grid.coords()
    # per-slot distance from the eavesdropper to a generic grid point
    dpath = np.hypot(c[None, :, None] - path[:, 0, None, None], c[None, None, :] - path[:, 1, None, None])
    vd = noise.dist_var(dpath, noise.rho_e)
    facs.append(_gauss_factor_per_slot((0, 1), dpath, vd, series.d1e, active))
    facs.append(_gauss_factor_per_slot((2, 3), dpath, vd, series.d2e, active))
    if series.mode == "perfect":
        if series.phi_1e is not None:
            bpath = np.arctan2(c[None, None, :] - path[:, 1, None, None], c[None, :, None] - path[:, 0, None, None])
            vb = noise.bearing_var(dpath, noise.rho_e)
            facs.append(_gauss_factor_per_slot((0, 1), bpath, vb, series.phi_1e, active, wrapped=True))
            facs.append(_gauss_factor_per_slot((2, 3), bpath, vb, series.phi_2e, active, wrapped=True))
    elif series.phi_e is not None:
        d1e = dpath[:, :, :, None, None]
        d2e = dpath[:, None, None, :, :]
        ang = _cosine_angle(d1e, d2e, pair.d12()[None, ...])
        var = noise.vertex_var(d1e, d2e)
        facs.append(_gauss_factor_per_slot((0, 1, 2, 3), ang, var, series.phi_e, active, wrapped=True))
    return facs


# ---------------------------------------------------------------------------
# forward pass


def forward_tuples(
    chain: _ProductChain,
    tuples: Sequence[Sequence[Factor]],
    n: int,
    chunk: int = 64,
    keep_posterior: bool = False,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Scaled forward pass for several observation tuples sharing one
    chain, reusing per-slot factor tables across tuples.

    Returns per-tuple log-likelihoods of the first ``n`` slots and, when
    requested, the filtering posteriors of the first tuple, shape
    ``(n, *chain.shape)``.
    """
    nt = len(tuples)
    alpha = np.broadcast_to(chain.prior_tensor(), (nt,) + chain.shape).copy()
    loglik = np.zeros(nt)
    post = np.empty((n,) + chain.shape) if keep_posterior else None
    rank = chain.rank
    chunk = _auto_chunk([f for facs in tuples for f in facs], chunk)

    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        tabs = {}
        for facs in tuples:
            for f in facs:
                if id(f) not in tabs:
                    tabs[id(f)] = f.rows(lo, hi)
        for i in range(lo, hi):
            if i > 0:
                alpha = chain.propagate(alpha)
            cache = {}
            for t, facs in enumerate(tuples):
                w = alpha[t]
                shift = 0.0
                for f in facs:
                    if not f.active[i]:
                        continue
                    key = id(f)
                    if key not in cache:
                        row = tabs[key][i - lo]
                        s = float(row.max())
                        cache[key] = (np.exp(row - s).reshape(f.broadcast_shape(rank)), s)
                    e, s = cache[key]
                    w = w * e
                    shift += s
                c = float(w.sum())
                if not c > 0.0:
                    raise FloatingPointError("forward pass collapsed to zero likelihood")
                alpha[t] = w / c
                loglik[t] += np.log(c) + shift
            if keep_posterior:
                post[i] = alpha[0]
    return loglik, post


# ---------------------------------------------------------------------------
# model facade


@dataclass
class HmmModel:
    """Chain plus one observer's emission model.

    ``observer`` selects whose fields are modeled.  The eavesdropper's
    position is resolved in this order: part of the state when
    ``attacker_stats`` requests a triple chain, else ``static_le``, else
    ``eve_path``.
    """

    grid: GridParams
    noise: NoiseModel
    mode: str
    observer: str = "node1"
    burn_in: Optional[int] = None
    attacker_stats: bool = False
    eve_b: Optional[int] = None
    static_le: Optional[Tuple[float, float]] = None
    eve_path: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.attacker_stats:
            self.chain: _ProductChain = TripleChain(self.grid, self.eve_b, self.burn_in)
        else:
            self.chain = PairChain(self.grid, self.burn_in)

    def factors(self, series: ObservationSeries) -> List[Factor]:
        return emission_factors(
            self.chain,
            series,
            self.observer,
            self.noise,
            static_le=self.static_le,
            eve_path=self.eve_path,
        )


@dataclass
class ForwardResult:
    """Filtering posteriors with the per-slot log normalizers.

    ``posterior[i]`` is ``Pr(state_i | obs_1..i)``; adding ``logz[i]``
    recovers the unnormalized forward density.  ``loglik`` equals
    ``logz[-1]``.
    """

    posterior: np.ndarray
    logz: np.ndarray
    loglik: float
    shape: Tuple[int, ...]


@dataclass
class EstimateTrack:
    """Per-slot maximum-likelihood location estimates in field
    coordinates; ``cells`` carries the integer state path."""

    est1: np.ndarray
    est2: np.ndarray
    cells: np.ndarray
    loglik: float
    est_e: Optional[np.ndarray] = None


def forward_posterior(series: ObservationSeries, model: HmmModel) -> ForwardResult:
    """Forward filtering of one observer's observation sequence."""
    n = len(series)
    facs = model.factors(series)
    chain = model.chain
    nt_loglik = np.zeros(n)
    alpha = chain.prior_tensor()
    post = np.empty((n,) + chain.shape)
    total = 0.0
    chunk = _auto_chunk(facs, 64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        tabs = {id(f): f.rows(lo, hi) for f in facs}
        for i in range(lo, hi):
            if i > 0:
                alpha = chain.propagate(alpha)
            shift = 0.0
            for f in facs:
                if not f.active[i]:
                    continue
                row = tabs[id(f)][i - lo]
                s = float(row.max())
                alpha = alpha * np.exp(row - s).reshape(f.broadcast_shape(chain.rank))
                shift += s
            c = float(alpha.sum())
            if not c > 0.0:
                raise FloatingPointError("forward pass collapsed to zero likelihood")
            alpha /= c
            total += np.log(c) + shift
            nt_loglik[i] = total
            post[i] = alpha
    return ForwardResult(post, nt_loglik, float(total), chain.shape)


def viterbi_ml_sequence(
    series: ObservationSeries,
    model: HmmModel,
    state_cap: int = DEFAULT_VITERBI_STATE_CAP,
) -> EstimateTrack:
    """Most likely joint state sequence given one observer's sequence.

    Runs in the log domain; per-state maximization goes axis by axis
    from the last axis to the first, so ties resolve to the state with
    the smallest C-order index, slot by slot from the end.  Raises when
    the state space exceeds ``state_cap`` (the caller is expected to
    fall back to :func:`direct_estimate`).
    """
    chain = model.chain
    if chain.size > state_cap:
        raise ValueError(
            "state space of %d exceeds the Viterbi cap of %d" % (chain.size, state_cap)
        )
    n = len(series)
    facs = model.factors(series)
    rank = chain.rank
    with np.errstate(divide="ignore"):
        logks = [np.log(k) for k in chain.kernels]

    def emission(tabs, i, lo):
        e = np.zeros(chain.shape)
        for f in facs:
            if f.active[i]:
                e = e + tabs[id(f)][i - lo].reshape(f.broadcast_shape(rank))
        return e

    back: List[List[np.ndarray]] = []
    v = None
    chunk = _auto_chunk(facs, 64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        tabs = {id(f): f.rows(lo, hi) for f in facs}
        for i in range(lo, hi):
            if i == 0:
                v = chain.log_prior_tensor() + emission(tabs, 0, lo)
                continue
            stages: List[np.ndarray] = [None] * rank
            w = v
            for a in range(rank - 1, -1, -1):
                t = np.moveaxis(w, a, -1)
                s = t[..., :, None] + logks[a]
                stages[a] = np.moveaxis(s.argmax(-2).astype(np.int16), -1, a)
                w = np.moveaxis(s.max(-2), -1, a)
            back.append(stages)
            v = w + emission(tabs, i, lo)

    cells = np.empty((n, rank), dtype=np.int64)
    cells[n - 1] = np.unravel_index(int(np.argmax(v)), chain.shape)
    for i in range(n - 1, 0, -1):
        stages = back[i - 1]
        cur = cells[i]
        prev = np.empty(rank, dtype=np.int64)
        for a in range(rank):
            idx = tuple(prev[:a]) + tuple(cur[a:])
            prev[a] = stages[a][idx]
        cells[i - 1] = prev
    loglik = float(v.max())

    pts = model.grid.cell_to_point(cells.reshape(n, rank // 2, 2))
    return EstimateTrack(
        est1=pts[:, 0],
        est2=pts[:, 1],
        cells=cells,
        loglik=loglik,
        est_e=pts[:, 2] if rank == 6 else None,
    )


class PairFilter:
    """Incremental forward filter over the pair chain for one observer,
    for per-slot decisions (beacon policy, estimate-driven attacker).

    ``log_emission(i, obs)`` must return the full-shape log emission of
    slot ``i`` or ``None`` for a skipped slot.
    """

    def __init__(self, chain: PairChain, log_emission: Callable):
        self.chain = chain
        self.log_emission = log_emission
        self.alpha = chain.prior_tensor()
        self.slot = 0

    def predictive(self) -> np.ndarray:
        """Law of the next slot's state given observations so far."""
        if self.slot == 0:
            return self.alpha.copy()
        return self.chain.propagate(self.alpha)

    def advance(self, obs) -> None:
        """Consume one slot (``obs=None`` when no beacon was exchanged)."""
        alpha = self.alpha if self.slot == 0 else self.chain.propagate(self.alpha)
        e = None if obs is None else self.log_emission(self.slot, obs)
        if e is not None:
            alpha = alpha * np.exp(e - e.max())
        c = alpha.sum()
        if not c > 0.0:
            raise FloatingPointError("filter collapsed to zero likelihood")
        self.alpha = alpha / c
        self.slot += 1


def direct_estimate(obs: Union[LegitObservation, EveObservation], mode: str, delta: Optional[float] = None):
    """Model-free single-slot location estimate.

    With perfect GLI a legitimate node places the peer at its own exact
    location displaced by the observed distance along the observed
    bearing (quantized when ``delta`` is given) and returns
    ``(own, peer)``.  Without GLI no position can be inferred and the
    estimate is the raw distance observation itself.
    """
    if mode == "perfect":
        if isinstance(obs, EveObservation):
            own = np.asarray(obs.loc, dtype=float)
            p1 = own + obs.d1 * np.array([np.cos(obs.phi1), np.sin(obs.phi1)])
            p2 = own + obs.d2 * np.array([np.cos(obs.phi2), np.sin(obs.phi2)])
            if delta is not None:
                p1, p2 = quantize(p1, delta), quantize(p2, delta)
            return own, p1, p2
        own = np.asarray(obs.loc, dtype=float)
        peer = own + obs.d * np.array([np.cos(obs.phi), np.sin(obs.phi)])
        if delta is not None:
            peer = quantize(peer, delta)
        return own, peer
    if isinstance(obs, EveObservation):
        return obs.d1, obs.d2
    return obs.d
