"""Markov mobility on a bounded square grid.

The two legitimate nodes and (optionally) the eavesdropper move on the
lattice ``{a/m, 2a/m, ..., a}^2``.  In each slot a node takes an
independent uniform step of at most ``b`` cells per axis, restricted to
the grid, i.e. the next cell index on each axis is uniform over the
feasible window ``[max(0, u-b), min(m-1, u+b)]``.  Step counts near the
boundary shrink, which makes the stationary law proportional to the
per-axis window sizes rather than uniform.

Eavesdropper strategies:

* :class:`RandomMobility`, the same walk with its own step bound,
* :class:`StaticPosition`, a fixed lattice point,
* :class:`MobileMiddle`, moving to the lattice point nearest the midpoint
  of the two nodes' previous positions.  :func:`sample_trajectory` uses
  the nodes' true previous positions (an informed variant that upper
  bounds the estimate-driven attacker); the estimate-driven variant is
  assembled slot by slot via :func:`attacker_middle_target` by the
  simulation runner, which has access to the attacker's own location
  estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .geometry import angle_at, bearing, dist

__all__ = [
    "GridParams",
    "StateTriple",
    "Trajectory",
    "RandomMobility",
    "StaticPosition",
    "MobileMiddle",
    "AttackerStrategy",
    "step_node",
    "sample_trajectory",
    "attacker_middle_target",
    "nearest_cell",
    "stationary_axis",
    "axis_marginal",
    "expected_distance",
]


@dataclass(frozen=True)
class GridParams:
    """Grid geometry: ``m`` cells per side over a field of width ``a``,
    per-axis step bound ``b`` cells per slot.

    Attributes
    ----------
    m : int
        Cells per side, at least 1.
    a : float
        Field width; lattice coordinates are ``(index + 1) * a / m``.
    b : int
        Per-axis step bound in cells, ``0 <= b < m``.
    """

    m: int
    a: float
    b: int

    def __post_init__(self) -> None:
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise ValueError("grid size m must be a positive integer")
        if not self.a > 0:
            raise ValueError("field width a must be positive")
        if not (isinstance(self.b, (int, np.integer)) and 0 <= self.b < self.m):
            raise ValueError("step bound b must satisfy 0 <= b < m")

    @property
    def pitch(self) -> float:
        """Lattice spacing ``a / m``."""
        return self.a / self.m

    @property
    def default_burn_in(self) -> int:
        """Slots discarded before measurements start, ``10 * m``."""
        return 10 * self.m

    def coords(self) -> np.ndarray:
        """Axis coordinates ``{a/m, ..., a}`` indexed by cell index."""
        return (np.arange(self.m) + 1.0) * self.pitch

    def cell_to_point(self, idx: np.ndarray) -> np.ndarray:
        """Map integer cell indices (last axis length 2) to coordinates."""
        return (np.asarray(idx, dtype=float) + 1.0) * self.pitch

    def axis_kernel(self) -> np.ndarray:
        """Per-axis transition matrix, shape ``(m, m)``, row-stochastic.

        Row ``u`` is uniform over the clipped window ``[u-b, u+b]``; the
        two-dimensional per-node kernel is the product of two copies.
        """
        k = np.zeros((self.m, self.m))
        for u in range(self.m):
            lo = max(0, u - self.b)
            hi = min(self.m - 1, u + self.b)
            k[u, lo : hi + 1] = 1.0 / (hi - lo + 1)
        return k


@dataclass(frozen=True)
class RandomMobility:
    """Eavesdropper follows the same bounded random walk with step bound
    ``b`` (defaults to the grid's own bound when ``None``)."""

    b: Union[int, None] = None


@dataclass(frozen=True)
class StaticPosition:
    """Eavesdropper parked at the lattice point ``(x, y)``."""

    x: float
    y: float

    def cell(self, params: GridParams) -> np.ndarray:
        """Cell index of the position; must lie on the lattice."""
        idx = nearest_cell(np.array([self.x, self.y]), params)
        if not np.allclose(params.cell_to_point(idx), [self.x, self.y]):
            raise ValueError("static position (%g, %g) is not a lattice point" % (self.x, self.y))
        return idx


@dataclass(frozen=True)
class MobileMiddle:
    """Eavesdropper moves to the lattice point nearest the midpoint of
    the legitimate nodes' previous positions."""


AttackerStrategy = Union[RandomMobility, StaticPosition, MobileMiddle]


@dataclass(frozen=True)
class StateTriple:
    """Positions of node 1, node 2 and the eavesdropper in one slot."""

    l1: tuple
    l2: tuple
    le: tuple

    @property
    def d12(self) -> float:
        return float(dist(self.l1, self.l2))

    @property
    def d1e(self) -> float:
        return float(dist(self.l1, self.le))

    @property
    def d2e(self) -> float:
        return float(dist(self.l2, self.le))

    @property
    def phi_e(self) -> float:
        """Angle under which the eavesdropper sees the two nodes."""
        return float(angle_at(self.le, self.l1, self.l2))

    @property
    def phi_12(self) -> float:
        """Bearing of node 2 as seen from node 1."""
        return float(bearing(self.l1, self.l2))

    @property
    def phi_21(self) -> float:
        return float(bearing(self.l2, self.l1))

    @property
    def phi_1e(self) -> float:
        """Bearing of node 1 as seen from the eavesdropper."""
        return float(bearing(self.le, self.l1))

    @property
    def phi_2e(self) -> float:
        return float(bearing(self.le, self.l2))


class Trajectory:
    """Joint state sequence, stored as integer cell indices.

    ``idx`` has shape ``(n, 3, 2)``: slot, node (node 1, node 2,
    eavesdropper), axis.  Indexing yields :class:`StateTriple` records in
    field coordinates.
    """

    def __init__(self, idx: np.ndarray, params: GridParams):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.ndim != 3 or idx.shape[1:] != (3, 2):
            raise ValueError("trajectory index array must have shape (n, 3, 2)")
        if idx.size and (idx.min() < 0 or idx.max() >= params.m):
            raise ValueError("cell index out of range")
        self.idx = idx
        self.params = params

    def __len__(self) -> int:
        return self.idx.shape[0]

    def __getitem__(self, i: int) -> StateTriple:
        pts = self.params.cell_to_point(self.idx[i])
        return StateTriple(tuple(pts[0]), tuple(pts[1]), tuple(pts[2]))

    def __iter__(self) -> Iterator[StateTriple]:
        for i in range(len(self)):
            yield self[i]

    def points(self) -> np.ndarray:
        """All positions in field coordinates, shape ``(n, 3, 2)``."""
        return self.params.cell_to_point(self.idx)


def nearest_cell(point, params: GridParams) -> np.ndarray:
    """Cell index of the lattice point nearest ``point``.

    Exact midpoints round toward the smaller index on each axis, so ties
    resolve to the lexicographically smaller lattice point.  Results are
    clipped to the grid.
    """
    t = np.asarray(point, dtype=float) / params.pitch - 1.0
    idx = np.ceil(t - 0.5).astype(np.int64)
    return np.clip(idx, 0, params.m - 1)


def attacker_middle_target(est1, est2, params: GridParams) -> np.ndarray:
    """Lattice point nearest the midpoint of two position estimates.

    Returns field coordinates; ties go to the lexicographically smaller
    lattice point (see :func:`nearest_cell`).
    """
    mid = 0.5 * (np.asarray(est1, dtype=float) + np.asarray(est2, dtype=float))
    return params.cell_to_point(nearest_cell(mid, params))


def _step_axis(u: np.ndarray, b: int, m: int, unif: np.ndarray) -> np.ndarray:
    # Uniform over the clipped window; drawing via floor(U * count) keeps
    # the draw exact for every window size.
    lo = np.maximum(0, u - b)
    hi = np.minimum(m - 1, u + b)
    count = hi - lo + 1
    return lo + np.minimum((unif * count).astype(np.int64), count - 1)


def step_node(idx, params: GridParams, rng: np.random.Generator, b: Union[int, None] = None) -> np.ndarray:
    """Advance one node by one slot; per-axis uniform over the feasible
    window.  ``b`` overrides the grid's step bound (used for the
    eavesdropper's own bound)."""
    idx = np.asarray(idx, dtype=np.int64)
    bb = params.b if b is None else b
    if not 0 <= bb < params.m:
        raise ValueError("step bound b must satisfy 0 <= b < m")
    return _step_axis(idx, bb, params.m, rng.random(idx.shape))


def sample_trajectory(
    n: int,
    params: GridParams,
    attacker: AttackerStrategy,
    rng: np.random.Generator,
    init: Union[np.ndarray, None] = None,
    burn_in: Union[int, None] = None,
) -> Trajectory:
    """Sample ``n`` slots of the joint state process.

    All three walkers start uniform on the grid and a burn-in of
    ``10 * m`` slots (overridable) is discarded before the first returned
    slot, so returned slots are near-stationary.  When ``init`` (cell
    indices, shape ``(3, 2)``) is given it becomes slot 1 exactly and no
    burn-in is applied.

    For :class:`MobileMiddle` the eavesdropper occupies the lattice point
    nearest the midpoint of the nodes' previous true positions; in the
    first slot ever (no history) she starts uniform.
    """
    if n < 1:
        raise ValueError("trajectory length must be at least 1")
    if burn_in is None:
        burn_in = 0 if init is not None else params.default_burn_in
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")

    m = params.m
    total = burn_in + n
    out = np.empty((total, 3, 2), dtype=np.int64)

    if init is not None:
        cur = np.array(init, dtype=np.int64)
        if cur.shape != (3, 2):
            raise ValueError("init must provide cell indices of shape (3, 2)")
        if cur.min() < 0 or cur.max() >= m:
            raise ValueError("init cell index out of range")
        if burn_in:
            raise ValueError("burn_in must be 0 when init is given")
    else:
        cur = rng.integers(0, m, size=(3, 2))
        if isinstance(attacker, StaticPosition):
            cur[2] = attacker.cell(params)

    e_bound = None
    if isinstance(attacker, RandomMobility):
        e_bound = params.b if attacker.b is None else attacker.b
        if not 0 <= e_bound < m:
            raise ValueError("eavesdropper step bound out of range")

    out[0] = cur
    for i in range(1, total):
        prev = out[i - 1]
        unif = rng.random((2, 2))
        nxt = np.empty((3, 2), dtype=np.int64)
        nxt[:2] = _step_axis(prev[:2], params.b, m, unif)
        if isinstance(attacker, RandomMobility):
            nxt[2] = _step_axis(prev[2], e_bound, m, rng.random(2))
        elif isinstance(attacker, StaticPosition):
            nxt[2] = prev[2]
        else:
            mid = 0.5 * (params.cell_to_point(prev[0]) + params.cell_to_point(prev[1]))
            nxt[2] = nearest_cell(mid, params)
        out[i] = nxt
    return Trajectory(out[burn_in:], params)


def stationary_axis(params: GridParams) -> np.ndarray:
    """Exact stationary law of one axis index.

    The walk is reversible with respect to the window-size distribution
    (windows are symmetric: ``v`` feasible from ``u`` iff ``u`` feasible
    from ``v``), so the stationary mass of ``u`` is proportional to its
    window size.
    """
    u = np.arange(params.m)
    deg = np.minimum(params.m - 1, u + params.b) - np.maximum(0, u - params.b) + 1
    return deg / deg.sum()


def axis_marginal(params: GridParams, steps: int) -> np.ndarray:
    """Law of one axis index after ``steps`` slots from a uniform start."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    pi = np.full(params.m, 1.0 / params.m)
    if steps:
        pi = pi @ np.linalg.matrix_power(params.axis_kernel(), steps)
    return pi


def expected_distance(params: GridParams, steps: Union[int, None] = None) -> float:
    """Mean distance between two independent walkers, used as the
    reference for clock-bias estimation.  ``steps=None`` evaluates under
    the exact stationary law, otherwise under the marginal after
    ``steps`` slots from a uniform start."""
    pi = stationary_axis(params) if steps is None else axis_marginal(params, steps)
    c = params.coords()
    pi2 = np.outer(pi, pi).ravel()
    pts = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
    d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    return float(pi2 @ d @ pi2)
