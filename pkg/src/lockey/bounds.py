"""Monte-Carlo estimation of secret-key rate bounds.

One-way rates are sandwiched between ``I(O1;O2) - min_j I(Oj;Oe)`` and
``min(I(O1;O2), I(O1;O2|Oe))``.  Every mutual information here is a
difference of marginal log-densities of observation subsets, so each
trial samples one run and evaluates one forward pass per subset; the
per-trial information samples average into the bounds with plain
Monte-Carlo standard errors.  All rates are bits per slot, counting
skipped slots, and with a policy configured they condition on the
realized beacon schedule (which is public).

The eavesdropper's subsets run on whichever chain resolves her
position: the pair chain when she is static, the triple chain when she
moves independently, and the grouped midpoint propagation when she
shadows the pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import dist
from .localization import Factor, emission_factors, forward_tuples
from .mobility import GridParams, RandomMobility, StaticPosition, _step_axis, nearest_cell, stationary_axis
from .observation import NoiseModel, ObservationSeries
from .scenario import Run, Scenario, sample_run

LN2 = float(np.log(2.0))

PROCESSES = ("1", "2", "12", "e", "1e", "2e", "12e")

__all__ = [
    "PROCESSES",
    "RateBounds",
    "EtaBound",
    "key_rate_bounds",
    "entropy_rate",
    "iid_bounds",
    "eta_bound",
    "power_sweep",
    "asymptotic_slope",
]


@dataclass(frozen=True)
class RateBounds:
    """Lower and upper key-rate bounds with their Monte-Carlo errors.

    The four information estimates they derive from are kept alongside;
    stderrs of the bounds are those of the selected candidate's
    per-trial samples (the lower bound may be clipped at zero)."""

    lower: float
    upper: float
    lower_stderr: float
    upper_stderr: float
    i12: float
    i1e: float
    i2e: float
    i12_given_e: float
    i12_stderr: float
    i1e_stderr: float
    i2e_stderr: float
    i12_given_e_stderr: float
    skip_fraction: Optional[float]
    n: int
    trials: int


@dataclass(frozen=True)
class EtaBound:
    """Asymptotic ceiling on the eavesdropper's equivocation gap, in
    bits, with a delta-method standard error.  ``excluded`` is the
    probability mass of coincident nodes left out of the expectation."""

    eta: float
    stderr: float
    excluded: float
    samples: int


def _stderr(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / np.sqrt(x.size))


# ---------------------------------------------------------------------------
# per-trial log-likelihoods


def _middle_forward(
    scenario: Scenario,
    series: ObservationSeries,
    legit_tuples: Sequence[Sequence[Factor]],
    n: int,
    chunk: int = 32,
) -> np.ndarray:
    """Forward log-likelihoods of eavesdropper-inclusive subsets when
    she shadows the pair midpoint.

    Her slot-``i`` position is a function of the true previous pair
    state, so the pair law is propagated per previous-midpoint group,
    reweighted by her emission for that group's point, and summed.  The
    eavesdropper factors are always applied; ``legit_tuples`` selects
    which node factors join each returned subset.
    """
    mc = scenario.middle_chain
    noise = scenario.noise
    G, shape = mc.n_groups, mc.shape
    nt = len(legit_tuples)
    rank = mc.rank
    gfacs = [emission_factors(mc.pair, series, "eve", noise, static_le=p) for p in mc.group_points]

    pinned = series.mode == "perfect"
    gid = np.full(n, -1)
    if pinned:
        m = mc.grid.m
        for i in range(n):
            if not series.skipped[i]:
                cx, cy = nearest_cell(series.loc_e[i], mc.grid)
                gid[i] = cx * m + cy

    chunk = max(1, min(chunk, 2_000_000 // (G * int(np.prod(shape)))))
    alpha = np.broadcast_to(mc.pair.prior_tensor(), (nt,) + shape).copy()
    loglik = np.zeros(nt)
    lfacs = [f for facs in legit_tuples for f in facs]

    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        ltabs = {id(f): f.rows(lo, hi) for f in lfacs}
        etabs = [[f.rows(lo, hi) for f in facs] for facs in gfacs]

        def eve_log(g: int, i: int) -> np.ndarray:
            out = np.zeros(shape)
            for f, rows in zip(gfacs[g], etabs[g]):
                out = out + rows[i - lo].reshape(f.broadcast_shape(rank))
            return out

        for i in range(lo, hi):
            if series.skipped[i]:
                if i > 0:
                    alpha = mc.pair.propagate(alpha)
                w = alpha
                shift = 0.0
            else:
                grouped = (
                    np.broadcast_to(mc.initial_grouped(), (nt, G) + shape)
                    if i == 0
                    else mc.grouped_step(alpha)
                )
                if pinned:
                    g = int(gid[i])
                    et = eve_log(g, i)
                    shift = float(et.max())
                    w = grouped[:, g] * np.exp(et - shift)
                else:
                    et = np.stack([eve_log(g, i) for g in range(G)])
                    shift = float(et.max())
                    w = np.einsum("tg...,g...->t...", grouped, np.exp(et - shift))
            cache: Dict[int, Tuple[np.ndarray, float]] = {}
            out = np.empty_like(alpha)
            for t, facs in enumerate(legit_tuples):
                wt = w[t]
                s = shift
                for f in facs:
                    if not f.active[i]:
                        continue
                    if id(f) not in cache:
                        row = ltabs[id(f)][i - lo]
                        sm = float(row.max())
                        cache[id(f)] = (np.exp(row - sm).reshape(f.broadcast_shape(rank)), sm)
                    e, sm = cache[id(f)]
                    wt = wt * e
                    s += sm
                c = float(wt.sum())
                if not c > 0.0:
                    raise FloatingPointError("grouped forward collapsed to zero likelihood")
                out[t] = wt / c
                loglik[t] += np.log(c) + s
            alpha = out
    return loglik


def _trial_logliks(
    scenario: Scenario,
    n: int,
    rng: np.random.Generator,
    chunk: int = 64,
) -> Tuple[Dict[str, float], Run]:
    """Sample one run and evaluate the marginal log-likelihood of every
    observation subset."""
    run = sample_run(scenario, n, rng)
    series = run.series
    pair = scenario.pair_chain
    noise = scenario.noise
    f1 = emission_factors(pair, series, "node1", noise)
    f2 = emission_factors(pair, series, "node2", noise)
    legit = [f1, f2, f1 + f2]
    out: Dict[str, float] = {}
    kind = scenario.eve_kind

    if kind == "static":
        fe = emission_factors(pair, series, "eve", noise, static_le=scenario.eve_point)
        tuples = legit + [fe, f1 + fe, f2 + fe, f1 + f2 + fe]
        ll, _ = forward_tuples(pair, tuples, n, chunk)
        for name, v in zip(PROCESSES, ll):
            out[name] = float(v)
        return out, run

    ll, _ = forward_tuples(pair, legit, n, chunk)
    out.update({"1": float(ll[0]), "2": float(ll[1]), "12": float(ll[2])})

    if kind == "random":
        tc = scenario.triple_chain
        fe = emission_factors(tc, series, "eve", noise)
        lle, _ = forward_tuples(tc, [fe, f1 + fe, f2 + fe, f1 + f2 + fe], n, chunk)
    else:
        lle = _middle_forward(scenario, series, [[], f1, f2, f1 + f2], n)
    out.update({"e": float(lle[0]), "1e": float(lle[1]), "2e": float(lle[2]), "12e": float(lle[3])})
    return out, run


# ---------------------------------------------------------------------------
# bounds


def _information_samples(ll: Dict[str, float], n: int) -> Tuple[float, float, float, float]:
    scale = n * LN2
    return (
        (ll["12"] - ll["1"] - ll["2"]) / scale,
        (ll["1e"] - ll["1"] - ll["e"]) / scale,
        (ll["2e"] - ll["2"] - ll["e"]) / scale,
        (ll["12e"] + ll["e"] - ll["1e"] - ll["2e"]) / scale,
    )


def _combine(
    i12: np.ndarray,
    i1e: np.ndarray,
    i2e: np.ndarray,
    cond: np.ndarray,
    skip_fraction: Optional[float],
    n: int,
    trials: int,
) -> RateBounds:
    cand1 = i12 - i1e
    cand2 = i12 - i2e
    low = cand1 if cand1.mean() >= cand2.mean() else cand2
    up = i12 if i12.mean() <= cond.mean() else cond
    return RateBounds(
        lower=max(0.0, float(low.mean())),
        upper=float(up.mean()),
        lower_stderr=_stderr(low),
        upper_stderr=_stderr(up),
        i12=float(i12.mean()),
        i1e=float(i1e.mean()),
        i2e=float(i2e.mean()),
        i12_given_e=float(cond.mean()),
        i12_stderr=_stderr(i12),
        i1e_stderr=_stderr(i1e),
        i2e_stderr=_stderr(i2e),
        i12_given_e_stderr=_stderr(cond),
        skip_fraction=skip_fraction,
        n=n,
        trials=trials,
    )


def key_rate_bounds(
    scenario: Scenario,
    n: int = 500,
    trials: int = 200,
    rng: Optional[np.random.Generator] = None,
    chunk: int = 64,
) -> RateBounds:
    """Estimate the key-rate bounds of a scenario over fresh runs."""
    if rng is None:
        rng = np.random.default_rng()
    if trials < 2:
        raise ValueError("at least two trials are needed for a standard error")
    i12 = np.empty(trials)
    i1e = np.empty(trials)
    i2e = np.empty(trials)
    cond = np.empty(trials)
    skip = np.empty(trials)
    for t in range(trials):
        ll, run = _trial_logliks(scenario, n, rng, chunk)
        i12[t], i1e[t], i2e[t], cond[t] = _information_samples(ll, n)
        skip[t] = run.skip_fraction
    skip_fraction = float(skip.mean()) if scenario.policy is not None else None
    return _combine(i12, i1e, i2e, cond, skip_fraction, n, trials)


def entropy_rate(
    scenario: Scenario,
    process: str,
    n: int = 500,
    trials: int = 50,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, float]:
    """Differential entropy rate of one observation subset, bits per
    slot, as ``-log p / n`` averaged over runs."""
    if process not in PROCESSES:
        raise ValueError("process must be one of %s" % (PROCESSES,))
    if rng is None:
        rng = np.random.default_rng()
    vals = np.empty(trials)
    for t in range(trials):
        ll, _ = _trial_logliks(scenario, n, rng)
        vals[t] = -ll[process] / (n * LN2)
    return float(vals.mean()), _stderr(vals)


def power_sweep(
    scenario: Scenario,
    powers: Sequence[float],
    n: int = 500,
    trials: int = 200,
    rng: Optional[np.random.Generator] = None,
    chunk: int = 64,
) -> List[RateBounds]:
    """Key-rate bounds across beacon powers."""
    if rng is None:
        rng = np.random.default_rng()
    return [key_rate_bounds(scenario.with_power(p), n, trials, rng, chunk) for p in powers]


def asymptotic_slope(powers: Sequence[float], rates: Sequence[float]) -> float:
    """Least-squares slope of a rate against log2 of power.

    A rate growing half a bit per power doubling returns 0.5; a plateau
    returns about zero."""
    x = np.log2(np.asarray(powers, dtype=float))
    y = np.asarray(rates, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two powers")
    a = np.stack([x, np.ones_like(x)], axis=1)
    slope, _ = np.linalg.lstsq(a, y, rcond=None)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# independent-motion validation path


def iid_bounds(
    scenario: Scenario,
    n: int = 200,
    trials: int = 100,
    rng: Optional[np.random.Generator] = None,
) -> RateBounds:
    """Bounds under memoryless uniform motion, computed without the
    forward recursion.

    Every walker redraws its position uniformly each slot (the step
    bound spans the lattice), so log-densities factor per slot and
    direct marginalization over one slot's states replaces filtering.
    Serves as an independent cross-check of the forward machinery."""
    if scenario.policy is not None:
        raise ValueError("the memoryless validation path has no policy support")
    if scenario.eve_kind == "middle":
        raise ValueError("midpoint shadowing is not memoryless")
    if rng is None:
        rng = np.random.default_rng()

    grid = scenario.grid
    free = GridParams(grid.m, grid.a, grid.m - 1)
    attacker = scenario.attacker
    if isinstance(attacker, RandomMobility):
        attacker = RandomMobility(grid.m - 1)
    sc = Scenario(free, scenario.noise, scenario.mode, attacker, burn_in=scenario.burn_in, bias=scenario.bias)

    i12 = np.empty(trials)
    i1e = np.empty(trials)
    i2e = np.empty(trials)
    cond = np.empty(trials)
    for t in range(trials):
        run = sample_run(sc, n, rng)
        ll = _slotwise_logliks(sc, run.series, n)
        i12[t], i1e[t], i2e[t], cond[t] = _information_samples(ll, n)
    return _combine(i12, i1e, i2e, cond, None, n, trials)


def _slotwise_logliks(scenario: Scenario, series: ObservationSeries, n: int) -> Dict[str, float]:
    """Per-slot exact marginalization of every subset under uniform
    i.i.d. states; tractable for small lattices only."""
    pair = scenario.pair_chain
    noise = scenario.noise
    f1 = emission_factors(pair, series, "node1", noise)
    f2 = emission_factors(pair, series, "node2", noise)
    static = scenario.eve_kind == "static"
    if static:
        chain = pair
        fe = emission_factors(pair, series, "eve", noise, static_le=scenario.eve_point)
    else:
        chain = scenario.triple_chain
        fe = emission_factors(chain, series, "eve", noise)
    rank = chain.rank
    logpi = chain.log_prior_tensor()
    subsets = {
        "1": f1,
        "2": f2,
        "12": f1 + f2,
        "e": fe,
        "1e": f1 + fe,
        "2e": f2 + fe,
        "12e": f1 + f2 + fe,
    }
    out = {k: 0.0 for k in subsets}
    for name, facs in subsets.items():
        sub_rank = 4 if (name in ("1", "2", "12") or static) else rank
        sub_logpi = pair.log_prior_tensor() if sub_rank == 4 else logpi
        for i in range(n):
            tab = sub_logpi.copy()
            for f in facs:
                if f.active[i]:
                    tab = tab + f.rows(i, i + 1)[0].reshape(f.broadcast_shape(sub_rank))
            s = float(tab.max())
            out[name] += s + np.log(np.exp(tab - s).sum())
    return out


# ---------------------------------------------------------------------------
# asymptotic eavesdropper ceiling


def _stationary_states(scenario: Scenario, size: int, rng: np.random.Generator):
    """I.i.d. draws from the stationary joint state law, as points."""
    grid = scenario.grid
    m = grid.m
    p = stationary_axis(grid)
    kind = scenario.eve_kind

    def pairs(law: np.ndarray) -> np.ndarray:
        return rng.choice(m, size=(size, 2), p=law)

    if kind == "middle":
        prev1, prev2 = pairs(p), pairs(p)
        mid = 0.5 * (grid.cell_to_point(prev1) + grid.cell_to_point(prev2))
        le = grid.cell_to_point(nearest_cell(mid, grid))
        l1 = _step_axis(prev1, grid.b, m, rng.random((size, 2)))
        l2 = _step_axis(prev2, grid.b, m, rng.random((size, 2)))
        return grid.cell_to_point(l1), grid.cell_to_point(l2), le

    l1, l2 = pairs(p), pairs(p)
    if kind == "static":
        le = np.broadcast_to(scenario.eve_point, (size, 2))
    else:
        eve_b = scenario.attacker.b
        eve_grid = GridParams(m, grid.a, grid.b if eve_b is None else eve_b)
        le = grid.cell_to_point(pairs(stationary_axis(eve_grid)))
    return grid.cell_to_point(l1), grid.cell_to_point(l2), le


def _eta_terms(d12, d1e, d2e, noise: NoiseModel):
    """Squared spread of the eavesdropper's linearized estimate (worst
    case over her estimator, relative to her noise scale) and the
    legitimate reference log-spread, per state."""
    g12 = noise.gamma(d12)
    g1, g2 = noise.gamma(d1e), noise.gamma(d2e)
    gp = noise.gamma_phi(d1e, d2e)
    s = np.sqrt(g1) + np.sqrt(g2)
    rho1, rhoe = noise.rho1, noise.rho_e
    dsum = d1e + d2e
    dprod = d1e * d2e
    q = (rhoe / d12**2) * (
        d12**2 * (rho1 / rhoe) * g12
        + 4.0 * dsum**2 * s**2
        + (4.0 * dprod + 64.0 * dprod**2) * gp
        + 8.0 * dsum * dprod * s * np.sqrt(gp)
        + 64.0 * dsum**2 * (g1 + g2)
    )
    tref = 0.5 * np.log(2.0 * np.pi * rho1 * g12)
    return q, tref


def eta_bound(
    scenario: Scenario,
    samples: int = 200_000,
    rng: Optional[np.random.Generator] = None,
) -> EtaBound:
    """High-power ceiling on how far the conditional rate can exceed the
    eavesdropper-blind rate.

    The gap of a run converges, as beacon power grows, to the log ratio
    between the eavesdropper's linearized distance-estimate spread and
    the legitimate ranging spread; a max-entropy argument moves the
    expectation of the squared spread inside the log.  Coincident-node
    states are excluded (their measure is reported) since the linearized
    spread degenerates there."""
    if rng is None:
        rng = np.random.default_rng()
    p1, p2, pe = _stationary_states(scenario, samples, rng)
    d12 = dist(p1, p2)
    keep = d12 > 0.0
    excluded = 1.0 - float(keep.mean())
    q, tref = _eta_terms(d12[keep], dist(p1[keep], pe[keep]), dist(p2[keep], pe[keep]), scenario.noise)
    qbar = float(q.mean())
    eta = (0.5 * np.log(2.0 * np.pi * qbar) - float(tref.mean())) / LN2
    # delta method on (mean of q, mean of the reference term)
    cov = np.cov(q, tref) / q.size
    grad = np.array([0.5 / qbar, -1.0])
    var = float(grad @ cov @ grad)
    return EtaBound(eta=float(eta), stderr=float(np.sqrt(max(var, 0.0))) / LN2, excluded=excluded, samples=int(q.size))
