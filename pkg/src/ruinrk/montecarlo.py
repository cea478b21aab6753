"""Monte Carlo ruin estimator used as an independent cross-check.

Event-driven: the surplus is inspected at claim epochs only, because ruin
can happen nowhere else.  Paths run until ruin or until the first claim
past the time horizon, so the estimate is the finite-horizon ruin
frequency; callers control the truncation bias through the horizon (the
cross-check command doubles it until successive estimates stabilize).

Randomness comes from an explicitly seeded xoshiro256** generator
(splitmix64-expanded seeds), implemented inside the compiled kernel so a
given (seed, n_paths, horizon) is bit-reproducible across platforms and
thread counts.  Paths are split into fixed batches with independent
substreams; batch counts are summed, so aggregation is associative and
order-insensitive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

with warnings.catch_warnings():
    # older TBB runtimes only disable numba's optional threading layer
    warnings.filterwarnings("ignore", message=".*TBB.*")
    from numba import njit, prange

from .model import Exponential, Gamma2, ModelParams, ParetoLomax

_BATCH = 1 << 14

_DIST_EXPONENTIAL = 0
_DIST_GAMMA2 = 1
_DIST_PARETO = 2


@dataclass(frozen=True)
class McEstimate:
    """Finite-horizon ruin frequency with its binomial standard error."""

    estimate: float
    std_error: float
    n_paths: int
    horizon: float
    seed: int
    generator: str = "xoshiro256** (splitmix64-seeded, batch substreams)"

    def __post_init__(self):
        if not 0.0 <= self.estimate <= 1.0:
            raise ValueError(f"estimate outside [0, 1]: {self.estimate!r}")


@njit(cache=True, inline="always")
def _splitmix64(state):
    state = (state + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = state
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _rotl(x, k):
    return ((x << k) | (x >> (np.uint64(64) - k))) & np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True, inline="always")
def _xoshiro_next(s):
    result = (_rotl((s[1] * np.uint64(5)) & np.uint64(0xFFFFFFFFFFFFFFFF), np.uint64(7))
              * np.uint64(9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    t = (s[1] << np.uint64(17)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], np.uint64(45))
    return result


@njit(cache=True, inline="always")
def _uniform(s):
    # (0, 1]: 53-bit mantissa shifted into the unit interval, zero excluded
    return (np.float64(_xoshiro_next(s) >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _run_batch(n, u0, lam, c, horizon, dist_id, par, seed):
    s = np.empty(4, dtype=np.uint64)
    st = seed
    for i in range(4):
        st, z = _splitmix64(st)
        s[i] = z
    inv_ex = -1.0 / lam
    inv_par = 1.0 / par
    tail_exp = -1.0 / (par + 1.0)
    lomax1 = dist_id == 2 and par == 1.0   # 1/sqrt is much cheaper than pow
    ruined = 0
    for _ in range(n):
        t = 0.0
        w = u0
        while True:
            dt = inv_ex * np.log(_uniform(s))
            t += dt
            if t > horizon:
                break
            if dist_id == 0:
                x = -np.log(_uniform(s)) * inv_par
            elif dist_id == 1:
                x = -(np.log(_uniform(s)) + np.log(_uniform(s))) * inv_par
            elif lomax1:
                x = 1.0 / np.sqrt(_uniform(s)) - 1.0
            else:
                x = par * (_uniform(s) ** tail_exp - 1.0)
            w += c * dt - x
            if w < 0.0:
                ruined += 1
                break
    return ruined


@njit(cache=True, parallel=True)
def _run_all(n_paths, batch, u0, lam, c, horizon, dist_id, par, seed):
    n_batches = (n_paths + batch - 1) // batch
    counts = np.zeros(n_batches, dtype=np.int64)
    for bi in prange(n_batches):
        n = batch if (bi + 1) * batch <= n_paths else n_paths - bi * batch
        # substream seed: mix the batch index through splitmix64
        st, z = _splitmix64(seed + np.uint64(bi))
        counts[bi] = _run_batch(n, u0, lam, c, horizon, dist_id, par, z)
    return counts.sum()


def _dist_code(model: ModelParams):
    claims = model.claims
    if isinstance(claims, Exponential):
        return _DIST_EXPONENTIAL, claims.beta
    if isinstance(claims, Gamma2):
        return _DIST_GAMMA2, claims.beta
    if isinstance(claims, ParetoLomax):
        return _DIST_PARETO, float(claims.m)
    raise TypeError(f"no sampler for {claims!r}")


def suggested_horizon(model: ModelParams) -> float:
    """Starting horizon heuristic: 50 E[X]/theta for light tails, four
    times that for Pareto, whose truncation bias decays only like 1/T."""
    base = 50.0 * model.claims.mean() / model.theta
    if isinstance(model.claims, ParetoLomax):
        base *= 4.0
    return base


def simulate_ruin(model: ModelParams, u: float, horizon: float,
                  n_paths: int, seed: int) -> McEstimate:
    """Estimate the ruin probability from ``n_paths`` surplus paths
    truncated at ``horizon``; deterministic for a given seed."""
    if n_paths <= 0:
        raise ValueError(f"n_paths must be positive, got {n_paths}")
    if u < 0:
        raise ValueError(f"initial surplus must be nonnegative, got {u}")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    dist_id, par = _dist_code(model)
    with warnings.catch_warnings():
        # the threading-layer probe at first compile may warn about old TBB
        warnings.filterwarnings("ignore", message=".*TBB.*")
        ruined = _run_all(n_paths, _BATCH, float(u), model.lam, model.c,
                          float(horizon), dist_id, par, np.uint64(seed))
    p = ruined / n_paths
    se = float(np.sqrt(p * (1.0 - p) / n_paths))
    return McEstimate(estimate=float(p), std_error=se, n_paths=n_paths,
                      horizon=float(horizon), seed=int(seed))


def simulate_until_stable(model: ModelParams, u: float, n_paths: int,
                          seed: int, horizon_start: float | None = None,
                          max_doublings: int = 8):
    """Double the horizon until two successive estimates differ by less
    than one combined standard error; returns (final estimate, history)."""
    horizon = float(horizon_start if horizon_start is not None
                    else suggested_horizon(model))
    history = [simulate_ruin(model, u, horizon, n_paths, seed)]
    for i in range(1, max_doublings + 1):
        horizon *= 2.0
        nxt = simulate_ruin(model, u, horizon, n_paths, seed + i)
        prev = history[-1]
        history.append(nxt)
        tol = float(np.hypot(prev.std_error, nxt.std_error))
        if abs(nxt.estimate - prev.estimate) <= max(tol, 1e-12):
            return nxt, history
    return history[-1], history
