"""Quadrature kernels: the composite Simpson history rule and the Gauss
rules with nonstandard weights used by the Pareto two-step schemes.

The Gauss rules are built from closed-form moments of the weight y^m.  To
keep short intervals well conditioned, the orthogonal polynomial is formed
in the centred, scaled variable t = (y - midpoint)/halfwidth; because m is
an integer, the centred moments expand binomially with all terms positive,
so no cancellation occurs.  Roots come from explicit quadratic/cubic
formulas and weights from the Lagrange-basis moment formula, which keeps
rule construction deterministic and dependency-free (q <= 3 suffices).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import DegenerateIntervalError

_SQRT3 = np.sqrt(3.0)


# ---------------------------------------------------------------------------
# Composite Simpson 1/3 history rule
# ---------------------------------------------------------------------------

def simpson13_weights(n: int, h: float) -> np.ndarray:
    """Weights over samples at u_0..u_n for the history integral on [0, u_n].

    Even n: composite Simpson 1/3.  Odd n: Simpson 1/3 on [0, u_{n-1}]
    plus a trapezoidal panel on [u_{n-1}, u_n].  n = 0 yields all zeros
    (empty history).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    w = np.zeros(n + 1)
    if n == 0:
        return w
    ns = n if n % 2 == 0 else n - 1   # Simpson part covers [0, u_ns]
    if ns >= 2:
        w[0] += h / 3.0
        w[ns] += h / 3.0
        w[1:ns:2] += 4.0 * h / 3.0
        w[2:ns:2] += 2.0 * h / 3.0
    if n % 2 == 1:
        w[n - 1] += h / 2.0
        w[n] += h / 2.0
    return w


def simpson13_history(samples, h: float) -> float:
    """Apply the history rule to g sampled at u_0..u_n; n is inferred."""
    g = np.asarray(samples, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("samples must be a nonempty 1-d sequence")
    n = g.size - 1
    if n == 0:
        return 0.0
    return float(simpson13_weights(n, h) @ g)


# ---------------------------------------------------------------------------
# Gauss rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussRule:
    """Nodes/weights approximating an integral against a fixed weight
    function; ``kind`` and ``params`` record which one."""

    nodes: tuple
    weights: tuple
    kind: str              # "legendre01" | "pareto-truncated" | "jacobi-improper"
    params: tuple = ()

    @property
    def q(self) -> int:
        return len(self.nodes)

    @property
    def weight_sum(self) -> float:
        return float(sum(self.weights))

    def apply(self, f) -> float:
        return float(sum(w * f(x) for x, w in zip(self.nodes, self.weights)))


def gauss_legendre_01(q: int = 2) -> GaussRule:
    """Two-point Gauss-Legendre rule on [0, 1]."""
    if q != 2:
        raise NotImplementedError(f"only the 2-point rule is provided, got q={q}")
    nodes = (0.5 - 0.5 / _SQRT3, 0.5 + 0.5 / _SQRT3)
    return GaussRule(nodes=nodes, weights=(0.5, 0.5), kind="legendre01")


@dataclass(frozen=True)
class MomentVector:
    """Moments M_k = int_{Y_b}^{Y_a} y^(k+m) dy, k = 0..2q-1, of the
    truncated weight y^m after the change of variables y = m/(x+m)."""

    values: tuple
    y_a: float
    y_b: float
    m: int


def _validate_lag_interval(a: float, b: float, m: int, q: int):
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise ValueError(f"m must be a positive integer, got {m!r}")
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if not (a >= 0 and np.isfinite(a) and np.isfinite(b)):
        raise ValueError(f"need finite 0 <= a < b, got a={a!r} b={b!r}")
    if not a < b:
        raise ValueError(f"empty lag interval: a={a!r} >= b={b!r}")


def pareto_moments(a: float, b: float, m: int, q: int) -> MomentVector:
    """Closed-form moments of the truncated weight for the lag interval
    [a, b]; evaluated via expm1/log1p so short intervals (Y_a/Y_b near 1)
    do not cancel."""
    _validate_lag_interval(a, b, m, q)
    y_a = m / (a + m)
    y_b = m / (b + m)
    # Y_a - Y_b = m (b - a) / ((a+m)(b+m)), exact and positive
    gap_over_yb = (b - a) / (a + m)
    log_ratio = np.log1p(gap_over_yb)
    vals = []
    for k in range(2 * q):
        p = m + k + 1
        vals.append(y_b**p * np.expm1(p * log_ratio) / p)
    return MomentVector(values=tuple(vals), y_a=y_a, y_b=y_b, m=m)


def _real_quadratic_roots(c1: float, c0: float):
    """Roots of t^2 + c1 t + c0, known real and distinct."""
    disc = c1 * c1 - 4.0 * c0
    if disc <= 0:
        raise DegenerateIntervalError("orthogonal polynomial roots collapsed")
    r = np.sqrt(disc)
    t1 = -(c1 + np.copysign(r, c1)) / 2.0 if c1 != 0 else -r / 2.0
    t2 = c0 / t1
    return (t1, t2) if t1 < t2 else (t2, t1)


def _real_cubic_roots(c2: float, c1: float, c0: float):
    """Roots of t^3 + c2 t^2 + c1 t + c0 with three real roots
    (trigonometric form of Cardano)."""
    p = c1 - c2 * c2 / 3.0
    qq = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    if p >= 0:
        raise DegenerateIntervalError("orthogonal polynomial roots collapsed")
    rho = 2.0 * np.sqrt(-p / 3.0)
    arg = np.clip(3.0 * qq / (p * rho), -1.0, 1.0)
    phi = np.arccos(arg)
    roots = [rho * np.cos((phi - 2.0 * np.pi * k) / 3.0) - c2 / 3.0 for k in range(3)]
    return tuple(sorted(roots))


def _monomial_weight_rule(lo: float, hi: float, m: int, q: int):
    """q-point Gauss rule for weight y^m on [lo, hi] subset of [0, inf).

    Returns (y_nodes ascending, weights).  Built in the centred variable
    t = (y - y0)/w with y0, w the midpoint and halfwidth.
    """
    if q not in (1, 2, 3):
        raise NotImplementedError(f"q must be in {{1, 2, 3}}, got {q}")
    if hi - lo < 1e-14:
        raise DegenerateIntervalError(
            f"interval [{lo!r}, {hi!r}] too short for a stable rule"
        )
    y0 = 0.5 * (lo + hi)
    w = 0.5 * (hi - lo)
    # nu_k = int_{-1}^{1} t^k (y0 + w t)^m w dt; binomial terms, no cancellation
    nu = np.zeros(2 * q)
    for k in range(2 * q):
        s = 0.0
        for j in range(m + 1):
            if (k + j) % 2 == 0:
                s += comb(m, j) * y0 ** (m - j) * w**j * 2.0 / (k + j + 1)
        nu[k] = w * s

    if q == 1:
        t = (nu[1] / nu[0],)
    elif q == 2:
        h0 = np.array([[nu[0], nu[1]], [nu[1], nu[2]]])
        c0, c1 = np.linalg.solve(h0, -nu[2:4])
        t = _real_quadratic_roots(c1, c0)
    else:
        h0 = np.array([[nu[0], nu[1], nu[2]],
                       [nu[1], nu[2], nu[3]],
                       [nu[2], nu[3], nu[4]]])
        c0, c1, c2 = np.linalg.solve(h0, -nu[3:6])
        t = _real_cubic_roots(c2, c1, c0)

    # Lagrange-basis moment formula: w_r = int l_r(t) dnu(t)
    weights = []
    for r in range(q):
        others = [t[s] for s in range(q) if s != r]
        if q == 1:
            val = nu[0]
        elif q == 2:
            val = (nu[1] - others[0] * nu[0]) / (t[r] - others[0])
        else:
            ta, tb = others
            val = (nu[2] - (ta + tb) * nu[1] + ta * tb * nu[0]) / (
                (t[r] - ta) * (t[r] - tb)
            )
        weights.append(val)

    y = tuple(y0 + w * tr for tr in t)
    return y, tuple(weights)


def pareto_truncated_gauss(a: float, b: float, m: int, q: int) -> GaussRule:
    """Gauss rule so that int_a^b f(x) p(x) dx ~ sum w_r f(x_r) for the
    Pareto-Lomax density p, via the transform y = m/(x+m).

    Nodes are returned in lag coordinates (ascending x), and weights carry
    the (m+1) prefactor; their sum equals tail(a) - tail(b).
    """
    _validate_lag_interval(a, b, m, q)
    if q not in (1, 2, 3):
        raise NotImplementedError(f"q must be in {{1, 2, 3}}, got {q}")
    y_a = m / (a + m)
    y_b = m / (b + m)
    y, wt = _monomial_weight_rule(y_b, y_a, m, q)
    # y descending <-> x ascending
    x = tuple(m * (1.0 - yr) / yr for yr in reversed(y))
    weights = tuple((m + 1) * wr for wr in reversed(wt))
    return GaussRule(nodes=x, weights=weights, kind="pareto-truncated",
                     params=(a, b, m))


def gauss_jacobi_improper(m: int, q: int) -> GaussRule:
    """Rule for the full improper integral int_0^inf f(x) p(x) dx.

    Uses the q-point rule for weight (1+t)^m on [-1, 1] (moments
    2^(m+k+1)/(m+k+1)) and maps x_r = m(1-t_r)/(1+t_r); the returned
    weights sum to exactly 1, the total Pareto-Lomax mass.
    """
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise ValueError(f"m must be a positive integer, got {m!r}")
    if q not in (1, 2, 3):
        raise NotImplementedError(f"q must be in {{1, 2, 3}}, got {q}")
    # s = 1+t turns the weight into s^m on [0, 2]
    s, om = _monomial_weight_rule(0.0, 2.0, m, q)
    t = [sr - 1.0 for sr in s]
    x = [m * (1.0 - tr) / (1.0 + tr) for tr in t]
    wts = [(m + 1) / 2 ** (m + 1) * wr for wr in om]
    order = np.argsort(x)
    return GaussRule(nodes=tuple(x[i] for i in order),
                     weights=tuple(wts[i] for i in order),
                     kind="jacobi-improper", params=(m,))
