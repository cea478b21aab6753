"""Claim-size distributions and classical risk-model parameters.

The surplus process is u + c*t - sum of claims arriving in a Poisson stream
of intensity lambda.  Everything downstream depends on the claim law only
through its tail, density and mean, and on (lambda, c) only through the
ratio lambda/c, so the premium rate is always derived from the safety
loading and never supplied directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RuinModelError


def _check_nonneg(u):
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0):
        raise ValueError(f"argument must be nonnegative, got {u!r}")
    return arr


class ClaimDistribution:
    """Base class for claim-size laws; subclasses supply tail/density/mean."""

    name = "base"

    def tail(self, u):
        """P(X > u) for u >= 0."""
        raise NotImplementedError

    def density(self, u):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def spec(self) -> str:
        """Distribution in the CLI mini-grammar, e.g. ``gamma2:beta=2.4``."""
        inner = ",".join(f"{k}={v}" for k, v in self.params().items())
        return f"{self.name}:{inner}"

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((type(self).__name__, tuple(self.params().items())))


class Gamma2(ClaimDistribution):
    """Erlang claim sizes with shape 2 and rate beta: mean 2/beta."""

    name = "gamma2"

    def __init__(self, beta: float):
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.beta = float(beta)

    def tail(self, u):
        u = _check_nonneg(u)
        b = self.beta
        return np.exp(-b * u) * (1.0 + b * u)

    def density(self, u):
        u = _check_nonneg(u)
        b = self.beta
        return b * b * u * np.exp(-b * u)

    def mean(self):
        return 2.0 / self.beta

    def params(self):
        return {"beta": self.beta}


class ParetoLomax(ClaimDistribution):
    """Pareto claims on [0, inf) with tail (m/(u+m))^(m+1).

    The integer parameter m keeps the mean equal to 1 for every m >= 1.
    """

    name = "pareto"

    def __init__(self, m: int):
        if not (isinstance(m, (int, np.integer)) and not isinstance(m, bool)) or m < 1:
            raise ValueError(f"m must be a positive integer, got {m!r}")
        self.m = int(m)

    def tail(self, u):
        u = _check_nonneg(u)
        m = self.m
        return (m / (u + m)) ** (m + 1)

    def density(self, u):
        u = _check_nonneg(u)
        m = self.m
        return ((m + 1) / m) * (m / (u + m)) ** (m + 2)

    def mean(self):
        return 1.0

    def params(self):
        return {"m": self.m}


class Exponential(ClaimDistribution):
    """Exponential claim sizes with rate beta; the one case with a fully
    explicit ruin probability."""

    name = "exponential"

    def __init__(self, beta: float):
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.beta = float(beta)

    def tail(self, u):
        u = _check_nonneg(u)
        return np.exp(-self.beta * u)

    def density(self, u):
        u = _check_nonneg(u)
        return self.beta * np.exp(-self.beta * u)

    def mean(self):
        return 1.0 / self.beta

    def params(self):
        return {"beta": self.beta}


def psi_at_zero(theta: float) -> float:
    """Ruin probability at zero initial surplus, 1/(1+theta)."""
    if not theta > 0:
        raise RuinModelError(
            f"safety loading must be positive for a stable model, got {theta}"
        )
    return 1.0 / (1.0 + theta)


@dataclass(frozen=True)
class ModelParams:
    """Risk-model parameters with the premium rate derived, never free.

    c = (1+theta)*lambda*E[X] always holds, so lambda/c depends only on
    theta and the claim mean; lam defaults to 1 because no scheme can
    observe its absolute value.
    """

    theta: float
    claims: ClaimDistribution
    lam: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise RuinModelError(
                f"safety loading must be positive for a stable model, got {self.theta}"
            )
        if not self.lam > 0:
            raise RuinModelError(f"claim intensity must be positive, got {self.lam}")
        if not isinstance(self.claims, ClaimDistribution):
            raise TypeError(f"claims must be a ClaimDistribution, got {self.claims!r}")

    @property
    def c(self) -> float:
        """Premium rate, (1+theta)*lambda*E[X]."""
        return (1.0 + self.theta) * self.lam * self.claims.mean()

    @property
    def lambda_over_c(self) -> float:
        """lambda/c = 1/((1+theta)*E[X]); for Gamma2 this is beta/(2(1+theta))."""
        return 1.0 / ((1.0 + self.theta) * self.claims.mean())

    @property
    def psi0(self) -> float:
        return psi_at_zero(self.theta)


@dataclass
class SolutionPath:
    """Ruin probabilities on the uniform grid u_n = n*h.

    ``values[n]`` approximates psi(n*h); ``meta`` carries scheme settings
    (q, coefficient set, rule-cache statistics) for report output.
    """

    h: float
    values: np.ndarray
    method: str
    model: ModelParams
    meta: dict = field(default_factory=dict)

    @property
    def u_max(self) -> float:
        return (len(self.values) - 1) * self.h

    def grid(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.h

    def validate(self, eps_mono: float = 1e-8):
        """Check the path invariants: starts at 1/(1+theta), stays within
        [-eps, 1], and is nonincreasing up to eps."""
        v = self.values
        if not np.isfinite(v).all():
            raise ValueError("path contains non-finite values")
        if abs(v[0] - self.model.psi0) > 1e-14:
            raise ValueError(f"path does not start at 1/(1+theta): {v[0]!r}")
        if v.min() < -eps_mono or v.max() > 1.0 + 1e-12:
            raise ValueError(
                f"path leaves [0, 1]: min={v.min()!r} max={v.max()!r}"
            )
        rises = np.diff(v)
        worst = rises.max(initial=0.0)
        if worst > eps_mono:
            raise ValueError(f"path is not nonincreasing: max rise {worst!r}")
        return self
