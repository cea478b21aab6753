"""Closed-form reference solutions for exponential and Gamma(2, beta) claims.

For Erlang-2 claims the ruin probability is a two-exponential expression:
applying (D + beta)^2 to the governing integro-differential equation
eliminates the convolution and leaves a constant-coefficient ODE whose
characteristic quadratic

    s^2 + (2 beta - lambda/c) s + beta^2 - 2 beta lambda/c = 0

has two negative roots whenever the net-profit condition holds (the
constant term equals beta^2 theta/(1+theta) > 0).  The two amplitudes are
fixed by psi(0) = 1/(1+theta) and psi'(0) = (lambda/c)(psi(0) - 1), the
latter read off the equation at u = 0 where the convolution vanishes and
the tail equals 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedModelError
from .model import Exponential, Gamma2, ModelParams


def exact_exponential(model: ModelParams, u):
    """psi(u) = (1/(1+theta)) exp(-theta beta u / (1+theta))."""
    if not isinstance(model.claims, Exponential):
        raise UnsupportedModelError(
            f"exact_exponential needs exponential claims, got {model.claims!r}"
        )
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    beta = model.claims.beta
    theta = model.theta
    out = model.psi0 * np.exp(-theta * beta * u / (1.0 + theta))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Gamma2ExactSolution:
    """psi(u) = a1 exp(s1 u) + a2 exp(s2 u) with s1, s2 < 0."""

    s1: float
    s2: float
    a1: float
    a2: float

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = self.a1 * np.exp(self.s1 * u) + self.a2 * np.exp(self.s2 * u)
        return float(out) if out.ndim == 0 else out

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        out = self.a1 * self.s1 * np.exp(self.s1 * u) + self.a2 * self.s2 * np.exp(self.s2 * u)
        return float(out) if out.ndim == 0 else out


def gamma2_exact_solution(model: ModelParams) -> Gamma2ExactSolution:
    if not isinstance(model.claims, Gamma2):
        raise UnsupportedModelError(
            f"exact_gamma2 needs Gamma2 claims, got {model.claims!r}"
        )
    beta = model.claims.beta
    loc = model.lambda_over_c
    b = 2.0 * beta - loc
    c0 = beta * beta - 2.0 * beta * loc
    disc = b * b - 4.0 * c0
    if disc <= 0:
        raise ArithmeticError(
            "characteristic quadratic lost its real roots; parameters invalid"
        )
    # cancellation-safe quadratic: q = -(b + sign(b) sqrt(disc))/2
    qroot = -(b + np.copysign(np.sqrt(disc), b)) / 2.0
    s1, s2 = sorted((qroot, c0 / qroot), reverse=True)  # s2 < s1 < 0
    psi0 = model.psi0
    dpsi0 = loc * (psi0 - 1.0)
    a1 = (dpsi0 - s2 * psi0) / (s1 - s2)
    a2 = psi0 - a1
    return Gamma2ExactSolution(s1=s1, s2=s2, a1=a1, a2=a2)


def exact_gamma2(model: ModelParams, u):
    """Closed-form psi(u) for Gamma(2, beta) claims."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise ValueError("u must be nonnegative")
    return gamma2_exact_solution(model)(u)
