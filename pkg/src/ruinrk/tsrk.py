"""Two-step Runge-Kutta machinery.

Three solver families share the update

    psi_{n+1} = theta1 psi_n + theta2 psi_{n-1}
                + h sum_i v_i k_i^{n-1} + h sum_i w_i k_i^{n}:

* ``gamma-ode-m1`` / ``gamma-ode-m2``: Gamma(2, beta) claims turn the
  convolution into two auxiliary state variables, giving a linear 3-d ODE
  system that the method integrates directly (one constant stage matrix,
  factored once per solve).
* ``pareto-phl``: Pareto claims keep the convolution; each stage splits it
  into a history part (per-panel truncated-weight Gauss rules, cached by
  lag index, history values by clamped 4-point Lagrange interpolation) and
  a local part over the current step (Gauss rule on [0, c1 h] applied to a
  cubic stage interpolant, which makes the stage mildly implicit).
* ``pareto-improper``: the remark variant replacing convolution plus tail
  by one fixed Gauss-Jacobi sum over the extension psi*(s) = 1 for s < 0.

The fourth-order one-stage coefficient set is derived at runtime from the
order / stage / quadrature / consistency condition systems; the derivation
fixes the history and local quadrature abscissae to the two-point
Gauss-Legendre choices and then solves the four order conditions for
(theta2, v1, w1, c1).  Sixth-order two-stage coefficients are never derived
here; they are read from a key = value table and validated before use.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np

from .errors import (
    CoefficientFileError,
    DerivationError,
    DivergedError,
    StepFailureError,
    UnsupportedModelError,
)
from .model import Gamma2, ModelParams, ParetoLomax, SolutionPath
from .quadrature import gauss_legendre_01, pareto_truncated_gauss, gauss_jacobi_improper
from .rk4 import n_steps, rk4_step_pareto

_SQRT3 = np.sqrt(3.0)

SCHEMES = ("gamma-ode-m1", "gamma-ode-m2", "pareto-phl", "pareto-improper")
_METHOD_LABEL = {
    "gamma-ode-m1": "tsrk4-g",
    "gamma-ode-m2": "tsrk6-g",
    "pareto-phl": "tsrk4-phl",
    "pareto-improper": "tsrk4-improper",
}


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TSRKCoefficients:
    """Complete coefficient set of an m-stage two-step method.

    The quadrature/consistency groups (``mu0`` > 0) are populated only by
    the fourth-order derivation; externally supplied sets drive the ODE
    form, which needs none of them.
    """

    m: int
    c: tuple
    theta1: float
    theta2: float
    v: tuple
    w: tuple
    delta: tuple        # per stage i: (delta_i1, delta_i2)
    a: tuple            # per stage i: (a_i1, ..., a_im)
    b: tuple
    mu0: int = 0
    mu1: int = 0
    local_w: tuple = () # per stage i: (w_i1, ..., w_i mu0)
    local_d: tuple = ()
    hist_omega: tuple = ()
    hist_xi: tuple = ()
    hist_zeta: tuple = ()   # per j: (zeta_j1, zeta_j2)
    hist_rho: tuple = ()    # per j: (rho_j1, ..., rho_jm)
    hist_gamma: tuple = ()
    local_eta: tuple = ()   # per stage i: per j: (eta_ij1, eta_ij2)
    local_alpha: tuple = () # per stage i: per j: (alpha_ij1, ..., alpha_ijm)
    local_beta: tuple = ()
    start_gamma: tuple = () # per j: (gt_j1, gt_j2, gt_j3)
    start_c: tuple = ()
    source: str = "derived"

    @property
    def order(self) -> int:
        return 2 * self.m + 2

    @property
    def stage_order(self) -> int:
        return 2 * self.m + 1

    def core_dict(self) -> dict:
        """Scalar coefficients for run metadata."""
        return {
            "m": self.m, "c": list(self.c),
            "theta1": self.theta1, "theta2": self.theta2,
            "v": list(self.v), "w": list(self.w),
            "delta": [list(r) for r in self.delta],
            "a": [list(r) for r in self.a],
            "b": [list(r) for r in self.b],
            "source": self.source,
        }


def _condition_matrix(c1: float) -> np.ndarray:
    """Coefficient matrix shared by the one-stage order, stage and
    history/local consistency systems (unknown triple per system)."""
    return np.array([
        [1.0, -1.0, -1.0],
        [-0.5, -(c1 - 1.0), -c1],
        [1.0 / 6.0, -(c1 - 1.0) ** 2 / 2.0, -(c1**2) / 2.0],
    ])


def _order4_residual(c1: float) -> float:
    """tau = 4 order residual after eliminating (theta2, v1, w1)."""
    th2, v1, w1 = np.linalg.solve(
        _condition_matrix(c1), -np.array([1.0, 0.5, 1.0 / 6.0])
    )
    return (1.0 - th2) / 24.0 - v1 * (c1 - 1.0) ** 3 / 6.0 - w1 * c1**3 / 6.0


def _bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (flo < 0) == (fm < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=1)
def derive_tsrk4_coefficients() -> TSRKCoefficients:
    """Solve the fourth-order one-stage condition system.

    The four order conditions reduce to a scalar equation in c1 once the
    three unknowns linear in it are eliminated; among its real roots, the
    one with c1 in (0, 1] and smallest ``abs(theta2)`` is selected.  All
    remaining coefficient groups follow from linear systems.  Every
    residual is re-verified to 1e-12 before the set is returned.
    """
    grid = np.linspace(1e-6, 1.0, 4001)
    vals = [_order4_residual(x) for x in grid]
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(grid[i])
        elif (vals[i] < 0) != (vals[i + 1] < 0):
            roots.append(_bisect(_order4_residual, grid[i], grid[i + 1]))
    if not roots:
        raise DerivationError("no admissible c1 root in (0, 1]")

    best = None
    for c1 in roots:
        th2, v1, w1 = np.linalg.solve(
            _condition_matrix(c1), -np.array([1.0, 0.5, 1.0 / 6.0])
        )
        if best is None or abs(th2) < abs(best[1]):
            best = (c1, th2, v1, w1)
    c1, th2, v1, w1 = best

    amat = _condition_matrix(c1)
    d12, a11, b11 = np.linalg.solve(amat, -np.array([c1, c1**2 / 2.0, c1**3 / 6.0]))

    gl = gauss_legendre_01(2)
    xi = gl.nodes
    omega = gl.weights
    d_loc = (c1 / 2.0 - c1 / (2.0 * _SQRT3), c1 / 2.0 + c1 / (2.0 * _SQRT3))
    w_loc = (c1 / 2.0, c1 / 2.0)

    def triple(x):
        return np.linalg.solve(amat, -np.array([x, x**2 / 2.0, x**3 / 6.0]))

    zeta, rho, gam = [], [], []
    for x in xi:
        z2, r1, g1 = triple(x)
        zeta.append((1.0 - z2, z2))
        rho.append((r1,))
        gam.append((g1,))

    eta, alpha, beta = [], [], []
    for x in d_loc:    # local consistency abscissae coincide with d_1j
        e2, al, be = triple(x)
        eta.append((1.0 - e2, e2))
        alpha.append((al,))
        beta.append((be,))

    start_c = (0.0, 0.5, 1.0)
    smat = np.array([
        [1.0, 1.0, 1.0],
        [0.0, start_c[1], start_c[2]],
        [0.0, start_c[1] ** 2 / 2.0, start_c[2] ** 2 / 2.0],
    ])
    start_gamma = tuple(
        tuple(np.linalg.solve(smat, np.array([x, x**2 / 2.0, x**3 / 6.0])))
        for x in xi
    )

    coeffs = TSRKCoefficients(
        m=1, c=(float(c1),), theta1=float(1.0 - th2), theta2=float(th2),
        v=(float(v1),), w=(float(w1),),
        delta=((float(1.0 - d12), float(d12)),),
        a=((float(a11),),), b=((float(b11),),),
        mu0=2, mu1=2,
        local_w=(w_loc,), local_d=(d_loc,),
        hist_omega=tuple(omega), hist_xi=tuple(xi),
        hist_zeta=tuple(zeta), hist_rho=tuple(rho), hist_gamma=tuple(gam),
        local_eta=(tuple(eta),), local_alpha=(tuple(alpha),),
        local_beta=(tuple(beta),),
        start_gamma=start_gamma, start_c=start_c,
        source="derived-order4",
    )
    bad = {k: r for k, r in coefficient_residuals(coeffs).items() if abs(r) > 1e-12}
    if bad:
        raise DerivationError(f"derived coefficients violate conditions: {bad}")
    return coeffs


def coefficient_residuals(cf: TSRKCoefficients) -> dict:
    """Re-evaluate every condition from the coefficient values.

    Always includes the order and stage groups (tau up to 2m+2 and 2m+1);
    the quadrature, history, local and starting groups are included when
    the set carries them (mu0 > 0).
    """
    res = {}
    m = cf.m
    res["theta_sum"] = 1.0 - cf.theta1 - cf.theta2
    for tau in range(1, cf.order + 1):
        r = 1.0 / factorial(tau) - cf.theta2 * (-1.0) ** tau / factorial(tau)
        for i in range(m):
            r -= cf.v[i] * (cf.c[i] - 1.0) ** (tau - 1) / factorial(tau - 1)
            r -= cf.w[i] * cf.c[i] ** (tau - 1) / factorial(tau - 1)
        res[f"order_tau{tau}"] = r
    for i in range(m):
        res[f"stage{i+1}_delta_sum"] = 1.0 - cf.delta[i][0] - cf.delta[i][1]
        for tau in range(1, cf.stage_order + 1):
            r = cf.c[i] ** tau / factorial(tau) - cf.delta[i][1] * (-1.0) ** tau / factorial(tau)
            for j in range(m):
                r -= cf.a[i][j] * (cf.c[j] - 1.0) ** (tau - 1) / factorial(tau - 1)
                r -= cf.b[i][j] * cf.c[j] ** (tau - 1) / factorial(tau - 1)
            res[f"stage{i+1}_tau{tau}"] = r
    if cf.mu0 == 0:
        return res

    for k in range(4):
        r = sum(om * x**k for om, x in zip(cf.hist_omega, cf.hist_xi)) - 1.0 / (k + 1)
        res[f"quad_hist_k{k}"] = r
    for i in range(m):
        for k in range(4):
            r = sum(wl * d**k for wl, d in zip(cf.local_w[i], cf.local_d[i]))
            r -= cf.c[i] ** (k + 1) / (k + 1)
            res[f"quad_local{i+1}_k{k}"] = r
    for j in range(cf.mu1):
        x = cf.hist_xi[j]
        res[f"hist_zeta_sum_j{j+1}"] = 1.0 - cf.hist_zeta[j][0] - cf.hist_zeta[j][1]
        for tau in range(1, 4):
            r = x**tau / factorial(tau) - (-1.0) ** tau / factorial(tau) * cf.hist_zeta[j][1]
            for l in range(m):
                r -= cf.hist_rho[j][l] * (cf.c[l] - 1.0) ** (tau - 1) / factorial(tau - 1)
                r -= cf.hist_gamma[j][l] * cf.c[l] ** (tau - 1) / factorial(tau - 1)
            res[f"hist_tau{tau}_j{j+1}"] = r
        for tau in range(1, 4):
            r = x**tau / factorial(tau)
            for l, cl in enumerate(cf.start_c):
                r -= cf.start_gamma[j][l] * cl ** (tau - 1) / factorial(tau - 1)
            res[f"start_tau{tau}_j{j+1}"] = r
    for i in range(m):
        for j in range(cf.mu0):
            t1j = cf.local_d[i][j]   # local consistency holds at the local abscissae
            res[f"local_eta_sum_i{i+1}_j{j+1}"] = (
                1.0 - cf.local_eta[i][j][0] - cf.local_eta[i][j][1]
            )
            for tau in range(1, 4):
                r = (t1j**tau / factorial(tau)
                     - (-1.0) ** tau / factorial(tau) * cf.local_eta[i][j][1])
                for l in range(m):
                    r -= cf.local_alpha[i][j][l] * (cf.c[l] - 1.0) ** (tau - 1) / factorial(tau - 1)
                    r -= cf.local_beta[i][j][l] * cf.c[l] ** (tau - 1) / factorial(tau - 1)
                res[f"local_tau{tau}_i{i+1}_j{j+1}"] = r
    return res


_M2_KEYS = ("c1", "c2", "theta1", "theta2", "v1", "v2", "w1", "w2",
            "delta11", "delta12", "delta21", "delta22",
            "a11", "a12", "a21", "a22", "b11", "b12", "b21", "b22")


def load_m2_coefficients(path) -> TSRKCoefficients:
    """Read a sixth-order two-stage coefficient table (``key = value``
    lines, ``#`` comments) and validate it before use."""
    kv = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CoefficientFileError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            try:
                kv[key] = float(val)
            except ValueError as exc:
                raise CoefficientFileError(f"{path}:{lineno}: bad value {val!r}") from exc
    if kv.pop("m", 2) != 2:
        raise CoefficientFileError(f"{path}: only m = 2 tables are supported")
    missing = [k for k in _M2_KEYS if k not in kv]
    unknown = [k for k in kv if k not in _M2_KEYS]
    if missing or unknown:
        raise CoefficientFileError(
            f"{path}: missing keys {missing or 'none'}, unknown keys {unknown or 'none'}"
        )
    cf = TSRKCoefficients(
        m=2, c=(kv["c1"], kv["c2"]),
        theta1=kv["theta1"], theta2=kv["theta2"],
        v=(kv["v1"], kv["v2"]), w=(kv["w1"], kv["w2"]),
        delta=((kv["delta11"], kv["delta12"]), (kv["delta21"], kv["delta22"])),
        a=((kv["a11"], kv["a12"]), (kv["a21"], kv["a22"])),
        b=((kv["b11"], kv["b12"]), (kv["b21"], kv["b22"])),
        source=str(path),
    )
    bad = {k: r for k, r in coefficient_residuals(cf).items() if abs(r) > 1e-12}
    if bad:
        raise CoefficientFileError(
            f"{path}: coefficient table violates consistency conditions: {bad}"
        )
    return cf


# ---------------------------------------------------------------------------
# Small dense linear algebra for the stage systems
# ---------------------------------------------------------------------------

def _lu_factor_small(a: np.ndarray, h: float, pivot_tol: float = 1e-14):
    """Gaussian elimination with partial pivoting; fails loudly on a tiny
    pivot instead of propagating garbage."""
    lu = a.copy()
    n = lu.shape[0]
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < pivot_tol:
            raise StepFailureError(
                f"singular stage matrix (pivot {lu[p, k]!r})", h=h
            )
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, piv


def _lu_solve_small(lu_piv, rhs: np.ndarray) -> np.ndarray:
    lu, piv = lu_piv
    x = rhs[piv].astype(float)
    n = lu.shape[0]
    for k in range(1, n):
        x[k] -= lu[k, :k] @ x[:k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - lu[k, k + 1:] @ x[k + 1:]) / lu[k, k]
    return x


# ---------------------------------------------------------------------------
# Gamma ODE form
# ---------------------------------------------------------------------------

@dataclass
class LinearOdeSystem:
    """Y' = matrix Y + forcing(u) with Y = (psi, K1, I)."""

    matrix: np.ndarray
    forcing: object
    y0: np.ndarray

    def rhs(self, u: float, y: np.ndarray) -> np.ndarray:
        return self.matrix @ y + self.forcing(u)


def gamma2_ode_system(model: ModelParams) -> LinearOdeSystem:
    """The 3-d linear reformulation available for Gamma(2, beta) claims."""
    if not isinstance(model.claims, Gamma2):
        raise UnsupportedModelError(
            f"the ODE form needs Gamma2 claims, got {model.claims!r}"
        )
    beta = model.claims.beta
    loc = model.lambda_over_c
    mat = np.array([
        [loc, 0.0, -loc],
        [1.0, -beta, 0.0],
        [0.0, beta * beta, -beta],
    ])

    def forcing(u):
        return np.array([-loc * np.exp(-beta * u) * (1.0 + beta * u), 0.0, 0.0])

    y0 = np.array([model.psi0, 0.0, 0.0])
    return LinearOdeSystem(matrix=mat, forcing=forcing, y0=y0)


@dataclass
class TsrkStepState:
    """Rolling state of the two-step recursion: the two most recent
    solution values and the previous step's stage derivatives."""

    y_prev: object
    y_curr: object
    k_prev: object


@dataclass
class TsrkBootstrap:
    """Starting data: the state after one bootstrap step plus the exact
    derivative at the origin (useful as a sanity anchor)."""

    state: TsrkStepState
    origin_derivative: object


def _rk4_classical(rhs, u0: float, y: np.ndarray, h: float, substeps: int = 1):
    step = h / substeps
    u = u0
    for _ in range(substeps):
        k1 = rhs(u, y)
        k2 = rhs(u + step / 2.0, y + step / 2.0 * k1)
        k3 = rhs(u + step / 2.0, y + step / 2.0 * k2)
        k4 = rhs(u + step, y + step * k3)
        y = y + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        u += step
    return y


def tsrk_bootstrap_ode(coeffs: TSRKCoefficients, system: LinearOdeSystem,
                       h: float) -> TsrkBootstrap:
    """Classical RK4 start on the ODE system.

    y_1 comes from one RK4 step (several substeps for m >= 2, where a
    single-step start would cap the observable order at five); the stage
    derivatives of the virtual step 0 are the ODE right side evaluated at
    y(c_i h) obtained the same way.
    """
    substeps = 1 if coeffs.m == 1 else 4
    y1 = _rk4_classical(system.rhs, 0.0, system.y0, h, substeps)
    k_prev = np.array([
        system.rhs(ci * h, _rk4_classical(system.rhs, 0.0, system.y0, ci * h, substeps))
        if ci != 0.0 else system.rhs(0.0, system.y0)
        for ci in coeffs.c
    ])
    state = TsrkStepState(y_prev=system.y0.copy(), y_curr=y1, k_prev=k_prev)
    return TsrkBootstrap(state=state, origin_derivative=system.rhs(0.0, system.y0))


def stage_operator(coeffs: TSRKCoefficients, system: LinearOdeSystem, h: float):
    """Factor I_(3m) - h (b kron M) once; it is step-independent."""
    m = coeffs.m
    dim = system.matrix.shape[0]
    s = np.eye(m * dim)
    for i in range(m):
        for j in range(m):
            s[i * dim:(i + 1) * dim, j * dim:(j + 1) * dim] -= (
                h * coeffs.b[i][j] * system.matrix
            )
    return _lu_factor_small(s, h)


def tsrk_ode_step(coeffs: TSRKCoefficients, system: LinearOdeSystem,
                  state: TsrkStepState, h: float, n: int, factor=None):
    """One step of the m-stage method on the linear ODE system.

    Returns (y_{n+1}, stage derivatives k^{[n]}).  The stage values solve
    the 3m x 3m linear system by direct elimination; ``factor`` may carry
    the prefactored operator.
    """
    m = coeffs.m
    dim = system.matrix.shape[0]
    if factor is None:
        factor = stage_operator(coeffs, system, h)
    un = n * h
    g_at = [system.forcing(un + ci * h) for ci in coeffs.c]
    rhs = np.empty(m * dim)
    for i in range(m):
        r = coeffs.delta[i][0] * state.y_curr + coeffs.delta[i][1] * state.y_prev
        for j in range(m):
            r = r + h * coeffs.a[i][j] * state.k_prev[j] + h * coeffs.b[i][j] * g_at[j]
        rhs[i * dim:(i + 1) * dim] = r
    stages = _lu_solve_small(factor, rhs)
    k = np.array([
        system.matrix @ stages[i * dim:(i + 1) * dim] + g_at[i] for i in range(m)
    ])
    y_next = coeffs.theta1 * state.y_curr + coeffs.theta2 * state.y_prev
    for i in range(m):
        y_next = y_next + h * coeffs.v[i] * state.k_prev[i] + h * coeffs.w[i] * k[i]
    return y_next, k


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------

def _lagrange_weights(nodes: np.ndarray, x: float) -> np.ndarray:
    w = np.ones(len(nodes))
    for i in range(len(nodes)):
        for j in range(len(nodes)):
            if i != j:
                w[i] *= (x - nodes[j]) / (nodes[i] - nodes[j])
    return w


def cubic_interpolate(values, h: float, u: float) -> float:
    """Evaluate the path at an off-grid point by 4-point Lagrange
    interpolation on the nearest nodes (stencil clamped at the ends, and
    degree reduced when fewer than four nodes exist)."""
    psi = np.asarray(values, dtype=float)
    nmax = psi.size - 1
    x = u / h
    if x < -1e-9 or x > nmax + 1e-9:
        raise ValueError(
            f"u = {u!r} outside the covered range [0, {nmax * h!r}]; refusing to extrapolate"
        )
    if abs(x - round(x)) < 1e-9:   # snap to the grid to keep node hits exact
        return float(psi[int(round(x))])
    x = min(max(x, 0.0), float(nmax))
    width = min(3, nmax)
    base = int(np.floor(x)) - 1
    base = min(max(base, 0), nmax - width)
    nodes = np.arange(base, base + width + 1, dtype=float)
    return float(_lagrange_weights(nodes, x) @ psi[base:base + width + 1])


def _cubic_stencil_weights(frac: float) -> np.ndarray:
    """Lagrange weights on the relative nodes {-1, 0, 1, 2} at offset
    ``frac`` measured from node 0 (interior history stencil)."""
    t = frac
    return np.array([
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ])


def _hermite01(t, y0, y1, hd0, hd1):
    """Cubic Hermite on [0, 1] from endpoint values and h-scaled slopes."""
    t2 = t * t
    t3 = t2 * t
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * hd0
            + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * hd1)


# ---------------------------------------------------------------------------
# Pareto history-local scheme (TSRK4-PHL)
# ---------------------------------------------------------------------------

def lag_interval(j: int, c1: float, h: float) -> tuple:
    """Lag window of history panel with lag index j = n - ell at stage
    offset c1: [(j - 1 + c1) h, (j + c1) h].  Depends only on j, so rules
    are cached per lag index for the whole run."""
    return ((j - 1 + c1) * h, (j + c1) * h)


class PhlWorkspace:
    """Per-solve context for the Pareto stage convolution: the local rule,
    the lag-indexed history rule cache with precombined interior stencil
    weights, and the inverse of the stage-interpolant matrix."""

    def __init__(self, model: ModelParams, coeffs: TSRKCoefficients,
                 h: float, q: int):
        if not isinstance(model.claims, ParetoLomax):
            raise UnsupportedModelError(
                f"the Pareto schemes need ParetoLomax claims, got {model.claims!r}"
            )
        self.m = model.claims.m
        self.loc = model.lambda_over_c
        self.h = h
        self.q = q
        self.c1 = coeffs.c[0]
        self.local_rule = pareto_truncated_gauss(0.0, self.c1 * h, self.m, q)
        self.t_local = np.array([self.c1 - x / h for x in self.local_rule.nodes])
        # stage interpolant P(t) = psi_n + B t + C t^2 + D t^3 with
        # P(-1) = psi_{n-1}, P'(c1 - 1) = h k_prev, P'(c1) = h k
        c1 = self.c1
        self.stage_minv = np.linalg.inv(np.array([
            [-1.0, 1.0, -1.0],
            [1.0, 2.0 * (c1 - 1.0), 3.0 * (c1 - 1.0) ** 2],
            [1.0, 2.0 * c1, 3.0 * c1**2],
        ]))
        self._rules = {}
        self._fracs = {}
        self._varr = np.zeros((256, 4))   # row j holds the combined stencil weights
        self._built_through = 0
        self.builds = 0

    def rule(self, j: int):
        try:
            return self._rules[j]
        except KeyError:
            a, b = lag_interval(j, self.c1, self.h)
            r = pareto_truncated_gauss(a, b, self.m, self.q)
            self._rules[j] = r
            # grid-unit offsets of the evaluation points inside panel j
            fr = np.array([j + self.c1 - x / self.h for x in r.nodes])
            self._fracs[j] = fr
            if j >= self._varr.shape[0]:
                grown = np.zeros((max(2 * self._varr.shape[0], j + 1), 4))
                grown[: self._varr.shape[0]] = self._varr
                self._varr = grown
            vrow = np.zeros(4)
            for wr, f in zip(r.weights, fr):
                vrow += wr * _cubic_stencil_weights(f)
            self._varr[j] = vrow
            self.builds += 1
            return r

    def frac(self, j: int):
        self.rule(j)
        return self._fracs[j]

    def vrows_through(self, j: int) -> np.ndarray:
        for jj in range(self._built_through + 1, j + 1):
            self.rule(jj)
        self._built_through = max(self._built_through, j)
        return self._varr

    def stats(self) -> dict:
        return {"rules_built": self.builds, "lag_indices": len(self._rules)}


def _phl_history(ws: PhlWorkspace, psi: np.ndarray, n: int) -> float:
    """History part of the stage convolution at s1 = u_n + c1 h: summed
    per-panel Gauss rules with path values interpolated on 4-point
    stencils (clamped in the first and last panels)."""
    vrows = ws.vrows_through(n)
    total = 0.0
    if n >= 3:
        # interior panels j = 2..n-1 use the centred stencil {n-j-1..n-j+2};
        # contribution is four reversed dot products over the path
        lo, hi = 2, n - 1
        for s in range(4):
            seg = psi[n - hi - 1 + s: n - lo + s]
            total += float(vrows[lo:hi + 1, s][::-1] @ seg)
    # j = 1: points in [u_{n-1}, u_n]; stencil clamped to the last nodes
    rule = ws.rule(1)
    fr = ws.frac(1)
    base = max(0, n - 3)
    nodes = np.arange(base, n + 1, dtype=float)
    for wr, f in zip(rule.weights, fr):
        lw = _lagrange_weights(nodes, (n - 1) + f)
        total += wr * float(lw @ psi[base:n + 1])
    # j = n (distinct from 1 when n >= 2): points in [0, u_1]
    if n >= 2:
        rule = ws.rule(n)
        fr = ws.frac(n)
        hi_node = min(3, n)
        nodes = np.arange(0, hi_node + 1, dtype=float)
        for wr, f in zip(rule.weights, fr):
            lw = _lagrange_weights(nodes, f)
            total += wr * float(lw @ psi[:hi_node + 1])
    return total


def _implicit_stage(ws, coeffs, state, hist_term, tail_s1, h):
    """Fixed-point iteration on the implicit scalar stage derivative."""
    pn, pn1, kprev = state.y_curr, state.y_prev, state.k_prev[0]
    d11, d12 = coeffs.delta[0]
    a11 = coeffs.a[0][0]
    b11 = coeffs.b[0][0]
    k = kprev
    for _ in range(50):
        bcd = ws.stage_minv @ np.array([pn1 - pn, h * kprev, h * k])
        p_loc = pn + bcd[0] * ws.t_local + bcd[1] * ws.t_local**2 + bcd[2] * ws.t_local**3
        i_loc = float(np.asarray(ws.local_rule.weights) @ p_loc)
        psi_stage = d11 * pn + d12 * pn1 + h * a11 * kprev + h * b11 * k
        k_new = ws.loc * (psi_stage - (hist_term + i_loc) - tail_s1)
        if abs(k_new - k) < 1e-13:
            return k_new
        k = k_new
    raise StepFailureError("implicit stage iteration did not contract", h=h)


def tsrk4_phl_step(model: ModelParams, coeffs: TSRKCoefficients, history,
                   state: TsrkStepState, h: float, n: int, q: int = 2,
                   workspace: PhlWorkspace | None = None):
    """Advance the Pareto history-local scheme by one step (n >= 1).

    Returns (psi_{n+1}, k^{[n]}).  The caller keeps ``history`` consistent
    with ``state`` (history[n] == state.y_curr).
    """
    if n < 1:
        raise ValueError("the two-step recursion starts at n = 1")
    psi = np.asarray(history, dtype=float)
    if psi.size != n + 1:
        raise ValueError(f"history must hold psi_0..psi_n ({n + 1} values)")
    ws = workspace if workspace is not None else PhlWorkspace(model, coeffs, h, q)
    s1 = (n + ws.c1) * h
    hist = _phl_history(ws, psi, n)
    k = _implicit_stage(ws, coeffs, state, hist, float(model.claims.tail(s1)), h)
    psi_next = (coeffs.theta1 * state.y_curr + coeffs.theta2 * state.y_prev
                + h * coeffs.v[0] * state.k_prev[0] + h * coeffs.w[0] * k)
    return psi_next, k


class ImproperWorkspace:
    """Context for the single-rule variant: fixed Gauss-Jacobi nodes plus
    the same stage-interpolant matrix as the history-local scheme."""

    def __init__(self, model, coeffs, h, q):
        if not isinstance(model.claims, ParetoLomax):
            raise UnsupportedModelError(
                f"the Pareto schemes need ParetoLomax claims, got {model.claims!r}"
            )
        self.m = model.claims.m
        self.loc = model.lambda_over_c
        self.h = h
        self.q = q
        self.c1 = coeffs.c[0]
        self.rule = gauss_jacobi_improper(self.m, q)
        c1 = self.c1
        self.stage_minv = np.linalg.inv(np.array([
            [-1.0, 1.0, -1.0],
            [1.0, 2.0 * (c1 - 1.0), 3.0 * (c1 - 1.0) ** 2],
            [1.0, 2.0 * c1, 3.0 * c1**2],
        ]))

    def stats(self) -> dict:
        return {"nodes": list(self.rule.nodes)}


def tsrk4_improper_step(model: ModelParams, coeffs: TSRKCoefficients, history,
                        state: TsrkStepState, h: float, n: int, q: int = 2,
                        workspace: ImproperWorkspace | None = None):
    """Advance the single-improper-integral variant by one step.

    The stage convolution plus tail is one fixed Gauss-Jacobi sum over
    psi*, where psi*(s) = 1 for s < 0, the interpolated path on [0, u_n],
    and the stage interpolant beyond u_n.
    """
    if n < 1:
        raise ValueError("the two-step recursion starts at n = 1")
    psi = np.asarray(history, dtype=float)
    if psi.size != n + 1:
        raise ValueError(f"history must hold psi_0..psi_n ({n + 1} values)")
    ws = workspace if workspace is not None else ImproperWorkspace(model, coeffs, h, q)
    pn, pn1, kprev = state.y_curr, state.y_prev, state.k_prev[0]
    d11, d12 = coeffs.delta[0]
    a11 = coeffs.a[0][0]
    b11 = coeffs.b[0][0]
    s1 = (n + ws.c1) * h

    k = kprev
    for _ in range(50):
        bcd = ws.stage_minv @ np.array([pn1 - pn, h * kprev, h * k])
        conv = 0.0
        for xr, wr in zip(ws.rule.nodes, ws.rule.weights):
            s = s1 - xr
            if s < 0.0:
                val = 1.0
            elif s <= n * h * (1.0 + 1e-12):
                val = cubic_interpolate(psi, h, min(s, n * h))
            else:
                t = s / h - n
                val = pn + bcd[0] * t + bcd[1] * t * t + bcd[2] * t**3
            conv += wr * val
        psi_stage = d11 * pn + d12 * pn1 + h * a11 * kprev + h * b11 * k
        k_new = ws.loc * psi_stage - ws.loc * conv
        if abs(k_new - k) < 1e-13:
            break
        k = k_new
    else:
        raise StepFailureError("implicit stage iteration did not contract", h=h)
    k = k_new
    psi_next = (coeffs.theta1 * pn + coeffs.theta2 * pn1
                + h * coeffs.v[0] * kprev + h * coeffs.w[0] * k)
    return psi_next, k


def tsrk_bootstrap_pareto(model: ModelParams, coeffs: TSRKCoefficients,
                          h: float, q: int = 2,
                          improper: bool = False) -> TsrkBootstrap:
    """Start the Pareto schemes: psi_1 by one RK4 step, then the virtual
    step-0 stage derivative from the governing equation at c1 h, with
    psi on [0, h] represented by a cubic Hermite interpolant whose end
    slope is itself iterated to consistency."""
    if not isinstance(model.claims, ParetoLomax):
        raise UnsupportedModelError(
            f"the Pareto schemes need ParetoLomax claims, got {model.claims!r}"
        )
    m = model.claims.m
    loc = model.lambda_over_c
    psi0 = model.psi0
    psi1 = rk4_step_pareto(model, np.array([psi0]), h, 0)
    c1 = coeffs.c[0]
    dpsi0 = loc * (psi0 - 1.0)   # convolution empty, tail(0) = 1

    rule_h = pareto_truncated_gauss(0.0, h, m, q)
    t_h = np.array([1.0 - x / h for x in rule_h.nodes])
    tail_h = float(model.claims.tail(h))
    dpsi1 = dpsi0
    for _ in range(50):
        vals = _hermite01(t_h, psi0, psi1, h * dpsi0, h * dpsi1)
        new = loc * (psi1 - float(np.asarray(rule_h.weights) @ vals) - tail_h)
        if abs(new - dpsi1) < 1e-14:
            dpsi1 = new
            break
        dpsi1 = new

    s0 = c1 * h
    psi_c1 = float(_hermite01(c1, psi0, psi1, h * dpsi0, h * dpsi1))
    if improper:
        rule = gauss_jacobi_improper(m, q)
        conv = 0.0
        for xr, wr in zip(rule.nodes, rule.weights):
            s = s0 - xr
            conv += wr * (1.0 if s < 0 else float(
                _hermite01(s / h, psi0, psi1, h * dpsi0, h * dpsi1)))
        k0 = loc * psi_c1 - loc * conv
    else:
        rule = pareto_truncated_gauss(0.0, s0, m, q)
        t_s = np.array([(s0 - x) / h for x in rule.nodes])
        i0 = float(np.asarray(rule.weights)
                   @ _hermite01(t_s, psi0, psi1, h * dpsi0, h * dpsi1))
        k0 = loc * (psi_c1 - i0 - float(model.claims.tail(s0)))
    state = TsrkStepState(y_prev=psi0, y_curr=psi1, k_prev=(k0,))
    return TsrkBootstrap(state=state, origin_derivative=dpsi0)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def solve_tsrk(model: ModelParams, h: float, u_max: float, scheme: str,
               q: int = 2, m2_coefficients=None) -> SolutionPath:
    """Run a two-step scheme up to u_max.

    ``scheme`` is one of ``gamma-ode-m1``, ``gamma-ode-m2`` (needs an
    external coefficient table), ``pareto-phl``, ``pareto-improper``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    n_tot = n_steps(h, u_max)
    if n_tot < 2:
        raise ValueError(
            f"two-step method needs at least two steps after bootstrap; "
            f"u_max = {u_max!r} covers only {n_tot} panel(s) at h = {h!r}"
        )

    if scheme.startswith("gamma-ode"):
        if scheme == "gamma-ode-m2":
            if m2_coefficients is None:
                raise CoefficientFileError(
                    "gamma-ode-m2 requires an external sixth-order coefficient table"
                )
            coeffs = (m2_coefficients if isinstance(m2_coefficients, TSRKCoefficients)
                      else load_m2_coefficients(m2_coefficients))
        else:
            coeffs = derive_tsrk4_coefficients()
        system = gamma2_ode_system(model)
        boot = tsrk_bootstrap_ode(coeffs, system, h)
        factor = stage_operator(coeffs, system, h)
        ys = np.empty((n_tot + 1, 3))
        ys[0] = system.y0
        ys[1] = boot.state.y_curr
        state = boot.state
        for n in range(1, n_tot):
            y_next, k = tsrk_ode_step(coeffs, system, state, h, n, factor=factor)
            if not np.isfinite(y_next).all():
                raise DivergedError(f"non-finite value at step {n + 1}", step=n + 1)
            ys[n + 1] = y_next
            state = TsrkStepState(y_prev=state.y_curr, y_curr=y_next, k_prev=k)
        meta = {
            "scheme": scheme,
            "coefficients": coeffs.core_dict(),
            "aux_components": {"K1": ys[:, 1].copy(), "I": ys[:, 2].copy()},
        }
        return SolutionPath(h=h, values=ys[:, 0].copy(),
                            method=_METHOD_LABEL[scheme], model=model, meta=meta)

    # Pareto variants
    coeffs = derive_tsrk4_coefficients()
    improper = scheme == "pareto-improper"
    boot = tsrk_bootstrap_pareto(model, coeffs, h, q=q, improper=improper)
    psi = np.empty(n_tot + 1)
    psi[0] = model.psi0
    psi[1] = boot.state.y_curr
    state = boot.state
    ws = (ImproperWorkspace(model, coeffs, h, q) if improper
          else PhlWorkspace(model, coeffs, h, q))
    step = tsrk4_improper_step if improper else tsrk4_phl_step
    for n in range(1, n_tot):
        psi_next, k = step(model, coeffs, psi[: n + 1], state, h, n, q=q,
                           workspace=ws)
        if not np.isfinite(psi_next):
            raise DivergedError(f"non-finite value at step {n + 1}", step=n + 1)
        psi[n + 1] = psi_next
        state = TsrkStepState(y_prev=state.y_curr, y_curr=psi_next, k_prev=(k,))
    meta = {
        "scheme": scheme,
        "q": q,
        "coefficients": coeffs.core_dict(),
        "rule_cache": ws.stats(),
    }
    return SolutionPath(h=h, values=psi, method=_METHOD_LABEL[scheme],
                        model=model, meta=meta)
