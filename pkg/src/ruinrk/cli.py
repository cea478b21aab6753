"""Command-line front end.

Subcommands: ``solve`` (run a scheme, emit one row per report point),
``table`` (reproduce a published comparison table and check deviations),
``converge`` (step-halving order study) and ``mc-check`` (Monte Carlo
cross-check).  Global flags ``--out``, ``--format`` and ``--quiet`` go
before the subcommand.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure,
4 tolerance/acceptance failure.  No other codes are used.
"""

from __future__ import annotations

import csv
import io
import json
from importlib import metadata

import click
import numpy as np

from .errors import (
    CoefficientFileError,
    DerivationError,
    DivergedError,
    RuinModelError,
    StepFailureError,
    UnsupportedModelError,
)
from .exact import exact_exponential, exact_gamma2
from .model import Exponential, Gamma2, ModelParams, ParetoLomax
from .montecarlo import simulate_until_stable, suggested_horizon
from .reference import grid_cover, interpolated_value, table_comparison
from .rk4 import solve_rk4
from .tsrk import cubic_interpolate, load_m2_coefficients, solve_tsrk

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_TOLERANCE = 4

METHODS = ("rk4-s13", "tsrk4-g", "tsrk4-phl", "tsrk4-improper", "tsrk6-g")
_METHOD_SCHEME = {
    "tsrk4-g": "gamma-ode-m1",
    "tsrk6-g": "gamma-ode-m2",
    "tsrk4-phl": "pareto-phl",
    "tsrk4-improper": "pareto-improper",
}

_DIST_KEYS = {"gamma2": {"beta"}, "pareto": {"m"}, "exponential": {"beta"}}


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


def parse_distribution(spec: str):
    """Parse the ``name:key=value[,key=value]`` mini-grammar."""
    name, _, rest = spec.partition(":")
    name = name.strip().lower()
    if name not in _DIST_KEYS:
        raise ConfigError(
            f"unknown distribution {name!r}; expected one of {sorted(_DIST_KEYS)}"
        )
    kv = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ConfigError(f"malformed distribution parameter {item!r}")
            kv[key.strip()] = val.strip()
    unknown = set(kv) - _DIST_KEYS[name]
    missing = _DIST_KEYS[name] - set(kv)
    if unknown or missing:
        raise ConfigError(
            f"distribution {name!r}: missing {sorted(missing) or 'none'}, "
            f"unknown {sorted(unknown) or 'none'}"
        )
    try:
        if name == "gamma2":
            return Gamma2(float(kv["beta"]))
        if name == "exponential":
            return Exponential(float(kv["beta"]))
        m_raw = kv["m"]
        if "." in m_raw or "e" in m_raw.lower():
            raise ValueError(f"m must be an integer, got {m_raw!r}")
        return ParetoLomax(int(m_raw))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_points(text: str):
    """Comma list of values, each either a number or an a:b:step range."""
    pts = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise ConfigError(f"range must be start:stop:step, got {item!r}")
            try:
                start, stop, step = (float(x) for x in parts)
            except ValueError as exc:
                raise ConfigError(f"bad range {item!r}") from exc
            if step <= 0:
                raise ConfigError(f"range step must be positive in {item!r}")
            k = 0
            while start + k * step <= stop + 1e-9:
                pts.append(start + k * step)
                k += 1
        else:
            try:
                pts.append(float(item))
            except ValueError as exc:
                raise ConfigError(f"bad report point {item!r}") from exc
    if not pts:
        raise ConfigError("no report points given")
    return pts


def _check_method(method: str, claims) -> None:
    if method in ("tsrk4-g", "tsrk6-g") and not isinstance(claims, Gamma2):
        raise ConfigError(f"method {method} requires gamma2 claims")
    if method in ("tsrk4-phl", "tsrk4-improper") and not isinstance(claims, ParetoLomax):
        raise ConfigError(f"method {method} requires pareto claims")


def _solve(model, method, h, u_cover, q, m2_path):
    if method == "rk4-s13":
        return solve_rk4(model, h, u_cover)
    scheme = _METHOD_SCHEME[method]
    m2 = None
    if method == "tsrk6-g":
        if m2_path is None:
            raise ConfigError(
                "tsrk6-g requires --m2-coefficients pointing at a coefficient table"
            )
        m2 = load_m2_coefficients(m2_path)
    return solve_tsrk(model, h, u_cover, scheme, q=q, m2_coefficients=m2)


def _metadata(path=None) -> dict:
    meta = {
        "ruinrk_version": metadata.version("ruinrk"),
        "numpy_version": np.__version__,
    }
    if path is not None:
        meta.update({k: v for k, v in path.meta.items() if k != "aux_components"})
    return meta


def _write_rows(ctx_cfg, config: dict, header, rows, extra_meta=None):
    fmt = ctx_cfg["format"]
    out = ctx_cfg["out"]
    if fmt == "json":
        doc = {"config": config, "rows": rows,
               "metadata": {**(extra_meta or {})}}
        text = json.dumps(doc, indent=2)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[k] for k in header])
        text = buf.getvalue()
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
            if fmt == "json":
                fh.write("\n")
    elif not ctx_cfg["quiet"]:
        click.echo(text)


def _fail_solver(exc) -> "SystemExit":
    msg = str(exc)
    if isinstance(exc, DivergedError):
        msg += f" [step {exc.step}]"
    click.echo(f"solver failure: {msg}", err=True)
    return SystemExit(EXIT_SOLVER)


@click.group()
@click.option("--out", type=click.Path(dir_okay=False, writable=True),
              default=None, help="Write the primary output to this file.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True, help="Output format.")
@click.option("--quiet", is_flag=True, help="Suppress stdout report output.")
@click.pass_context
def main(ctx, out, fmt, quiet):
    """Ruin probabilities in the classical risk model via Runge-Kutta
    schemes for the governing Volterra integro-differential equation."""
    ctx.obj = {"out": out, "format": fmt, "quiet": quiet}


@main.command()
@click.option("--dist", required=True, help="Claim law, e.g. gamma2:beta=2.4, "
              "pareto:m=1, exponential:beta=1.")
@click.option("--theta", type=float, required=True, help="Safety loading (> 0).")
@click.option("--method", type=click.Choice(METHODS), default="rk4-s13",
              show_default=True)
@click.option("--h", type=float, required=True, help="Grid step.")
@click.option("--umax", type=float, required=True, help="Largest surplus level.")
@click.option("--report", default=None,
              help="Report points: comma list and/or start:stop:step ranges "
                   "(default: umax only).")
@click.option("--q", type=int, default=2, show_default=True,
              help="Gauss points per panel (Pareto schemes).")
@click.option("--m2-coefficients", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Sixth-order coefficient table (tsrk6-g).")
@click.option("--lam", type=float, default=1.0, show_default=True,
              help="Claim intensity (results depend only on lambda/c).")
@click.pass_obj
def solve(cfg, dist, theta, method, h, umax, report, q, m2_coefficients, lam):
    """Run one scheme and report psi at the requested points."""
    claims = parse_distribution(dist)
    _check_method(method, claims)
    try:
        model = ModelParams(theta=theta, claims=claims, lam=lam)
    except RuinModelError as exc:
        raise ConfigError(str(exc)) from exc
    if h <= 0 or umax <= 0:
        raise ConfigError("h and umax must be positive")
    points = parse_points(report) if report else [umax]
    for u in points:
        if u < 0 or u > umax + 1e-9:
            raise ConfigError(f"report point {u:g} outside [0, umax = {umax:g}]")
    try:
        path = _solve(model, method, h, grid_cover(max(points), h), q, m2_coefficients)
    except (CoefficientFileError, UnsupportedModelError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    except (DivergedError, StepFailureError, DerivationError) as exc:
        raise _fail_solver(exc)
    extra = ";".join(f"{k}={v}" for k, v in (("scheme", path.meta.get("scheme")),
                                             ("q", path.meta.get("q"))) if v is not None)
    rows = []
    for u in points:
        psi = interpolated_value(path, u)
        rows.append({"u": u, "psi": psi, "survival": 1.0 - psi,
                     "method": method, "h": h, "extra": extra})
    config = {"dist": dist, "theta": theta, "method": method, "h": h,
              "umax": umax, "q": q, "lam": lam, "report": points}
    _write_rows(cfg, config, ["u", "psi", "survival", "method", "h", "extra"],
                rows, extra_meta=_metadata(path))


@main.command()
@click.argument("which", type=click.IntRange(1, 3))
@click.option("--q", type=int, default=2, show_default=True,
              help="Gauss points for the Pareto panel (table 3).")
@click.pass_obj
def table(cfg, which, q):
    """Reproduce published comparison table 1, 2 or 3 and check deviations."""
    try:
        comp = table_comparison(which, **({"q": q} if which == 3 else {}))
    except (DivergedError, StepFailureError, DerivationError) as exc:
        raise _fail_solver(exc)
    rows = [{k: row.get(k) for k in comp.header} for row in comp.rows]
    _write_rows(cfg, {"table": which}, comp.header, rows,
                extra_meta=_metadata())
    if not cfg["quiet"]:
        for chk in comp.checks:
            status = "ok" if chk.passed else "FAIL"
            click.echo(f"[{status}] {chk.name}: {chk.detail}")
    if not comp.passed:
        click.echo(f"{len(comp.failures())} deviation check(s) exceeded tolerance",
                   err=True)
        raise SystemExit(EXIT_TOLERANCE)


@main.command()
@click.option("--dist", required=True)
@click.option("--theta", type=float, required=True)
@click.option("--method", type=click.Choice(METHODS), default="rk4-s13",
              show_default=True)
@click.option("--h-list", "h_list", required=True,
              help="Comma list of step sizes, e.g. 0.02,0.01,0.005.")
@click.option("--umax", type=float, default=10.0, show_default=True)
@click.option("--report", default=None,
              help="Error-measurement points (default: integers 1..umax).")
@click.option("--q", type=int, default=2, show_default=True)
@click.option("--m2-coefficients", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--order-floor", type=float, default=3.5, show_default=True,
              help="Smallest acceptable final order estimate.")
@click.pass_obj
def converge(cfg, dist, theta, method, h_list, umax, report, q,
             m2_coefficients, order_floor):
    """Measure empirical convergence order over a ladder of step sizes."""
    claims = parse_distribution(dist)
    _check_method(method, claims)
    try:
        model = ModelParams(theta=theta, claims=claims)
    except RuinModelError as exc:
        raise ConfigError(str(exc)) from exc
    hs = parse_points(h_list)
    if len(hs) < 2:
        raise ConfigError("need at least two step sizes for an order estimate")
    if any(h <= 0 for h in hs):
        raise ConfigError("step sizes must be positive")
    hs = sorted(hs, reverse=True)
    points = parse_points(report) if report else [float(k) for k in
                                                  range(1, int(umax) + 1)]
    for u in points:
        if u <= 0 or u > umax + 1e-9:
            raise ConfigError(f"report point {u:g} outside (0, umax = {umax:g}]")

    if isinstance(claims, Exponential):
        ref = lambda u: exact_exponential(model, u)
    elif isinstance(claims, Gamma2):
        ref = lambda u: exact_gamma2(model, u)
    else:
        h_fine = min(hs) / 2.0
        try:
            fine = _solve(model, method, h_fine, grid_cover(max(points), h_fine),
                          q, m2_coefficients)
        except (DivergedError, StepFailureError, DerivationError) as exc:
            raise _fail_solver(exc)
        ref = lambda u: cubic_interpolate(fine.values, fine.h, u)

    errs = []
    for h in hs:
        try:
            path = _solve(model, method, h, grid_cover(max(points), h), q,
                          m2_coefficients)
        except (CoefficientFileError, UnsupportedModelError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        except (DivergedError, StepFailureError, DerivationError) as exc:
            raise _fail_solver(exc)
        errs.append(max(abs(interpolated_value(path, u) - ref(u)) for u in points))

    rows = []
    orders = []
    for i, (h, err) in enumerate(zip(hs, errs)):
        order = (np.log(errs[i - 1] / err) / np.log(hs[i - 1] / h)
                 if i > 0 and err > 0 else None)
        if order is not None:
            orders.append(order)
        rows.append({"h": h, "max_error": err,
                     "order_estimate": order if order is not None else ""})
    config = {"dist": dist, "theta": theta, "method": method,
              "h_list": hs, "report": points}
    _write_rows(cfg, config, ["h", "max_error", "order_estimate"], rows,
                extra_meta=_metadata())
    final = orders[-1] if orders else float("nan")
    if not cfg["quiet"]:
        click.echo(f"final order estimate: {final:.3f}")
    if not (final >= order_floor):
        click.echo(f"order estimate {final:.3f} below floor {order_floor}", err=True)
        raise SystemExit(EXIT_TOLERANCE)


@main.command("mc-check")
@click.option("--dist", required=True)
@click.option("--theta", type=float, required=True)
@click.option("--method", type=click.Choice(METHODS), default="rk4-s13",
              show_default=True)
@click.option("--h", type=float, default=0.01, show_default=True)
@click.option("--u", "u_list", required=True,
              help="Comma list of surplus levels to check.")
@click.option("--n-paths", type=int, required=True)
@click.option("--seed", type=int, default=20240, show_default=True)
@click.option("--horizon-start", type=float, default=None,
              help="Initial horizon (default: heuristic 50 E[X]/theta, "
                   "scaled up for Pareto); doubled until stable.")
@click.option("--q", type=int, default=2, show_default=True)
@click.option("--m2-coefficients", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.pass_obj
def mc_check(cfg, dist, theta, method, h, u_list, n_paths, seed,
             horizon_start, q, m2_coefficients):
    """Cross-check a deterministic solve against the Monte Carlo estimator."""
    claims = parse_distribution(dist)
    _check_method(method, claims)
    if n_paths <= 0:
        raise ConfigError(f"n_paths must be positive, got {n_paths}")
    try:
        model = ModelParams(theta=theta, claims=claims)
    except RuinModelError as exc:
        raise ConfigError(str(exc)) from exc
    points = parse_points(u_list)
    if any(u < 0 for u in points):
        raise ConfigError("surplus levels must be nonnegative")
    try:
        path = _solve(model, method, h, grid_cover(max(points), h), q,
                      m2_coefficients)
    except (CoefficientFileError, UnsupportedModelError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    except (DivergedError, StepFailureError, DerivationError) as exc:
        raise _fail_solver(exc)

    rows = []
    flagged = 0
    for i, u in enumerate(points):
        det = interpolated_value(path, u)
        est, history = simulate_until_stable(
            model, u, n_paths, seed + 1000 * i, horizon_start=horizon_start)
        z = (det - est.estimate) / est.std_error if est.std_error > 0 else 0.0
        ok = abs(det - est.estimate) <= 3.0 * est.std_error
        flagged += 0 if ok else 1
        rows.append({"u": u, "deterministic": det, "mc_estimate": est.estimate,
                     "std_error": est.std_error, "z": z,
                     "horizon": est.horizon, "doublings": len(history) - 1,
                     "flag": "" if ok else "DISAGREE"})
    config = {"dist": dist, "theta": theta, "method": method, "h": h,
              "n_paths": n_paths, "seed": seed}
    meta = _metadata(path)
    meta["generator"] = "xoshiro256** (splitmix64-seeded, batch substreams)"
    meta["horizon_heuristic"] = suggested_horizon(model)
    _write_rows(cfg, config,
                ["u", "deterministic", "mc_estimate", "std_error", "z",
                 "horizon", "doublings", "flag"], rows, extra_meta=meta)
    if flagged:
        click.echo(f"{flagged} point(s) disagree beyond 3 standard errors", err=True)
        raise SystemExit(EXIT_TOLERANCE)


def run(argv=None):
    """Entry point that guarantees the documented exit codes."""
    try:
        return main(args=argv, standalone_mode=True)
    except SystemExit:
        raise
    except click.ClickException as exc:
        exc.show()
        raise SystemExit(exc.exit_code)
    except (DivergedError, StepFailureError, DerivationError) as exc:
        raise _fail_solver(exc)
    except Exception as exc:   # keep the exit-code contract: never anything else
        click.echo(f"internal error: {exc}", err=True)
        raise SystemExit(EXIT_SOLVER)


if __name__ == "__main__":
    run()
