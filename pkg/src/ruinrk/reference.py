"""Reproduction of the published comparison tables.

The reference columns live in data files next to their tolerances; this
module runs the solvers at the tabulated configurations and reports
per-cell deviations.  Two evaluation conventions are needed: comparisons
against the tables' own method columns use the value at the nearest grid
node (the convention those columns were produced with, verified to
reproduce them to ~5e-12), while comparisons against exact values use
cubic interpolation at the verbatim u.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .exact import gamma2_exact_solution
from .model import Gamma2, ModelParams, ParetoLomax
from .rk4 import solve_rk4
from .tsrk import cubic_interpolate, solve_tsrk

_TABLE_FILES = {
    1: "table_gamma2_survival.json",
    2: "table_gamma2_theta15.json",
    3: "table_pareto_m1.json",
}


def load_table(which: int) -> dict:
    if which not in _TABLE_FILES:
        raise ValueError(f"no reference table {which}; choose from {sorted(_TABLE_FILES)}")
    text = resources.files("ruinrk.data").joinpath(_TABLE_FILES[which]).read_text()
    return json.loads(text)


def nearest_node_value(path, u: float) -> float:
    """Path value at the grid node round(u/h)."""
    n = int(round(u / path.h))
    if not 0 <= n < len(path.values):
        raise ValueError(f"u = {u} has no grid node within the computed range")
    return float(path.values[n])


def interpolated_value(path, u: float) -> float:
    return cubic_interpolate(path.values, path.h, u)


def grid_cover(u: float, h: float) -> float:
    """Smallest grid multiple of h at or above u."""
    return float(np.ceil(u / h - 1e-9) * h)


@dataclass
class TableCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class TableComparison:
    which: int
    header: list
    rows: list
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]


def table1_comparison() -> TableComparison:
    """Gamma(2, 2.4), theta = 0.2, h = 0.0016: survival at u = 0..10."""
    data = load_table(1)
    p = data["params"]
    tol = data["tolerances"]["exact_abs"]
    model = ModelParams(theta=p["theta"], claims=Gamma2(p["beta"]))
    h = p["h"]
    rk4 = solve_rk4(model, h, 10.0).validate()
    tsg = solve_tsrk(model, h, 10.0, "gamma-ode-m1").validate()
    exact = gamma2_exact_solution(model)

    rows, checks = [], []
    for row in data["rows"]:
        u = row["u"]
        s_rk4 = 1.0 - nearest_node_value(rk4, u)
        s_tsg = 1.0 - nearest_node_value(tsg, u)
        ref = row["exact"]
        rows.append({
            "u": u, "exact_column": ref, "closed_form": 1.0 - exact(float(u)),
            "rk4_s13": s_rk4, "tsrk4_g": s_tsg,
            "dev_rk4": s_rk4 - ref, "dev_tsrk4": s_tsg - ref,
        })
        for label, val in (("rk4_s13", s_rk4), ("tsrk4_g", s_tsg)):
            checks.append(TableCheck(
                name=f"table1 u={u} {label} vs exact column",
                passed=abs(val - ref) <= tol,
                detail=f"|{val:.7f} - {ref}| = {abs(val - ref):.2e} (tol {tol:g})",
            ))
    header = ["u", "exact_column", "closed_form", "rk4_s13", "tsrk4_g",
              "dev_rk4", "dev_tsrk4"]
    return TableComparison(which=1, header=header, rows=rows, checks=checks)


def table2_comparison() -> TableComparison:
    """Gamma(2, 1), theta = 1.5, h = 0.0016 at the ten quoted u points."""
    data = load_table(2)
    p = data["params"]
    tols = data["tolerances"]
    model = ModelParams(theta=p["theta"], claims=Gamma2(p["beta"]))
    h = p["h"]
    us = [row["u"] for row in data["rows"]]
    u_cover = grid_cover(max(us), h)
    rk4 = solve_rk4(model, h, u_cover).validate()
    tsg = solve_tsrk(model, h, u_cover, "gamma-ode-m1").validate()
    exact = gamma2_exact_solution(model)

    rows, checks = [], []
    last_u = us[-1]
    for row in data["rows"]:
        u = row["u"]
        ref = row["exact"]
        interp_rk4 = interpolated_value(rk4, u)
        interp_tsg = interpolated_value(tsg, u)
        node_rk4 = nearest_node_value(rk4, u)
        node_tsg = nearest_node_value(tsg, u)
        rows.append({
            "u": u, "exact_column": ref, "closed_form": exact(u),
            "rk4_s13": interp_rk4, "tsrk4_g": interp_tsg,
            "rk4_s13_node": node_rk4, "tsrk4_g_node": node_tsg,
            "printed_rk4": row["rk4_s13"], "printed_tsrk": row["tsrk4_g"],
            "dev_rk4": interp_rk4 - ref, "dev_tsrk4": interp_tsg - ref,
        })
        tol = tols["exact_abs_last"] if u == last_u else tols["exact_abs"]
        for label, val in (("rk4_s13", interp_rk4), ("tsrk4_g", interp_tsg)):
            checks.append(TableCheck(
                name=f"table2 u={u} {label} vs exact column",
                passed=abs(val - ref) <= tol,
                detail=f"|{val:.9f} - {ref}| = {abs(val - ref):.2e} (tol {tol:g})",
            ))
        for label, node_val, tol_key in (
                ("rk4_s13", node_rk4, "printed_rk4_abs"),
                ("tsrk4_g", node_tsg, "printed_tsrk_abs")):
            dev = abs(node_val - row[label])
            checks.append(TableCheck(
                name=f"table2 u={u} {label} vs printed column (nearest node)",
                passed=dev <= tols[tol_key],
                detail=f"|{node_val:.11f} - {row[label]}| = {dev:.2e} "
                       f"(tol {tols[tol_key]:g})",
            ))
    header = ["u", "exact_column", "closed_form", "rk4_s13", "tsrk4_g",
              "printed_rk4", "printed_tsrk", "dev_rk4", "dev_tsrk4"]
    return TableComparison(which=2, header=header, rows=rows, checks=checks)


def _deviation_consistent(dev_ours, dev_printed, floor, slack):
    if abs(dev_ours) > abs(dev_printed) + slack:
        return False
    if abs(dev_ours) > floor and abs(dev_printed) > floor:
        return np.sign(dev_ours) == np.sign(dev_printed)
    return True


def table3_comparison(q: int = 2) -> TableComparison:
    """Pareto m = 1, h = 0.01, theta in {0.10, 0.25, 1.00}, u = 10..100."""
    data = load_table(3)
    p = data["params"]
    tols = data["tolerances"]
    h = p["h"]
    rows, checks = [], []
    for theta_key, panel in data["panels"].items():
        theta = float(theta_key)
        model = ModelParams(theta=theta, claims=ParetoLomax(p["m"]))
        u_cover = grid_cover(max(panel["u"]), h)
        rk4 = solve_rk4(model, h, u_cover).validate()
        phl = solve_tsrk(model, h, u_cover, "pareto-phl", q=q).validate()
        for i, u in enumerate(panel["u"]):
            ram = panel["ram"][i]
            ours = {
                "rk4_s13": nearest_node_value(rk4, u),
                "tsrk4_phl": nearest_node_value(phl, u),
            }
            printed = {"rk4_s13": panel["rk4_s13"][i],
                       "tsrk4_phl": panel["tsrk4_phl"][i]}
            rows.append({
                "theta": theta, "u": u, "ram": ram,
                "rk4_s13": ours["rk4_s13"], "tsrk4_phl": ours["tsrk4_phl"],
                "printed_rk4": printed["rk4_s13"],
                "printed_phl": printed["tsrk4_phl"],
                "dev_rk4_vs_ram": ours["rk4_s13"] - ram,
                "dev_phl_vs_ram": ours["tsrk4_phl"] - ram,
            })
            for label, tol_key in (("rk4_s13", "rk4_vs_column_abs"),
                                   ("tsrk4_phl", "phl_vs_column_abs")):
                dev = abs(ours[label] - printed[label])
                checks.append(TableCheck(
                    name=f"table3 theta={theta_key} u={u} {label} vs printed column",
                    passed=dev <= tols[tol_key],
                    detail=f"|{ours[label]:.7f} - {printed[label]}| = {dev:.2e} "
                           f"(tol {tols[tol_key]:g})",
                ))
                ok = _deviation_consistent(
                    ours[label] - ram, printed[label] - ram,
                    tols["deviation_floor"], tols["deviation_slack"],
                )
                checks.append(TableCheck(
                    name=f"table3 theta={theta_key} u={u} {label} deviation pattern vs ram",
                    passed=ok,
                    detail=f"ours-ram = {ours[label] - ram:+.2e}, "
                           f"printed-ram = {printed[label] - ram:+.2e}",
                ))
    header = ["theta", "u", "ram", "rk4_s13", "tsrk4_phl", "printed_rk4",
              "printed_phl", "dev_rk4_vs_ram", "dev_phl_vs_ram"]
    return TableComparison(which=3, header=header, rows=rows, checks=checks)


def table_comparison(which: int, **kwargs) -> TableComparison:
    if which == 1:
        return table1_comparison(**kwargs)
    if which == 2:
        return table2_comparison(**kwargs)
    if which == 3:
        return table3_comparison(**kwargs)
    raise ValueError(f"no reference table {which}")
