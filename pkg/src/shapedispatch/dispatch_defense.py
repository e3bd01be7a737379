"""Stage 2: dispatch generation inside the preventive security region.

The delivered overloads ``H*`` tighten every line limit to ``Fbar - H*``. In
generator space the tightened limits are the half-spaces ``A G <= b`` with

    A = [S U_G; -S U_G],   b = [Fbar - H* + S U_D D; Fbar - H* - S U_D D].

The cybersecurity margin of a point is its smallest Euclidean distance to
those hyperplanes. A larger margin costs more; ``solve_p3`` trades the two
with ``min -r + omega_g * c @ G``.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import solver
from ._fmt import f6
from .grid_model import GridCase, ShiftFactorMatrix, incidence

logger = logging.getLogger(__name__)

NORM_TOL = 1e-12
TIE_TOL = 1e-6
FEAS_TOL = 1e-6


class EmptyRegionError(ValueError):
    """No generation point satisfies balance, limits and the tightened flows."""


@dataclass(frozen=True)
class PreventiveRegion:
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    g_min: np.ndarray = field(repr=False)
    g_max: np.ndarray = field(repr=False)
    total_demand: float
    projected: bool = False  # distances measured inside the balance plane
    is_empty: bool = False

    def __post_init__(self):
        for name in ("A", "b", "g_min", "g_max"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_lines(self) -> int:
        return self.A.shape[0] // 2

    @property
    def n_generators(self) -> int:
        return self.A.shape[1]

    @property
    def norms(self) -> np.ndarray:
        A = self.A
        if self.projected:
            A = A - A.mean(axis=1, keepdims=True)
        return np.linalg.norm(A, axis=1)

    @property
    def valid(self) -> np.ndarray:
        """Rows that can bound a margin: a generator moves them and ``b`` is finite."""
        return (self.norms >= NORM_TOL) & np.isfinite(self.b)

    def label(self, row: int) -> str:
        side = "upper" if row < self.n_lines else "lower"
        return f"F{row % self.n_lines + 1} {side}"

    def contains(self, G, tol: float = FEAS_TOL) -> bool:
        G = np.asarray(G, dtype=float)
        return bool(
            abs(G.sum() - self.total_demand) <= tol
            and np.all(G >= self.g_min - tol)
            and np.all(G <= self.g_max + tol)
            and np.all(self.A @ G <= self.b + tol)
        )


def preventive_region(
    case: GridCase, S: ShiftFactorMatrix, H_star: Sequence[float], projected: bool = False
) -> PreventiveRegion:
    H = np.asarray(H_star, dtype=float)
    if H.shape != (case.n_lines,):
        raise ValueError(f"H* has {H.size} entries, case has {case.n_lines} lines")
    if np.any(H < -1e-9):
        raise ValueError("H* must be non-negative")
    inc = incidence(case)
    SG = S.entries @ inc.U_G
    base_flow = S.entries @ inc.U_D @ case.demand
    limit = case.flow_limits - H
    A = np.vstack([SG, -SG])
    b = np.concatenate([limit + base_flow, limit - base_flow])
    region = PreventiveRegion(A, b, case.g_min, case.g_max, float(case.demand.sum()), projected)
    empty = not _feasible(region)
    if empty:
        logger.warning("preventive region is empty")
    return PreventiveRegion(A, b, case.g_min, case.g_max, region.total_demand, projected, empty)


def _ball_model(region: PreventiveRegion, name: str):
    m = solver.Model(name)
    G = m.add_vars("G", region.n_generators, lb=region.g_min, ub=region.g_max)
    r = m.add_var("r")
    m.add_constraint(G.sum() == region.total_demand, "balance")
    norms = region.norms
    for i in np.flatnonzero(region.valid):
        m.add_constraint(G.dot(region.A[i]) + norms[i] * r <= region.b[i], region.label(i))
    return m, G, r


def _dead_row_violated(region: PreventiveRegion) -> bool:
    # a row no generator can move holds everywhere or nowhere
    dead = ~region.valid & np.isfinite(region.b)
    return bool(np.any(region.b[dead] < -FEAS_TOL))


def _feasible(region: PreventiveRegion) -> bool:
    if _dead_row_violated(region):
        return False
    m, G, r = _ball_model(region, "region_feasibility")
    m.fix(r, 0.0)
    m.set_objective(solver.LinExpr(), "min")
    res = solver.solve(m)
    if res.status is solver.Status.OPTIMAL:
        return True
    if res.status is solver.Status.INFEASIBLE:
        return False
    raise solver.BackendError(f"feasibility LP returned {res.status.value}")


def margin(region: PreventiveRegion, G: Sequence[float], tol: float = TIE_TOL) -> tuple[float, list[str]]:
    """Smallest normalized slack over valid rows, plus every row within ``tol`` of it."""
    G = np.asarray(G, dtype=float)
    rows = np.flatnonzero(region.valid)
    if rows.size == 0:
        return float("inf"), []
    dist = (region.b[rows] - region.A[rows] @ G) / region.norms[rows]
    r = float(dist.min())
    return r, [region.label(i) for i in rows[dist <= r + tol]]


@dataclass(frozen=True)
class DispatchSolution:
    G: np.ndarray
    r: float
    cost: float
    objective: float
    omega_g: float
    nearest_boundaries: tuple[str, ...]
    status: solver.Status = solver.Status.OPTIMAL

    @property
    def benefit(self) -> float:
        return self.r


def _solve_ball(region, objective_fn, name):
    if region.is_empty or _dead_row_violated(region):
        raise EmptyRegionError("preventive region is empty")
    m, G, r = _ball_model(region, name)
    m.set_objective(objective_fn(G, r), "min")
    res = solver.solve(m)
    if res.status is solver.Status.INFEASIBLE:
        raise EmptyRegionError("preventive region is empty")
    if res.status is not solver.Status.OPTIMAL:
        raise solver.BackendError(f"{name} LP returned {res.status.value}")
    return m, G, r, res


def chebyshev_center(region: PreventiveRegion, costs: Sequence[float] | None = None) -> tuple[np.ndarray, float]:
    """Point with the largest inscribed-ball radius.

    The center is rarely unique (only the binding rows pin it). With ``costs``
    set, a second LP picks the cheapest point among those with maximal radius.
    """
    m, G, r, res = _solve_ball(region, lambda G, r: -r, "chebyshev")
    r_star = float(res.value(r))
    if costs is None:
        return res.value(G), r_star
    m.add_constraint(r >= r_star - 1e-9, "max_radius")
    m.set_objective(G.dot(np.asarray(costs, dtype=float)), "min")
    res2 = solver.solve(m)
    if res2.status is not solver.Status.OPTIMAL:
        return res.value(G), r_star
    return res2.value(G), r_star


def solve_p3(region: PreventiveRegion, c: Sequence[float], omega_g: float) -> DispatchSolution:
    if omega_g < 0:
        raise ValueError("omega_g must be >= 0")
    c = np.asarray(c, dtype=float)
    if c.shape != (region.n_generators,):
        raise ValueError(f"expected {region.n_generators} costs, got {c.size}")
    if omega_g == 0:
        G, r = chebyshev_center(region)
    else:
        _, Gv, rv, res = _solve_ball(region, lambda G, r: omega_g * G.dot(c) - r, "p3")
        G, r = res.value(Gv), float(res.value(rv))
    cost = float(c @ G)
    _, near = margin(region, G)
    return DispatchSolution(G, r, cost, omega_g * cost - r, float(omega_g), tuple(near))


@dataclass(frozen=True)
class DispatchSweepRow:
    omega_g: float
    solution: DispatchSolution | None
    r_pct: float | None = None
    cost_pct: float | None = None
    error: str = ""


def pareto_sweep_dispatch(
    region: PreventiveRegion, c: Sequence[float], omega_list: Sequence[float], max_workers: int = 1
) -> list[DispatchSweepRow]:
    """One P3 solve per omega, percentages against the largest-omega row."""
    if len(omega_list) == 0:
        raise ValueError("empty sweep")

    def run(w):
        try:
            return float(w), solve_p3(region, c, float(w)), ""
        except Exception as exc:  # noqa: BLE001 - record and continue
            logger.error("dispatch point omega_g=%g failed: %s", w, exc)
            return float(w), None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        points = list(pool.map(run, omega_list))
    ok = [(w, s) for w, s, _ in points if s is not None]
    base = max(ok, key=lambda t: t[0])[1] if ok else None

    def pct(x, ref):
        return 0.0 if ref == 0 else 100.0 * (x - ref) / ref

    rows = []
    for w, sol, err in points:
        if sol is None or base is None:
            rows.append(DispatchSweepRow(w, None, error=err))
        else:
            rows.append(DispatchSweepRow(w, sol, pct(sol.r, base.r), pct(sol.cost, base.cost)))
    return rows


def region_polygon_2d(region: PreventiveRegion) -> list[tuple[float, float]]:
    """Vertices (G1, G2) of the region in the balance plane, counterclockwise.

    G3 is eliminated through the balance equation. Empty region gives ``[]``.
    """
    if region.n_generators != 3:
        raise ValueError("region_polygon_2d needs exactly 3 generators")
    gmin, gmax, total = region.g_min, region.g_max, region.total_demand
    poly = [(gmin[0], gmin[1]), (gmax[0], gmin[1]), (gmax[0], gmax[1]), (gmin[0], gmax[1])]
    # a1*G1 + a2*G2 <= rhs
    halfplanes = [(1.0, 1.0, total - gmin[2]), (-1.0, -1.0, gmax[2] - total)]
    for a, bi in zip(region.A, region.b):
        if np.isfinite(bi):
            halfplanes.append((a[0] - a[2], a[1] - a[2], bi - a[2] * total))
    for a1, a2, rhs in halfplanes:
        poly = _clip(poly, a1, a2, rhs)
        if not poly:
            return []
    return _ccw(_dedupe(poly))


def _clip(poly, a1, a2, rhs, tol=1e-12):
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        fp = a1 * p[0] + a2 * p[1] - rhs
        fq = a1 * q[0] + a2 * q[1] - rhs
        if fp <= tol:
            out.append(p)
        if (fp < -tol and fq > tol) or (fp > tol and fq < -tol):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _dedupe(poly, tol=1e-9):
    out = []
    for p in poly:
        if not out or max(abs(p[0] - out[-1][0]), abs(p[1] - out[-1][1])) > tol:
            out.append(p)
    while len(out) > 1 and max(abs(out[0][0] - out[-1][0]), abs(out[0][1] - out[-1][1])) <= tol:
        out.pop()
    return [(float(x), float(y)) for x, y in out]


def _ccw(poly):
    if len(poly) < 3:
        return poly
    area = sum(p[0] * q[1] - q[0] * p[1] for p, q in zip(poly, poly[1:] + poly[:1]))
    return poly if area >= 0 else poly[::-1]


def sweep_to_csv(rows: Sequence[DispatchSweepRow], n_generators: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["omega_g", "r", "r_pct", "boundaries", "cost", "cost_pct"] + [f"G{i + 1}" for i in range(n_generators)])
    for row in rows:
        s = row.solution
        if s is None:
            w.writerow([f6(row.omega_g), "", "", f"failed: {row.error}", "", ""] + [""] * n_generators)
            continue
        w.writerow(
            [f6(row.omega_g), f6(s.r), f6(row.r_pct), ";".join(s.nearest_boundaries), f6(s.cost), f6(row.cost_pct)]
            + [f6(g) for g in s.G]
        )
    return buf.getvalue()


def polygon_to_csv(vertices: Sequence[tuple[float, float]], names: tuple[str, str] = ("G1", "G2")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(f"# x = {names[0]}, y = {names[1]}\n")
    w.writerow(["x", "y"])
    for x, y in vertices:
        w.writerow([f6(x), f6(y)])
    return buf.getvalue()
