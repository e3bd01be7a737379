"""Stage 1: choose load/line meters to shrink the attack-induced region.

The leader picks meters ``(delta, eps)``; each line ``n`` has a follower LP
(the worst stealthy attack on that line). The bilevel problem is turned into
one MILP by writing each follower's KKT conditions and encoding complementary
slackness with binaries and the constants ``K`` (load bounds) and ``N``
(line-flow bounds).

Sign convention. The follower stationarity row used here is

    0 = S[n] U_D + lam * 1 + (a_up - a_lo) + (b_up - b_lo) @ S U_D,

which is the KKT system of ``min S[n] U_D dD``. The model variable
``flow_shift[n] = S[n] U_D dD^n`` therefore takes the follower *minimum*
``V[n] = -H[n]``, so the objective ``min -sum(flow_shift / Fbar) + w * C``
minimizes the attack-induced volume ``sum(H / Fbar)`` and ``H* = -flow_shift``.

Strong-duality cuts (``duality_cuts=True``) add, per follower, the redundant
equality ``flow_shift[n] = -sum(tau D delta (a_up + a_lo))`` with the products
``delta * a`` linearized exactly (McCormick on binaries, bound ``K``). Every
KKT point satisfies it; it only tightens the LP relaxation.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import solver
from .attack_analysis import (
    AttackModel,
    MeterPlacement,
    OverloadProfile,
    air_volume,
    follower_overload,
    overload_profile,
    sensitivity,
)
from .grid_model import GridCase, ShiftFactorMatrix

logger = logging.getLogger(__name__)

AUTO_SAFETY = 1.05
ORACLE_TOL = 1e-5


class BigMError(ValueError):
    """Big-M constants below their closed-form lower bounds (or misordered)."""


class ReformulationError(AssertionError):
    """The KKT/big-M model disagrees with the follower LPs it encodes.

    Raised when P2 is infeasible (an unmetered KKT point always exists for
    valid constants, so this means K or N cut it off) or, on request, when
    H* deviates from the directly solved followers.
    """


@dataclass(frozen=True)
class BigMTriple:
    M: float
    N: float
    K: float

    def as_tuple(self):
        return (self.M, self.N, self.K)

    def scaled(self, k: float) -> "BigMTriple":
        return BigMTriple(self.M * k, self.N * k, self.K * k)


@dataclass(frozen=True)
class ShapingConfig:
    omega_air: float = 0.15
    budget: int = 15
    big_m: Union[BigMTriple, str] = "auto"
    duality_cuts: bool = True
    time_limit: float = 300.0
    mip_gap: float = 1e-6
    check_big_m: bool = True  # only turned off to demonstrate invalid constants

    def __post_init__(self):
        if self.omega_air < 0:
            raise ValueError("omega_air must be >= 0")
        if int(self.budget) != self.budget or self.budget < 0:
            raise ValueError("budget must be a non-negative integer")
        if isinstance(self.big_m, (tuple, list)):
            object.__setattr__(self, "big_m", BigMTriple(*map(float, self.big_m)))
        if not (self.big_m == "auto" or isinstance(self.big_m, BigMTriple)):
            raise ValueError("big_m must be a BigMTriple, an (M, N, K) tuple or 'auto'")


def _tau_vector(case: GridCase, tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    return np.full(case.n_loads, float(tau)) if tau.ndim == 0 else tau


def big_m_bounds(case: GridCase, S: ShiftFactorMatrix, tau) -> BigMTriple:
    """Closed-form lower bounds for (M, N, K).

    M >= max |S U_D| (tau D),  N >= M + the same norm,  K >= 2 max(tau D).
    """
    reach = _tau_vector(case, tau) * case.demand
    flow_reach = np.abs(sensitivity(case, S)) @ reach
    m = float(np.max(flow_reach, initial=0.0))
    return BigMTriple(m, 2.0 * m, 2.0 * float(np.max(reach, initial=0.0)))


def dual_bound_estimate(case: GridCase, S: ShiftFactorMatrix) -> float:
    """Size of the follower multipliers when no line is metered.

    K and N also cap the duals (``alpha <= K u``, ``beta <= N u``). For an
    unmetered follower the optimal ``alpha_d`` equals ``|A[n, d] - A[n, p]|``
    for the one load ``p`` strictly inside its range, so the spread of each
    sensitivity row bounds them. Metered lines can push the duals higher; this
    is an estimate, not a proof.
    """
    A = sensitivity(case, S)
    if A.size == 0:
        return 0.0
    return float(np.max(A.max(axis=1) - A.min(axis=1)))


def resolve_big_m(case, S, tau, config: ShapingConfig) -> BigMTriple:
    lower = big_m_bounds(case, S, tau)
    dual = dual_bound_estimate(case, S)
    if config.big_m == "auto":
        M = max(lower.M * AUTO_SAFETY, 1e-3)  # tau = 0 gives M = 0; keep it positive
        N = max(lower.N, dual) * AUTO_SAFETY
        K = max(lower.K, dual) * AUTO_SAFETY
        return BigMTriple(M, max(N, 2 * M), K)
    bm = config.big_m
    if config.check_big_m:
        if not (0 < bm.M < bm.N and bm.K > 0):
            raise BigMError(f"need 0 < M < N and K > 0, got {bm}")
        slack = 1e-9
        for name, value, bound in zip("MNK", bm.as_tuple(), lower.as_tuple()):
            if value < bound - slack:
                raise BigMError(f"{name} = {value:g} is below its lower bound {bound:.6g}")
        for name, value in (("N", bm.N), ("K", bm.K)):
            if value < dual - slack:
                logger.warning("%s = %g is below the follower dual estimate %.6g", name, value, dual)
    return bm


@dataclass
class P2Model:
    """The assembled MILP plus handles to its variable blocks."""

    model: solver.Model
    big_m: BigMTriple
    delta: solver.VarBlock
    eps: solver.VarBlock
    dD: list[solver.VarBlock]
    flow_shift: solver.VarBlock
    lam: solver.VarBlock
    a_lo: list[solver.VarBlock]
    a_up: list[solver.VarBlock]
    b_lo: list[solver.VarBlock]
    b_up: list[solver.VarBlock]
    u_a_lo: list[solver.VarBlock]
    u_a_up: list[solver.VarBlock]
    u_b_lo: list[solver.VarBlock]
    u_b_up: list[solver.VarBlock]


def build_p2(case: GridCase, S: ShiftFactorMatrix, tau, config: ShapingConfig) -> P2Model:
    tau = _tau_vector(case, tau)
    if tau.shape != (case.n_loads,):
        raise ValueError(f"tau has {tau.size} entries, case has {case.n_loads} loads")
    if config.budget > case.n_loads + case.n_lines:
        raise ValueError("budget exceeds the number of meterable loads and lines")
    bm = resolve_big_m(case, S, tau, config)
    M, N, K = bm.as_tuple()
    A = sensitivity(case, S)
    reach = tau * case.demand
    nD, nL = case.n_loads, case.n_lines
    Fbar = case.flow_limits

    m = solver.Model("shaping_p2")
    # a load that cannot be falsified never gets a meter
    delta = m.add_vars("delta", nD, "binary", lb=np.where(reach > 0, 0.0, 1.0))
    eps = m.add_vars("eps", nL, "binary")
    flow_shift = m.add_vars("flow_shift", nL, lb=-np.inf)
    lam = m.add_vars("lam", nL, lb=-np.inf)
    blocks = {k: [] for k in ("dD", "a_lo", "a_up", "b_lo", "b_up", "u_a_lo", "u_a_up", "u_b_lo", "u_b_up")}

    cost = (nD + nL) - delta.sum() - eps.sum()
    m.add_constraint(cost <= config.budget, "budget")

    for n in range(nL):
        dD = m.add_vars(f"dD{n}", nD, lb=-reach, ub=reach)
        a_lo = m.add_vars(f"a_lo{n}", nD)
        a_up = m.add_vars(f"a_up{n}", nD)
        b_lo = m.add_vars(f"b_lo{n}", nL)
        b_up = m.add_vars(f"b_up{n}", nL)
        u_a_lo = m.add_vars(f"u_a_lo{n}", nD, "binary")
        u_a_up = m.add_vars(f"u_a_up{n}", nD, "binary")
        u_b_lo = m.add_vars(f"u_b_lo{n}", nL, "binary")
        u_b_up = m.add_vars(f"u_b_up{n}", nL, "binary")
        for key, blk in zip(blocks, (dD, a_lo, a_up, b_lo, b_up, u_a_lo, u_a_up, u_b_lo, u_b_up)):
            blocks[key].append(blk)

        # primal feasibility of follower n
        m.add_constraint(dD.sum() == 0, f"bal[{n}]")
        for d in range(nD):
            m.add_constraint(dD[d] - reach[d] * delta[d] <= 0, f"load_up[{n},{d}]")
            m.add_constraint(-dD[d] - reach[d] * delta[d] <= 0, f"load_lo[{n},{d}]")
        for k in range(nL):
            m.add_constraint(dD.dot(A[k]) - M * eps[k] <= 0, f"flow_up[{n},{k}]")
            m.add_constraint(-dD.dot(A[k]) - M * eps[k] <= 0, f"flow_lo[{n},{k}]")
        m.add_constraint(flow_shift[n] - dD.dot(A[n]) == 0, f"shift[{n}]")

        # stationarity, one row per load
        for d in range(nD):
            row = lam[n] + a_up[d] - a_lo[d] + b_up.dot(A[:, d]) - b_lo.dot(A[:, d])
            m.add_constraint(row == -A[n, d], f"stat[{n},{d}]")

        # complementary slackness on the load bounds
        for d in range(nD):
            m.add_constraint(a_lo[d] - K * u_a_lo[d] <= 0)
            m.add_constraint(reach[d] * delta[d] + dD[d] + K * u_a_lo[d] <= K)
            m.add_constraint(a_up[d] - K * u_a_up[d] <= 0)
            m.add_constraint(reach[d] * delta[d] - dD[d] + K * u_a_up[d] <= K)
            m.add_constraint(u_a_lo[d] + u_a_up[d] - eps[n] <= 0, f"ua_logic[{n},{d}]")

        # complementary slackness on the line-flow bounds
        for k in range(nL):
            m.add_constraint(b_lo[k] - N * u_b_lo[k] <= 0)
            m.add_constraint(M * eps[k] + dD.dot(A[k]) + N * u_b_lo[k] <= N)
            m.add_constraint(b_up[k] - N * u_b_up[k] <= 0)
            m.add_constraint(M * eps[k] - dD.dot(A[k]) + N * u_b_up[k] <= N)
            m.add_constraint(u_b_lo[k] + u_b_up[k] + eps[k] == 1, f"ub_logic[{n},{k}]")
            m.add_constraint(u_b_lo[k] - u_b_up[k] <= 0, f"ub_order[{n},{k}]")

        if config.duality_cuts:
            w = m.add_vars(f"w{n}", nD)
            m.add_constraint(flow_shift[n] + w.dot(reach) == 0, f"sd[{n}]")
            for d in range(nD):
                m.add_constraint(w[d] - a_up[d] - a_lo[d] <= 0)
                m.add_constraint(w[d] - K * delta[d] <= 0)
                m.add_constraint(w[d] - a_up[d] - a_lo[d] - K * delta[d] >= -K)

    objective = -flow_shift.dot(1.0 / Fbar) + config.omega_air * cost
    m.set_objective(objective, "min")
    return P2Model(m, bm, delta, eps, blocks["dD"], flow_shift, lam, **{k: v for k, v in blocks.items() if k != "dD"})


@dataclass(frozen=True)
class ShapingSolution:
    placement: MeterPlacement
    H_star: np.ndarray
    benefit: float
    cost: int
    objective: float
    status: solver.Status
    gap: float
    wall_time: float
    big_m: BigMTriple
    duals: dict = field(default_factory=dict, repr=False)
    binaries: dict = field(default_factory=dict, repr=False)

    @property
    def volume(self) -> float:
        return -self.benefit

    @property
    def optimal(self) -> bool:
        return self.status is solver.Status.OPTIMAL

    def to_json(self) -> dict:
        d, e = self.placement.bitstrings()
        return {
            "status": self.status.value,
            "delta": d,
            "epsilon": e,
            "H_star": [round(float(h), 6) + 0.0 for h in self.H_star],
            "volume": round(self.volume, 6),
            "cost": self.cost,
            "objective": round(self.objective, 6),
            "gap": self.gap,
            "wall_time": self.wall_time,
            "big_m": list(self.big_m.as_tuple()),
        }


def solve_p2(
    case: GridCase,
    S: ShiftFactorMatrix,
    tau,
    config: ShapingConfig,
    backend="highs",
) -> ShapingSolution:
    p2 = build_p2(case, S, tau, config)
    params = solver.SolveParams(mip_gap=config.mip_gap, time_limit=config.time_limit)
    t0 = time.perf_counter()
    res = solver.solve(p2.model, params, backend)
    wall = time.perf_counter() - t0
    if res.status is solver.Status.INFEASIBLE:
        raise ReformulationError(f"P2 is infeasible with big-M {p2.big_m}; the constants are too small")
    if not res.has_solution:
        # delta = eps = 1 with dD = 0 is always feasible, so only a limit can get here
        raise solver.BackendError(f"P2 returned {res.status.value} without an incumbent")
    if res.status is not solver.Status.OPTIMAL:
        logger.warning("P2 stopped at %s with gap %.3g", res.status.value, res.gap)

    delta = np.rint(res.value(p2.delta)).astype(int)
    eps = np.rint(res.value(p2.eps)).astype(int)
    placement = MeterPlacement(delta, eps)
    H_star = -res.value(p2.flow_shift)
    H_star[np.abs(H_star) < 1e-12] = 0.0
    benefit = -float(np.sum(H_star / case.flow_limits))

    def stack(blocks):
        return np.array([res.value(b) for b in blocks])

    duals = {
        "lambda": res.value(p2.lam),
        "alpha_lo": stack(p2.a_lo),
        "alpha_up": stack(p2.a_up),
        "beta_lo": stack(p2.b_lo),
        "beta_up": stack(p2.b_up),
    }
    binaries = {
        "u_alpha_lo": np.rint(stack(p2.u_a_lo)).astype(int),
        "u_alpha_up": np.rint(stack(p2.u_a_up)).astype(int),
        "u_beta_lo": np.rint(stack(p2.u_b_lo)).astype(int),
        "u_beta_up": np.rint(stack(p2.u_b_up)).astype(int),
    }
    return ShapingSolution(
        placement=placement,
        H_star=H_star,
        benefit=benefit,
        cost=placement.cost,
        objective=float(res.objective_value),
        status=res.status,
        gap=res.gap,
        wall_time=wall,
        big_m=p2.big_m,
        duals=duals,
        binaries=binaries,
    )


@dataclass(frozen=True)
class OracleReport:
    max_deviation: float
    worst_line: int  # 1-based
    H_lp: np.ndarray
    tol: float = ORACLE_TOL

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def verify_against_oracle(
    case: GridCase,
    S: ShiftFactorMatrix,
    tau,
    solution: ShapingSolution,
    tol: float = ORACLE_TOL,
    raise_on_fail: bool = False,
) -> OracleReport:
    """Re-solve each follower as a plain LP at the chosen placement."""
    attack = AttackModel(_tau_vector(case, tau), solution.big_m.M)
    H_lp = np.array(
        [follower_overload(case, S, attack, solution.placement, n + 1) for n in range(case.n_lines)]
    )
    dev = np.abs(H_lp - solution.H_star)
    worst = int(np.argmax(dev)) if dev.size else 0
    report = OracleReport(float(dev.max(initial=0.0)), worst + 1, H_lp, tol)
    if not report.passed:
        msg = (
            f"line {worst + 1}: MILP H* = {solution.H_star[worst]:.6g}, follower LP = {H_lp[worst]:.6g}"
        )
        logger.error("reformulation check failed, %s", msg)
        if raise_on_fail:
            raise ReformulationError(msg)
    return report


def undefended_volume(case, S, tau, big_M: float = 1.0) -> float:
    attack = AttackModel(_tau_vector(case, tau), big_M)
    return air_volume(overload_profile(case, S, attack, MeterPlacement.none(case)), case)


@dataclass(frozen=True)
class ShapeSweepRow:
    omega_air: float
    budget: int
    cost: int | None
    volume: float | None
    reduction_pct: float | None
    placement: MeterPlacement | None
    status: str
    error: str = ""


def pareto_sweep_shaping(
    case: GridCase,
    S: ShiftFactorMatrix,
    tau,
    base: ShapingConfig,
    omega_list: Sequence[float] | None = None,
    budget_list: Sequence[int] | None = None,
    max_workers: int = 1,
    backend="highs",
) -> list[ShapeSweepRow]:
    """One P2 solve per omega (at ``base.budget``) or per budget (at ``base.omega_air``)."""
    if (omega_list is None) == (budget_list is None):
        raise ValueError("give exactly one of omega_list or budget_list")
    points = (
        [(float(w), base.budget) for w in omega_list]
        if omega_list is not None
        else [(base.omega_air, int(b)) for b in budget_list]
    )
    if not points:
        raise ValueError("empty sweep")
    big_M = resolve_big_m(case, S, _tau_vector(case, tau), base).M
    v0 = undefended_volume(case, S, tau, big_M)

    def run(point):
        w, b = point
        cfg = ShapingConfig(
            omega_air=w,
            budget=b,
            big_m=base.big_m,
            duality_cuts=base.duality_cuts,
            time_limit=base.time_limit,
            mip_gap=base.mip_gap,
            check_big_m=base.check_big_m,
        )
        try:
            sol = solve_p2(case, S, tau, cfg, backend)
        except Exception as exc:  # noqa: BLE001 - record and continue the sweep
            logger.error("sweep point omega=%g budget=%d failed: %s", w, b, exc)
            return ShapeSweepRow(w, b, None, None, None, None, "failed", str(exc))
        red = 0.0 if v0 == 0 else 100.0 * (v0 - sol.volume) / v0
        return ShapeSweepRow(w, b, sol.cost, sol.volume, red, sol.placement, sol.status.value)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        return list(pool.map(run, points))


def solution_json(solution: ShapingSolution, report: OracleReport | None = None) -> str:
    doc = solution.to_json()
    if report is not None:
        doc["oracle_max_deviation"] = report.max_deviation
    return json.dumps(doc, indent=2)
