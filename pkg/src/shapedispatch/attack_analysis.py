"""Attacker-side mathematics of stealthy false data injection (FDI).

A stealthy attack shifts load measurements by ``dD`` under

* balance:        ``sum(dD) == 0``
* per-load range: ``|dD| <= delta * tau * D``
* line metering:  ``|S U_D dD| <= M * eps``

where ``delta[d] = 1`` / ``eps[n] = 1`` mean load ``d`` / line ``n`` carries
no protective meter. The worst overload an attack can cause on line ``n`` is
``H[n] = max S[n] U_D dD``; the minimum is ``V[n] = -H[n]`` because the
feasible set is symmetric.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import solver
from ._fmt import f6
from .grid_model import GridCase, ShiftFactorMatrix, incidence

logger = logging.getLogger(__name__)

UNATTACKABLE_TOL = 1e-6
MEMBERSHIP_TOL = 1e-6

REGIONS = ("security", "insecurity", "arr", "air", "preventive")


@dataclass(frozen=True)
class AttackModel:
    tau: np.ndarray = field(repr=False)
    big_M: float = 1.0

    def __post_init__(self):
        tau = np.array(self.tau, dtype=float, ndmin=1)
        if np.any(tau < 0):
            raise ValueError("attacking ability tau must be >= 0")
        tau.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        if not self.big_M > 0:
            raise ValueError("big_M must be > 0")

    @classmethod
    def uniform(cls, case: GridCase, tau: float, big_M: float = 1.0) -> "AttackModel":
        return cls(np.full(case.n_loads, float(tau)), big_M)

    def reach(self, case: GridCase) -> np.ndarray:
        """``tau * D``, the largest falsification per load."""
        if self.tau.shape != (case.n_loads,):
            raise ValueError(f"tau has {self.tau.size} entries, case has {case.n_loads} loads")
        return self.tau * case.demand


@dataclass(frozen=True)
class MeterPlacement:
    """``delta[d] == 1`` / ``epsilon[n] == 1`` mean NO meter (attackable)."""

    delta: np.ndarray
    epsilon: np.ndarray

    def __post_init__(self):
        for name in ("delta", "epsilon"):
            arr = np.array(getattr(self, name), dtype=int, ndmin=1)
            if not np.isin(arr, (0, 1)).all():
                raise ValueError(f"{name} entries must be 0 or 1")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def none(cls, case: GridCase) -> "MeterPlacement":
        return cls(np.ones(case.n_loads, int), np.ones(case.n_lines, int))

    @classmethod
    def full(cls, case: GridCase) -> "MeterPlacement":
        return cls(np.zeros(case.n_loads, int), np.zeros(case.n_lines, int))

    @classmethod
    def from_metered(cls, case: GridCase, load_buses: Sequence[int] = (), lines: Sequence[int] = ()) -> "MeterPlacement":
        """Meter every load at ``load_buses`` and the 1-based ``lines``."""
        delta = np.array([0 if ld.bus in set(load_buses) else 1 for ld in case.loads])
        eps = np.ones(case.n_lines, int)
        for ln in lines:
            eps[case.line_index(ln)] = 0
        return cls(delta, eps)

    @property
    def cost(self) -> int:
        return int((1 - self.delta).sum() + (1 - self.epsilon).sum())

    def check(self, case: GridCase) -> None:
        if self.delta.shape != (case.n_loads,) or self.epsilon.shape != (case.n_lines,):
            raise ValueError("placement dimensions do not match the case")

    def metered_load_buses(self, case: GridCase) -> list[int]:
        return [ld.bus for ld, d in zip(case.loads, self.delta) if d == 0]

    def metered_lines(self) -> list[int]:
        return [i + 1 for i, e in enumerate(self.epsilon) if e == 0]

    def bitstrings(self) -> tuple[str, str]:
        return "".join(map(str, self.delta)), "".join(map(str, self.epsilon))


@dataclass(frozen=True)
class OverloadProfile:
    H: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        for name in ("H", "V"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, n_lines: int) -> "OverloadProfile":
        return cls(np.zeros(n_lines), np.zeros(n_lines))


def sensitivity(case: GridCase, S: ShiftFactorMatrix) -> np.ndarray:
    """``S U_D``: line-flow shift per unit of falsified load."""
    return S.entries @ incidence(case).U_D


def build_follower_lp(case, S, attack: AttackModel, placement: MeterPlacement, line: int, sense: str = "max"):
    """LP for the worst attack on 0-based ``line``. Returns ``(model, dD, cons)``."""
    placement.check(case)
    A = sensitivity(case, S)
    cap = attack.reach(case) * placement.delta
    m = solver.Model(f"follower_{line + 1}_{sense}")
    dD = m.add_vars("dD", case.n_loads, lb=-cap, ub=cap)
    cons = {"balance": m.add_constraint(dD.sum() == 0, "balance")}
    cons["flow_up"] = [
        m.add_constraint(dD.dot(A[k]) <= attack.big_M * placement.epsilon[k], f"flow_up[{k}]")
        for k in range(case.n_lines)
    ]
    cons["flow_dn"] = [
        m.add_constraint(dD.dot(A[k]) >= -attack.big_M * placement.epsilon[k], f"flow_dn[{k}]")
        for k in range(case.n_lines)
    ]
    m.set_objective(dD.dot(A[line]), sense)
    return m, dD, cons


def follower_overload(
    case: GridCase,
    S: ShiftFactorMatrix,
    attack: AttackModel,
    placement: MeterPlacement,
    line: int,
    sense: str = "max",
    backend="highs",
    params: solver.SolveParams | None = None,
) -> float:
    """max/min of ``S[n] U_D dD`` over stealthy attacks; ``line`` is 1-based."""
    n = case.line_index(line)
    cap = attack.reach(case) * placement.delta
    if not np.any(cap > 0) or placement.epsilon[n] == 0:
        # feasible set is {0} on this line's flow
        return 0.0
    model, _, _ = build_follower_lp(case, S, attack, placement, n, sense)
    res = solver.solve(model, params, backend)
    if res.status is not solver.Status.OPTIMAL:
        # dD = 0 is always feasible and the set is bounded
        raise solver.BackendError(f"follower LP for line {line} returned {res.status.value}")
    return float(res.objective_value)


def overload_profile(
    case: GridCase,
    S: ShiftFactorMatrix,
    attack: AttackModel,
    placement: MeterPlacement,
    verify: bool = False,
    backend="highs",
) -> OverloadProfile:
    """H from the max-LPs; V = -H unless ``verify`` solves the min-LPs too."""
    H = np.array(
        [follower_overload(case, S, attack, placement, n + 1, "max", backend) for n in range(case.n_lines)]
    )
    if not verify:
        return OverloadProfile(H, -H)
    V = np.array(
        [follower_overload(case, S, attack, placement, n + 1, "min", backend) for n in range(case.n_lines)]
    )
    worst = float(np.max(np.abs(H + V), initial=0.0))
    if worst > 1e-6:
        logger.warning("H = -V violated by %.3g", worst)
    return OverloadProfile(H, V)


def air_volume(profile: OverloadProfile, case: GridCase) -> float:
    """Weighted expansion ``sum(H / Fbar)``; the shaping benefit is its negative."""
    if profile.H.shape != (case.n_lines,):
        raise ValueError("profile does not match the case")
    return float(np.sum(profile.H / case.flow_limits))


def is_unattackable_by_meters(case: GridCase, placement: MeterPlacement, line: int) -> bool:
    """Meter-based sufficient condition for ``H[line] == V[line] == 0``.

    True when the line itself is metered, or when one terminal bus has every
    load metered and every *other* line at that bus metered (or no other line).
    """
    placement.check(case)
    n = case.line_index(line)
    if placement.epsilon[n] == 0:
        return True
    ln = case.lines[n]
    for bus in (ln.from_bus, ln.to_bus):
        loads_ok = all(d == 0 for ld, d in zip(case.loads, placement.delta) if ld.bus == bus)
        others = [k for k in case.incident_lines(bus) if k != n]
        if loads_ok and all(placement.epsilon[k] == 0 for k in others):
            return True
    return False


def membership(
    case: GridCase,
    S: ShiftFactorMatrix,
    G: Sequence[float],
    H: Sequence[float] | OverloadProfile | None,
    region: str,
    tol: float = MEMBERSHIP_TOL,
) -> bool:
    """Is generation ``G`` inside ``region`` (see :data:`REGIONS`)?

    ``H`` is the overload profile for ``arr``/``air`` and the delivered H* for
    ``preventive``; it is ignored for ``security``/``insecurity``.
    """
    G = np.asarray(G, dtype=float)
    if G.shape != (case.n_generators,):
        raise ValueError(f"G has {G.size} entries, case has {case.n_generators} generators")
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    if isinstance(H, OverloadProfile):
        H = H.H
    H = np.zeros(case.n_lines) if H is None else np.asarray(H, dtype=float)
    if H.shape != (case.n_lines,):
        raise ValueError("H does not match the number of lines")

    inc = incidence(case)
    F = S.entries @ (inc.U_G @ G - inc.U_D @ case.demand)
    Fbar = case.flow_limits
    balance = abs(G.sum() - case.demand.sum()) <= tol
    gen_ok = bool(np.all(G >= case.g_min - tol) and np.all(G <= case.g_max + tol))
    within = bool(np.all(np.abs(F) <= Fbar + tol))
    secure = balance and gen_ok and within

    if region == "security":
        return secure
    if region == "insecurity":
        return balance and not secure
    if region == "preventive":
        return balance and gen_ok and bool(np.all(np.abs(F) <= Fbar - H + tol))
    # V = -H widens the band symmetrically
    arr = balance and gen_ok and bool(np.all(np.abs(F) <= Fbar + H + tol))
    if region == "arr":
        return arr
    return arr and not within


def profile_to_csv(profile: OverloadProfile, case: GridCase) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["line_id", "F_bar", "H", "V"])
    for n, (f, h, v) in enumerate(zip(case.flow_limits, profile.H, profile.V), start=1):
        w.writerow([n, f6(f), f6(h), f6(v)])
    return buf.getvalue()
