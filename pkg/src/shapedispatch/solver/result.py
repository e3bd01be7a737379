from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import LinExpr, Model, VarBlock


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT_REACHED = "limit-reached"


class BackendError(RuntimeError):
    """Solver unavailable or numerical breakdown; distinct from model infeasibility."""


@dataclass(frozen=True)
class SolveParams:
    feas_tol: float = 1e-6
    mip_gap: float = 1e-6
    time_limit: float = 300.0


@dataclass(frozen=True)
class SolveResult:
    """Outcome of one solve.

    ``duals[i]`` is the sensitivity of the optimal objective to the right-hand
    side of constraint ``i`` (LPs only). ``gap`` is the relative MIP gap.
    """

    status: Status
    objective_value: float = float("nan")
    primal: np.ndarray | None = field(default=None, repr=False)
    duals: np.ndarray | None = field(default=None, repr=False)
    gap: float = 0.0
    wall_time: float = 0.0
    max_violation: float = 0.0
    var_names: tuple[str, ...] = field(default=(), repr=False)
    backend: str = ""

    def __post_init__(self):
        for arr in (self.primal, self.duals):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def has_solution(self) -> bool:
        return self.primal is not None

    def value(self, item):
        if self.primal is None:
            raise ValueError(f"no primal solution (status {self.status.value})")
        if isinstance(item, VarBlock):
            return np.array(self.primal[item.start : item.start + item.size])
        if isinstance(item, LinExpr):
            return item.constant + sum(v * self.primal[k] for k, v in item.terms.items())
        raise TypeError(f"cannot evaluate {type(item).__name__}")

    def primal_map(self) -> dict[str, float]:
        if self.primal is None:
            return {}
        return dict(zip(self.var_names, self.primal.tolist()))


def max_violation(model: Model, x: np.ndarray) -> float:
    """Largest bound or row violation of ``x`` (0 if feasible)."""
    A, lo, hi = model.constraint_matrix()
    ax = A @ x
    viol = 0.0
    if len(ax):
        viol = max(viol, float(np.max(np.maximum(lo - ax, 0.0), initial=0.0)))
        viol = max(viol, float(np.max(np.maximum(ax - hi, 0.0), initial=0.0)))
    lb = np.asarray(model.lower)
    ub = np.asarray(model.upper)
    viol = max(viol, float(np.max(np.maximum(lb - x, 0.0), initial=0.0)))
    viol = max(viol, float(np.max(np.maximum(x - ub, 0.0), initial=0.0)))
    return viol
