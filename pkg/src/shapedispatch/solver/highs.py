"""HiGHS backend through ``scipy.optimize`` (linprog for LPs, milp for MILPs)."""

from __future__ import annotations

import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import Model, VarKind
from .result import BackendError, SolveParams, SolveResult, Status, max_violation


class HighsBackend:
    name = "highs"

    def solve(self, model: Model, params: SolveParams) -> SolveResult:
        model.check()
        if model.is_mip:
            return self._solve_mip(model, params)
        return self._solve_lp(model, params)

    def _solve_lp(self, model: Model, params: SolveParams) -> SolveResult:
        sign = 1.0 if model.sense == "min" else -1.0
        c = sign * model.objective_vector()
        A, lo, hi = model.constraint_matrix()
        A = A.tocsr()
        eq = lo == hi
        up = ~eq & np.isfinite(hi)
        dn = ~eq & np.isfinite(lo)
        # '>=' rows are negated into '<=' rows
        A_ub = _vstack(A[up], -A[dn])
        b_ub = np.concatenate([hi[up], -lo[dn]])
        t0 = time.perf_counter()
        try:
            res = linprog(
                c,
                A_ub=A_ub if A_ub is not None else None,
                b_ub=b_ub if A_ub is not None else None,
                A_eq=A[eq] if eq.any() else None,
                b_eq=lo[eq] if eq.any() else None,
                bounds=list(zip(_bound(model.lower), _bound(model.upper))),
                method="highs",
                options={
                    "time_limit": params.time_limit,
                    "primal_feasibility_tolerance": min(params.feas_tol, 1e-7),
                    "dual_feasibility_tolerance": min(params.feas_tol, 1e-7),
                },
            )
        except Exception as exc:  # noqa: BLE001
            raise BackendError(f"HiGHS LP failed: {exc}") from exc
        wall = time.perf_counter() - t0
        status = _LP_STATUS.get(res.status)
        if status is None:
            raise BackendError(f"HiGHS LP numerical failure: {res.message}")
        if status is not Status.OPTIMAL:
            return SolveResult(status, wall_time=wall, var_names=tuple(model.var_names), backend=self.name)
        duals = np.zeros(model.n_constraints)
        if eq.any():
            duals[eq] = sign * res.eqlin.marginals
        if A_ub is not None:
            m = res.ineqlin.marginals
            n_up = int(up.sum())
            duals[up] = sign * m[:n_up]
            duals[dn] = -sign * m[n_up:]
        x = np.asarray(res.x, dtype=float)
        return SolveResult(
            Status.OPTIMAL,
            objective_value=float(model.objective_vector() @ x + model.objective.constant),
            primal=x,
            duals=duals,
            wall_time=wall,
            max_violation=max_violation(model, x),
            var_names=tuple(model.var_names),
            backend=self.name,
        )

    def _solve_mip(self, model: Model, params: SolveParams) -> SolveResult:
        sign = 1.0 if model.sense == "min" else -1.0
        c = sign * model.objective_vector()
        A, lo, hi = model.constraint_matrix()
        integrality = np.array([1 if k is VarKind.BINARY else 0 for k in model.kinds])
        t0 = time.perf_counter()
        try:
            res = milp(
                c,
                integrality=integrality,
                bounds=Bounds(np.asarray(model.lower), np.asarray(model.upper)),
                constraints=LinearConstraint(A, lo, hi) if model.n_constraints else None,
                options={"time_limit": params.time_limit, "mip_rel_gap": params.mip_gap},
            )
        except Exception as exc:  # noqa: BLE001
            raise BackendError(f"HiGHS MILP failed: {exc}") from exc
        wall = time.perf_counter() - t0
        status = _MIP_STATUS.get(res.status)
        if status is None:
            raise BackendError(f"HiGHS MILP failure: {res.message}")
        x = None if res.x is None else np.asarray(res.x, dtype=float)
        if x is not None:
            bins = integrality == 1
            x[bins] = np.round(x[bins])  # within 1e-6 of {0,1} on HiGHS output
        gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
        obj = float("nan") if x is None else float(model.objective_vector() @ x + model.objective.constant)
        return SolveResult(
            status,
            objective_value=obj,
            primal=x,
            gap=gap,
            wall_time=wall,
            max_violation=0.0 if x is None else max_violation(model, x),
            var_names=tuple(model.var_names),
            backend=self.name,
        )


_LP_STATUS = {0: Status.OPTIMAL, 1: Status.LIMIT_REACHED, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}
_MIP_STATUS = {0: Status.OPTIMAL, 1: Status.LIMIT_REACHED, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}


def _bound(values):
    return [None if np.isinf(v) else v for v in values]


def _vstack(a, b):
    import scipy.sparse as sp

    if a.shape[0] == 0 and b.shape[0] == 0:
        return None
    return sp.vstack([a, b]).tocsr()
