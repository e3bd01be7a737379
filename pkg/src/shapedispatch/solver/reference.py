"""Naive reference backend: dense two-phase simplex (Bland's rule) and, for
MILPs, exhaustive enumeration of the binaries. Toy sizes only."""

from __future__ import annotations

import itertools
import time

import numpy as np

from .model import Model, VarKind
from .result import BackendError, SolveParams, SolveResult, Status, max_violation

MAX_ENUMERATED_BINARIES = 16


def simplex(c, A_eq, b_eq, tol=1e-9, max_iter=10_000):
    """min c@x s.t. A_eq@x = b_eq, x >= 0.

    Returns ``(status, x, y)`` where ``y`` are the equality-row duals
    (d objective / d b_eq) for rows that survive redundancy removal.
    """
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1 tableau with one artificial per row
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))
    T[m, :] = 0.0
    T[m, n : n + m] = 1.0
    for i in range(m):
        T[m] -= T[i]
    status = _run(T, basis, n + m, tol, max_iter)
    if status != "optimal":
        raise BackendError("phase 1 did not converge")
    if T[m, -1] < -1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
        return "infeasible", None, None

    # drive artificials out; drop rows that are redundant
    keep_rows = list(range(m))
    for i in range(m):
        if basis[i] >= n:
            cols = [j for j in range(n) if abs(T[i, j]) > tol]
            if cols:
                _pivot(T, basis, i, cols[0])
            else:
                keep_rows.remove(i)
    T = np.vstack([T[keep_rows], T[m : m + 1]])
    basis = [basis[i] for i in keep_rows]
    T = np.delete(T, range(n, n + m), axis=1)
    m2 = len(keep_rows)

    # phase 2
    T[m2, :] = 0.0
    T[m2, :n] = c
    for i, j in enumerate(basis):
        T[m2] -= c[j] * T[i]
    status = _run(T, basis, n, tol, max_iter)
    if status == "unbounded":
        return "unbounded", None, None
    x = np.zeros(n)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    B = A[np.ix_(keep_rows, basis)]
    y_kept = np.linalg.solve(B.T, np.asarray(c)[basis])
    y = np.zeros(m)
    y[keep_rows] = y_kept
    y[neg] *= -1
    return "optimal", x, y


def _pivot(T, basis, r, col):
    T[r] /= T[r, col]
    for i in range(T.shape[0]):
        if i != r and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[r]
    basis[r] = col


def _run(T, basis, n_cols, tol, max_iter):
    m = T.shape[0] - 1
    for _ in range(max_iter):
        entering = next((j for j in range(n_cols) if T[m, j] < -tol), None)
        if entering is None:
            return "optimal"
        ratios = [
            (T[i, -1] / T[i, entering], basis[i], i) for i in range(m) if T[i, entering] > tol
        ]
        if not ratios:
            return "unbounded"
        best = min(r for r, _, _ in ratios)
        # Bland: among ties, smallest basic index leaves
        _, _, row = min(((r, b, i) for r, b, i in ratios if r <= best + tol), key=lambda t: t[1])
        _pivot(T, basis, row, entering)
    raise BackendError("simplex iteration limit")


def solve_lp_arrays(c, A, lo, hi, lb, ub):
    """min c@x s.t. lo <= A@x <= hi, lb <= x <= ub via :func:`simplex`.

    Returns ``(status, x, row_duals)``; row duals are d objective / d rhs of
    the active side of each row.
    """
    A = np.asarray(A, dtype=float)
    n = len(c)
    # x = shift + T @ y, y >= 0
    cols = []
    shift = np.zeros(n)
    extra_rows = []  # (var, width) upper-bound rows on shifted vars
    for j in range(n):
        l, u = lb[j], ub[j]
        if np.isfinite(l):
            shift[j] = l
            cols.append((j, 1.0))
            if np.isfinite(u):
                extra_rows.append((len(cols) - 1, u - l))
        elif np.isfinite(u):
            shift[j] = u
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    k = len(cols)
    Tm = np.zeros((n, k))
    for idx, (j, s) in enumerate(cols):
        Tm[j, idx] = s

    rows, rhs, kinds = [], [], []  # kind: ("row", i, sign) or ("ub",)
    base = A @ shift if A.size else np.zeros(0)
    AT = A @ Tm if A.size else np.zeros((0, k))
    for i in range(A.shape[0]):
        if lo[i] == hi[i]:
            rows.append((AT[i], None))
            rhs.append(lo[i] - base[i])
            kinds.append(("eq", i))
        else:
            if np.isfinite(hi[i]):
                rows.append((AT[i], 1.0))
                rhs.append(hi[i] - base[i])
                kinds.append(("le", i))
            if np.isfinite(lo[i]):
                rows.append((-AT[i], 1.0))
                rhs.append(-(lo[i] - base[i]))
                kinds.append(("ge", i))
    for col, width in extra_rows:
        e = np.zeros(k)
        e[col] = 1.0
        rows.append((e, 1.0))
        rhs.append(width)
        kinds.append(("ub", -1))
    n_slack = sum(1 for _, s in rows if s is not None)
    M = np.zeros((len(rows), k + n_slack))
    s_idx = k
    for r, (a, s) in enumerate(rows):
        M[r, :k] = a
        if s is not None:
            M[r, s_idx] = 1.0
            s_idx += 1
    cc = np.concatenate([Tm.T @ c, np.zeros(n_slack)])
    status, y, duals = simplex(cc, M, np.array(rhs, dtype=float))
    if status != "optimal":
        return status, None, None
    x = shift + Tm @ y[:k]
    row_duals = np.zeros(A.shape[0])
    for (kind, i), d in zip(kinds, duals):
        if kind in ("eq", "le"):
            row_duals[i] += d
        elif kind == "ge":
            row_duals[i] -= d
    return "optimal", x, row_duals


class ReferenceBackend:
    name = "reference"

    def solve(self, model: Model, params: SolveParams) -> SolveResult:
        model.check()
        t0 = time.perf_counter()
        sign = 1.0 if model.sense == "min" else -1.0
        c = sign * model.objective_vector()
        A, lo, hi = model.constraint_matrix()
        A = A.toarray()
        lb = np.asarray(model.lower, dtype=float)
        ub = np.asarray(model.upper, dtype=float)
        bins = [i for i, k in enumerate(model.kinds) if k is VarKind.BINARY]
        names = tuple(model.var_names)

        if not bins:
            status, x, duals = solve_lp_arrays(c, A, lo, hi, lb, ub)
            if status != "optimal":
                return SolveResult(Status(status), wall_time=time.perf_counter() - t0, var_names=names, backend=self.name)
            return SolveResult(
                Status.OPTIMAL,
                objective_value=float(model.objective_vector() @ x + model.objective.constant),
                primal=x,
                duals=sign * duals,
                wall_time=time.perf_counter() - t0,
                max_violation=max_violation(model, x),
                var_names=names,
                backend=self.name,
            )

        if len(bins) > MAX_ENUMERATED_BINARIES:
            raise BackendError(
                f"reference backend enumerates binaries; {len(bins)} > {MAX_ENUMERATED_BINARIES}"
            )
        best_x, best_val, unbounded = None, np.inf, False
        for combo in itertools.product((0.0, 1.0), repeat=len(bins)):
            lbc, ubc = lb.copy(), ub.copy()
            lbc[bins] = combo
            ubc[bins] = combo
            if np.any(lbc > ubc):
                continue
            status, x, _ = solve_lp_arrays(c, A, lo, hi, lbc, ubc)
            if status == "unbounded":
                unbounded = True
            elif status == "optimal" and c @ x < best_val - 1e-12:
                best_x, best_val = x, c @ x
        wall = time.perf_counter() - t0
        if best_x is None:
            st = Status.UNBOUNDED if unbounded else Status.INFEASIBLE
            return SolveResult(st, wall_time=wall, var_names=names, backend=self.name)
        return SolveResult(
            Status.OPTIMAL,
            objective_value=float(model.objective_vector() @ best_x + model.objective.constant),
            primal=best_x,
            wall_time=wall,
            max_violation=max_violation(model, best_x),
            var_names=names,
            backend=self.name,
        )
