import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapedispatch import solver
from shapedispatch.attack_analysis import AttackModel, MeterPlacement, build_follower_lp
from shapedispatch.solver import BackendError, Model, ModelError, SolveParams, Status

from oracles import vertex_overload

BACKENDS = ["highs", "reference"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_min_x_ge_3(backend):
    m = Model()
    x = m.add_var("x", lb=-np.inf)
    m.add_constraint(x >= 3)
    m.set_objective(x, "min")
    res = solver.solve(m, backend=backend)
    assert res.status is Status.OPTIMAL
    assert res.value(x) == pytest.approx(3.0)
    assert res.duals[0] == pytest.approx(1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible(backend):
    m = Model()
    x = m.add_var("x", lb=-np.inf)
    m.add_constraint(x <= 0)
    m.add_constraint(x >= 1)
    m.set_objective(x, "max")
    assert solver.solve(m, backend=backend).status is Status.INFEASIBLE


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded(backend):
    m = Model()
    x = m.add_var("x")
    m.set_objective(x, "max")
    assert solver.solve(m, backend=backend).status is Status.UNBOUNDED


def test_unknown_backend():
    with pytest.raises(BackendError):
        solver.get_backend("cplex")


def test_model_errors():
    m = Model()
    with pytest.raises(ModelError):
        m.add_vars("x", 2, lb=1, ub=0)
    x = m.add_vars("x", 2)
    with pytest.raises(ModelError):
        m.add_vars("x", 1)
    with pytest.raises(ModelError):
        m.add_constraint(3)
    with pytest.raises(ModelError):
        m.set_objective(x[0], "maximize")
    m.add_constraint(solver.LinExpr({7: 1.0}) <= 1)
    with pytest.raises(ModelError):
        m.check()


def test_reference_refuses_large_mip():
    m = Model()
    m.add_vars("b", solver.reference.MAX_ENUMERATED_BINARIES + 1, "binary")
    with pytest.raises(BackendError):
        solver.solve(m, backend="reference")


@pytest.mark.parametrize("backend", BACKENDS)
def test_small_knapsack(backend):
    m = Model()
    b = m.add_vars("b", 5, "binary")
    w = np.array([3, 4, 5, 8, 9.0])
    v = np.array([2, 3, 4, 6, 8.0])
    m.add_constraint(b.dot(w) <= 15)
    m.set_objective(b.dot(v), "max")
    res = solver.solve(m, backend=backend)
    assert res.status is Status.OPTIMAL
    best = max(v @ np.array(bits) for bits in np.ndindex(*(2,) * 5) if w @ np.array(bits) <= 15)
    assert res.objective_value == pytest.approx(best)
    assert np.all(np.isin(res.value(b), (0.0, 1.0)))


def _random_lp(seed, n=4, m=5):
    rng = np.random.default_rng(seed)
    model = Model(f"rand{seed}")
    x = model.add_vars("x", n, lb=rng.uniform(-2, 0, n), ub=rng.uniform(0.5, 3, n))
    A = rng.normal(size=(m, n))
    x0 = np.zeros(n)  # inside the box, so the LP is feasible
    for i in range(m):
        slack = rng.uniform(0.1, 1.0)
        kind = rng.integers(3)
        if kind == 0:
            model.add_constraint(x.dot(A[i]) <= A[i] @ x0 + slack)
        elif kind == 1:
            model.add_constraint(x.dot(A[i]) >= A[i] @ x0 - slack)
        else:
            model.add_constraint(x.dot(A[i]) == A[i] @ x0)
    model.set_objective(x.dot(rng.normal(size=n)), "min" if rng.integers(2) else "max")
    return model


def _check_kkt(model, res, tol=1e-6):
    A, lo, hi = model.constraint_matrix()
    A = A.toarray()
    x, y = res.primal, res.duals
    ax = A @ x
    for i in range(len(y)):
        if lo[i] == hi[i]:
            continue
        if np.isfinite(hi[i]) and abs(ax[i] - hi[i]) > tol:
            slack = hi[i] - ax[i]
        elif np.isfinite(lo[i]) and abs(ax[i] - lo[i]) > tol:
            slack = ax[i] - lo[i]
        else:
            continue
        assert abs(y[i]) * slack <= tol, f"row {i}: dual {y[i]} on slack {slack}"
    # reduced costs vanish on variables strictly inside their bounds
    sign = 1.0 if model.sense == "min" else -1.0
    red = sign * (model.objective_vector() - A.T @ y)
    lb, ub = np.array(model.lower), np.array(model.upper)
    inside = (x > lb + 1e-6) & (x < ub - 1e-6)
    assert np.all(np.abs(red[inside]) <= 1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_reference_matches_highs_on_random_lps(seed):
    model = _random_lp(seed)
    a = solver.solve(model, backend="highs")
    b = solver.solve(model, backend="reference")
    assert a.status is b.status is Status.OPTIMAL
    assert a.objective_value == pytest.approx(b.objective_value, abs=1e-7)
    _check_kkt(model, a)
    _check_kkt(model, b)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_duals_are_rhs_sensitivities(seed):
    model = _random_lp(seed)
    res = solver.solve(model)
    h = 1e-5

    def bumped(i, step):
        model.constraints[i].rhs += step
        try:
            out = solver.solve(model)
        finally:
            model.constraints[i].rhs -= step
        return out.objective_value if out.status is Status.OPTIMAL else None

    for i in range(model.n_constraints):
        up, dn = bumped(i, h), bumped(i, -h)
        if up is None or dn is None:
            continue
        fwd = (up - res.objective_value) / h
        bwd = (res.objective_value - dn) / h
        # at a degenerate vertex the dual sits between the one-sided derivatives
        lo_d, hi_d = min(fwd, bwd), max(fwd, bwd)
        assert lo_d - 1e-4 <= res.duals[i] <= hi_d + 1e-4


def test_resolve_is_deterministic():
    model = _random_lp(7)
    assert solver.solve(model).objective_value == pytest.approx(solver.solve(model).objective_value, abs=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_follower_fixture_matches_vertex_oracle(three_bus, backend):
    case, S = three_bus
    attack = AttackModel.uniform(case, 0.5)
    placement = MeterPlacement.none(case)
    for n in range(case.n_lines):
        model, _, _ = build_follower_lp(case, S, attack, placement, n, "max")
        res = solver.solve(model, backend=backend)
        assert res.objective_value == pytest.approx(vertex_overload(case, S, attack, placement, n + 1), abs=1e-8)


def test_binaries_within_tolerance_and_bounds_respected():
    m = Model()
    b = m.add_vars("b", 3, "binary")
    x = m.add_vars("x", 2, lb=-1, ub=1)
    m.add_constraint(b.sum() + x.sum() <= 1.5)
    m.set_objective(b.sum() * 2 + x[0] - x[1], "max")
    res = solver.solve(m, SolveParams(mip_gap=1e-9))
    assert np.all(np.abs(res.value(b) - np.rint(res.value(b))) <= 1e-6)
    assert res.max_violation <= 1e-6


def test_lp_format_text():
    m = Model("demo")
    x = m.add_vars("x", 2, lb=[-np.inf, 0], ub=[np.inf, 4])
    b = m.add_var("b", "binary")
    m.add_constraint(x[0] + 2 * x[1] - b <= 3, "cap[0]")
    m.add_constraint(x[0] - x[1] == 1)
    m.set_objective(x[0] + b, "max")
    assert solver.to_lp_string(m).splitlines() == [
        "\\ demo",
        "Maximize",
        " obj: 1 x_0_ + 1 b_0_",
        "Subject To",
        " cap_0_: 1 x_0_ + 2 x_1_ - 1 b_0_ <= 3",
        " c1: 1 x_0_ - 1 x_1_ = 1",
        "Bounds",
        " x_0_ free",
        " 0 <= x_1_ <= 4",
        "Binaries",
        " b_0_",
        "End",
    ]


def test_write_lp(tmp_path):
    m = _random_lp(1)
    path = tmp_path / "m.lp"
    solver.write_lp(m, path)
    assert path.read_text() == solver.to_lp_string(m)
