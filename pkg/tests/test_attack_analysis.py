import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapedispatch.attack_analysis import (
    AttackModel,
    MeterPlacement,
    OverloadProfile,
    air_volume,
    follower_overload,
    is_unattackable_by_meters,
    membership,
    overload_profile,
    profile_to_csv,
)
from shapedispatch.grid_model import Generator, GridCase, Line, Load, shift_factors

from oracles import all_placements, vertex_overload

TAU = 0.5


def random_placement(case, rng, p_meter=0.3):
    return MeterPlacement(
        (rng.random(case.n_loads) > p_meter).astype(int), (rng.random(case.n_lines) > p_meter).astype(int)
    )


def test_undefended_ieee14_volume(ieee14):
    case, S = ieee14
    prof = overload_profile(case, S, AttackModel.uniform(case, TAU), MeterPlacement.none(case))
    assert air_volume(prof, case) == pytest.approx(2.3894, rel=5e-3)


def test_zero_tau_gives_zero(three_bus, rng):
    case, S = three_bus
    attack = AttackModel.uniform(case, 0.0)
    for _ in range(5):
        p = random_placement(case, rng)
        assert all(follower_overload(case, S, attack, p, n) == 0 for n in range(1, 4))


def test_metered_line_gives_zero(ieee14):
    case, S = ieee14
    attack = AttackModel.uniform(case, TAU)
    for n in (1, 7, 14):
        p = MeterPlacement.from_metered(case, lines=[n])
        assert follower_overload(case, S, attack, p, n) == pytest.approx(0.0, abs=1e-9)
        assert follower_overload(case, S, attack, p, n, "min") == pytest.approx(0.0, abs=1e-9)


def test_all_loads_metered_profile_is_zero(ieee14):
    case, S = ieee14
    p = MeterPlacement(np.zeros(case.n_loads, int), np.ones(case.n_lines, int))
    prof = overload_profile(case, S, AttackModel.uniform(case, TAU), p, verify=True)
    assert np.all(prof.H == 0) and np.all(prof.V == 0)
    assert air_volume(OverloadProfile.zeros(case.n_lines), case) == 0


def test_vertex_oracle_equivalence_exhaustive(three_bus):
    case, S = three_bus
    attack = AttackModel.uniform(case, TAU)
    for p in all_placements(case):
        for n in range(1, case.n_lines + 1):
            for sense in ("max", "min"):
                got = follower_overload(case, S, attack, p, n, sense)
                assert got == pytest.approx(vertex_overload(case, S, attack, p, n, sense), abs=1e-8)


def test_prop1_identity_fixture_exhaustive(three_bus):
    case, S = three_bus
    attack = AttackModel.uniform(case, TAU)
    for p in all_placements(case):
        prof = overload_profile(case, S, attack, p, verify=True)
        np.testing.assert_allclose(prof.H, -prof.V, atol=1e-6)
        assert np.all(prof.H >= -1e-9)


def test_prop1_identity_ieee14_random(ieee14, rng):
    case, S = ieee14
    attack = AttackModel.uniform(case, TAU)
    for _ in range(100):
        prof = overload_profile(case, S, attack, random_placement(case, rng), verify=True)
        np.testing.assert_allclose(prof.H, -prof.V, atol=1e-6)
        assert np.all(prof.H >= -1e-9)


def _flips(p):
    for d in np.flatnonzero(p.delta == 1):
        delta = p.delta.copy()
        delta[d] = 0
        yield MeterPlacement(delta, p.epsilon)
    for k in np.flatnonzero(p.epsilon == 1):
        eps = p.epsilon.copy()
        eps[k] = 0
        yield MeterPlacement(p.delta, eps)


def test_meter_monotonicity_exhaustive(three_bus):
    case, S = three_bus
    attack = AttackModel.uniform(case, TAU)
    cache = {}

    def H(p):
        key = p.bitstrings()
        if key not in cache:
            cache[key] = overload_profile(case, S, attack, p).H
        return cache[key]

    for p in all_placements(case):
        for q in _flips(p):
            assert np.all(H(q) <= H(p) + 1e-9)


def test_meter_monotonicity_ieee14(ieee14, rng):
    case, S = ieee14
    attack = AttackModel.uniform(case, TAU)
    for _ in range(20):
        p = random_placement(case, rng, 0.2)
        q = list(_flips(p))[rng.integers(len(list(_flips(p))))]
        assert np.all(overload_profile(case, S, attack, q).H <= overload_profile(case, S, attack, p).H + 1e-9)


def test_prop2_soundness_exhaustive(three_bus):
    case, S = three_bus
    attack = AttackModel.uniform(case, TAU)
    hits = 0
    for p in all_placements(case):
        for n in range(1, case.n_lines + 1):
            if is_unattackable_by_meters(case, p, n):
                hits += 1
                assert follower_overload(case, S, attack, p, n) <= 1e-6
    assert hits > 0


def test_prop2_soundness_ieee14(ieee14, rng):
    case, S = ieee14
    attack = AttackModel.uniform(case, TAU)
    hits = 0
    for _ in range(60):
        p = random_placement(case, rng, 0.6)
        for n in range(1, case.n_lines + 1):
            if is_unattackable_by_meters(case, p, n):
                hits += 1
                assert follower_overload(case, S, attack, p, n) <= 1e-6
    assert hits > 0


def test_prop2_needs_every_load_at_the_bus(three_bus):
    case, S = three_bus
    # bus 3 has two loads; metering one of them must not count
    one = MeterPlacement(np.array([1, 0, 1]), np.array([1, 1, 1]))
    assert not is_unattackable_by_meters(case, one, 2)


def test_prop2_no_meters_false(ieee14):
    case, _ = ieee14
    p = MeterPlacement.none(case)
    assert not any(is_unattackable_by_meters(case, p, n) for n in range(1, case.n_lines + 1))


def test_prop2_radial_leaf():
    case = GridCase(
        (1, 2, 3),
        (Line(1, 2, 0.1, 1.0), Line(2, 3, 0.1, 1.0)),
        (Generator(1, 0, 2),),
        (Load(2, 0.5), Load(3, 0.5)),
    )
    S = shift_factors(case)
    p = MeterPlacement(np.array([1, 0]), np.array([1, 1]))
    attack = AttackModel.uniform(case, TAU)
    assert is_unattackable_by_meters(case, p, 2)
    assert follower_overload(case, S, attack, p, 2) <= 1e-9
    # bus 1 has no load and no other line, so line 1 never carries attack flow
    assert is_unattackable_by_meters(case, p, 1)
    assert follower_overload(case, S, attack, MeterPlacement.none(case), 1) <= 1e-9
    # with the leaf load unmetered line 2 is attackable
    assert not is_unattackable_by_meters(case, MeterPlacement.none(case), 2)


def test_prop2_unknown_line(three_bus):
    with pytest.raises(KeyError):
        is_unattackable_by_meters(three_bus[0], MeterPlacement.none(three_bus[0]), 9)


def _random_G(case, rng):
    return rng.dirichlet(np.ones(case.n_generators)) * case.demand.sum()


def test_region_algebra(ieee14, rng):
    case, S = ieee14
    H = overload_profile(case, S, AttackModel.uniform(case, TAU), MeterPlacement.none(case)).H
    seen = set()
    for _ in range(200):
        G = _random_G(case, rng)
        sec = membership(case, S, G, H, "security")
        arr = membership(case, S, G, H, "arr")
        air = membership(case, S, G, H, "air")
        assert air == (arr and not sec)
        if sec:
            assert arr
        if air:
            assert not sec
        assert membership(case, S, G, None, "insecurity") == (not sec)
        assert membership(case, S, G, np.zeros(case.n_lines), "preventive") == sec
        seen.add((sec, air))
    assert len(seen) >= 2  # the sample crossed a boundary


def test_membership_dimension_errors(ieee14):
    case, S = ieee14
    with pytest.raises(ValueError):
        membership(case, S, [1.0, 2.0], None, "security")
    with pytest.raises(ValueError):
        membership(case, S, np.ones(5), np.ones(3), "arr")
    with pytest.raises(ValueError):
        membership(case, S, np.ones(5), None, "nowhere")


def test_profile_csv(three_bus):
    case, S = three_bus
    prof = overload_profile(case, S, AttackModel.uniform(case, TAU), MeterPlacement.full(case))
    lines = profile_to_csv(prof, case).splitlines()
    assert lines[0] == "line_id,F_bar,H,V"
    assert lines[1] == "1,1.000000,0.000000,0.000000"


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 1.0), st.lists(st.integers(0, 1), min_size=6, max_size=6))
def test_overload_scales_with_tau(three_bus, tau, bits):
    # with no flow metering the feasible set is a pure box, so H is linear in tau
    case, S = three_bus
    p = MeterPlacement(np.array(bits[:3]), np.ones(3, int))
    h1 = overload_profile(case, S, AttackModel.uniform(case, 1.0, big_M=10.0), p).H
    ht = overload_profile(case, S, AttackModel.uniform(case, tau, big_M=10.0), p).H
    np.testing.assert_allclose(ht, tau * h1, atol=1e-9)


def test_attack_model_validation(three_bus):
    with pytest.raises(ValueError):
        AttackModel(np.array([-0.1, 0.2, 0.3]))
    with pytest.raises(ValueError):
        AttackModel(np.ones(3), big_M=0)
    with pytest.raises(ValueError):
        AttackModel(np.ones(2)).reach(three_bus[0])
    with pytest.raises(ValueError):
        MeterPlacement([0, 2], [1])
