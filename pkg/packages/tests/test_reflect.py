import math

import numpy as np
import pytest

import rbsde_lab as rl


def test_projected_stays_above_obstacle(binding_problem):
    """Y >= L everywhere and pushes happen on the obstacle"""
    tri = rl.reflect.solve_projected(binding_problem)
    sk = rl.reflect.skorokhod_report(tri, binding_problem)
    assert sk.max_violation == 0.0, f"Obstacle violated by {sk.max_violation}"
    assert sk.residual == 0.0, f"Projected Skorokhod residual {sk.residual}"
    assert tri.dK.min_value() >= 0.0, "Negative push"
    assert tri.mode == rl.reflect.MODE_PROJECTED, f"Mode {tri.mode}"


def test_projected_without_obstacle_is_plain():
    """The sentinel obstacle reduces the projected solver to the plain one"""
    prob = rl.problem.scenario("martingale", steps=20)
    tri = rl.reflect.solve_projected(prob)
    pair = rl.bsde.solve_bsde(prob)
    assert tri.Y.identical(pair.Y), "Projected Y differs from the plain solve"
    assert tri.dK.max_abs() == 0.0, "Pushes without an obstacle"


def test_never_binding_obstacle():
    """xi = c + W^2 and L = c give Y = c + W^2 + T - t and K = 0"""
    prob = rl.problem.scenario("never-binding", {"c": 0.5}, steps=30)
    tri = rl.reflect.solve_projected(prob)
    assert tri.dK.max_abs() == 0.0, "Obstacle never binds, K must stay 0"
    assert math.isclose(tri.Y0, 1.5, abs_tol=1e-12), f"Y0 = {tri.Y0}"


def test_binding_obstacle_tracks_obstacle():
    """With kappa = 0 the solution sits on L and K_T = l0"""
    prob = rl.problem.scenario("binding-obstacle", {"l0": 2.0}, steps=40)
    tri = rl.reflect.solve_projected(prob)
    for i in range(prob.N):
        np.testing.assert_allclose(tri.Y.row(i), prob.L.row(i), atol=1e-14, err_msg=f"Y != L at step {i}")
    nodes = np.zeros((1, prob.N + 1), dtype=int)
    K = tri.K_along(nodes)
    assert K[0, 0] == 0.0, "K_0 must be 0"
    assert math.isclose(K[0, -1], 2.0, rel_tol=1e-12), f"K_T = {K[0, -1]}"


def test_projected_matches_stopping_oracle(binding_problem):
    """f = 0: the projected Y0 is the optimal stopping value over the full tree"""
    tri = rl.reflect.solve_projected(binding_problem)
    oracle = rl.harness.exhaustive_stopping_oracle(binding_problem)
    assert abs(tri.Y0 - oracle) <= 1e-12, f"Projected {tri.Y0} vs oracle {oracle}"


def test_penalized_below_projected_and_increasing():
    """Penalized solutions increase in n and stay below the projected one"""
    prob = rl.problem.scenario("binding-obstacle", {"kappa": 0.25}, steps=20)
    ref = rl.reflect.solve_projected(prob)
    prev = None
    for n in (1.0, 10.0, 100.0, 1000.0):
        tri = rl.reflect.solve_penalized(prob, n)
        assert tri.level == n and tri.label() == f"penalized({n:g})", f"Label {tri.label()}"
        gap = (ref.Y - tri.Y).min_value()
        assert gap >= -1e-12, f"Penalized above projected by {-gap} at n={n}"
        if prev is not None:
            assert (tri.Y - prev.Y).min_value() >= -1e-12, f"Not increasing at n={n}"
        sk = rl.reflect.skorokhod_report(tri, prob)
        assert sk.residual <= 0.0, f"Penalized residual must be <= 0, got {sk.residual}"
        prev = tri
    with pytest.raises(rl.common.ProblemError):
        rl.reflect.solve_penalized(prob, -1.0)


def test_solves_are_deterministic(binding_problem):
    """Two runs give bit-identical triples"""
    a = rl.reflect.solve_penalized(binding_problem, 16.0)
    b = rl.reflect.solve_penalized(binding_problem, 16.0)
    assert a.Y.identical(b.Y) and a.Z.identical(b.Z) and a.dK.identical(b.dK), "Repeated solves differ"


def test_shift_solution_round_trip(binding_problem):
    """unshift(shift(triple)) reproduces the triple"""
    tri = rl.reflect.solve_projected(binding_problem)
    back = rl.reflect.unshift_solution(rl.reflect.shift_solution(tri, 0.7), 0.7)
    np.testing.assert_allclose(np.nan_to_num(back.Y.values), np.nan_to_num(tri.Y.values), rtol=1e-14, atol=1e-15)
    assert rl.reflect.shift_solution(tri, 0.0) is tri, "a = 0 must be the identity"


def test_shifted_solve_close_to_direct():
    """Solving the shifted problem and mapping back agrees with the direct solve to O(h)"""
    prob = rl.problem.scenario("american-put", steps=50)
    direct = rl.reflect.solve_projected(prob)
    for a in (-1.0, 1.0):
        back = rl.reflect.solve_shifted(prob, a)
        diff = (back.Y - direct.Y).max_abs()
        assert diff <= 5 * prob.lattice.h, f"Shift a={a}: max |dY| = {diff}"
        assert back.Y.first == 0 and back.Y.last == prob.N, "Unshifted range"
    with pytest.raises(rl.common.ProblemError):
        rl.reflect.solve_shifted(prob, 1.0, mode="penalized")


def test_american_shift_removes_discounting():
    """With a = -r the shifted driver vanishes and the solve is the discounted recursion"""
    params = {"r": 0.05, "sigma": 0.3, "x0": 100.0, "strike": 100.0, "T": 1.0}
    prob = rl.problem.scenario("american-put", params, steps=60)
    value = rl.reflect.solve_shifted(prob, -0.05).Y0
    oracle = rl.harness.american_dp_oracle(0.05, 0.3, 100.0, 100.0, 1.0, 60)
    assert abs(value - oracle) <= 1e-10, f"Shifted solve {value} vs oracle {oracle}"


def test_sweep_workers_give_same_report():
    """Concurrent level solves keep the level order and the values"""
    prob = rl.problem.scenario("binding-obstacle", {"kappa": 0.25}, steps=12)
    serial = rl.reflect.penalization_sweep(prob, [1, 4, 16])
    threaded = rl.reflect.penalization_sweep(prob, [1, 4, 16], workers=3)
    assert serial.model_dump() == threaded.model_dump(), "Threaded sweep differs"


def test_sweep_rejects_bad_levels(binding_problem):
    """Levels must be given and strictly increasing"""
    with pytest.raises(rl.common.ProblemError):
        rl.reflect.penalization_sweep(binding_problem, [])
    with pytest.raises(rl.common.ProblemError):
        rl.reflect.penalization_sweep(binding_problem, [4, 4])
