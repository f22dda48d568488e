import math
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

import rbsde_lab as rl


def _cubic():
    return rl.problem.Generator(func=lambda t, y, z: -y ** 3 + 0.0 * z, mu=0.0, depends_on_z=False)


def test_step_config_defaults_from_settings(monkeypatch):
    """StepConfig reads its tolerance from RBSDE_ROOT_TOL"""
    monkeypatch.setenv("RBSDE_ROOT_TOL", "1e-10")
    rl.common.get_settings.cache_clear()
    assert rl.bsde.StepConfig().root_tol == 1e-10, "root_tol not taken from the environment"


def test_implicit_step_linear():
    """f = -y gives y = yhat / (1 + h)"""
    gen = rl.problem.linear_generator(a=-1.0)
    y = rl.bsde.implicit_step(2.0, 0.0, 0.0, gen, h=0.1)
    assert math.isclose(y, 2.0 / 1.1, rel_tol=1e-13), f"Implicit step {y}"
    with pytest.raises(TypeError):
        rl.bsde.implicit_step(2.0, 0.0, 0.0, gen)


@settings(max_examples=200, deadline=None)
@given(
    yhat=st.floats(min_value=-50.0, max_value=50.0, allow_nan=False),
    h=st.floats(min_value=1e-3, max_value=1.0),
)
def test_implicit_step_cubic_matches_brentq(yhat, h):
    """The Newton-bisection root agrees with brentq on y + h y^3 = yhat"""
    y = rl.bsde.implicit_step(yhat, 0.0, 0.0, _cubic(), h=h)
    scale = max(1.0, abs(yhat))
    assert abs(y + h * y ** 3 - yhat) <= 1e-10 * scale, f"Residual too large at yhat={yhat}, h={h}"
    lo, hi = -abs(yhat) - 1.0, abs(yhat) + 1.0
    ref = brentq(lambda v: v + h * v ** 3 - yhat, lo, hi, xtol=1e-15, rtol=1e-15)
    assert abs(y - ref) <= 1e-10 * scale, f"Root {y} vs brentq {ref}"


@settings(max_examples=100, deadline=None)
@given(
    yhat=st.floats(min_value=-10.0, max_value=10.0, allow_nan=False),
    L=st.floats(min_value=-10.0, max_value=10.0, allow_nan=False),
)
def test_penalized_step_tends_to_projection(yhat, L):
    """For large n the penalized root approaches max(plain root, L) from below"""
    h = 0.1
    gen = rl.problem.linear_generator(a=-1.0)
    plain = yhat / (1.0 + h)
    target = max(plain, L)
    coarse = rl.bsde.implicit_step(yhat, 0.0, 0.0, gen, h=h, penalty=10.0, L=L)
    fine = rl.bsde.implicit_step(yhat, 0.0, 0.0, gen, h=h, penalty=1e6, L=L)
    bound = (1.1 * abs(L) + abs(yhat) + 1.0) / (h * 1e6)
    assert abs(fine - target) <= bound, f"Penalized {fine} vs projection {target}"
    assert fine <= target + 1e-12 * max(1.0, abs(target)), "Penalized root above the projection"
    assert coarse <= fine + 1e-12 * max(1.0, abs(fine)), "Penalized roots not increasing in n"


def test_step_condition():
    """h * max(mu, 0) > 1/2 is refused unless the check is off"""
    prob = rl.problem.make_problem(rl.lattice.build_lattice(1.0, 10), 1.0, rl.problem.linear_generator(a=6.0),
                                   rl.problem.no_obstacle())
    with pytest.raises(rl.common.StepConditionError, match="refine the grid"):
        rl.bsde.solve_bsde(prob)
    pair = rl.bsde.solve_bsde(prob, rl.bsde.StepConfig(step_condition=False))
    assert math.isfinite(pair.Y0), "Solve with the check off should still run when roots exist"


def test_martingale_solution_exact():
    """xi = W_T^2, f = 0 gives Y = W^2 + T - t at every node"""
    prob = rl.problem.scenario("martingale", steps=100)
    pair = rl.bsde.solve_bsde(prob)
    lat = prob.lattice
    for i in range(lat.N + 1):
        expected = lat.node_w(i) ** 2 + lat.T - lat.grid.t(i)
        np.testing.assert_allclose(pair.Y.row(i), expected, rtol=1e-12, atol=1e-12,
                                   err_msg=f"Y differs from W^2 + T - t at step {i}")
    assert math.isclose(pair.Y0, 1.0, abs_tol=1e-12), f"Y0 = {pair.Y0}"


def test_z_extract_of_square():
    """Z of W^2 at step i is 2 W_i"""
    lat = rl.lattice.build_lattice(1.0, 16)
    W2 = rl.lattice.w_process(lat).map(lambda v: v ** 2)
    for i in range(lat.N):
        np.testing.assert_allclose(rl.bsde.z_extract(W2, i), 2.0 * lat.node_w(i), atol=1e-12,
                                   err_msg=f"Z at step {i}")


def test_ode_cubic_converges():
    """The cubic ODE value c / sqrt(1 + 2 c^2 T) is reached to first order"""
    prob = rl.problem.scenario("ode-cubic", {"c": 1.0}, steps=1000)
    pair = rl.bsde.solve_bsde(prob)
    exact = 1.0 / math.sqrt(3.0)
    assert abs(pair.Y0 - exact) <= 1e-3, f"Y0 {pair.Y0} vs {exact}"
    assert pair.Z.max_abs() <= 1e-12, "Deterministic problem must have Z = 0"


def test_solve_bsde_ignores_obstacle(caplog):
    """A finite obstacle is ignored with a warning"""
    prob = rl.problem.scenario("binding-obstacle", steps=10)
    with caplog.at_level(logging.WARNING):
        pair = rl.bsde.solve_bsde(prob)
    assert "ignores the obstacle" in caplog.text, "No warning about the ignored obstacle"
    assert pair.Y.max_abs() == 0.0, "xi = 0 and f = 0 must give Y = 0"
