import math

import numpy as np
import pytest

import rbsde_lab as rl
from tests.conftest_utils import brute_force_expectation


def test_constant_process_norms():
    """S^p of a constant is its absolute value and H^p of 1 is sqrt(T)"""
    lat = rl.lattice.build_lattice(2.0, 8)
    c = rl.lattice.constant_process(lat, -3.0)
    for p in (1.0, 1.5, 2.0):
        entry = rl.analysis.sp_norm(c, p)
        assert math.isclose(entry.value, 3.0, rel_tol=1e-12), f"S^{p} of -3 is {entry.value}"
    one = rl.lattice.constant_process(lat, 1.0, 0, lat.N - 1)
    for p, mode in ((2.0, "slice"), (1.5, "enumerate")):
        entry = rl.analysis.hp_norm(one, p, mode=mode)
        assert math.isclose(entry.value, math.sqrt(2.0), rel_tol=1e-12), f"H^{p} of 1 is {entry.value}"
    assert math.isclose(rl.analysis.d_norm(c), 3.0, rel_tol=1e-12), "Class-D norm of a constant"


def test_sp_norm_of_walk_matches_brute_force():
    """S^2 of W on a small lattice, against direct enumeration"""
    lat = rl.lattice.build_lattice(1.0, 5)
    W = rl.lattice.w_process(lat)
    expected = brute_force_expectation(lat, lambda w, nodes: np.max(np.abs(w)) ** 2) ** 0.5
    for mode in ("enumerate", "augmented"):
        entry = rl.analysis.sp_norm(W, 2.0, mode=mode)
        assert math.isclose(entry.value, expected, rel_tol=1e-12), f"{mode}: {entry.value} vs {expected}"
    assert rl.analysis.sp_norm(W, 2.0, mode="augmented").method == rl.lattice.METHOD_AUGMENTED, "Method tag"


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
def test_sp_norm_path_modes_on_three_steps(p):
    """Enumerated and sampled S^p of a partly defined walk, against direct enumeration"""
    lat = rl.lattice.build_lattice(1.0, 3)
    W = rl.lattice.w_process(lat).restrict(1, 2)
    expected = brute_force_expectation(lat, lambda w, nodes: np.max(np.abs(w[1:3])) ** p) ** (1.0 / p)
    entry = rl.analysis.sp_norm(W, p, mode="enumerate")
    assert entry.method == rl.lattice.METHOD_ENUMERATION, f"Method tag {entry.method}"
    assert math.isclose(entry.value, expected, rel_tol=1e-12), f"Enumerated {entry.value} vs {expected}"
    assert math.isclose(rl.analysis.sp_norm(W, p).value, expected, rel_tol=1e-12), "auto mode"
    sampled = rl.analysis.sp_norm(W, p, mode="sampled", count=4000, seed=3)
    assert sampled.stderr is not None and abs(sampled.value - expected) <= 5 * sampled.stderr + 1e-12, \
        f"Sampled {sampled.value} +- {sampled.stderr} vs {expected}"


def test_sp_norm_modes_agree():
    """Augmentation is exact, sampling lies within a few standard errors"""
    lat = rl.lattice.build_lattice(1.0, 12)
    X = rl.lattice.w_process(lat).map(lambda v: np.sin(3 * v) + v)
    exact = rl.analysis.sp_norm(X, 1.5, mode="enumerate")
    aug = rl.analysis.sp_norm(X, 1.5, mode="augmented")
    sampled = rl.analysis.sp_norm(X, 1.5, mode="sampled", count=20000, seed=1)
    assert math.isclose(aug.value, exact.value, rel_tol=1e-12), f"Augmented {aug.value} vs {exact.value}"
    assert sampled.method == rl.lattice.METHOD_SAMPLED and sampled.stderr > 0, "Sampled entry needs a stderr"
    assert abs(sampled.value - exact.value) <= 4 * sampled.stderr, \
        f"Sampled {sampled.value} +- {sampled.stderr} vs {exact.value}"


def test_hp_norm_slice_matches_enumeration():
    """For p = 2 the slice formula equals the pathwise one"""
    lat = rl.lattice.build_lattice(1.0, 10)
    Z = rl.lattice.w_process(lat).restrict(0, lat.N - 1)
    slice_entry = rl.analysis.hp_norm(Z, 2.0, mode="slice")
    path_entry = rl.analysis.hp_norm(Z, 2.0, mode="enumerate")
    assert math.isclose(slice_entry.value, path_entry.value, rel_tol=1e-12), "Slice and enumeration differ"
    # E int W^2 dt over the left points = h^2 * sum i
    expected = math.sqrt(lat.h * lat.h * sum(range(lat.N)))
    assert math.isclose(slice_entry.value, expected, rel_tol=1e-12), f"H^2 of W {slice_entry.value} vs {expected}"
    with pytest.raises(rl.common.EstimateError):
        rl.analysis.hp_norm(Z, 1.5, mode="slice")


def test_norm_arguments_checked():
    """Non-positive exponents and unknown modes raise"""
    lat = rl.lattice.build_lattice(1.0, 4)
    W = rl.lattice.w_process(lat)
    with pytest.raises(rl.common.EstimateError):
        rl.analysis.sp_norm(W, 0.0)
    with pytest.raises(rl.common.EstimateError):
        rl.analysis.sp_norm(W, 2.0, mode="slice")


def test_d_norm_is_optimal_stopping_value():
    """The class-D norm equals the stopping oracle with reward |Y|"""
    lat = rl.lattice.build_lattice(1.0, 8)
    g = lambda t, w: np.abs(np.sin(3.0 * w)) * (1.0 + t) - 0.5 * t
    Y = rl.lattice.process_from_function(lat, g)
    prob = rl.problem.make_problem(lat, lambda t, w: np.abs(g(t, w)), rl.problem.zero_generator(),
                                   rl.problem.node_obstacle(lambda t, w: np.abs(g(t, w))))
    oracle = rl.harness.exhaustive_stopping_oracle(prob)
    assert math.isclose(rl.analysis.d_norm(Y), oracle, rel_tol=1e-12), \
        f"d-norm {rl.analysis.d_norm(Y)} vs oracle {oracle}"


def test_beta_metrics_increase_with_beta():
    """Power means are nondecreasing in the exponent"""
    lat = rl.lattice.build_lattice(1.0, 10)
    W = rl.lattice.w_process(lat)
    metrics = rl.analysis.beta_metrics(W, [0.25, 0.5, 0.75])
    values = [metrics[k].value for k in ("0.25", "0.5", "0.75")]
    assert values == sorted(values), f"Beta metrics not increasing: {values}"


def test_norm_report_for_martingale():
    """The report holds S^p, H^p, the class-D norm and the betas"""
    prob = rl.problem.scenario("martingale", steps=10)
    tri = rl.reflect.solve_projected(prob)
    report = rl.analysis.norm_report(tri.Y, tri.Z, 2.0, betas=[0.5])
    assert math.isclose(report.dnorm, 1.0, rel_tol=1e-12), f"d-norm of a positive martingale is Y0, got {report.dnorm}"
    assert report.hp.method == rl.analysis.METHOD_SLICE, f"H^2 method {report.hp.method}"
    assert "0.5" in report.betas, f"Betas {list(report.betas)}"


def test_estimates_on_zero_problem():
    """The all-zero problem has ratio 0 for every estimate"""
    lat = rl.lattice.build_lattice(1.0, 6)
    prob = rl.problem.make_problem(lat, 0.0, rl.problem.zero_generator(), rl.problem.no_obstacle())
    tri = rl.reflect.solve_projected(prob)
    for id in rl.analysis.ESTIMATE_IDS:
        report = rl.analysis.check_estimate(id, prob, tri)
        assert report.ratio == 0.0, f"{id}: ratio {report.ratio}"


def test_estimates_within_calibrated_constants():
    """Catalog ratios at the calibration settings stay below the pinned constants"""
    for name in ("martingale", "binding-obstacle", "american-put", "monotone-nonlipschitz"):
        prob = rl.problem.scenario(name, steps=12, p=2.0)
        tri = rl.reflect.solve_projected(prob)
        for id in rl.analysis.ESTIMATE_IDS:
            report = rl.analysis.check_estimate(id, prob, tri)
            bound = rl.harness.estimate_constant(id)
            assert math.isfinite(report.ratio) and report.ratio <= bound, f"{name} {id}: ratio {report.ratio} > {bound}"
            assert report.method == rl.lattice.METHOD_ENUMERATION, f"{name} {id}: method {report.method}"


@pytest.mark.parametrize("name,params", [
    ("binding-obstacle", {"kappa": 0.25}),
    ("american-put", {}),
    ("monotone-nonlipschitz", {}),
])
@pytest.mark.parametrize("a", [-1.0, 0.5])
def test_estimate_ratios_under_exponential_shift(name, params, a):
    """Shifted ratios stay below C1(a) times the original ones"""
    prob = rl.problem.scenario(name, params, steps=10, p=2.0)
    tri = rl.reflect.solve_projected(prob)
    for id in rl.analysis.SHIFT_IDS:
        rep = rl.analysis.check_shift_invariance(id, prob, tri, a)
        assert rep.holds, f"{name} {id}: shifted ratio {rep.shifted.ratio} above {rep.bound}"
        expected = math.exp(2.0 * rep.original.p * abs(a) * prob.T) * rep.driver_factor
        assert math.isclose(rep.constant, expected, rel_tol=1e-12), f"{name} {id}: constant {rep.constant}"
        if name == "binding-obstacle":
            assert rep.driver_factor == 1.0, f"{id}: zero driver needs no driver factor, got {rep.driver_factor}"


def test_shift_invariance_at_zero_rate_and_ids():
    """a = 0 leaves every ratio unchanged; P4.2 is not covered"""
    prob = rl.problem.scenario("binding-obstacle", {"kappa": 0.25}, steps=8)
    tri = rl.reflect.solve_projected(prob)
    rep = rl.analysis.check_shift_invariance("P4.3", prob, tri, 0.0)
    assert rep.shifted.ratio == rep.original.ratio and rep.constant == 1.0, f"Report {rep}"
    with pytest.raises(rl.common.EstimateError):
        rl.analysis.check_shift_invariance("P4.2", prob, tri, 0.5)


def test_stopped_estimate():
    """A hitting rule stops the pathwise terms"""
    prob = rl.problem.scenario("binding-obstacle", {"kappa": 0.25}, steps=10)
    tri = rl.reflect.solve_projected(prob)
    rule = rl.analysis.StoppingRule(kind="hit_above", level=0.5)
    stopped = rl.analysis.check_estimate("P2.1", prob, tri, tau=rule)
    full = rl.analysis.check_estimate("P2.1", prob, tri)
    assert stopped.stopping == "hit_above(0.5)", f"Stopping label {stopped.stopping}"
    assert stopped.lhs <= full.lhs + 1e-12, "Stopped K and Z terms cannot exceed the terminal ones"
    with pytest.raises(rl.common.EstimateError):
        rl.analysis.check_estimate("P3.1", prob, tri, tau=rule)


def test_estimate_errors():
    """Unknown ids and a disabled sampling fallback raise"""
    prob = rl.problem.scenario("martingale", steps=rl.lattice.enumeration_cap() + 2)
    tri = rl.reflect.solve_projected(prob)
    with pytest.raises(rl.common.EstimateError):
        rl.analysis.check_estimate("P9.9", prob, tri)
    with pytest.raises(rl.common.EstimateError, match="sampling is disabled"):
        rl.analysis.check_estimate("P3.1", prob, tri, allow_sampled=False)


def test_frozen_stability():
    """Identical frozen arguments give a zero left side; different ones a finite ratio"""
    prob = rl.problem.scenario("monotone-nonlipschitz", steps=10, p=1.2)
    lat = prob.lattice
    V = rl.lattice.constant_process(lat, 0.0, 0, lat.N - 1)
    rng = np.random.default_rng(5)
    V2 = rl.lattice.process_from_rows(lat, rng.normal(size=(lat.N + 1, lat.N + 1)), 0, lat.N - 1)
    a = rl.picard.solve_z_frozen(prob, V)
    b = rl.picard.solve_z_frozen(prob, V2)

    same = rl.analysis.check_frozen_stability(prob, a, V, a, V, p=1.2)
    assert same.id == "P5.6" and same.lhs == 0.0 and same.ratio == 0.0, f"Self comparison {same}"

    whole = rl.analysis.check_frozen_stability(prob, a, V, b, V2, p=1.2)
    assert whole.lhs > 0 and math.isfinite(whole.ratio) and whole.ratio <= 20, f"Whole horizon {whole}"

    part = rl.analysis.check_frozen_stability(prob, a, V, b, V2, p=1.2, interval=(3, 7))
    assert part.id == "P5.7" and part.stopping == "[3,7]", f"Sub-interval {part}"
    assert math.isfinite(part.ratio) and part.ratio <= 20, f"Sub-interval ratio {part.ratio}"
    with pytest.raises(rl.common.EstimateError):
        rl.analysis.check_frozen_stability(prob, a, V, b, V2, interval=(5, 5))
