import math
import os
import shutil

import pytest
import yaml
from pydantic import ValidationError

import rbsde_lab as rl


def test_config_round_trip():
    """A dumped config reads back to the same normalized text"""
    cfg = rl.harness.parse_config({"scenario": "binding-obstacle", "params": {"kappa": 0.25}, "steps": 20})
    assert cfg.params == {"T": 1.0, "l0": 1.0, "kappa": 0.25}, f"Normalized params {cfg.params}"
    text = rl.harness.dump_config(cfg)
    again = rl.harness.parse_config(yaml.safe_load(text))
    assert rl.harness.dump_config(again) == text, "Round trip changed the config"
    assert rl.harness.run_id(cfg, "solve") == rl.harness.run_id(again, "solve"), "Run id not stable"
    assert rl.harness.run_id(cfg, "solve") != rl.harness.run_id(cfg, "sweep"), "Run id ignores the command"


def test_config_errors_name_the_key():
    """Unknown keys, unknown params and bad values report where they are"""
    cases = [
        ({"scenario": "martingale", "bogus": 1}, "bogus"),
        ({"scenario": "martingale", "params": {"kappa": 1}}, "params"),
        ({"scenario": "martingale", "steps": 0}, "steps"),
        ({"scenario": "nope"}, "scenario"),
        ({"scenario": "martingale", "picard": {"p": 0.5}}, "picard.p"),
        ({"scenario": "martingale", "levels": [4, 1]}, "levels"),
    ]
    for data, key in cases:
        with pytest.raises(rl.common.ConfigError) as e:
            rl.harness.parse_config(data)
        assert e.value.key == key, f"{data}: key {e.value.key} != {key}"


def test_config_solver_requirements():
    """Penalized solves need a level and shifted solves a rate"""
    with pytest.raises(rl.common.ConfigError):
        rl.harness.parse_config({"scenario": "martingale", "solver": "penalized"})
    with pytest.raises(rl.common.ConfigError):
        rl.harness.parse_config({"scenario": "martingale", "solver": "shifted"})
    cfg = rl.harness.parse_config({"scenario": "martingale", "solver": "shifted", "shift": 0.5})
    assert cfg.shift == 0.5, f"Shift {cfg.shift}"


def test_read_config_errors(tmp_path):
    """Missing files and malformed YAML are configuration errors"""
    with pytest.raises(rl.common.ConfigError):
        rl.harness.read_config(str(tmp_path / "missing.yaml"))
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: [unclosed\n")
    with pytest.raises(rl.common.ConfigError):
        rl.harness.read_config(str(bad))
    good = tmp_path / "good.yaml"
    good.write_text("scenario: american-put\nsteps: 40\nparams:\n  strike: 90\n")
    cfg = rl.harness.read_config(str(good))
    assert cfg.steps == 40 and cfg.params["strike"] == 90, f"Read config {cfg}"


def test_result_row_stderr_rules():
    """Sampled rows need a standard error and exact rows must not have one"""
    with pytest.raises(ValidationError):
        rl.harness.ResultRow(run_id="r", scenario="s", N=1, quantity="q", value=1.0,
                             method=rl.lattice.METHOD_SAMPLED)
    with pytest.raises(ValidationError):
        rl.harness.ResultRow(run_id="r", scenario="s", N=1, quantity="q", value=1.0, stderr=0.1)
    row = rl.harness.ResultRow(run_id="r", scenario="s", N=1, quantity="q", value=1.0,
                               method=rl.lattice.METHOD_SAMPLED, stderr=0.1)
    assert row.stderr == 0.1, "Sampled row lost its stderr"


def test_empty_csv_is_header_only(tmp_csv):
    """Writing no rows gives the header line"""
    assert rl.harness.write_csv([], tmp_csv) == 0, "Row count of an empty write"
    with open(tmp_csv, "rb") as f:
        content = f.read()
    assert content == (",".join(rl.harness.CSV_COLUMNS) + "\n").encode(), f"Header {content!r}"


def test_csv_rows_read_back(tmp_path):
    """Rows keep their values and the output directory is created"""
    path = str(tmp_path / "nested" / "out.csv")
    rows = [
        rl.harness.ResultRow(run_id="abc", scenario="martingale", N=10, quantity="Y0", value=1.0 / 3.0),
        rl.harness.ResultRow(run_id="abc", scenario="martingale", N=10, quantity="S(Y)", value=2.5,
                             method=rl.lattice.METHOD_SAMPLED, stderr=0.01, sweep=2),
    ]
    assert rl.harness.write_csv(rows, path) == 2, "Row count"
    df = rl.harness.read_csv(path)
    assert list(df.columns) == rl.harness.CSV_COLUMNS, f"Columns {list(df.columns)}"
    assert df.loc[0, "value"] == 1.0 / 3.0, "Full precision lost"
    assert df.loc[1, "stderr"] == 0.01 and df.loc[1, "sweep"] == 2, "Sampled row fields"
    with open(path, "rb") as f:
        assert b"\r\n" not in f.read(), "CSV must use LF line endings"


def test_american_oracle_basics():
    """Zero strike is worthless and the catalog put lies in its band"""
    assert rl.harness.american_dp_oracle(0.05, 0.3, 100.0, 0.0, 1.0, 50) == 0.0, "Zero strike"
    deep_otm = rl.harness.american_dp_oracle(0.05, 0.01, 100.0, 50.0, 1.0, 50)
    assert deep_otm == 0.0, f"Deep out of the money put {deep_otm}"
    fixtures = rl.harness.load_fixtures()
    band = fixtures["american_put"]["band"]
    price = rl.harness.american_dp_oracle(0.05, 0.3, 100.0, 100.0, 1.0, 200)
    assert band[0] <= price <= band[1], f"Price {price} outside {band}"
    european_floor = max(100.0 - 100.0, 0.0)
    assert price > european_floor, "Put must have time value at the money"
    with pytest.raises(rl.common.ProblemError):
        rl.harness.american_dp_oracle(0.05, 0.0, 100.0, 100.0, 1.0, 10)


def test_stopping_oracle_checks_inputs():
    """The oracle needs f = 0 and a small tree"""
    with pytest.raises(rl.common.ProblemError):
        rl.harness.exhaustive_stopping_oracle(rl.problem.scenario("american-put", steps=6))
    with pytest.raises(rl.common.ProblemError):
        rl.harness.exhaustive_stopping_oracle(rl.problem.scenario("binding-obstacle", steps=11))
    prob = rl.problem.scenario("never-binding", steps=6)
    value = rl.harness.exhaustive_stopping_oracle(prob)
    expected = prob.params["c"] + prob.T
    assert math.isclose(value, expected, rel_tol=1e-12), f"c + E[W_T^2] = {value}, expected {expected}"


def test_fixture_constants():
    """Calibrated constants exist for every estimate id"""
    for id in rl.analysis.ESTIMATE_IDS:
        assert rl.harness.estimate_constant(id) > 0, f"No constant for {id}"
    with pytest.raises(rl.common.ConfigError):
        rl.harness.estimate_constant("P9.9")


def test_pinned_american_put_matches_oracle():
    """The packaged put value reproduces under the DP oracle and the shifted solve"""
    value, tol = rl.harness.pinned_value("american_put")
    assert 0 < tol <= 1e-8, f"Tolerance {tol}"
    price = rl.harness.american_dp_oracle(0.05, 0.3, 100.0, 100.0, 1.0, 200)
    assert abs(price - value) <= tol, f"Oracle {price} vs pinned {value}"
    y0 = rl.reflect.solve_shifted(rl.problem.scenario("american-put", steps=200), -0.05).Y0
    assert abs(y0 - value) <= tol, f"Solver {y0} vs pinned {value}"
    with pytest.raises(rl.common.ConfigError):
        rl.harness.pinned_value("american_put", {"american_put": {"value": None}})


def test_calibrated_constants_cover_catalog_with_margin():
    """Each packaged constant is at least twice the recorded ratio and at least 2"""
    fixtures = rl.harness.load_fixtures()
    for id, ratio in fixtures["estimates"]["max_ratios"].items():
        c = rl.harness.estimate_constant(id, fixtures)
        assert c >= 2.0 * max(ratio, 1.0) - 1e-12, f"{id}: constant {c} below margin over {ratio}"
        assert c <= 2.0 * max(ratio, 1.0) * 1.01, f"{id}: constant {c} looser than calibrated {ratio}"


def test_pin_fixture(tmp_path):
    """Pinning writes the value with a note and respects the band"""
    path = str(tmp_path / "fixtures.yaml")
    shutil.copy(rl.harness.FIXTURES_PATH, path)
    rl.harness.pin_fixture(path, "american_put", 9.87, note="test pin")
    data = rl.harness.load_fixtures(path)
    assert data["american_put"]["value"] == 9.87, f"Pinned value {data['american_put']}"
    assert data["american_put"]["note"].startswith("test pin ("), f"Note {data['american_put']['note']}"
    with pytest.raises(rl.common.ConfigError):
        rl.harness.pin_fixture(path, "american_put", 12.0)
    assert os.path.exists(path), "Fixtures file vanished"


def test_convergence_study_refinement():
    """Y0 of the cubic ODE converges with decreasing successive differences"""
    cfg = rl.harness.parse_config({"scenario": "ode-cubic", "refine": [25, 50, 100, 200]})
    report = rl.harness.convergence_study(cfg, run="t")
    assert report.verdicts == {"refine_decreasing": True}, f"Verdicts {report.verdicts}"
    quantities = [r.quantity for r in report.rows]
    assert quantities.count("Y0") == 4 and quantities.count("abs_step_diff") == 3, f"Rows {quantities}"


def test_convergence_study_single_point():
    """A single step count gives rows and no verdict"""
    cfg = rl.harness.parse_config({"scenario": "ode-cubic", "refine": [25]})
    report = rl.harness.convergence_study(cfg)
    assert report.verdicts == {}, f"Verdicts {report.verdicts}"
    assert [r.quantity for r in report.rows] == ["Y0"], "Single point rows"
    with pytest.raises(rl.common.ConfigError):
        rl.harness.convergence_study(rl.harness.parse_config({"scenario": "ode-cubic", "refine": [50, 25]}))


def test_convergence_study_levels():
    """A level sweep adds its verdicts"""
    cfg = rl.harness.parse_config({"scenario": "binding-obstacle", "params": {"kappa": 0.25}, "steps": 12,
                                   "levels": [1, 4, 16, 64]})
    report = rl.harness.convergence_study(cfg)
    assert report.verdicts["monotone"], "Penalized solutions must increase with the level"
    assert report.verdicts["sp_decreasing"], "S distance must decrease"
    assert any(r.quantity == "verdict.sp_decreasing" for r in report.rows), "Verdict rows missing"


def test_calibrate_constants_small():
    """Constants are the margin times the largest ratio, at least the margin"""
    rep = rl.harness.calibrate_constants(scenarios=["martingale", "binding-obstacle"], steps=6, levels=(1, 8))
    assert set(rep.constants) == set(rl.analysis.ESTIMATE_IDS), f"Ids {set(rep.constants)}"
    for id, c in rep.constants.items():
        assert c >= rep.margin * rep.max_ratios[id] and c >= rep.margin, f"{id}: constant {c}"
