import math
import logging

import numpy as np

import rbsde_lab as rl
from tests.conftest_utils import brute_force_expectation


def _run(args, out):
    code = rl.harness.main(args + ["--out", out])
    df = rl.harness.read_csv(out) if code == 0 else None
    return code, df


def _value(df, quantity):
    rows = df[df["quantity"] == quantity]
    assert len(rows) > 0, f"No {quantity} row in {list(df['quantity'])}"
    return float(rows["value"].iloc[0])


def test_solve_martingale(tmp_csv):
    """Solving W^2 + T - t gives Y0 = T"""
    code, df = _run(["solve", "--scenario", "martingale", "--steps", "50"], tmp_csv)
    assert code == 0, f"Exit code {code}"
    assert math.isclose(_value(df, "Y0"), 1.0, abs_tol=1e-12), f"Y0 {_value(df, 'Y0')}"
    assert set(df["run_id"]) and len(set(df["run_id"])) == 1, "One run id per run"


def test_invalid_input_exit_codes(tmp_csv):
    """Unknown subcommands, keys and malformed params exit with 2"""
    assert rl.harness.main(["frobnicate"]) == 2, "Unknown subcommand"
    assert rl.harness.main(["solve", "--scenario", "nope", "--out", tmp_csv]) == 2, "Unknown scenario"
    assert rl.harness.main(["solve", "--scenario", "martingale", "--param", "kappa=1", "--out", tmp_csv]) == 2, \
        "Unknown scenario parameter"
    assert rl.harness.main(["solve", "--scenario", "martingale", "--param", "noequals", "--out", tmp_csv]) == 2, \
        "Malformed --param"
    assert rl.harness.main(["sweep", "--scenario", "martingale", "--out", tmp_csv]) == 2, "Sweep with nothing to do"


def test_config_file_with_unknown_key(tmp_path, tmp_csv):
    """A config file with an unknown key is rejected"""
    path = tmp_path / "run.yaml"
    path.write_text("scenario: martingale\nsteps: 10\nwhatever: 1\n")
    assert rl.harness.main(["solve", "--config", str(path), "--out", tmp_csv]) == 2, "Unknown config key"
    path.write_text("scenario: martingale\nsteps: 10\n")
    code, df = _run(["solve", "--config", str(path), "--steps", "12"], tmp_csv)
    assert code == 0 and set(df["N"]) == {12}, "Flags override the config file"


def test_picard_divergence_exits_3(tmp_csv):
    """A Picard run that cannot converge in one sweep is a solver failure"""
    code = rl.harness.main(["picard", "--scenario", "monotone-nonlipschitz", "--steps", "8", "--max-sweeps", "1",
                            "--out", tmp_csv])
    assert code == 3, f"Exit code {code}"


def test_picard_rows(tmp_csv):
    """A converging Picard run reports Y0 and per-sweep ratios"""
    code, df = _run(["picard", "--scenario", "monotone-nonlipschitz", "--steps", "12", "--stop-tol", "1e-9"],
                    tmp_csv)
    assert code == 0, f"Exit code {code}"
    ratios = df[df["quantity"] == "ratio"]["value"]
    assert len(ratios) > 0 and (ratios <= 0.6).all(), f"Ratios {list(ratios)}"


def test_estimates(tmp_csv):
    """Estimate rows carry lhs, rhs and ratio for the requested ids"""
    code, df = _run(["estimates", "--scenario", "binding-obstacle", "--steps", "8", "--ids", "P3.1,P5.1i"], tmp_csv)
    assert code == 0, f"Exit code {code}"
    quantities = set(df["quantity"])
    for id in ("P3.1", "P5.1i"):
        assert any(q.startswith(id) for q in quantities), f"No rows for {id}: {quantities}"
    assert not any(q.startswith("P2.1") for q in quantities), "Unrequested estimate emitted"


def test_sweep_levels(tmp_csv):
    """A level sweep writes a row block per level and the verdicts"""
    code, df = _run(["sweep", "--scenario", "binding-obstacle", "--param", "kappa=0.25", "--steps", "12",
                     "--levels", "1,4,16"], tmp_csv)
    assert code == 0, f"Exit code {code}"
    levels = set(df["level"].dropna())
    assert levels == {1.0, 4.0, 16.0}, f"Levels {levels}"
    assert "verdict.monotone" in set(df["quantity"]), "Monotonicity verdict missing"


def test_oracle_american(tmp_csv):
    """The shifted solve reproduces the dynamic-programming put"""
    code, df = _run(["oracle", "--kind", "american", "--steps", "60"], tmp_csv)
    assert code == 0, f"Exit code {code}"
    assert _value(df, "abs_diff") <= 1e-10, f"American put difference {_value(df, 'abs_diff')}"


def test_oracle_stopping(tmp_csv):
    """The projected solve reproduces the exhaustive stopping value"""
    code, df = _run(["oracle", "--kind", "stopping", "--scenario", "binding-obstacle", "--steps", "8"], tmp_csv)
    assert code == 0, f"Exit code {code}"
    assert _value(df, "abs_diff") <= 1e-12, f"Stopping difference {_value(df, 'abs_diff')}"
    assert rl.harness.main(["oracle", "--kind", "american", "--scenario", "martingale", "--out", tmp_csv]) == 2, \
        "American oracle on another scenario"


def test_compare(tmp_csv):
    """An offset pair compares cleanly"""
    code, df = _run(["compare", "--scenario", "american-put", "--steps", "30", "--xi-offset", "0.5",
                     "--L-offset", "0.2"], tmp_csv)
    assert code == 0, f"Exit code {code}"
    assert _value(df, "Y_le.max_violation") <= 1e-12, "Dominating data must dominate"


def test_tanaka(tmp_csv):
    """Each path gets its identity residual and nonnegative increments"""
    code, df = _run(["tanaka", "--scenario", "martingale", "--steps", "40", "--paths", "5"], tmp_csv)
    assert code == 0, f"Exit code {code}"
    residuals = df[df["quantity"] == "identity_residual"]["value"]
    assert len(residuals) == 5 and (residuals <= 1e-12).all(), f"Residuals {list(residuals)}"
    assert (df[df["quantity"] == "min_increment"]["value"] >= -1e-12).all(), "Negative local time increment"


def test_sampled_runs_are_deterministic(tmp_path):
    """The same seed gives byte-identical CSV files"""
    outs = []
    for k in range(2):
        out = str(tmp_path / f"run{k}.csv")
        code = rl.harness.main(["solve", "--scenario", "binding-obstacle", "--steps", "30", "--mode", "sampled",
                                "--count", "2000", "--seed", "11", "--out", out])
        assert code == 0, f"Exit code {code}"
        with open(out, "rb") as f:
            outs.append(f.read())
    assert outs[0] == outs[1], "Sampled runs with one seed differ"
    assert b"sampled" in outs[0], "Sampled method tag missing"


def test_solve_small_lattice_enumerates_norms(tmp_csv):
    """At N within the enumeration cap the S^p row comes from enumerated paths"""
    code, df = _run(["solve", "--scenario", "martingale", "--steps", "10", "--beta-list", "0.5"], tmp_csv)
    assert code == 0, f"Exit code {code}"
    row = df[df["quantity"] == "S(Y)"]
    assert list(row["method"]) == [rl.lattice.METHOD_ENUMERATION], f"S(Y) method {list(row['method'])}"
    lat = rl.lattice.build_lattice(1.0, 10)
    expected = brute_force_expectation(
        lat, lambda w, nodes: np.max(np.abs(w ** 2 + 1.0 - lat.h * np.arange(11))) ** 2) ** 0.5
    assert math.isclose(_value(df, "S(Y)"), expected, rel_tol=1e-12), f"S(Y) {_value(df, 'S(Y)')} vs {expected}"


def test_unexpected_error_exits_1(tmp_csv, monkeypatch, caplog):
    """Exceptions outside the lab's error families are logged and exit with 1"""
    def broken(args, cfg, run):
        raise KeyError("missing")

    monkeypatch.setitem(rl.harness.cli.RUNNERS, "solve", broken)
    with caplog.at_level(logging.ERROR):
        code = rl.harness.main(["solve", "--scenario", "martingale", "--steps", "4", "--out", tmp_csv])
    assert code == 1, f"Exit code {code}"
    assert "Internal error in solve" in caplog.text, f"Log {caplog.text}"
