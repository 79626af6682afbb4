import csv
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from lanpredict import core
from lanpredict.cli import CONFIG_KEYS, CONVERGENCE_COLUMNS, DEFAULTS, RISK_COLUMNS, main
from lanpredict.risk import _run_cached

QUICK = ["--T_grid", "20,40", "--dt", "0.02", "--n_rep", "40", "--seed", "9"]


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def data_lines(text):
    return [ln for ln in text.splitlines() if not ln.startswith("#")]


def parse_csv(text):
    return list(csv.DictReader(io.StringIO("\n".join(data_lines(text)))))


def test_bound_prints_values():
    code, out, _ = run("bound", "--alpha", "1", "--beta", "0.5", "--h", "1")
    assert code == 0
    assert "0.208833" in out and "-0.159046" in out


def test_bound_json_matches_library():
    code, out, _ = run("bound", "--alpha", "2", "--beta", "-1", "--h", "0.5", "--format", "json")
    assert code == 0
    payload = json.loads(out)
    np.testing.assert_allclose(payload["efficiency_bound"], core.efficiency_bound((2, -1), 0.5), rtol=1e-15)
    np.testing.assert_allclose(payload["stationary_cov"], core.stationary_cov((2, -1)), rtol=1e-15)
    assert payload["meta"][0].startswith("lanpredict")


@pytest.mark.parametrize(
    "argv",
    [
        ["bound", "--alpha", "0.5", "--beta", "0.5", "--h", "1"],
        ["bound", "--h", "0"],
        ["bound", "--alpha", "nan"],
        ["risk", "--n_rep", "1"],
        ["risk", "--dt", "-0.1"],
        ["risk", "--T_grid", "0.05"],
        ["simulate", "--T", "-3"],
        ["simulate", "--index", "-1"],
        ["check-lan", "--T_grid", "0.5", "--dt", "0.01"],
        ["frobnicate"],
        ["risk", "--estimator", "bayes"],
    ],
)
def test_usage_errors_exit_one(argv):
    code, out, err = run(*argv)
    assert code == 1
    assert out == ""
    assert "error" in err


def test_domain_message():
    _, _, err = run("bound", "--alpha", "0.5", "--beta", "0.5", "--h", "1")
    assert "alpha > |beta|" in err


def test_config_file_and_override(tmp_path):
    cfg = dict(DEFAULTS, alpha=2.0, beta=1.0)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    _, out, _ = run("bound", "--config", str(path), "--format", "json")
    assert json.loads(out)["alpha"] == 2.0
    _, out, _ = run("bound", "--config", str(path), "--alpha", "3", "--format", "json")
    assert json.loads(out)["alpha"] == 3.0
    path.write_text(json.dumps({"alpha": 1.0, "gamma": 2}))
    assert run("bound", "--config", str(path))[0] == 1
    assert run("bound", "--config", str(tmp_path / "missing.json"))[0] == 1


def test_shipped_default_config_has_exact_keys():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    with open(os.path.join(root, "configs", "default.json")) as fh:
        cfg = json.load(fh)
    assert tuple(sorted(cfg)) == tuple(sorted(CONFIG_KEYS))
    assert cfg["T_grid"] == [25, 50, 100, 200] and cfg["n_rep"] == 1000


def test_simulate_dump_path(tmp_path):
    target = tmp_path / "p.csv"
    code, _, _ = run("simulate", "--T", "2", "--dt", "0.01", "--seed", "4", "--dump-path", str(target))
    assert code == 0
    text = target.read_text()
    assert text.startswith("# lanpredict")
    assert data_lines(text)[0] == "t,x1,x2,dw1,dw2"
    assert len(data_lines(text)) == 1 + 201
    _, again, _ = run("simulate", "--T", "2", "--dt", "0.01", "--seed", "4")
    assert data_lines(again) == data_lines(text)


def test_estimate_fresh_and_supplied(tmp_path):
    code, out, _ = run("estimate", "--T", "50", "--seed", "3")
    assert code == 0
    results = json.loads(out)["results"]
    assert [r["method"] for r in results] == ["newton", "decoupled"]
    for r in results:
        assert set(r) == {"theta_hat", "converged", "iterations", "log_lik", "gradient_norm", "method"}
    target = tmp_path / "p.csv"
    run("simulate", "--T", "50", "--seed", "3", "--dump-path", str(target))
    _, out2, _ = run("estimate", "--path", str(target))
    assert json.loads(out2)["results"] == results
    assert run("estimate", "--path", str(tmp_path / "none.csv"))[0] == 1


def test_risk_csv_schema():
    code, out, _ = run("risk", *QUICK, "--T", "20")
    assert code == 0
    assert data_lines(out)[0] == ",".join(RISK_COLUMNS)
    rows = parse_csv(out)
    assert [r["stat"] for r in rows] == ["t_qer", "t_qep", "t_qer_aux", "t_qep_aux", "mle_var", "bound"]
    bound = [float(rows[-1][k]) for k in ("m11", "m12", "m21", "m22")]
    np.testing.assert_allclose(bound, core.efficiency_bound((1, 0.5), 1).ravel(), rtol=1e-15)


def test_convergence_csv_rows(tmp_path):
    code, _, _ = run("convergence", *QUICK, "--out_dir", str(tmp_path))
    assert code == 0
    text = (tmp_path / "convergence.csv").read_text()
    assert data_lines(text)[0] == ",".join(CONVERGENCE_COLUMNS)
    rows = parse_csv(text)
    assert [float(r["T"]) for r in rows] == [20.0, 40.0]
    assert len(parse_csv((tmp_path / "risks.csv").read_text())) == 12
    refinement = json.loads((tmp_path / "refinement.json").read_text())["refinement"]
    assert refinement["dt_half"] == 0.01
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".tmp-")]


def test_convergence_json():
    code, out, _ = run("convergence", *QUICK, "--format", "json")
    assert code == 0
    payload = json.loads(out)
    assert len(payload["convergence"]) == 2 and len(payload["risks"]) == 12
    assert set(payload["convergence"][0]) == set(CONVERGENCE_COLUMNS)


def test_convergence_rows_independent_of_threads(monkeypatch):
    outs = []
    for n in ("1", "3"):
        monkeypatch.setenv("LANPREDICT_THREADS", n)
        _run_cached.cache_clear()
        code, out, _ = run("convergence", *QUICK)
        assert code == 0
        outs.append(data_lines(out))
    assert outs[0] == outs[1]


def test_flag_rate_exit_two():
    # tiny horizon near the boundary: many clamped decoupled fits
    code, out, _ = run(
        "risk", "--alpha", "3", "--beta", "2.9", "--T_grid", "0.5", "--dt", "0.01", "--n_rep", "100",
        "--estimator", "decoupled", "--s_rule", "identity",
    )
    assert code == 2
    assert int(parse_csv(out)[0]["n_flagged"]) > 0


def test_no_partial_file_on_error(tmp_path):
    code, _, _ = run("convergence", "--T_grid", "0.01", "--out_dir", str(tmp_path))
    assert code == 1
    assert os.listdir(tmp_path) == []


def test_check_lan_reports_each_check():
    code, out, _ = run("check-lan", *QUICK, "--T", "20")
    lines = out.splitlines()
    assert len(lines) == 5
    assert all(ln.startswith(("PASS", "FAIL")) for ln in lines)
    assert code == (0 if all(ln.startswith("PASS") for ln in lines) else 3)


def test_selftest_passes():
    code, out, _ = run("selftest")
    assert code == 0
    assert out and "FAIL" not in out


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "lanpredict", "bound", "--format", "json"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["h"] == 1.0
