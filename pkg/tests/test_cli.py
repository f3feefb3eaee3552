import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dpa import __version__
from dpa._io import read_csv
from dpa.cli import main
from dpa.pld import PrivacyLossDistribution

from conftest import gaussian_delta

FAST = ["--grid-spacing", "1e-3"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0
    assert __version__ in out and '"grid_spacing": 0.0001' in out and "pessimistic" in out


def test_mech_pld_happy_path(capsys):
    code, out, _ = run(capsys, "mech", "pld", "--family", "gaussian", "--sigma", "1", "--sensitivity", "1")
    assert code == 0
    pld = PrivacyLossDistribution.from_json(out)
    assert pld.pessimistic and pld.grid_spacing == 1e-4


@pytest.mark.parametrize("argv", [
    ["mech", "pld", "--family", "gaussian", "--sigma", "1", "--grid-spacing", "-1"],
    ["--grid-spacing", "-1", "mech", "pld", "--family", "gaussian", "--sigma", "1"],
    ["mech", "pld", "--family", "gaussian", "--sigma", "-1"],
    ["mech", "pld", "--family", "gaussian"],
    ["mech", "pld"],
    ["epsilon", "--family", "laplace", "--lambda", "1", "--delta", "2"],
    ["compose", "--family", "laplace", "--lambda", "1", "--k", "2"],
    ["delta", "--pld", "/nonexistent/pld.json", "--eps", "1"],
    ["bogus"],
    [],
])
def test_validation_exit_code(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert out == ""
    assert len(err.strip().splitlines()) == 1


def test_unachievable_delta_is_validation(capsys, tmp_path):
    path = tmp_path / "p.json"
    path.write_text(PrivacyLossDistribution(0.1, 0, [0.5], 0.5).to_json())
    code, _, err = run(capsys, "epsilon", "--pld", str(path), "--delta", "0.1")
    assert code == 2 and "inf" in err


def test_numeric_failure_flags_partial_result(capsys, monkeypatch):
    import dpa.cli as cli
    from dpa.exceptions import NotConverged
    from dpa.optimize import solve_cactus, quadratic_cost

    def stub(*args, **kwargs):
        return solve_cactus(1.0, quadratic_cost(0.25), 6.0, 0.1, max_iter=3)
    monkeypatch.setattr(cli, "solve_cactus", stub)
    code, out, err = run(capsys, "optimize", "cactus", "--budget", "0.25", "--spacing", "0.1")
    assert code == 1
    assert json.loads(out)["converged"] is False
    assert "numeric" in err or "converge" in err


def test_compose_matches_analytic(capsys, tmp_path):
    res = {}
    for rounding in ["pessimistic", "optimistic"]:
        code, out, _ = run(capsys, "compose", "--family", "gaussian", "--sigma", "1", "--k", "100",
                           "--method", "fft", "--eps", "1", "--rounding", rounding, *FAST)
        assert code == 0
        res[rounding] = json.loads(out)
    truth = gaussian_delta(1.0, 10.0)
    assert res["optimistic"]["delta"] <= truth <= res["pessimistic"]["delta"]
    assert res["pessimistic"]["bound"] == "upper" and res["optimistic"]["bound"] == "lower"
    assert set(res["pessimistic"]) == {"epsilon", "delta", "method", "bound"}


def test_compose_methods_order(capsys):
    eps = {}
    for m in ["fft", "rdp", "basic", "clt"]:
        code, out, _ = run(capsys, "compose", "--family", "gaussian", "--sigma", "1", "--k", "10",
                           "--method", m, "--delta", "1e-5", *FAST)
        assert code == 0
        eps[m] = json.loads(out)
    assert eps["fft"]["epsilon"] < eps["rdp"]["epsilon"] < eps["basic"]["epsilon"]
    assert eps["clt"]["bound"] == "estimate"


def test_pipeline_closure(capsys, tmp_path):
    pld_path, mech_path = tmp_path / "pld.json", tmp_path / "mech.json"
    assert main(["mech", "pld", "--family", "laplace", "--lambda", "1", "--out", str(pld_path), *FAST]) == 0
    assert main(["mech", "spec", "--family", "laplace", "--lambda", "1", "--out", str(mech_path)]) == 0
    code, out, _ = run(capsys, "epsilon", "--pld", str(pld_path), "--delta", "1e-12")
    assert code == 0 and json.loads(out)["epsilon"] == pytest.approx(1.0, abs=2e-3)
    code, out, _ = run(capsys, "delta", "--mech", str(mech_path), "--eps", "1", *FAST)
    assert json.loads(out)["delta"] == 0.0
    code, out, _ = run(capsys, "compose", "--pld", str(pld_path), "--k", "3", "--eps", "3")
    assert json.loads(out)["delta"] == 0.0
    # a tradeoff CSV feeds the attack
    curve = tmp_path / "c.csv"
    assert main(["tradeoff", "--pld", str(pld_path), "--out", str(curve)]) == 0
    report = tmp_path / "r.json"
    assert main(["attack", "--mech", str(mech_path), "--claimed", str(curve), "--samples", "20000",
                 "--seed", "3", "--report", str(report)]) == 0
    assert json.loads(report.read_text())["num_violations"] == 0


def test_optimizer_outputs_feed_accounting(capsys, tmp_path):
    noise = tmp_path / "noise.json"
    assert main(["optimize", "cactus", "--budget", "0.25", "--spacing", "0.1", "--out", str(noise)]) == 0
    code, out, _ = run(capsys, "epsilon", "--noise", str(noise), "--delta", "1e-5", *FAST)
    assert code == 0 and json.loads(out)["epsilon"] > 0
    stair = tmp_path / "stair.json"
    assert main(["optimize", "staircase", "--eps", "1", "--out", str(stair)]) == 0
    code, out, _ = run(capsys, "delta", "--mech", str(stair), "--eps", "1", *FAST)
    assert json.loads(out)["delta"] == 0.0


def test_delta_curve_csv(capsys):
    code, out, _ = run(capsys, "delta-curve", "--family", "gaussian", "--sigma", "1", "--eps-max", "2",
                       "--points", "5", *FAST)
    assert code == 0
    assert out.splitlines()[0] == "epsilon,delta,bound_kind"
    cols = read_csv(out)
    assert cols["epsilon"] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert all(np.diff(cols["delta"]) < 0)
    assert set(cols["bound_kind"]) == {"upper"}


def test_tradeoff_csv(capsys):
    code, out, _ = run(capsys, "tradeoff", "--gdp-mu", "1", "--points", "3")
    assert code == 0
    assert out.splitlines() == ["p_fa,p_md_lower", "0.0,1.0", "0.5,0.15865525393145707", "1.0,0.0"]


def test_record_as_csv(capsys):
    code, out, _ = run(capsys, "delta", "--family", "laplace", "--lambda", "1", "--eps", "0.5",
                       "--format", "csv", *FAST)
    assert code == 0 and out.splitlines()[0] == "epsilon,delta,bound"


def test_console_script_is_deterministic(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        subprocess.run([sys.executable, "-m", "dpa.cli", "attack", "--family", "staircase",
                        "--epsilon", "1", "--eta", "0.3", "--samples", "5000", "--seed", "11",
                        "--grid-spacing", "1e-3", "--out", str(path)], check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_sample_count_accepts_float_notation(capsys):
    assert main(["attack", "--family", "laplace", "--lambda", "1", "--samples", "2e4",
                 "--grid-spacing", "1e-3"]) == 0
    assert json.loads(capsys.readouterr().out)["num_samples"] == 20000
    assert main(["attack", "--family", "laplace", "--lambda", "1", "--samples", "2.5e3x"]) == 2
    assert "invalid count" in capsys.readouterr().err
