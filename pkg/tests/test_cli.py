import io
import json
import subprocess
import sys

import numpy as np
import pytest

from l2kl.asymptotics import kl_influence, kl_jh_mh, kl_xi, normal_kl_variances
from l2kl.cli import main, parse_csv, parse_grid
from l2kl.errors import InvalidInputError


def run(argv):
    out = io.StringIO()
    code = main(argv, out)
    return code, out.getvalue()


@pytest.fixture
def three_points(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("0\n1\n-1\n")
    return str(p)


def test_fit_ml_closed_form(three_points):
    code, text = run(["fit", three_points, "--model", "normal", "--method", "ml"])
    rep = json.loads(text)
    assert code == 0 and rep["schema"] == 1
    assert rep["estimate"]["mu"] == 0 and abs(rep["estimate"]["sigma"] - np.sqrt(2 / 3)) < 1e-6


def test_fit_l2_symmetric_data(three_points):
    code, text = run(["fit", three_points, "--method", "l2", "--precision", "12"])
    rep = json.loads(text)
    assert code == 0 and rep["converged"] and abs(rep["estimate"]["mu"]) < 1e-10


def test_fit_csv_output_round_trips(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("value\n" + "\n".join(str(v) for v in np.random.default_rng(0).normal(size=50)))
    code, text = run(["fit", str(p), "--method", "kl", "--format", "csv"])
    header, arr = parse_csv(text)
    assert code == 0
    assert header == ["mu", "sigma", "se_mu", "se_sigma", "n", "iterations", "converged"]
    assert arr.shape == (1, 7) and arr[0, 4] == 50 and arr[0, 6] == 1


def test_fit_mvn(tmp_path):
    x = np.random.default_rng(1).multivariate_normal([0, 1], [[1, 0.3], [0.3, 2]], size=300)
    p = tmp_path / "m.csv"
    p.write_text("a,b\n" + "\n".join(f"{a},{b}" for a, b in x))
    code, text = run(["fit", str(p), "--model", "mvn", "--method", "kl"])
    rep = json.loads(text)
    assert code == 0 and len(rep["estimate"]) == 5 and len(rep["sigma_matrix"]) == 2


@pytest.mark.parametrize("content,needle", [("", "at least one row"), ("1\nabc\n", "line 2"),
                                            ("1,2\n3\n", "line 2")])
def test_bad_input_exit_one(tmp_path, capsys, content, needle):
    p = tmp_path / "bad.csv"
    p.write_text(content)
    code, _ = run(["fit", str(p)])
    assert code == 1 and needle in capsys.readouterr().err


def test_missing_file_and_bad_flag_exit_one(capsys):
    assert run(["fit", "/nonexistent/file.csv"])[0] == 1
    assert run(["fit", "--method", "bogus"])[0] == 1
    assert run(["asymptotics", "--family", "kl-k"])[0] == 1


def test_degenerate_data_is_input_error(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("1\n1\n1\n1\n")
    assert run(["fit", str(p), "--method", "l2"])[0] == 1


def test_influence_l2_symmetry():
    code, text = run(["influence", "--method", "l2", "--theta", "0,1", "--grid=-2:2:1", "--format", "csv"])
    header, arr = parse_csv(text)
    assert code == 0 and header == ["x", "I_mu", "I_sigma"]
    np.testing.assert_allclose(arr[:, 0], [-2, -1, 0, 1, 2])
    assert abs(arr[2, 1]) < 1e-12


def test_influence_kl_limit():
    theta = np.array([0.0, 1.0])
    Jh, _ = kl_jh_mh(theta, 0.0, 2.0)
    limit = -np.linalg.solve(Jh, kl_xi(theta, 0.0, 2.0))
    code, text = run(["influence", "--method", "kl", "--k", "2", "--theta", "0,1", "--grid=-50:50:100",
                      "--format", "csv", "--precision", "12"])
    _, arr = parse_csv(text)
    assert code == 0
    assert np.max(np.abs(arr[:, 1:] - limit)) < 1e-3
    # at |x| = 6 the kernel term has not died out yet
    assert np.max(np.abs(kl_influence(6.0, theta, 0.0, 2.0) - limit)) > 1e-3


def test_influence_grid_validation():
    assert run(["influence", "--method", "l2", "--theta", "0,1", "--grid", "0:1:0"])[0] == 1
    with pytest.raises(InvalidInputError):
        parse_grid("1:0:0.5")
    np.testing.assert_allclose(parse_grid("0:1:0.25"), [0, 0.25, 0.5, 0.75, 1])


def test_asymptotics_examples():
    code, text = run(["asymptotics", "--family", "kl-k", "--k", "2", "--sigma", "1"])
    rep = json.loads(text)
    assert code == 0 and rep["self_check"]
    assert abs(rep["var_mu"] - 1.063) < 5e-4 and abs(rep["var_sigma"] - 0.563) < 5e-4
    _, l2 = run(["asymptotics", "--family", "l2-delta", "--delta", "0"])
    _, k1 = run(["asymptotics", "--family", "kl-k", "--k", "1"])
    l2, k1 = json.loads(l2), json.loads(k1)
    assert (l2["var_mu"], l2["var_sigma"]) == (k1["var_mu"], k1["var_sigma"])
    assert abs(l2["var_mu"] - 1.5396) < 5e-4 and abs(l2["var_sigma"] - 0.9241) < 5e-4


def test_simulate_theoretical_column():
    code, text = run(["simulate", "--n", "50", "--reps", "3", "--estimator", "kl", "--k", "2", "--seed", "1",
                      "--precision", "15"])
    rep = json.loads(text)
    assert code == 0
    np.testing.assert_allclose(rep["estimators"][0]["theoretical_n_var"], normal_kl_variances(1.0, 2.0),
                               rtol=1e-14)


def test_simulate_contaminated_ordering():
    code, text = run(["simulate", "--n", "500", "--reps", "20", "--seed", "3", "--epsilon", "0.05",
                      "--contaminant-point", "10", "--estimator", "ml", "--estimator", "kl"])
    est = {e["estimator"]: e for e in json.loads(text)["estimators"]}
    assert code == 0 and est["ml"]["mean"][1] > est["kl(2)"]["mean"][1]


def test_simulate_deterministic_csv():
    argv = ["simulate", "--n", "60", "--reps", "6", "--seed", "8", "--estimator", "l2", "--estimator",
            "l2-delta:0.5", "--format", "csv"]
    a, b = run(argv), run(argv)
    assert a == b
    header, arr = parse_csv(a[1])
    assert arr.shape == (4, 8)


def test_simulate_invalid_scenario():
    assert run(["simulate", "--n", "5"])[0] == 1
    assert run(["simulate", "--epsilon", "0.1"])[0] == 1
    assert run(["simulate", "--estimator", "median"])[0] == 1


def test_module_entry_point(three_points):
    proc = subprocess.run([sys.executable, "-m", "l2kl", "fit", three_points, "--method", "ml"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["method"] == "ml"
