import json

import numpy as np
import pytest

from conftest import CHAIN_S
from entcov.cli import EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, load_result, read_matrix, run
from entcov.specfun import LinkFunction, link_gradient

CHAIN3 = {"type": "graph", "m": 3, "edges": [[1, 2], [2, 3]]}
BOUNDARY_S = np.array([[1.0, 0.75, 0.5], [0.75, 1.0, 0.75], [0.5, 0.75, 1.0]])


@pytest.fixture
def files(tmp_path):
    def write_csv(name, a):
        path = tmp_path / name
        np.savetxt(path, np.asarray(a), delimiter=",", fmt="%.17g")
        return str(path)

    def write_json(name, obj):
        path = tmp_path / name
        path.write_text(json.dumps(obj))
        return str(path)

    return tmp_path, write_csv, write_json


def _fit(files, link, s, spec=CHAIN3, extra=()):
    tmp, csv, js = files
    out = tmp / "out.json"
    code = run(["fit", "--link", link, "--constraint", js("spec.json", spec), "--input", csv("s.csv", s), "-o", str(out), *extra])
    return code, (json.loads(out.read_text()) if out.exists() else None)


def test_fit_chain3(files):
    code, out = _fit(files, "logdet", CHAIN_S)
    assert code == EXIT_OK
    assert out["status"] == "Converged"
    assert out["sigma_hat"][0][2] == pytest.approx(0.75, abs=1e-6)
    assert out["kkt"]["primal_feas"] <= 1e-8 and out["kkt"]["dual_feas"] <= 1e-8
    assert len(out["theta_hat"]) == 5
    assert out["config"]["link"] == "logdet" and out["config"]["resolved_solver"] == "dual-pgd"


@pytest.mark.parametrize("solver", ["dual-pgd", "primal-pgd", "bregman-proj"])
def test_fit_solvers(files, solver):
    code, out = _fit(files, "vonneumann", CHAIN_S, extra=["--solver", solver])
    assert code == EXIT_OK
    assert out["sigma_hat"][0][2] == pytest.approx(0.4298187, abs=1e-6)


def test_fit_boundary_divergence(files):
    code, out = _fit(files, "power:1", BOUNDARY_S)
    assert code == EXIT_NOT_CONVERGED
    assert out["status"] == "BoundaryDivergence"


def test_fit_max_iter_exit_code(files):
    code, out = _fit(files, "logdet", CHAIN_S, extra=["--max-iter", "1"])
    assert code == EXIT_NOT_CONVERGED and out["status"] == "MaxIter"


def test_round_trip_bit_exact(files):
    code, out = _fit(files, "shifted:0.3", CHAIN_S)
    tmp = files[0]
    parsed = load_result(tmp / "out.json")
    again = load_result(out)
    assert np.array_equal(parsed["sigma_hat"].array, np.array(out["sigma_hat"]))
    assert np.array_equal(parsed["l_hat"].array, again["l_hat"].array)


def test_deterministic(files):
    tmp = files[0]
    _fit(files, "power:-2", CHAIN_S)
    first = (tmp / "out.json").read_text()
    _fit(files, "power:-2", CHAIN_S)
    assert (tmp / "out.json").read_text() == first


def test_corr_identity(tmp_path):
    out = tmp_path / "c.json"
    assert run(["corr", "--link", "vonneumann", "--offdiag", "0,0,0", "--m", "3", "-o", str(out)]) == EXIT_OK
    assert np.allclose(load_result(out)["sigma_hat"].array, np.eye(3), atol=1e-12)


def test_corr_infers_size(tmp_path):
    out = tmp_path / "c.json"
    assert run(["corr", "--link", "logdet", "--offdiag", "0.2,-0.1,0.3,0.0,0.1,0.4", "-o", str(out)]) == EXIT_OK
    r = load_result(out)["sigma_hat"]
    assert r.m == 4 and np.allclose(np.diag(r.array), 1.0, atol=1e-8)


def test_complete(files):
    tmp, csv, js = files
    s = CHAIN_S.copy()
    s[0, 2] = s[2, 0] = np.nan
    out = tmp / "c.json"
    code = run(["complete", "--constraint", js("g.json", CHAIN3), "--input", csv("s.csv", s), "-o", str(out)])
    assert code == EXIT_OK
    assert load_result(out)["sigma_hat"][0, 2] == pytest.approx(0.75, abs=1e-6)


def test_mixed_diagonal(files):
    tmp, csv, js = files
    m = np.array([[1.0, 2 / 3], [2 / 3, 1.0]])
    out = tmp / "m.json"
    assert run(["mixed", "--link", "logdet", "--input", csv("m.csv", m), "-o", str(out)]) == EXIT_OK
    assert load_result(out)["sigma_hat"][0, 1] == pytest.approx(0.5, abs=1e-8)


def test_mixed_partition_file(files):
    tmp, csv, js = files
    m = np.array([[2.0, 0.1], [0.1, -0.5]])
    part = js("p.json", {"A": [[1, 1]]})
    out = tmp / "m.json"
    assert run(["mixed", "--link", "vonneumann", "--input", csv("m.csv", m), "--partition", part, "-o", str(out)]) == EXIT_OK
    sigma = load_result(out)["sigma_hat"]
    L = link_gradient(LinkFunction.von_neumann(), sigma).array
    assert sigma[0, 0] == pytest.approx(2.0, abs=1e-8)
    assert L[0, 1] == pytest.approx(0.1, abs=1e-6) and L[1, 1] == pytest.approx(-0.5, abs=1e-6)


def test_simulate(files):
    tmp, csv, js = files
    out1, out2 = tmp / "a.json", tmp / "b.json"
    args = ["simulate", "--input", csv("s.csv", np.eye(2)), "--n", "50", "--seed", "9"]
    assert run([*args, "-o", str(out1)]) == EXIT_OK
    assert run([*args, "-o", str(out2)]) == EXIT_OK
    a, b = json.loads(out1.read_text()), json.loads(out2.read_text())
    assert a["s_n"] == b["s_n"]
    assert np.array(a["s_n"]).shape == (2, 2)


def test_clt_check(files):
    tmp, csv, js = files
    spec = {"type": "basis", "generators": [[[1, 0], [0, 1]]]}
    out = tmp / "clt.json"
    code = run(["clt-check", "--link", "power:1", "--constraint", js("b.json", spec), "--input", csv("s.csv", np.eye(2)),
                "--n", "500", "--reps", "30", "--seed", "1", "-o", str(out)])
    assert code == EXIT_OK
    data = json.loads(out.read_text())
    assert data["reps"] == 30 and data["failures"] == 0 and len(data["mean"]) == 1


def test_stdout_output(files, capsys):
    tmp, csv, js = files
    code = run(["fit", "--constraint", js("spec.json", CHAIN3), "--input", csv("s.csv", CHAIN_S)])
    assert code == EXIT_OK
    assert json.loads(capsys.readouterr().out)["status"] == "Converged"


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["fit", "--input", "x.csv"],
        ["corr", "--offdiag", "0,0"],
        ["corr", "--offdiag", "a,b,c"],
        ["corr", "--link", "power:0", "--offdiag", "0,0,0"],
        ["frobnicate"],
    ],
)
def test_input_errors(argv, capsys):
    assert run(argv) == EXIT_INPUT
    assert capsys.readouterr().err.strip()


def test_input_file_errors(files):
    tmp, csv, js = files
    spec = js("spec.json", CHAIN3)
    assert _fit(files, "logdet", np.array([[1.0, 0.2, 0.0], [0.3, 1.0, 0.0], [0.0, 0.0, 1.0]]))[0] == EXIT_INPUT
    assert _fit(files, "logdet", np.eye(2))[0] == EXIT_INPUT
    assert _fit(files, "bogus", CHAIN_S)[0] == EXIT_INPUT
    assert _fit(files, "logdet", CHAIN_S, spec={"type": "nothing"})[0] == EXIT_INPUT
    assert run(["fit", "--constraint", spec, "--input", str(tmp / "missing.csv")]) == EXIT_INPUT
    assert _fit(files, "logdet", -np.eye(3))[0] == EXIT_INPUT


def test_read_matrix_nan(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text("1,nan\nnan,1\n")
    assert np.isnan(read_matrix(p, allow_nan=True)[0, 1])
    p.write_text("1,nan\n0,1\n")
    with pytest.raises(Exception):
        read_matrix(p, allow_nan=True)
