import json
import subprocess
import sys

import pytest

from dopt.cli import main
from dopt.instance import ModelSpec
from dopt.reference import brute_force_optimum


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_local_search_echoes_shape(capsys):
    code, out, _ = run(["local-search", "--model", "quadratic", "--factors", "3", "--levels", "3",
                        "--budget", "10", "--threads", "1"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["model"]["m"] == 10 and rep["model"]["n"] == 27
    assert rep["design"]["budget"] == 10
    assert sum(e["multiplicity"] for e in rep["design"]["support"]) == 10


def test_infeasible_budget(capsys):
    code, _, err = run(["local-search", "--budget", "1", "--model", "linear", "--factors", "3"], capsys)
    assert code == 3
    assert "infeasible" in err


def test_seeded_reports_identical(capsys):
    argv = ["local-search", "--model", "linear", "--factors", "6", "--budget", "14", "--seed", "7",
            "--restarts", "2", "--threads", "1"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b


@pytest.mark.parametrize("argv", [
    ["local-search", "--model", "cubic", "--factors", "2", "--budget", "4"],
    ["local-search", "--model", "linear", "--factors", "0", "--budget", "4"],
    ["local-search", "--model", "quadratic", "--factors", "2", "--levels", "2", "--budget", "8"],
    ["bound", "--model", "linear", "--budget", "4"],
    ["bound", "--instance", "kind=linear factors=2", "--budget", "4"],
])
def test_bad_input_exit_2(argv, capsys):
    code, _, _ = run(argv, capsys)
    assert code == 2


def test_bound_and_verify_round_trip(tmp_path, capsys):
    out = tmp_path / "bound.json"
    code, _, _ = run(["bound", "--model", "quadratic", "--factors", "2", "--budget", "7", "--threads", "1",
                      "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["certificate"]["scope"] == "full"
    assert rep["capped"] is False
    code, text, _ = run(["verify", "--certificate", str(out)], capsys)
    assert code == 0 and text.startswith("ok")


def test_bound_dominates_local_search(capsys):
    base = ["--model", "linear", "--factors", "3", "--budget", "6", "--threads", "1"]
    _, ls, _ = run(["local-search", *base], capsys)
    _, bd, _ = run(["bound", *base], capsys)
    assert json.loads(bd)["bound"] >= json.loads(ls)["ldet"] - 1e-9


def test_zero_rounds_certificate_still_valid(tmp_path, capsys):
    out = tmp_path / "b.json"
    code, _, _ = run(["bound", "--model", "quadratic", "--factors", "3", "--budget", "12", "--rounds", "0",
                      "--threads", "1", "--out", str(out)], capsys)
    assert code == 0
    assert json.loads(out.read_text())["capped"] is True
    code, _, _ = run(["verify", "--certificate", str(out)], capsys)
    assert code == 0


def test_corrupted_certificate_names_row(tmp_path, capsys):
    out = tmp_path / "b.json"
    run(["bound", "--model", "linear", "--factors", "3", "--budget", "6", "--threads", "1", "--out", str(out)], capsys)
    data = json.loads(out.read_text())
    data["certificate"]["tau"] *= 0.9
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    code, text, _ = run(["verify", "--certificate", str(bad)], capsys)
    assert code == 1
    assert "FAIL" in text and "row 0 [0, 0, 0]" in text


def test_verify_design_file(tmp_path, capsys):
    out = tmp_path / "ls.json"
    run(["local-search", "--model", "linear", "--factors", "3", "--budget", "7", "--threads", "1",
         "--out", str(out)], capsys)
    code, _, _ = run(["verify", "--design", str(out)], capsys)
    assert code == 0
    data = json.loads(out.read_text())
    data["design"]["ldet"] += 0.5
    out.write_text(json.dumps(data))
    code, text, _ = run(["verify", "--design", str(out)], capsys)
    assert code == 1 and "stated ldet" in text


def test_solve_matches_brute_force(capsys):
    code, out, _ = run(["solve", "--model", "linear", "--factors", "2", "--budget", "4", "--threads", "1"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["proof"]["final_gap"] <= 1e-6
    _, best = brute_force_optimum(ModelSpec("linear", 2, 2), 4)
    assert abs(rep["ldet"] - best) <= 1e-9


def test_solve_node_cap_unproven(capsys):
    code, out, _ = run(["solve", "--model", "quadratic", "--factors", "2", "--budget", "6", "--node-cap", "1",
                        "--threads", "1"], capsys)
    assert code == 4
    rep = json.loads(out)
    assert rep["proof"]["proven"] is False
    assert rep["design"]["support"]


def test_solve_budget_equal_m(capsys):
    code, _, _ = run(["solve", "--model", "linear", "--factors", "3", "--budget", "4", "--threads", "1"], capsys)
    assert code == 0


def test_verify_default_suite(capsys):
    code, text, _ = run(["verify", "--threads", "1"], capsys)
    assert code == 0
    assert "FAIL" not in text


def test_verify_capacity(capsys):
    code, _, err = run(["verify", "--instance", "kind=linear factors=20 levels=2"], capsys)
    assert code == 2
    assert "capacity" in err


def test_threads_env_default(monkeypatch):
    from dopt.cli import default_threads
    monkeypatch.setenv("DOPT_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.delenv("DOPT_THREADS")
    assert default_threads() >= 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dopt", "local-search", "--model", "linear", "--factors", "2",
                           "--budget", "3"], capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["model"]["m"] == 3
