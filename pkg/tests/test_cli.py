import csv
import glob
import json

import pytest

from plqopt import cli

ABS = "problems/abs_square.yaml"


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_solve_ok(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run("solve", ABS, "--json", out) == 0
    rep = json.loads(out.read_text())
    assert rep["status"] == "stationary" and rep["residual"] <= 1e-6
    assert abs(abs(rep["x"][0]) - 1) < 1e-6
    assert "abs-square-minus-one" in capsys.readouterr().out


def test_deterministic_json(tmp_path):
    docs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        assert run("solve", "problems/cvar.yaml", "--json", out) == 0
        doc = json.loads(out.read_text())
        doc.pop("wall_time")
        docs.append(json.dumps(doc, sort_keys=True))
    assert docs[0] == docs[1]


def test_trace_csv(tmp_path):
    out = tmp_path / "t.csv"
    assert run("solve", ABS, "--trace", out) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["iter", "phi", "lambda", "step_norm", "residual", "backtracks"]
    phis = [float(r[1]) for r in rows[1:]]
    assert all(b <= a + 1e-12 for a, b in zip(phis, phis[1:]))


@pytest.mark.parametrize("path", sorted(glob.glob("problems/*.yaml")))
def test_shipped_problems_solve(path, tmp_path):
    assert run("solve", path, "--json", tmp_path / "r.json") == 0


def test_batch_jobs(tmp_path):
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    assert run("solve", "problems/tilt_pair.yaml", ABS, "--jobs", 2, "--json", out1) == 0
    assert run("solve", "problems/tilt_pair.yaml", ABS, "--json", out2) == 0
    a, b = json.loads(out1.read_text()), json.loads(out2.read_text())
    assert len(a["reports"]) == 3
    for r, s in zip(a["reports"], b["reports"]):
        r.pop("wall_time"), s.pop("wall_time")
        assert r == s


class TestExitCodes:
    def test_missing_file(self, capsys):
        assert run("solve", "nope.yaml") == 1
        assert "nope.yaml" in capsys.readouterr().err

    def test_bad_key(self, tmp_path, capsys):
        f = tmp_path / "bad.yaml"
        f.write_text("X: {type: free, dim: 1, size: 2}\n")
        assert run("solve", f) == 1
        assert "bad.yaml:1:" in capsys.readouterr().err

    def test_asymmetric_Q(self, tmp_path, capsys):
        f = tmp_path / "q.yaml"
        f.write_text("X: {type: free, dim: 1}\nY: {type: free, dim: 2}\nQ: [[1, 2], [0, 1]]\n"
                     "G: {type: affine, A: [[1], [0]], b: [0, 0]}\n")
        assert run("solve", f) == 1
        err = capsys.readouterr().err
        assert "not symmetric" in err and "q.yaml:3:" in err

    def test_not_converged(self):
        assert run("solve", ABS, "--max-iter", 1) == 2

    def test_bad_argument(self):
        assert run("solve", ABS, "--tol", -1) == 1
        assert run("frobnicate") == 1

    def test_unsupported_check(self, capsys):
        assert run("check", "problems/phase_retrieval.yaml", "--what", "tilt") == 3
        assert "unsupported" in capsys.readouterr().out


@pytest.mark.parametrize("what", ["subgradient", "duality"])
def test_check_tables(what, capsys):
    assert run("check", ABS, "problems/cvar.yaml", "--what", what) == 0
    out = capsys.readouterr().out
    assert out.count("== ") == 2 and "FAIL" not in out
    assert "max_error" in out


def test_check_tilt(capsys):
    assert run("check", "problems/tilt_pair.yaml", "--what", "tilt") == 0
    out = capsys.readouterr().out
    assert "stable (oracle stable)" in out and "unstable (oracle unstable)" in out


def test_methods(tmp_path):
    out = tmp_path / "r.json"
    assert run("solve", "problems/circle_penalty.yaml", "--method", "approx", "--json", out) == 0
    assert "stages" in json.loads(out.read_text())
    assert run("solve", "problems/equality_alm.yaml", "--json", out) == 0
    assert json.loads(out.read_text())["method"] == "alm"
