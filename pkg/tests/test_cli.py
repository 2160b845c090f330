import csv
import math
import subprocess
import sys

import pytest

from smoothppl.cli import main

from conftest import CORPUS_DIR


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def lines(text):
    return dict(ln.split(": ", 1) for ln in text.strip().splitlines())


@pytest.fixture
def example1(tmp_path):
    f = tmp_path / "ex1.ppl"
    f.write_text("(program (params (theta real))\n"
                 "  (body (app (lam z (add (mul -0.5 (mul theta theta)) (if z 0 1)))\n"
                 "             (transform normal (lam s (add s theta))))))\n")
    return f


class TestTypecheck:
    def test_basic(self, capsys):
        code, out, _ = run(capsys, "typecheck", "--system", "basic", CORPUS_DIR / "mprime.ppl")
        assert code == 0
        assert lines(out)["trace"] == "[normal, exponential, exponential]"

    def test_rejected(self, capsys):
        code, out, _ = run(capsys, "typecheck", "--system", "poly", CORPUS_DIR / "cauchy.ppl")
        assert code == 1
        assert out.startswith("rejected by poly: rule ")

    def test_unif_rule_and_path(self, capsys):
        code, out, _ = run(capsys, "typecheck", "--system", "unif", CORPUS_DIR / "nonconst_guard.ppl")
        assert code == 1
        assert " at " in out and "guard" in out

    def test_parse_error(self, capsys, tmp_path):
        f = tmp_path / "bad.ppl"
        f.write_text("(program (params) (body (add 1))")
        code, _, err = run(capsys, "typecheck", f)
        assert code == 1 and err.startswith("error: ")

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "typecheck", tmp_path / "nope.ppl")
        assert code == 1 and "cannot read" in err


class TestEval:
    def test_measurable(self, capsys, example1):
        code, out, _ = run(capsys, "eval", example1, "--theta", "0.5", "--trace", "-0.6")
        assert code == 0 and lines(out)["value"] == "-0.125"

    def test_smoothed_and_weights(self, capsys, example1):
        code, out, _ = run(capsys, "eval", example1, "--theta", "0", "--trace", "0", "--eta", "0.2",
                           "--weights")
        d = lines(out)
        assert d["value"] == "0.5"
        assert float(d["weight"]) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
        assert float(d["log_weight"]) == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-15)

    def test_seventeen_digits(self, capsys, tmp_path):
        f = tmp_path / "third.ppl"
        f.write_text("(program (params) (body (inv 3)))")
        _, out, _ = run(capsys, "eval", f)
        assert lines(out)["value"] == "0.33333333333333331"

    def test_trace_mismatch(self, capsys, example1):
        code, _, err = run(capsys, "eval", example1, "--theta", "0", "--trace", "")
        assert code == 1 and "trace length mismatch" in err


class TestGrad:
    def test_check(self, capsys, example1):
        code, out, _ = run(capsys, "grad", example1, "--theta", "0.2", "--trace", "0.3", "--eta", "0.1",
                           "--check", "1e-5")
        d = lines(out)
        assert code == 0
        g = float(d["gradient"].strip("[]"))
        z = 0.5 / 0.1
        s = 1 / (1 + math.exp(-z))
        assert g == pytest.approx(-0.2 + s * (1 - s) / 0.1, rel=1e-12)
        assert float(d["max_rel_deviation"]) < 1e-6

    def test_measurable(self, capsys, example1):
        _, out, _ = run(capsys, "grad", example1, "--theta", "0.2", "--trace", "0.3")
        assert lines(out)["gradient"] == "[-0.20000000000000001]"


class TestSmooth:
    def test_round_trip(self, capsys, example1, tmp_path):
        out_file = tmp_path / "ex1.smooth.ppl"
        assert run(capsys, "smooth", example1, "-o", out_file)[0] == 0
        text = out_file.read_text()
        assert "(sigma" in text and "(if" not in text
        code, _, err = run(capsys, "eval", out_file, "--theta", "0", "--trace", "0")
        assert code == 1 and "reserved internal form" in err
        code, out, _ = run(capsys, "eval", out_file, "--theta", "0.2", "--trace", "0.3", "--eta", "0.1",
                           "--internal")
        _, ref, _ = run(capsys, "eval", example1, "--theta", "0.2", "--trace", "0.3", "--eta", "0.1")
        assert code == 0
        assert float(lines(out)["value"]) == pytest.approx(float(lines(ref)["value"]), abs=1e-12)

    def test_not_first_order(self, capsys):
        code, _, err = run(capsys, "smooth", CORPUS_DIR / "twice.ppl")
        assert code == 1 and "not first-order" in err


class TestOptimize:
    def test_csv(self, capsys, example1, tmp_path):
        out_file = tmp_path / "traj.csv"
        code, _, _ = run(capsys, "optimize", example1, "--estimator", "smooth", "--optimizer", "sgd",
                         "--schedule", "rm:0.5", "--iters", "50", "--seed", "3", "--out", out_file)
        assert code == 0
        rows = list(csv.reader(out_file.open()))
        assert rows[0] == ["iter", "theta_1", "grad_norm", "elapsed_ns"]
        assert len(rows) == 52
        assert rows[1][2] == "nan" and rows[1][1] == "0"
        assert all(int(r[3]) >= 0 for r in rows[1:])

    def test_deterministic(self, capsys, example1, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for f in (a, b):
            run(capsys, "optimize", example1, "--estimator", "score", "--iters", "30", "--seed", "9",
                "--out", f)
        strip = lambda f: [r[:-1] for r in csv.reader(f.open())]
        assert strip(a) == strip(b)

    def test_bad_schedule(self, capsys, example1, tmp_path):
        code, _, err = run(capsys, "optimize", example1, "--optimizer", "sgd", "--schedule", "fast",
                           "--out", tmp_path / "x.csv")
        assert code == 1 and "schedule" in err


class TestBench:
    def test_outputs(self, capsys, tmp_path):
        code, out, _ = run(capsys, "bench", "--model", "ex0g", "--estimators", "smooth:0.2,reparam",
                           "--iters", "100", "--k", "5", "--variance-k", "5", "--budget", "0",
                           "--out", tmp_path)
        assert code == 0
        assert (tmp_path / "elbo.csv").exists() and (tmp_path / "variance.csv").exists()
        assert "smooth:0.2: final objective" in out
        var = list(csv.reader((tmp_path / "variance.csv").open()))
        assert var[0] == ["estimator", "component_variance", "norm_variance"]
        assert var[1][1] == "0"


class TestOracle:
    def test_nconv(self, capsys):
        code, out, _ = run(capsys, "oracle", CORPUS_DIR / "nconv.ppl", "--theta", "1")
        d = lines(out)
        assert code == 0
        assert float(d["expectation"]) == pytest.approx(0.8413447460685429, abs=1e-9)
        assert float(d["widening_delta"]) < 1e-6

    def test_too_many(self, capsys):
        code, _, err = run(capsys, "oracle", CORPUS_DIR / "mprime.ppl", "--theta", "0")
        assert code == 1 and "trace dimension too high for oracle" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "smoothppl", "typecheck", str(CORPUS_DIR / "const.ppl")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("trace: []")
