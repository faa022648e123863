import csv
import io
import json
import subprocess
import sys

import pytest

from lyapgauss import cli, exact
from lyapgauss.report import dumps
from lyapgauss.special import rounded


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out), err


def test_exact_complex_y(capsys):
    code, rep, _ = run_json(capsys, "exact", "--field", "complex", "--y", "1,0.25")
    assert code == 0
    mu = [float(v) for v in rep["outputs"]["mu"]]
    assert mu == pytest.approx([0.6355884, -0.0196569], abs=1e-7)
    assert float(rep["outputs"]["sum"]) == pytest.approx(0.6159315, abs=1e-7)
    assert rep["inputs"]["sigma_eigs"] == ["1", "4"]
    assert rep["inputs"]["y"] == ["1", "1/4"]
    for check in rep["checks"]:
        assert {"name", "value", "tolerance", "passed"} <= set(check)
    assert set(rep) >= {"inputs", "outputs", "checks", "versions"}


def test_exact_sigma_eigs_echoes_both(capsys):
    code, rep, _ = run_json(capsys, "exact", "--sigma-eigs", "1,4")
    assert code == 0
    assert rep["inputs"]["y"] == ["1", "1/4"]


def test_exact_isotropic_and_real(capsys):
    code, rep, _ = run_json(capsys, "exact", "--field", "complex", "--d", "3")
    assert code == 0
    assert float(rep["outputs"]["mu"][2]) == pytest.approx(-0.5772156649 / 2, abs=1e-10)
    code, rep, _ = run_json(capsys, "exact", "--field", "real", "--d", "2")
    assert code == 0
    assert float(rep["outputs"]["mu1"]) == pytest.approx(0.0579658, abs=1e-7)
    assert float(rep["outputs"]["sum"]) == pytest.approx(-0.5772156649, abs=1e-10)
    code, rep, _ = run_json(capsys, "exact", "--field", "real", "--y", "1,0.25")
    assert float(rep["outputs"]["mu1"]) == pytest.approx(0.463430865937, abs=1e-12)


def test_exact_profile(capsys):
    code, rep, _ = run_json(capsys, "exact", "--profile", "linear:1,1", "--dim", "20")
    assert code == 0
    assert rep["outputs"]["digits_used"] >= 40


def test_degenerate_exit_code(capsys):
    code, out, err = run(capsys, "exact", "--y", "1,2,1")
    assert code == 2
    assert "y[0]" in err and "y[2]" in err
    assert out == ""


def test_usage_exit_codes(capsys):
    for argv in (["exact", "--y", "1", "--d", "2"], ["exact"], ["bogus"], ["glq", "--y", "1,2", "--q", "a"],
                 ["mc", "--y", "1,2", "--estimator", "other"], ["exact", "--y", "1,-2"],
                 ["exact", "--profile", "linear:1,1"], ["mc", "--y", "1,2", "--k", "3"]):
        assert cli.main(argv) == 64, argv
        capsys.readouterr()


def test_glq(capsys):
    code, rep, _ = run_json(capsys, "glq", "--y", "1,0.25", "--q", "2")
    assert code == 0
    assert float(rep["outputs"]["points"][0]["L"]) == pytest.approx(1.6094379124341003, abs=1e-14)
    code, rep, _ = run_json(capsys, "glq", "--d", "2", "--q", "2")
    assert float(rep["outputs"]["points"][0]["L"]) == pytest.approx(0.6931471805599453, abs=1e-14)
    code, rep, _ = run_json(capsys, "glq", "--y", "1,0.25", "--q", "0")
    assert float(rep["outputs"]["points"][0]["L"]) == 0.0
    assert rep["checks"][0]["name"] == "slope_at_zero" and rep["checks"][0]["passed"]


def test_glq_range_csv(capsys):
    code, out, _ = run(capsys, "glq", "--y", "1,2,5", "--q", "0:2:1/2", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["q", "L"]
    assert [r[0] for r in rows[1:]] == ["0", "0.5", "1", "1.5", "2"]
    # 15 significant digits
    assert all(len(r[1].lstrip("-").replace(".", "").lstrip("0")) <= 15 for r in rows[1:])


def test_mc_reports_zscore(capsys):
    code, rep, _ = run_json(capsys, "mc", "--estimator", "single", "--y", "1,0.25", "--k", "2",
                            "--samples", "100000", "--seed", "3")
    assert code == 0
    assert abs(float(rep["outputs"]["zscore"])) < 3
    assert rep["inputs"]["seed"] == 3
    code, rep, _ = run_json(capsys, "mc", "--field", "real", "--y", "1,2,5", "--k", "1", "--steps", "2000")
    assert rep["outputs"]["exact"] is None
    assert rep["checks"] == []


def test_mc_chain_failure_exit(capsys):
    code, _, err = run(capsys, "mc", "--y", "1e-300,1e-300", "--steps", "2000", "--renorm-every", "10")
    assert code == 3
    assert "renorm_every" in err


def test_diffusive(capsys):
    code, rep, _ = run_json(capsys, "diffusive", "--d", "4", "--sigma1", "1")
    assert code == 0
    assert rep["outputs"]["mu"] == ["3.0", "1.0", "-1.0", "-3.0"]
    code, rep, _ = run_json(capsys, "diffusive", "--d", "2", "--sigma1", "1", "--sigma2", "3", "--k", "1",
                            "--simulate", "--time", "200")
    assert code == 0
    names = {c["name"] for c in rep["checks"]}
    assert {"simulation", "sigma2_independence"} <= names
    code, rep, _ = run_json(capsys, "diffusive", "--d", "2", "--sigma1", "0", "--simulate", "--time", "20",
                            "--substeps", "200")
    assert code == 0
    assert abs(float(rep["outputs"]["estimate"]["mean"])) < 1e-12


def test_sweep(capsys):
    code, out, _ = run(capsys, "sweep", "--profile", "linear:1,1", "--d-list", "50,100,200", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["d"] for r in rows] == ["50", "100", "200"]
    vals = [float(r["mu1"]) for r in rows]
    assert vals[0] < vals[1] < vals[2]
    code, rep, _ = run_json(capsys, "sweep", "--profile", "linear:0,1", "--d-list", "10")
    assert code == 0


def test_sweep_precision_exhausted(capsys):
    code, _, err = run(capsys, "sweep", "--profile", "linear:1,1", "--d-list", "500", "--max-digits", "200")
    assert code == 4
    assert "max_digits=200" in err


def test_json_round_trip_and_out(capsys, tmp_path):
    path = tmp_path / "r.json"
    code, out, _ = run(capsys, "exact", "--y", "1,2,5", "--out", str(path))
    assert code == 0 and out == ""
    text = path.read_text()
    assert dumps(json.loads(text)) == text
    keys = list(json.loads(text))
    assert keys == sorted(keys)


def test_csv_has_header(capsys, tmp_path):
    path = tmp_path / "r.csv"
    cli.main(["exact", "--y", "1,0.25", "--format", "csv", "--out", str(path)])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["quantity", "k", "value"]
    assert rows[1][:2] == ["mu", "1"]


def test_verify_quick_is_deterministic(capsys):
    a = run(capsys, "verify", "--quick", "--seed", "7")
    b = run(capsys, "verify", "--quick", "--seed", "7", "--workers", "3")
    assert a[0] == 0
    assert a[1] == b[1]
    assert "PASS" in a[2]


def test_verify_detects_tampered_half(capsys, monkeypatch):
    monkeypatch.setattr(exact, "_half", lambda x, digits: rounded(x, digits))
    code, out, err = run(capsys, "verify", "--quick", "--seed", "1")
    assert code == 1
    failed = json.loads(out)["outputs"]["failed"]
    assert "sum_rule_closure" in failed
    assert "sum_rule_closure" in err


def test_verify_detects_tampered_sum_rule(capsys, monkeypatch):
    orig = exact.sum_rule_complex

    def wrong(y, ctx=exact.DEFAULT_CONTEXT):
        return orig(y, ctx) * 2

    monkeypatch.setattr(exact, "sum_rule_complex", wrong)
    code, out, _ = run(capsys, "verify", "--quick", "--seed", "1")
    assert code == 1
    assert "sum_rule_closure" in json.loads(out)["outputs"]["failed"]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lyapgauss", "exact", "--d", "2", "--format", "csv"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("quantity,k,value")
