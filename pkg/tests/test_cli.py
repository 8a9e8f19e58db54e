import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from dimest import bench
from dimest.cli import EXIT_ESTIMATION, EXIT_OK, EXIT_USAGE, main
from dimest.generators import GeneratorSpec, sample
from dimest.pointcloud import load_csv, save_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_generate_and_byte_identical(tmp_path, capsys):
    args = ["generate", "--kind", "hypercube", "--d", 3, "--k", 2, "--n", 10, "--seed", 7]
    assert run(capsys, *args, "--out", tmp_path / "a.csv")[0] == EXIT_OK
    assert run(capsys, *args, "--out", tmp_path / "b.csv")[0] == EXIT_OK
    pts = load_csv(tmp_path / "a.csv").points
    assert pts.shape == (10, 3) and np.all(pts[:, 2] == 0)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_generate_default_path(tmp_path, capsys):
    code, out, _ = run(capsys, "generate", "--kind", "sphere", "--d", 3, "--k", 2, "--n", 5,
                       "--out-dir", tmp_path)
    assert code == EXIT_OK and (tmp_path / "sphere_d3_k2.csv").exists()


def test_generate_invalid_sphere(capsys):
    code, _, err = run(capsys, "generate", "--kind", "sphere", "--d", 4, "--k", 2, "--n", 5)
    assert code != 0 and "k = d-1" in err


def test_usage_errors(capsys):
    assert run(capsys, "nope")[0] == EXIT_USAGE
    assert run(capsys, "generate", "--kind", "hypercube")[0] == EXIT_USAGE


def test_estimate_two_points(tmp_path, capsys):
    (tmp_path / "two.csv").write_text("0\n1\n")
    code, out, _ = run(capsys, "estimate", tmp_path / "two.csv", "--estimator", "cap",
                       "--r", 0.5)
    assert code == EXIT_OK
    rec = json.loads(out)[0]
    assert rec["method"] == "cap" and rec["value"] == 1.0


def test_estimate_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "estimate", tmp_path / "missing.csv")
    assert code != 0 and "no such input" in err


def test_estimate_failure_exit_code(tmp_path, capsys):
    (tmp_path / "far.csv").write_text("0\n10\n")
    code, _, err = run(capsys, "estimate", "--input", tmp_path / "far.csv", "-e", "cd",
                       "--r", 0.5)
    assert code == EXIT_ESTIMATION and "no pairs" in err


def test_estimate_pointwise_band(tmp_path, capsys):
    save_csv(sample(GeneratorSpec("hypercube", 3, 2, seed=1), 2500), tmp_path / "h.csv")
    code, out, _ = run(capsys, "estimate", tmp_path / "h.csv", "--estimator", "pw")
    assert code == EXIT_OK and 1.9 <= json.loads(out)[0]["value"] <= 2.5


def test_estimate_many_and_schedule(tmp_path, capsys):
    save_csv(sample(GeneratorSpec("hypercube", 2, 2, seed=2), 500), tmp_path / "s.csv")
    code, out, _ = run(capsys, "estimate", tmp_path / "s.csv", "-e", "cd,pw", "-e", "bc",
                       "--grid", 0.01, 0.1, 8, "--profile", tmp_path / "prof.csv",
                       "--M", 5000)
    recs = json.loads(out)
    assert code == EXIT_OK and [r["method"] for r in recs] == ["cd", "pw", "bc"]
    assert len(recs[0]["scales"]) == 8
    assert (tmp_path / "prof.csv").read_text().startswith("r,V_n,std_error\n")
    code, out, _ = run(capsys, "estimate", tmp_path / "s.csv", "-e", "pw",
                       "--schedule", "pointwise_rate", "--C", 20)
    rec = json.loads(out)[0]
    assert code == EXIT_OK and len(rec["scales"]) == 1
    code, _, err = run(capsys, "estimate", tmp_path / "s.csv", "-e", "pw",
                       "--schedule", "pointwise_rate", "--C", 1)
    assert code == EXIT_USAGE and "C > 28/" in err


def test_estimate_volume_methods(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("0.5\n")
    code, out, _ = run(capsys, "estimate", tmp_path / "p.csv", "-e", "vol,polyvol",
                       "--r", 0.1, "--R", 0.5, "--r0", 0.05)
    recs = json.loads(out)
    assert code == EXIT_OK
    assert recs[1]["rounded"] == 0 and recs[1]["info"]["coeffs"][1] == pytest.approx(2)


def test_sandwich_check_command(tmp_path, capsys):
    (tmp_path / "l.csv").write_text("0\n0.25\n0.3\n0.9\n")
    code, out, _ = run(capsys, "lemma1-check", tmp_path / "l.csv", "--r", 0.1)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["holds"] and rep["volume_method"] == "exact_1d"


def test_cd_invariance_command(capsys):
    code, out, _ = run(capsys, "cd-invariance", "--n", 600, "--B", 2)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["reliable"] and rep["B"] == 2


def test_hypercube_command_grid(tmp_path, capsys):
    code, _, _ = run(capsys, "table1", "--dims", "2,3", "--B", 2, "--n", 300,
                     "--estimators", "cd,pw", "--out-dir", tmp_path)
    assert code == EXIT_OK
    rows = json.loads((tmp_path / "table1.json").read_text())["rows"]
    assert [(r["d"], r["intrinsic_dim"]) for r in rows] == [(2, 2), (3, 3), (3, 2)]
    for r in rows:
        raw = tmp_path / f"table1_raw_{r['label']}.csv"
        assert bench.aggregate_from_raw(raw, r["intrinsic_dim"]) == r["estimators"]
    plot = list(csv.DictReader((tmp_path / "table1_plot.csv").open()))
    assert len(plot) == 6 and set(plot[0]) == {"x", "y", "series", "d", "intrinsic_dim",
                                               "sigma"}


def test_hypercube_command_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        run(capsys, "table1", "--dims", "2", "--B", 2, "--n", 300, "--out-dir", tmp_path / sub,
            "--threads", 2 if sub == "b" else 1)
    a = (tmp_path / "a" / "table1_raw_d2_k2.csv").read_bytes()
    assert a == (tmp_path / "b" / "table1_raw_d2_k2.csv").read_bytes()


def test_noise_command(tmp_path, capsys):
    code, _, _ = run(capsys, "noise", "--d", 5, "--k", 2, "--sigmas", "0,0.05", "--B", 2,
                     "--n", 1500, "--estimators", "pw", "--out-dir", tmp_path)
    assert code == EXIT_OK
    means = [float(r["y"]) for r in csv.DictReader((tmp_path / "noise_plot.csv").open())]
    assert means[0] < means[1]
    assert (tmp_path / "noise_raw_sigma0.csv").exists()
    assert (tmp_path / "noise_raw_sigma0.05.csv").exists()


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[experiment]\nB = 2\nn = 300\nestimators = cd\nmaster_seed = 4\n"
                   "[table1]\ndims = 2\n[cd]\nm = 5\n")
    code, _, _ = run(capsys, "table1", "--config", cfg, "--out-dir", tmp_path)
    row = json.loads((tmp_path / "table1.json").read_text())["rows"][0]
    assert code == EXIT_OK
    assert (row["B"], row["n"], row["master_seed"]) == (2, 300, 4)
    assert list(row["estimators"]) == ["cd"]
    # flags win over the file
    run(capsys, "table1", "--config", cfg, "--B", 1, "--out-dir", tmp_path)
    assert json.loads((tmp_path / "table1.json").read_text())["rows"][0]["B"] == 1
    assert run(capsys, "table1", "--config", tmp_path / "absent.ini")[0] == EXIT_USAGE


def test_estimation_failure_in_table(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    # a radius far below every pair distance makes cd fail in every replicate
    cfg.write_text("[cd]\nradii = 1e-9\n")
    code, _, err = run(capsys, "table1", "--config", cfg, "--dims", "2", "--B", 2, "--n", 50,
                       "--estimators", "cd", "--out-dir", tmp_path)
    assert code == EXIT_ESTIMATION and "cd" in err


@pytest.mark.slow
def test_manifold_command_sphere(tmp_path, capsys):
    code, _, _ = run(capsys, "table2", "--manifolds", "M1", "--B", 5, "--estimators", "pw",
                     "--threads", 4, "--out-dir", tmp_path)
    row = json.loads((tmp_path / "table2.json").read_text())["rows"][0]
    assert code == EXIT_OK and row["estimators"]["pw"]["proportion_correct"] >= 0.8


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dimest", "generate", "--kind", "hypercube",
                           "--d", "2", "--k", "1", "--n", "3", "--out", str(tmp_path / "x.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "x.csv").exists()
