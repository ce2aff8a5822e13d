import csv
import json
import os

import pytest

from onsetml import cli
from onsetml.dataset import table_from_rows

from conftest import make_record


@pytest.fixture
def synth_csv(tmp_path):
    path = tmp_path / "synth.csv"
    assert cli.run(["synth", "--out", str(path), "--seed", "42"]) == 0
    return path


def run_ok(*argv):
    code = cli.run([str(a) for a in argv])
    assert code == 0, argv
    return code


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestCommands:
    def test_synth_writes_36_tests(self, synth_csv, tmp_path):
        layouts = [r[0] for r in read_rows(synth_csv)[1:]]
        assert layouts.count("h_top") == 18 and layouts.count("h_sub") == 18
        sub = tmp_path / "sub.csv"
        run_ok("synth", "--out", sub, "--layout", "h_sub")
        assert [r[0] for r in read_rows(sub)[1:]] == ["h_sub"] * 18

    def test_correlate(self, synth_csv, tmp_path):
        out = tmp_path / "corr.csv"
        run_ok("correlate", "--in", synth_csv, "--out", out, "--columns", "d50,wev,slope")
        rows = read_rows(out)
        assert len(rows) == 4
        assert [float(rows[i][i]) for i in range(1, 4)] == [1.0, 1.0, 1.0]

    def test_train_mlr(self, synth_csv, tmp_path):
        out = tmp_path / "td.json"
        run_ok("train-mlr", "--in", synth_csv, "--out", out, "--target", "td")
        doc = json.loads(out.read_text())
        assert doc["model_type"] == "mlr" and len(doc["coefficients"]) == 3
        assert set(doc["split"]["train_rows"]).isdisjoint(doc["split"]["test_rows"])

    def test_train_lr_and_sweep(self, synth_csv, tmp_path):
        model = tmp_path / "lr.json"
        run_ok("train-lr", "--in", synth_csv, "--out", model, "--max-iter", "3000")
        doc = json.loads(model.read_text())
        assert doc["model_type"] == "logistic"
        assert {"accuracy", "precision", "threat_score"} <= doc["test_metrics"].keys()
        curves = tmp_path / "sweep.csv"
        run_ok("sweep", "--model", model, "--in", synth_csv, "--out", curves, "--var", "RI")
        assert len(read_rows(curves)) == 82

    def test_train_svc_and_report(self, synth_csv, tmp_path):
        svc = tmp_path / "svc.json"
        mlr = tmp_path / "mlr.json"
        run_ok("train-svc", "--in", synth_csv, "--out", svc, "--C", "1")
        run_ok("train-mlr", "--in", synth_csv, "--out", mlr)
        report = tmp_path / "report.json"
        run_ok("report", "--in", synth_csv, "--out", report, "--model", svc, "--model", mlr)
        doc = json.loads(report.read_text())
        assert len(doc["svc"]) == 1 and len(doc["mlr"]) == 1 and doc["logistic"] == []
        assert "accuracy_test" in doc["svc"][0]["evaluation"]

    def test_pca_and_kmeans(self, synth_csv, tmp_path):
        pca = tmp_path / "pca.csv"
        run_ok("pca", "--in", synth_csv, "--out", pca)
        rows = read_rows(pca)
        assert float(rows[-1][3]) == pytest.approx(1.0)
        km = tmp_path / "km.csv"
        run_ok("kmeans", "--in", synth_csv, "--out", km, "--k", "2")
        assert len(read_rows(km)) > 1

    def test_crossval(self, synth_csv, tmp_path):
        out = tmp_path / "cv.csv"
        run_ok("crossval", "--in", synth_csv, "--out", out, "--runs", "2")
        text = out.read_text()
        assert text.startswith("run,fold,n_test")
        assert "overall_mean_accuracy" in text


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, tmp_path, capsys):
        assert cli.run(["synth", "--out", str(tmp_path / "x.csv"), "--bogus"]) == 1
        assert "usage error" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [
        ["train-lr", "--test-fraction", "1.5"],
        ["crossval", "--folds", "1"],
        ["train-svc", "--C", "0"],
    ])
    def test_bad_values_are_usage_errors(self, argv, synth_csv, tmp_path):
        assert cli.run(argv + ["--in", str(synth_csv), "--out", str(tmp_path / "o")]) == 1

    def test_missing_input(self, tmp_path):
        assert cli.run(["train-lr", "--in", str(tmp_path / "none.csv"), "--out", str(tmp_path / "m.json")]) == 2

    def test_missing_model(self, synth_csv, tmp_path):
        code = cli.run(["sweep", "--model", str(tmp_path / "none.json"), "--in", str(synth_csv), "--out", str(tmp_path / "s.csv")])
        assert code == 2

    def test_layout_mismatch(self, tmp_path):
        top = tmp_path / "top.csv"
        run_ok("synth", "--out", top, "--layout", "h_top")
        assert cli.run(["train-lr", "--in", str(top), "--out", str(tmp_path / "m.json")]) == 2

    def test_collinear_design_is_numeric_failure(self, tmp_path):
        rows = [
            make_record(d50=d, wev=5.0 * d, slope=s, ri=ri, td=ri * d, te=ri + s)
            for d in (0.1, 0.2, 0.4)
            for s in (15.0, 20.0)
            for ri in (18.0, 70.0, 120.0)
        ]
        path = tmp_path / "collinear.csv"
        path.write_text(table_from_rows(rows).to_csv())
        assert cli.run(["train-mlr", "--in", str(path), "--out", str(tmp_path / "m.json")]) == 3
        assert not (tmp_path / "m.json").exists()


class TestSeedsAndFiles:
    def test_env_seed_fallback(self, tmp_path, monkeypatch):
        a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
        monkeypatch.setenv(cli.SEED_ENV, "7")
        run_ok("synth", "--out", a)
        run_ok("synth", "--out", b, "--seed", "7")
        monkeypatch.delenv(cli.SEED_ENV)
        run_ok("synth", "--out", c)
        d = tmp_path / "d.csv"
        run_ok("synth", "--out", d, "--seed", "42")
        assert a.read_bytes() == b.read_bytes()
        assert c.read_bytes() == d.read_bytes() != a.read_bytes()

    def test_bad_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.SEED_ENV, "abc")
        assert cli.run(["synth", "--out", str(tmp_path / "a.csv")]) == 1

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        target = tmp_path / "deep" / "out.txt"
        cli.write_atomic(target, "hello\n")
        cli.write_atomic(target, "again\n")
        assert target.read_text() == "again\n"
        assert os.listdir(target.parent) == ["out.txt"]

    def test_failed_write_keeps_old_file(self, tmp_path):
        target = tmp_path / "out.txt"
        target.write_text("old")

        with pytest.raises(TypeError):
            cli.write_atomic(target, 123)  # not text
        assert target.read_text() == "old"
        assert os.listdir(tmp_path) == ["out.txt"]


def pipeline(root, seed="42"):
    root.mkdir()
    data, model, cv, curves = (root / n for n in ("data.csv", "lr.json", "cv.csv", "sweep.csv"))
    run_ok("synth", "--out", data, "--seed", seed)
    run_ok("train-lr", "--in", data, "--out", model, "--seed", seed, "--max-iter", "5000")
    run_ok("crossval", "--in", data, "--out", cv, "--seed", seed, "--runs", "2")
    run_ok("sweep", "--model", model, "--in", data, "--out", curves, "--seed", seed)
    return [p.read_bytes() for p in (data, model, cv, curves)]


def test_pipeline_is_byte_deterministic(tmp_path):
    first = pipeline(tmp_path / "one")
    second = pipeline(tmp_path / "two")
    assert first == second
    assert len(first[3].decode().splitlines()) == 1 + 4 * 81
