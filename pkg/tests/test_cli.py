from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate

from cokriging import modelfile
from cokriging.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USER, main, parse_ids
from cokriging.dataio import read_points_csv, write_points_csv


@pytest.fixture
def forrester_dir(tmp_path):
    assert main(["demo", "Forrester2HighFreq", "--out-dir", str(tmp_path)]) == EXIT_OK
    (tmp_path / "run.ini").write_text("[kernel]\ntheta_fixed = 0.25; 0.07\n[trend]\nbases = 1; 1,x1\n")
    return tmp_path


def run_fit(d, *extra):
    return main(["fit", str(d / "level1.csv"), str(d / "level2.csv"), "--config", str(d / "run.ini"),
                 "--out", str(d / "model.json"), *extra])


class TestParseIds:
    def test_ranges(self):
        ids = parse_ids(["2:1,3,5-7"], 2)
        np.testing.assert_array_equal(ids[1], [0, 2, 4, 5, 6])

    def test_bad(self):
        with pytest.raises(ValueError, match="LEVEL:ROWS"):
            parse_ids(["x"], 2)
        with pytest.raises(ValueError, match="outside"):
            parse_ids(["3:1"], 2)


class TestCli:
    def test_fit_report_and_predict(self, forrester_dir, capsys):
        d = forrester_dir
        assert run_fit(d, "--report", str(d / "report.txt")) == EXIT_OK
        out = capsys.readouterr().out
        rho = float(out.split("rho1 = ")[1].split()[0])
        assert abs(rho - 1.86) <= 0.02
        assert (d / "report.txt").read_text() == out
        assert main(["predict", str(d / "model.json"), str(d / "query.csv"), "--out", str(d / "pred.csv")]) == EXIT_OK
        X, _ = read_points_csv(d / "query.csv", with_y=False)
        header = (d / "pred.csv").read_text().splitlines()[0]
        assert header == "x1,mean,std"
        pred = np.loadtxt(d / "pred.csv", delimiter=",", skiprows=1)
        m = modelfile.load(d / "model.json").predict(X)
        np.testing.assert_array_equal(pred[:, 1], m.mean)

    def test_fit_is_deterministic(self, forrester_dir):
        d = forrester_dir
        (d / "run.ini").write_text("[trend]\nbases = 1; 1,x1\n")
        run_fit(d)
        first = (d / "model.json").read_bytes()
        run_fit(d)
        assert (d / "model.json").read_bytes() == first

    def test_design_points_have_zero_std(self, forrester_dir):
        d = forrester_dir
        run_fit(d)
        main(["predict", str(d / "model.json"), str(d / "level2.csv"), "--out", str(d / "p.csv")])
        # the query reader wants x columns only
        assert main(["predict", str(d / "model.json"), str(d / "level2.csv"), "--out", str(d / "p.csv")]) == EXIT_USER
        X, y = read_points_csv(d / "level2.csv")
        write_points_csv(d / "q2.csv", X, {})
        assert main(["predict", str(d / "model.json"), str(d / "q2.csv"), "--out", str(d / "p.csv")]) == EXIT_OK
        pred = np.loadtxt(d / "p.csv", delimiter=",", skiprows=1)
        np.testing.assert_allclose(pred[:, 1], y, atol=1e-8)
        assert np.all(pred[:, 2] <= 1e-8)

    def test_bayes_predict_with_density(self, forrester_dir):
        d = forrester_dir
        run_fit(d)
        write_points_csv(d / "q.csv", np.array([[0.25], [0.5]]), {})
        code = main(["bayes-predict", str(d / "model.json"), str(d / "q.csv"), "--out", str(d / "b.csv"),
                     "--density", str(d / "dens")])
        assert code == EXIT_OK
        assert (d / "b.csv").read_text().splitlines()[0] == "x1,mean,std,mc_se"
        dens = np.loadtxt(d / "dens" / "density_1.csv", delimiter=",", skiprows=1)
        np.testing.assert_allclose(integrate.trapezoid(dens[:, 1], dens[:, 0]), 1.0, atol=1e-3)

    def test_ids_and_validate_rest(self, forrester_dir, capsys):
        d = forrester_dir
        (d / "run.ini").write_text("[kernel]\ntheta_fixed = 0.25; 0.07\n")
        code = run_fit(d, "--ids", "2:1,2,4", "--validate-rest")
        assert code == EXIT_USER
        assert "at least 2 rows" in capsys.readouterr().err

    def test_scale_inputs(self, forrester_dir):
        d = forrester_dir
        run_fit(d, "--scale-inputs")
        doc = modelfile.loads_with_meta((d / "model.json").read_text())[1]
        assert doc["extra"]["input_scaling"] == {"low": [0.0], "span": [1.0]}

    def test_cv_and_compare(self, tmp_path, capsys):
        assert main(["demo", "Ishigami3", "--out-dir", str(tmp_path)]) == EXIT_OK
        (tmp_path / "run.ini").write_text("[kernel]\nfamily = matern52\ntheta_fixed = 2,2,2; 2,2,2; 2,2,2\n")
        levels = [str(tmp_path / f"level{t}.csv") for t in (1, 2, 3)]
        code = main(["cv", *levels, "--config", str(tmp_path / "run.ini"), "--held-out", "1,2,3",
                     "--compare-top-two", "--out", str(tmp_path / "cv.csv")])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "LOO-RMSE (3 levels)" in out and "ratio =" in out
        rows = (tmp_path / "cv.csv").read_text().splitlines()
        assert rows[0] == "point_id,error,pred_std" and len(rows) == 4

    def test_cv_absent_point(self, tmp_path, capsys):
        write_points_csv(tmp_path / "l1.csv", np.array([[0.0], [0.5], [1.0]]), {"y": [0.0, 1.0, 0.0]})
        write_points_csv(tmp_path / "l2.csv", np.array([[0.5], [0.75]]), {"y": [1.0, 0.5]})
        code = main(["cv", str(tmp_path / "l1.csv"), str(tmp_path / "l2.csv"), "--out", str(tmp_path / "o.csv")])
        assert code == EXIT_USER
        assert "not contained" in capsys.readouterr().err

    def test_bench(self, tmp_path, capsys):
        assert main(["bench", "--n2", "10,20", "--out", str(tmp_path / "b.csv")]) == EXIT_OK
        assert (tmp_path / "b.csv").read_text() == capsys.readouterr().out

    def test_user_errors(self, tmp_path, capsys):
        (tmp_path / "l1.csv").write_text("x1,y\n0,1\n0.5,2\n1,3\n")
        (tmp_path / "l2.csv").write_text("x1,y\n")
        assert main(["fit", str(tmp_path / "l1.csv"), str(tmp_path / "l2.csv"), "--out", str(tmp_path / "m")]) == EXIT_USER
        assert "level 2 has 0 observations" in capsys.readouterr().err
        (tmp_path / "l2.csv").write_text("x1,y\n0.5,1\nzz,2\n")
        assert main(["fit", str(tmp_path / "l1.csv"), str(tmp_path / "l2.csv"), "--out", str(tmp_path / "m")]) == EXIT_USER
        assert "line 3" in capsys.readouterr().err
        assert main(["predict", str(tmp_path / "missing.json"), str(tmp_path / "l1.csv"), "--out", "x"]) == EXIT_USER

    def test_numerical_failure(self, tmp_path, capsys):
        X = np.linspace(0, 1, 6)[:, None]
        write_points_csv(tmp_path / "l1.csv", X, {"y": np.sin(X[:, 0])})
        (tmp_path / "r.ini").write_text("[kernel]\ntheta_fixed = 50\n[regularization]\nnuggets = 0.0\n")
        code = main(["fit", str(tmp_path / "l1.csv"), "--config", str(tmp_path / "r.ini"), "--out", str(tmp_path / "m")])
        assert code == EXIT_NUMERIC
        assert "numerical failure" in capsys.readouterr().err

    def test_bayes_rejects_three_levels(self, tmp_path, capsys):
        X = np.linspace(0, 1, 8)[:, None]
        for t, idx in enumerate((slice(None), slice(0, 8, 2), slice(0, 6, 2))):
            write_points_csv(tmp_path / f"l{t}.csv", X[idx], {"y": np.sin((t + 1) * X[idx, 0])})
        (tmp_path / "r.ini").write_text("[kernel]\ntheta_fixed = 0.3; 0.3; 0.3\n")
        main(["fit", *[str(tmp_path / f"l{t}.csv") for t in range(3)], "--config", str(tmp_path / "r.ini"),
              "--out", str(tmp_path / "m.json")])
        code = main(["bayes-predict", str(tmp_path / "m.json"), str(tmp_path / "l0.csv"), "--out", str(tmp_path / "o")])
        assert code == EXIT_USER
        assert "2-level" in capsys.readouterr().err
