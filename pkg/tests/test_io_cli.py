import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockclr import io as bio
from blockclr.cli import main
from blockclr.exceptions import DataValidationError, InvalidArgumentError
from blockclr.simulation import SimulationSetting, generate_dataset

TOY = """stratum,case,x1,x2
a,1,0.5,1.0
a,0,-0.25,2.0
b,0,1.5,0.0
b,1,3.0,-1.0
"""


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.fixture(scope="module")
def sim_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    data = generate_dataset(SimulationSetting(4, 6, 2, 1, 2.0, 1.0, n_pairs=60, seed=3)).data
    path = d / "sim.csv"
    bio.write_dataset(data, path)
    return path


def outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(Path(directory).iterdir()) if p.name != "manifest.json"}


class TestParse:
    def test_toy(self, tmp_path):
        data = bio.parse_dataset(write(tmp_path, TOY))
        assert data.n == 2 and data.p == 2 and list(data.names) == ["x1", "x2"]
        np.testing.assert_array_equal(data.case, [1, 0, 0, 1])
        assert [s.id for s in data.strata] == ["a", "b"]
        np.testing.assert_array_equal(data.covariates[3], [3.0, -1.0])

    def test_two_cases_names_stratum(self, tmp_path):
        text = TOY.replace("b,0,1.5", "b,1,1.5")
        with pytest.raises(DataValidationError, match=r"d\.csv:4.*'b'"):
            bio.parse_dataset(write(tmp_path, text))

    def test_block_sum(self, tmp_path):
        header = "stratum,case," + ",".join(f"v{j}" for j in range(99))
        rows = [f"s{i},{c}," + ",".join("0.1" for _ in range(99)) for i in range(2) for c in (1, 0)]
        path = write(tmp_path, "\n".join([header, *rows]) + "\n")
        with pytest.raises(DataValidationError, match="99"):
            bio.parse_dataset(path, "50,50")

    def test_non_numeric_line(self, tmp_path):
        with pytest.raises(DataValidationError, match=r"d\.csv:3: column 'x2'.*'abc'"):
            bio.parse_dataset(write(tmp_path, TOY.replace("-0.25,2.0", "-0.25,abc")))

    def test_non_finite(self, tmp_path):
        with pytest.raises(DataValidationError, match=r":5: .*non-finite"):
            bio.parse_dataset(write(tmp_path, TOY.replace("3.0,-1.0", "inf,-1.0")))

    def test_field_count(self, tmp_path):
        with pytest.raises(DataValidationError, match=r":2: expected 4 fields, found 3"):
            bio.parse_dataset(write(tmp_path, TOY.replace("a,1,0.5,1.0", "a,1,0.5")))

    def test_case_flag(self, tmp_path):
        with pytest.raises(DataValidationError, match=r":2: case must be 0 or 1"):
            bio.parse_dataset(write(tmp_path, TOY.replace("a,1,0.5", "a,2,0.5")))

    def test_header(self, tmp_path):
        with pytest.raises(DataValidationError, match=":1: header"):
            bio.parse_dataset(write(tmp_path, TOY.replace("stratum,case", "id,case")))

    def test_empty(self, tmp_path):
        with pytest.raises(DataValidationError):
            bio.parse_dataset(write(tmp_path, ""))
        with pytest.raises(DataValidationError, match="no data rows"):
            bio.parse_dataset(write(tmp_path, "stratum,case,x\n"))

    def test_sidecar(self, tmp_path):
        path = write(tmp_path, TOY)
        Path(str(path) + ".blocks").write_text("1,1\n")
        assert bio.parse_dataset(path).block_sizes == (1, 1)

    @pytest.mark.parametrize("text", ["a,b", "0,1", "", "2,-1"])
    def test_bad_blocks(self, text):
        with pytest.raises(InvalidArgumentError):
            bio.parse_block_sizes(text)


class TestLambdaGrid:
    def test_inline(self):
        assert bio.read_lambda_grid("5,1;5,2") == [(5.0, 1.0), (5.0, 2.0)]

    def test_file_with_header(self, tmp_path):
        path = write(tmp_path, "lambda1,lambda2\n5,1\n5,20\n", "g.csv")
        assert bio.read_lambda_grid(path) == [(5.0, 1.0), (5.0, 20.0)]

    @pytest.mark.parametrize("text", ["5,1;5", "x,y"])
    def test_bad(self, text):
        with pytest.raises(InvalidArgumentError):
            bio.read_lambda_grid(text)


def test_fmt_round_trip():
    x = 0.1 + 0.2
    assert float(bio.fmt(x)) == x
    assert bio.fmt(True) == "1" and bio.fmt(np.int64(3)) == "3"


@pytest.mark.property
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(1, 3), n=st.integers(2, 30))
def test_round_trip(tmp_path_factory, seed, k, n):
    sim = generate_dataset(SimulationSetting(3, 2, 1, 1, 1.5, 0.5, n_pairs=max(n, 4), controls_per_case=k, seed=seed))
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    bio.write_dataset(sim.data, path)
    back = bio.parse_dataset(path)
    assert back.block_sizes == sim.data.block_sizes
    np.testing.assert_allclose(back.covariates, sim.data.covariates, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(back.case, sim.data.case)
    assert [s.rows for s in back.strata] == [s.rows for s in sim.data.strata]


class TestOutputDir:
    def test_fresh_target(self, tmp_path):
        target = tmp_path / "out"
        with bio.OutputDir(target) as out:
            (out / "a.txt").write_text("x")
            assert not target.exists()
            out.commit()
        assert (target / "a.txt").read_text() == "x"
        assert [p.name for p in tmp_path.iterdir()] == ["out"]

    @pytest.mark.property
    def test_failure_leaves_nothing(self, tmp_path):
        target = tmp_path / "out"
        with pytest.raises(RuntimeError):
            with bio.OutputDir(target) as out:
                (out / "a.txt").write_text("partial")
                raise RuntimeError("interrupted")
        assert list(tmp_path.iterdir()) == []

    @pytest.mark.property
    def test_existing_target_untouched_on_failure(self, tmp_path):
        target = tmp_path / "out"
        target.mkdir()
        (target / "a.txt").write_text("old")
        with pytest.raises(RuntimeError):
            with bio.OutputDir(target) as out:
                (out / "a.txt").write_text("new")
                raise RuntimeError
        assert (target / "a.txt").read_text() == "old"
        assert [p.name for p in tmp_path.iterdir()] == ["out"]

    def test_existing_target_replaced(self, tmp_path):
        target = tmp_path / "out"
        target.mkdir()
        (target / "a.txt").write_text("old")
        with bio.OutputDir(target) as out:
            (out / "a.txt").write_text("new")
            out.commit()
        assert (target / "a.txt").read_text() == "new"


class TestCli:
    def test_fit_dominant_penalty(self, sim_file, tmp_path):
        out = tmp_path / "fit"
        assert main(["fit", "--data", str(sim_file), "--lambda", "1e6,1e6", "--alpha", "1", "--out", str(out)]) == 0
        lines = (out / "coefficients.csv").read_text().splitlines()
        assert lines[0] == "variable,block,beta,nonzero"
        assert len(lines) == 11
        assert all(line.endswith(",0.0,0") for line in lines[1:])
        man = json.loads((out / "manifest.json").read_text())
        assert man["n_fits"] == 1

    def test_fit_round_trip_precision(self, sim_file, tmp_path):
        from blockclr import PenaltySpec, fit_penalized

        out = tmp_path / "fit"
        assert main(["fit", "--data", str(sim_file), "--lambda", "2,3", "--out", str(out)]) == 0
        beta = np.loadtxt(out / "coefficients.csv", delimiter=",", skiprows=1, usecols=2, dtype=float)
        direct = fit_penalized(bio.parse_dataset(sim_file), PenaltySpec((2.0, 3.0))).beta
        np.testing.assert_array_equal(beta, direct)

    def test_stabsel_fit_count(self, sim_file, tmp_path):
        out = tmp_path / "st"
        grid = "5,1;5,2;5,5;5,10;5,15;5,20"
        assert main(["stabsel", "--data", str(sim_file), "--lambda-grid", grid, "--B", "100", "--out", str(out)]) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["n_fits"] == 1200
        header = (out / "stability.csv").read_text().splitlines()[0]
        assert header == "variable,block," + ",".join(f"freq_{i}" for i in range(1, 7)) + ",selection_probability,selected"

    @pytest.mark.property
    def test_manifest_reproduces_run(self, sim_file, tmp_path):
        first = tmp_path / "one"
        assert main(["stabsel", "--data", str(sim_file), "--lambda-grid", "3,3;3,6", "--B", "5",
                     "--seed", "17", "--alpha", "0.8", "--out", str(first)]) == 0
        man = json.loads((first / "manifest.json").read_text())
        for key in ("parameters", "seed", "versions", "timings", "inputs"):
            assert key in man
        assert man["inputs"]["data_sha256"] == bio.file_sha256(sim_file)
        params = dict(man["parameters"], out=str(tmp_path / "two"))
        argv = ["stabsel"]
        for k, v in params.items():
            if v is None:
                continue
            flag = "--B" if k == "B" else "--" + k.replace("_", "-")
            if isinstance(v, bool):
                argv.append(flag if v else "--no-" + k.replace("_", "-"))
            else:
                argv += [flag, str(v)]
        assert main(argv) == 0
        assert outputs(first) == outputs(tmp_path / "two")

    def test_simulate_deterministic(self, tmp_path):
        args = ["simulate", "--setting", "3", "--replicates", "2", "--seed", "7"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        a, b = outputs(tmp_path / "a"), outputs(tmp_path / "b")
        assert set(a) == {"table1.csv", "sweep.csv"}
        assert a == b
        man = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert man["replicate_seeds"] == [7, 8]
        assert man["parameters"]["max_iterations"] == 10000

    def test_validate(self, sim_file, tmp_path, capsys):
        assert main(["validate", "--data", str(sim_file), "--out", str(tmp_path / "v")]) == 0
        assert "60 strata" in capsys.readouterr().out
        bad = write(tmp_path, TOY.replace("b,0,1.5", "b,1,1.5"))
        assert main(["validate", "--data", str(bad)]) == 3
        assert "'b'" in capsys.readouterr().err

    def test_adapt_pf(self, sim_file, tmp_path):
        out = tmp_path / "pf"
        assert main(["adapt-pf", "--data", str(sim_file), "--seed", "1", "--out", str(out)]) == 0
        rows = (out / "penalty_factors.csv").read_text().splitlines()
        assert rows[0] == "block,pf,mean_abs_coef"
        assert rows[1].startswith("1,1.0,")
        info = json.loads((out / "pf.json").read_text())
        assert info["type_step1"] == "combined" and info["pf"][0] == 1.0

    def test_find_lambda(self, sim_file, tmp_path):
        out = tmp_path / "fl"
        assert main(["find-lambda", "--data", str(sim_file), "--pf", "1,2", "--grid", "0.5,1,2,4", "--out", str(out)]) == 0
        table = np.loadtxt(out / "lambda_cv.csv", delimiter=",", skiprows=1)
        info = json.loads((out / "lambda.json").read_text())
        assert info["lambda1"] == table[np.argmin(table[:, 1]), 0]
        assert info["lambda"] == [info["lambda1"], 2 * info["lambda1"]]

    @pytest.mark.parametrize(
        "argv",
        [
            ["fit", "--lambda", "1,1"],  # missing --data / --out
            ["fit", "--data", "D", "--lambda", "1", "--out", "o", "--alpha", "0"],
            ["stabsel", "--data", "D", "--lambda-grid", "1,1", "--out", "o", "--threshold", "1.5"],
            ["simulate", "--setting", "9", "--out", "o"],
            ["frobnicate"],
            ["fit", "--bogus"],
        ],
    )
    def test_usage_errors(self, argv, tmp_path, capsys):
        assert main(argv) == 2

    def test_missing_file_is_usage_error(self, tmp_path):
        assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--lambda", "1", "--out", str(tmp_path / "o")]) == 2

    def test_lambda_length_mismatch(self, sim_file, tmp_path):
        assert main(["fit", "--data", str(sim_file), "--lambda", "1,2,3", "--out", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()

    def test_data_error(self, tmp_path):
        bad = write(tmp_path, TOY.replace("0.5,1.0", "0.5,nan"))
        assert main(["fit", "--data", str(bad), "--lambda", "1", "--out", str(tmp_path / "o")]) == 3
        assert not (tmp_path / "o").exists()

    @pytest.mark.property
    def test_numerical_failure(self, sim_file, tmp_path, capsys):
        out = tmp_path / "o"
        code = main(["fit", "--data", str(sim_file), "--lambda", "0.01,0.01", "--max-iterations", "1", "--out", str(out)])
        assert code == 4
        assert "numerical failure" in capsys.readouterr().err
        assert not out.exists()
        assert list(tmp_path.iterdir()) == []

    def test_config_precedence(self, sim_file, tmp_path):
        cfg = write(tmp_path, f"data = {sim_file}\nlambda = 1e6,1e6\nalpha = 0.5  # comment\n", "run.cfg")
        out = tmp_path / "o"
        assert main(["fit", "--config", str(cfg), "--alpha", "0.9", "--out", str(out)]) == 0
        params = json.loads((out / "manifest.json").read_text())["parameters"]
        assert params["alpha"] == 0.9
        assert params["lambda"] == "1e6,1e6"
        assert params["max_iterations"] == 1000

    def test_config_unknown_key(self, sim_file, tmp_path, capsys):
        cfg = write(tmp_path, f"data = {sim_file}\nlambda = 1\nlamda = 2\n", "run.cfg")
        assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "lamda" in capsys.readouterr().err

    def test_config_bad_value(self, sim_file, tmp_path):
        cfg = write(tmp_path, f"data = {sim_file}\nlambda = 1\nB = many\n", "run.cfg")
        assert main(["stabsel", "--config", str(cfg), "--lambda-grid", "1,1", "--out", str(tmp_path / "o")]) == 2

    @pytest.mark.property
    def test_interrupted_run_leaves_no_output(self, sim_file, tmp_path, monkeypatch):
        from blockclr import cli

        def boom(*a, **k):
            raise KeyboardInterrupt

        monkeypatch.setattr(cli.bio, "write_json", boom)
        out = tmp_path / "o"
        with pytest.raises(KeyboardInterrupt):
            main(["fit", "--data", str(sim_file), "--lambda", "1,1", "--out", str(out)])
        assert not out.exists()
        assert [p.name for p in tmp_path.iterdir()] == []

    def test_module_entry_point(self, sim_file, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "blockclr", "validate", "--data", str(sim_file)],
            capture_output=True, text=True, env=dict(os.environ),
        )
        assert proc.returncode == 0, proc.stderr
        assert "valid" in proc.stdout
