import csv
import json
import math

import pytest

from stress_sched.cli import main


@pytest.fixture(scope="module")
def desk_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("ins") / "desk.json"
    assert main(["gen", "--preset", "desk", "--out", str(path)]) == 0
    return path


def test_curve_starts_at_rise_level(tmp_path):
    out = tmp_path / "c.csv"
    code = main(["curves", "--skill", "1", "--state", "1,5,1,5,5", "--class", "easy",
                 "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert float(rows[0]["t"]) == 0.0
    assert float(rows[0]["pf"]) == pytest.approx(math.sqrt(5 / 6), abs=1e-12)
    assert len(rows) == 481


def test_curves_to_stdout(capsys):
    assert main(["curves", "--skill", "0.8", "--state", "2,3,2,3,3", "--horizon", "10"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,pf" and len(lines) == 12


def test_bad_state_is_usage_error(capsys):
    assert main(["curves", "--skill", "1", "--state", "1,2,3"]) == 2
    assert "five" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert main(["validate", "--instance", "x.json", "--frobnicate"]) == 2
    assert main([]) == 2


def test_validate_generated_instance(desk_file):
    assert main(["validate", "--instance", str(desk_file)]) == 0


def test_validate_rejects_bad_instance(tmp_path, desk_file, capsys):
    doc = json.loads(desk_file.read_text())
    doc["globals"]["daily_cap_hours"] = -1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["validate", "--instance", str(bad)]) == 1
    missing = tmp_path / "missing.json"
    assert main(["validate", "--instance", str(missing)]) == 1


def test_gen_from_spec_file(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"m": 4, "N": 1, "D": 3, "mean_easy_rate": 20.0, "mean_hard_rate": 8.0,
                                "mean_init_perf": [0.7], "mean_cancel_coeff": [0.2], "seed": 2}))
    out = tmp_path / "small.json"
    assert main(["gen", "--spec", str(spec), "--out", str(out), "--seed", "5"]) == 0
    assert main(["validate", "--instance", str(out)]) == 0


@pytest.mark.parametrize("algo", ["ma-dqn", "ga"])
def test_solve_is_repeatable(tmp_path, desk_file, algo):
    outs = []
    for r in range(2):
        d = tmp_path / f"run{r}"
        assert main(["solve", "--instance", str(desk_file), "--algo", algo, "--seed", "3",
                     "--budget", "150", "--out", str(d)]) == 0
        outs.append(((d / "run_log.csv").read_bytes(), (d / "solution.json").read_bytes()))
    assert outs[0] == outs[1]
    sol = json.loads(outs[0][1])
    assert sol["evals"] <= 150


def test_bench_writes_summary(tmp_path, desk_file):
    out = tmp_path / "bench"
    assert main(["bench", "--instance", str(desk_file), "--runs", "2", "--algos", "ga,ma-ne",
                 "--budget", "30", "--out", str(out), "--threads", "1"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["reference"] == "ga"
    assert "p_vs_reference" in summary["algorithms"]["ma-ne"]
