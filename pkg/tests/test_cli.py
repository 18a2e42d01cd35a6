import csv
import json

import pytest

from matcon import __version__
from matcon.cli import TAIL_COLUMNS, main
from matcon.scenario import load_scenario, preset_scenario, save_scenario


@pytest.fixture
def poisson_file(tmp_path):
    path = tmp_path / "poisson.json"
    save_scenario(preset_scenario("counting_matrix", C=[[1.0, 1.0], [1.0, 1.0]], lam=1.0, t=1.0,
                                  scenario_name="poisson2x2"), path)
    return path


def test_bound_static_gaussian_prints_sigma(tmp_path, capsys):
    assert main(["bound", "static_gaussian", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "sigma_sq=20\n" in out
    art = json.loads((tmp_path / "bound_static_gaussian.json").read_text())
    assert art["result"]["variance"]["sigma_sq"] == 20.0
    assert art["version"] == __version__
    assert art["scenario"]["preset"] == "static_gaussian"


def test_presets_lists_five(tmp_path, capsys):
    assert main(["presets", "--write", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5
    for name in ("counting_matrix", "scalar_point_process", "static_gaussian", "static_poisson", "tropp_continuous"):
        assert any(line.startswith(name + ":") for line in lines)
        assert load_scenario(tmp_path / f"{name}.json").preset == name


def test_verify_tail_csv_is_deterministic(tmp_path, poisson_file, monkeypatch):
    args = ["verify-tail", str(poisson_file), "--x", "1,2,3", "--reps", "5000", "--seed", "42"]
    assert main(args + ["--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "4"]) == 0
    monkeypatch.setenv("MATCON_THREADS", "3")
    assert main(args + ["--out", str(tmp_path / "c")]) == 0
    files = ["tail_poisson2x2.csv", "tail_poisson2x2.json"]
    for f in files:
        a = (tmp_path / "a" / f).read_bytes()
        assert a == (tmp_path / "b" / f).read_bytes() == (tmp_path / "c" / f).read_bytes()
    with open(tmp_path / "a" / files[0]) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TAIL_COLUMNS
    assert [r[1] for r in rows[1:]] == ["1", "2", "3"]
    assert all(r[-1] == "PASS" for r in rows[1:])
    # an artifact embeds enough to rerun itself
    art = json.loads((tmp_path / "a" / files[1]).read_text())
    assert art["seed"] == 42 and art["flags"]["reps"] == 5000
    assert art["scenario"]["name"] == "poisson2x2"


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["bound", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "driver": "jump"}))
    assert main(["bound", str(bad), "--out", str(tmp_path)]) == 2
    assert "horizon" in capsys.readouterr().err
    assert main(["verify-tail", "static_poisson", "--x", "a,b", "--out", str(tmp_path)]) == 2
    assert main(["verify-tail", "static_poisson", "--x", "-1", "--out", str(tmp_path)]) == 2
    assert main(["simulate", "static_poisson", "--reps", "0", "--out", str(tmp_path)]) == 2
    assert main(["check-compensator", "static_poisson", "--K", "1", "--out", str(tmp_path)]) == 2
    assert main(["check-supermartingale", "static_gaussian", "--xi", "1", "--threads", "0",
                 "--out", str(tmp_path)]) == 2


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MATCON_THREADS", "many")
    assert main(["simulate", "static_poisson", "--reps", "10", "--out", str(tmp_path)]) == 2


def test_simulate_writes_norms(tmp_path):
    assert main(["simulate", "static_poisson", "--reps", "50", "--seed", "3", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "simulate_static_poisson.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["replicate", "op_norm"] and len(rows) == 51


def test_supermartingale_compensator_lemmas_and_report(tmp_path, poisson_file, capsys):
    out = ["--out", str(tmp_path)]
    assert main(["check-supermartingale", str(poisson_file), "--xi", "1,3", "--reps", "2000"] + out) == 0
    assert main(["check-compensator", str(poisson_file), "--xi", "1", "--K", "20"] + out) == 0
    assert main(["check-lemmas", "--reps", "5000"] + out) == 0
    assert main(["bound", str(poisson_file)] + out) == 0
    capsys.readouterr()
    assert main(["report"] + out) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["verdict"] == "PASS"
    assert rep["verdict_counts"] == {"PASS": 3, "FAIL": 0}
    assert "overall: PASS" in capsys.readouterr().out


def test_report_fails_on_failed_artifact(tmp_path):
    (tmp_path / "x.json").write_text(json.dumps({"command": "verify-tail", "verdict": "FAIL"}))
    assert main(["report", "--out", str(tmp_path)]) == 1
    assert main(["report", "--out", str(tmp_path / "empty")]) == 2
