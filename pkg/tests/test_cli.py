import json
import subprocess
import sys

import pytest

from cexlab.cli import CSV_COLUMNS, SCHEMA_VERSION, run


def _doc(capsys, argv):
    code = run(argv)
    return code, json.loads(capsys.readouterr().out)


def test_verify_walks_deterministic(capsys):
    argv = ["verify", "appendix", "--section", "walks", "--seed", "7", "--n", "2000"]
    run(argv)
    first = capsys.readouterr().out
    run(argv + ["--threads", "3"])
    second = capsys.readouterr().out.replace('"--threads", "3", ', "").replace(', "--threads", "3"', "")
    assert first == second
    doc = json.loads(first)
    assert doc["schema_version"] == SCHEMA_VERSION and doc["seed"] == 7 and doc["pass"]


@pytest.mark.parametrize("argv", [["pipeline", "hilbert", "--M", "1"], ["verify", "appendix", "--bogus"],
                                  ["nonsense"], ["measure", "--input", "/nonexistent.json"],
                                  ["verify", "appendix", "--threads", "0"]])
def test_usage_errors_exit_2(argv, capsys):
    assert run(argv) == 2
    assert capsys.readouterr().err


def test_build_transform_measure_round_trip(tmp_path, capsys):
    seed = tmp_path / "seed.json"
    out = tmp_path / "out.json"
    code, doc = _doc(capsys, ["build", "two-valued-seed", "--Q", "4", "--tree", str(seed)])
    assert code == 0 and doc["reports"][0]["ap_dyadic"] == pytest.approx(4.0)
    code, doc = _doc(capsys, ["transform", "small-step", "--input", str(seed), "--d", "4", "--tree", str(out)])
    assert code == 0
    rep = doc["reports"][0]
    assert rep["values"]["ap_input"] == pytest.approx(4.0)
    assert rep["ap_dyadic"] <= 4 * 4.0
    code, doc = _doc(capsys, ["measure", "--input", str(out)])
    assert code == 0 and doc["reports"][0]["ap_dyadic"] == pytest.approx(rep["ap_dyadic"])
    code, doc = _doc(capsys, ["transform", "remodel", "--input", str(out), "--steps", "1", "--chase-bits", "8"])
    assert code == 0 and doc["reports"][0]["checks"]["characteristic_preserved"]


def test_sweep_csv_and_report(tmp_path, capsys):
    csv_path = tmp_path / "sweep.csv"
    js = tmp_path / "sweep.json"
    code = run(["sweep", "--pipeline", "large-step", "--M", "4,8", "--csv", str(csv_path), "--json", str(js)])
    assert code == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    assert float(lines[1].split(",")[3]) == pytest.approx(float(lines[1].split(",")[2]) / 4)
    code, doc = _doc(capsys, ["report", str(js)])
    assert code == 0 and all(s["pass"] for s in doc["summary"])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cexlab", "verify", "hilbert-lemma"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["pass"]
    res = subprocess.run([sys.executable, "-m", "cexlab", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
