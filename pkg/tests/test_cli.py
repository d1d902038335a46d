import json
from pathlib import Path

import pytest

from hybridbf.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_VALIDATION, main

SCENARIO = Path(__file__).resolve().parents[1] / "scenarios" / "small.json"


@pytest.fixture
def fast_config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"max_outer_iters": 2, "randomization_samples": 50}))
    return p


def test_run_writes_outputs(tmp_path, fast_config):
    out = tmp_path / "out"
    code = main(["run", "--scenario", str(SCENARIO), "--config", str(fast_config), "--out", str(out), "--grid", "9x5"])
    assert code == EXIT_OK
    assert (out / "trace.jsonl").is_file() and (out / "result.json").is_file()
    assert len((out / "beampattern.csv").read_text().splitlines()) == 46


def test_run_reproducible(tmp_path, fast_config):
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        main(["run", "--scenario", str(SCENARIO), "--config", str(fast_config), "--out", str(out), "--grid", "9x5"])
        outs.append(out)
    for name in ("trace.jsonl", "beampattern.csv", "result.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_export_matches_run(tmp_path, fast_config):
    out = tmp_path / "o"
    main(["run", "--scenario", str(SCENARIO), "--config", str(fast_config), "--out", str(out), "--grid", "9x5"])
    exp = tmp_path / "e"
    code = main(["export-beampattern", "--scenario", str(SCENARIO), "--result", str(out / "result.json"),
                 "--out", str(exp), "--grid", "9x5"])
    assert code == EXIT_OK
    assert (exp / "beampattern.csv").read_bytes() == (out / "beampattern.csv").read_bytes()


def test_validation_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    obj = json.loads(SCENARIO.read_text())
    obj["bogus"] = 1
    bad.write_text(json.dumps(obj, indent=1))
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION
    assert "bogus" in capsys.readouterr().err
    assert main(["run", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_VALIDATION
    obj = json.loads(SCENARIO.read_text())
    obj["beta_lo"] = [50.0, 50.0]
    bad.write_text(json.dumps(obj))
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION


def test_infeasible_exit(tmp_path):
    obj = json.loads(SCENARIO.read_text())
    obj["gamma_min"] = [1e6, 1e6]
    p = tmp_path / "inf.json"
    p.write_text(json.dumps(obj))
    out = tmp_path / "o"
    assert main(["run", "--scenario", str(p), "--out", str(out), "--grid", "3x3"]) == EXIT_INFEASIBLE
    term = json.loads((out / "trace.jsonl").read_text().splitlines()[-1])
    assert term["infeasibility"]["family"] == "sinr"


def test_sweep(tmp_path, fast_config):
    out = tmp_path / "sw"
    code = main(["sweep", "--scenario", str(SCENARIO), "--config", str(fast_config), "--out", str(out),
                 "--sweep-field", "p_max", "--sweep-values", "1.0,1.5", "--grid", "3x3"])
    assert code == EXIT_OK
    rows = (out / "summary.csv").read_text().splitlines()
    assert rows[0].startswith("index,p_max") and len(rows) == 3
    assert main(["sweep", "--scenario", str(SCENARIO), "--out", str(out), "--sweep-field", "nope.x",
                 "--sweep-values", "1"]) == EXIT_VALIDATION


def test_verify(tmp_path):
    assert main(["verify", "--trials", "5", "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "oracle.jsonl").read_text().splitlines()
    assert len(lines) == 5 and all(json.loads(l)["passed"] for l in lines)
