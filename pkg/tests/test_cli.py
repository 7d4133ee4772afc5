import json
import subprocess
import sys
from pathlib import Path

from threadmap.cli import main

FIXTURES = Path(__file__).parent / "fixtures" / "procstat"


def test_run_two_policies(capsys):
    assert main(["run", "--scenario", "scenario1", "--policies", "bll,xll"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "program,name,threads,bll,xll"
    assert out[3] == "2,health_large,32,3620,2498"


def test_run_writes_reports(tmp_path):
    rc = main(["run", "--scenario", "scenario3", "--threads", "16",
               "--policies", "xll,linux", "--out", str(tmp_path)])
    assert rc == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "scenario3-16_comparison.csv" in names
    assert "scenario3-16_xll.csv" in names and "scenario3-16_linux.csv" in names
    assert "scenario3-16_xll_trace.jsonl" in names
    first = (tmp_path / "scenario3-16_xll_trace.jsonl").read_text().splitlines()[0]
    assert json.loads(first) == {"tick": 0, "kind": "submit", "program": 0,
                                 "thread": None, "core": None}


def test_run_json_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--scenario", "scenario2", "--policies", "xll",
                     "--format", "json", "--out", str(d)]) == 0
    assert (a / "scenario2.json").read_bytes() == (b / "scenario2.json").read_bytes()


def test_unknown_policy_exit_2(capsys):
    assert main(["run", "--scenario", "scenario1", "--policies", "foo"]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_scenario_exit_2():
    assert main(["run", "--scenario", "scenario9"]) == 2


def test_missing_subcommand_exit_2():
    assert main([]) == 2


def test_sweep_unknown_model_exit_2():
    assert main(["sweep", "--model", "nope"]) == 2


def test_sweep_small_machine(capsys):
    assert main(["sweep", "--model", "nqueens", "--cores", "4", "--policies", ""]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "n,policy,turnaround,speedup"
    assert len(lines) == 1 + 4 * 4
    assert lines[1].endswith(",1.0000")


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "scenario1", "policies": "bll"}))
    assert main(["run", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "program,name,threads,bll"
    assert main(["run", "--config", str(cfg), "--policies", "xll"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "program,name,threads,xll"


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["run", "--config", str(cfg)]) == 2


def test_scenario_file(tmp_path, capsys):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({
        "name": "tiny",
        "policies": ["static"],
        "models": [{"name": "w", "total_work": 100, "threads": 2}],
        "submissions": [{"model": "w", "at": 0}],
    }))
    assert main(["run", "--scenario", str(path)]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "0,w,2,51"


def test_parse_stat_fixture(capsys):
    assert main(["parse-stat", str(FIXTURES / "interleaved_ctxt.stat")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [c["cpu"] for c in doc["cpus"]] == [0, 1]
    assert doc["cpus"][1]["user"] == 7
    assert doc["aggregate"] is None


def test_parse_stat_malformed(capsys):
    assert main(["parse-stat", str(FIXTURES / "bad_nonint_line3.stat")]) == 1
    assert "line 3" in capsys.readouterr().err


def test_parse_stat_empty(tmp_path, capsys):
    empty = tmp_path / "empty.stat"
    empty.write_text("")
    assert main(["parse-stat", str(empty)]) == 1
    assert "no cpu lines" in capsys.readouterr().err


def test_parse_stat_missing_file():
    assert main(["parse-stat", "/nonexistent/stat"]) == 1


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "threadmap", "parse-stat", str(FIXTURES / "single_cpu2.stat")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["cpus"][0]["user"] == 840


def test_scenario_file_policies_overridden_by_flag(tmp_path, capsys):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({
        "policies": ["static"],
        "submissions": [{"model": "sort", "at": 0, "threads": 4}],
    }))
    assert main(["run", "--scenario", str(path), "--policies", "static,bll,xll,linux"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "program,name,threads,static,bll,xll,linux"
