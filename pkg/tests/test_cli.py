import json
import subprocess
import sys

import pytest

from mdpgape import bench, cli
from mdpgape.cli import format_count, main
from mdpgape.errors import NumericError


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("x, text", [(7.776e9, "7.776e9"), (1.31072e13, "1.311e13"),
                                     (2.5e16, "2.5e16"), (42.0, "42")])
def test_format_count(x, text):
    assert format_count(x) == text


def test_nss(capsys):
    assert run(["nss", "--H", "6", "--B", "2", "--K", "5", "--eps", "1"], capsys)[:2] == (0, "7.776e9\n")


def test_plan_smoke(capsys):
    code, out, _ = run(["plan", "--S", "12", "--K", "3", "--eps", "1", "--seed", "2"], capsys)
    assert code == 0
    fields = dict(kv.split("=") for kv in out.split())
    assert fields["stop"] == "confidence"
    assert int(fields["n"]) == 6 * int(fields["tau"])


def test_plan_json_and_saved_mdp(tmp_path, capsys):
    path = tmp_path / "m.json"
    assert run(["generate", "--S", "10", "--K", "2", "--seed", "4", "--out", str(path)], capsys)[0] == 0
    code, out, _ = run(["plan", "--mdp", str(path), "--eps", "1", "--json"], capsys)
    rec = json.loads(out)
    assert code == 0 and rec["stop_reason"] == "confidence" and rec["simple_regret"] >= 0
    assert rec["seeds"] == {"episode": 1_000_000, "mdp": None}


def test_generate_uses_output_env_var(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_ENV_VAR, str(tmp_path / "outdir"))
    assert run(["generate", "--S", "6", "--K", "2", "--seed", "9"], capsys)[0] == 0
    assert (tmp_path / "outdir" / "mdp-9.json").exists()


@pytest.mark.parametrize("argv", [
    ["plan"],
    ["nss", "--H", "6"],
    ["frobnicate"],
    ["plan", "--eps", "1", "--delta", "2"],
    ["plan", "--eps", "1", "--S", "1", "--B", "2"],
    ["plan", "--eps", "1", "--gamma", "1.5"],
])
def test_bad_usage_exits_two(argv, capsys):
    assert run(argv, capsys)[0] == 2


def test_missing_files_exit_two(tmp_path, capsys):
    assert run(["plan", "--mdp", str(tmp_path / "nope.json"), "--eps", "1"], capsys)[0] == 2
    assert run(["campaign", str(tmp_path / "nope.yaml")], capsys)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["plan", "--mdp", str(bad), "--eps", "1"], capsys)[0] == 2


def test_run_failure_exits_one(monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericError("solver stalled", 1.0)

    monkeypatch.setattr(cli, "plan", boom)
    code, _, err = run(["plan", "--S", "8", "--K", "2", "--eps", "1"], capsys)
    assert code == 1 and "solver stalled" in err


def test_campaign_command(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("mode: fixed_confidence\nenv: {states: 10, actions: 2}\neps_grid: [1.0]\n"
                   "replications: 2\n")
    code, out, _ = run(["campaign", str(cfg), "--out", str(tmp_path / "o"), "--eps", "1", "0.8"],
                       capsys)
    assert code == 0 and "wrote" in out
    text = (tmp_path / "o" / "results.csv").read_text()
    assert text.count("\ngape,") == 4


def test_campaign_with_failed_runs_exits_one(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericError("solver stalled", 1.0)

    monkeypatch.setattr(bench, "plan", boom)
    cfg = tmp_path / "c.yaml"
    cfg.write_text("mode: fixed_confidence\nenv: desk\neps_grid: [1.0]\nreplications: 1\n")
    assert run(["campaign", str(cfg), "--out", str(tmp_path / "o")], capsys)[0] == 1


def test_bad_campaign_file_exits_two(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("mode: scaling\neps_grid: [1.0]\n")
    assert run(["campaign", str(cfg)], capsys)[0] == 2


def test_verify_concentration(tmp_path, capsys):
    code, out, _ = run(["verify", "concentration", "--delta", "0.1", "--trials", "50",
                        "--length", "100", "--out", str(tmp_path)], capsys)
    lines = out.splitlines()
    assert len(lines) == 5 and all(l.startswith(("PASS", "FAIL")) for l in lines)
    assert code == (0 if all(l.startswith("PASS") for l in lines) else 1)
    assert (tmp_path / "coverage.csv").exists()


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mdpgape.cli", "nss", "--H", "8", "--B", "2",
                           "--K", "5", "--eps", "0.5"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "1.311e13"
