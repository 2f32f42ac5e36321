import io
import json
import subprocess
import sys

import pytest
import yaml

from bcisim.cli import ERROR, INFEASIBLE, OK, main
from bcisim.config import ENV_CONFIG_DIR, ClusterConfig, ExperimentSpec
from bcisim.errors import ConfigurationError
from bcisim.experiments import run


# ---------------------------------------------------------------- configuration

def test_default_config_sections():
    cfg = ClusterConfig.default()
    assert cfg.n_nodes == 11 and cfg.budgets() == [15.0] * 11
    assert set(cfg.presets()) == {"DTW", "EUCLID", "XCOR"}
    assert cfg.radio("intra").rate_bps == 7e6 and cfg.radio("external").rate_bps == 46e6


def test_overrides_merge_over_defaults():
    cfg = ClusterConfig.from_dict({"cluster": {"nodes": 3}, "nodes": [{"id": 2, "budget_mw": 12}]})
    assert cfg.budgets() == [15.0, 15.0, 12.0]
    assert cfg.cluster().budgets_mw == [15.0, 15.0, 12.0]
    assert cfg.app("seizure")["window"] == 120


@pytest.mark.parametrize("doc", [{"clusterz": {}}, {"cluster": {"nodes": 0}}, {"radios": {"ber": 2}},
                                 {"cluster": {"budget_mw": 0}}])
def test_bad_config_rejected(doc):
    with pytest.raises(ConfigurationError):
        ClusterConfig.from_dict(doc)


def test_config_dir_from_environment(tmp_path, monkeypatch):
    (tmp_path / "tiny.yaml").write_text(yaml.safe_dump({"cluster": {"nodes": 2}}))
    monkeypatch.setenv(ENV_CONFIG_DIR, str(tmp_path))
    assert ClusterConfig.load("tiny").n_nodes == 2
    spec = ExperimentSpec.from_dict({"scenario": "movement-intent", "cluster": "tiny"})
    assert spec.config.n_nodes == 2


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"scenario": "warp-drive"})
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"scenario": "ber-sweep", "cluster": "no-such-config"})


# ---------------------------------------------------------------- experiment runs

def _spec(tmp_path, doc):
    p = tmp_path / "spec.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


def test_same_spec_and_seed_give_identical_metrics(tmp_path):
    doc = {"scenario": "ber-sweep", "sweep": {"ber": [1e-4, 1e-3]}, "seeds": [3],
           "options": {"trials": 300, "verdict_trials": 20}}
    a, b = tmp_path / "a", tmp_path / "b"
    run(ExperimentSpec.from_dict(doc), a)
    run(ExperimentSpec.from_dict(doc), b)
    assert (a / "ber-sweep.jsonl").read_bytes() == (b / "ber-sweep.jsonl").read_bytes()
    rows = [json.loads(line) for line in (a / "ber-sweep.jsonl").read_text().splitlines()]
    assert {r["seed"] for r in rows} == {3}
    assert (a / "ber-sweep.summary.json").exists() and (a / "ber-sweep.timing.jsonl").exists()


def test_signals_more_fragile_than_hashes(tmp_path):
    doc = {"scenario": "ber-sweep", "sweep": {"ber": [1e-5, 1e-4, 1e-3]}, "options": {"trials": 500, "verdict_trials": 10}}
    run(ExperimentSpec.from_dict(doc), tmp_path)
    rows = [json.loads(line) for line in (tmp_path / "ber-sweep.jsonl").read_text().splitlines()]
    sig = {r["ber"]: r["frame_error"] for r in rows if r["frame"] == "signal"}
    hsh = {r["ber"]: r["frame_error"] for r in rows if r["frame"] == "hash"}
    assert sig[1e-3] > sig[1e-4] > sig[1e-5]
    assert all(sig[b] >= hsh[b] for b in sig)


def test_infeasible_points_are_recorded(tmp_path):
    doc = {"scenario": "movement-intent", "cluster": {"cluster": {"budget_mw": 3}}, "sweep": {"nodes": [2, 3]},
           "options": {"models": 5}}
    run(ExperimentSpec.from_dict(doc), tmp_path)
    rows = [json.loads(line) for line in (tmp_path / "movement-intent.jsonl").read_text().splitlines()]
    assert [r["status"] for r in rows] == ["infeasible", "infeasible"]


# ---------------------------------------------------------------- command line

def test_cli_run(tmp_path, capsys):
    spec = _spec(tmp_path, {"scenario": "throughput-sweep", "sweep": {"nodes": [2, 11]}, "output": str(tmp_path / "o")})
    assert main(["run", str(spec)]) == OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["raw_dtw_channels"] == 14
    assert (tmp_path / "o" / "throughput-sweep.jsonl").exists()


def test_cli_schedule_validate(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["schedule", "seizure", "--nodes", "3", "-o", str(out)]) == OK
    assert main(["validate", str(out)]) == OK
    assert json.loads(capsys.readouterr().out)["ok"] is True
    doc = json.loads(out.read_text())
    doc["budgets_mw"] = [4.0] * 3
    out.write_text(json.dumps(doc))
    assert main(["validate", str(out)]) == INFEASIBLE


def test_cli_schedule_infeasible(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"cluster": {"budget_mw": 3}}))
    assert main(["schedule", "seizure", "--config", str(cfg), "--nodes", "2"]) == INFEASIBLE
    assert json.loads(capsys.readouterr().err)["status"] == "infeasible"


@pytest.mark.parametrize("argv", [[], ["bogus"], ["run", "/no/such/spec.yaml"], ["schedule", "no-such-graph"],
                                  ["validate", "/no/such.json"]])
def test_cli_errors_exit_2(argv):
    assert main(argv) == ERROR


def test_cli_one_shot_query(capsys):
    q = "from 1 select data[0][-2000:-1990] where true"
    assert main(["query", "default", "--nodes", "2", "--electrodes", "2", "--seconds", "3", "-e", q]) == OK
    lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert lines[0]["record"]["node"] == 1 and "metrics" in lines[-1]


def test_repl_session_subprocess():
    script = "\n".join([
        "from select",
        ":pause",
        "from * select data[:][-1:0] where true",
        ":quit",
        "this line is never read",
    ]) + "\n"
    p = subprocess.run([sys.executable, "-m", "bcisim.cli", "query", "default", "--nodes", "2", "--electrodes", "2",
                        "--seconds", "3"], input=script, capture_output=True, text=True, timeout=120)
    assert p.returncode == 0, p.stderr
    lines = [json.loads(x) for x in p.stdout.splitlines()]
    assert lines[0]["ready"] and lines[0]["ground_truth"]["node"] == 1
    assert "error" in lines[1] and lines[1]["column"] == 6
    assert lines[2] == {"autonomous": "paused"}
    assert any("metrics" in x for x in lines[3:])
