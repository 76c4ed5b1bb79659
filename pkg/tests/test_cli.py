from __future__ import annotations

import json

from mapless_nav.cli import main


def test_gen_run_plot_replay(tmp_path, capsys):
    assert main(["gen", "--seed", "3", "--deceptive", "--target", "sofa", "--out", str(tmp_path / "w")]) == 0
    world = tmp_path / "w" / "world_0003.json"
    assert world.exists()
    assert main(["run", "--world", str(world), "--seed", "1", "--no-memory", "--out", str(tmp_path / "run")]) == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    log = tmp_path / "run" / "trajectory.jsonl"
    assert (tmp_path / "run" / "trajectory.svg").read_text().startswith("<svg")
    assert main(["replay", str(log), "--world", str(world)]) == 0
    replayed = json.loads(capsys.readouterr().out.strip())
    assert replayed["match"] is True and replayed["final_dts"] == result["final_dts"]
    assert main(["plot", str(log), "--world", str(world), "--out", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "trajectory.svg").exists()


def test_run_from_config_with_overrides(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"world_seed": 2, "max_steps": 40, "backend": "oracle"}))
    assert main(["run", "--config", str(cfg), "--views", "3", "--n", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["steps"] <= 40


def test_invalid_input_exit_code(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"world_seed": 1, "views": 5}))
    assert main(["run", "--config", str(bad)]) == 1
    assert "error" in capsys.readouterr().err


def test_backend_failure_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("MAPLESS_NAV_ENDPOINT", raising=False)
    assert main(["run", "--world-seed", "1", "--backend", "remote"]) == 2


def test_replay_mismatch_exit_code(tmp_path, capsys):
    assert main(["run", "--world-seed", "5", "--seed", "0", "--out", str(tmp_path)]) == 0
    log = tmp_path / "trajectory.jsonl"
    lines = log.read_text().splitlines()
    record = json.loads(lines[-1])
    record["result"]["success"] = not record["result"]["success"]
    lines[-1] = json.dumps(record)
    log.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(log)]) == 1


def test_bench_prints_table(tmp_path, capsys):
    suite = tmp_path / "s.json"
    suite.write_text(
        json.dumps(
            {
                "name": "s",
                "worlds": {"generator": {}, "seeds": [0]},
                "episode_seeds": [0, 1],
                "base": {"max_steps": 60},
                "conditions": {"a": {"memory": True}, "b": {"memory": False}},
            }
        )
    )
    assert main(["bench", str(suite), "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "condition,N,SR,SPL,DTS_f,ER" and len(out) == 3
    assert (tmp_path / "o" / "s_metrics.csv").exists()
