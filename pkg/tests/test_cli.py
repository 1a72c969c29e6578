import json

import numpy as np
import pytest

from deeptop import cli, harness

FAST = ["--hidden", "8", "--warmup", "20", "--batch-size", "8", "--timesteps", "30"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    line = err.strip().splitlines()[-1]
    return json.loads(line)


def test_train_mdp_writes_logs(tmp_path, capsys):
    code, out, _ = run(capsys, "train-mdp", "--env", "ev", *FAST, "--out-dir", str(tmp_path))
    assert code == 0 and "final_avg_reward_100=" in out
    assert len((tmp_path / "run_0.csv").read_text().splitlines()) == 31


def test_train_commands_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(capsys, "train-rmab", "--env", "recovering", "--arms", "4", "--activate", "2", *FAST,
                   "--runs", "2", "--out-dir", str(tmp_path / d))[0] == 0
    for name in ("run_0.csv", "run_1.csv", "aggregate.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("arms, activate", [(10, 3), (20, 5), (30, 6)])
def test_published_bandit_settings_accepted(tmp_path, capsys, arms, activate):
    code, _, _ = run(capsys, "train-rmab", "--env", "onedim", "--arms", str(arms), "--activate", str(activate),
                     "--agent", "random", "--timesteps", "5", "--out-dir", str(tmp_path))
    assert code == 0
    cfg = harness.load_config(tmp_path / "config.txt")
    assert (cfg.arms, cfg.activate, cfg.activation_bound) == (arms, activate, 1.0)


def test_hidden_flag(tmp_path, capsys):
    run(capsys, "train-mdp", "--env", "mts", "--hidden", "64,128,64", "--agent", "random", "--timesteps", "3",
        "--out-dir", str(tmp_path))
    assert harness.load_config(tmp_path / "config.txt").hidden == (64, 128, 64)


def test_config_file_and_flag_precedence(tmp_path, capsys):
    conf = tmp_path / "c.txt"
    conf.write_text("env = inventory\ntimesteps = 12\nseed = 9\n")
    run(capsys, "train-mdp", "--config", str(conf), "--timesteps", "7", "--agent", "random", "--out-dir", str(tmp_path / "o"))
    cfg = harness.load_config(tmp_path / "o" / "config.txt")
    assert (cfg.env, cfg.timesteps, cfg.seed) == ("inventory", 7, 9)


def test_seed_env_var_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DEEPTOP_SEED", "42")
    run(capsys, "train-mdp", "--agent", "random", "--timesteps", "3", "--out-dir", str(tmp_path / "a"))
    assert harness.load_config(tmp_path / "a" / "config.txt").seed == 42
    run(capsys, "train-mdp", "--agent", "random", "--timesteps", "3", "--seed", "1", "--out-dir", str(tmp_path / "b"))
    assert harness.load_config(tmp_path / "b" / "config.txt").seed == 1


def test_unknown_config_key_error_line(tmp_path, capsys):
    conf = tmp_path / "c.txt"
    conf.write_text("foo = 1\n")
    code, _, err = run(capsys, "train-mdp", "--config", str(conf))
    assert code == 2
    e = error_of(err)
    assert e["error"] == "ConfigError" and "foo" in e["message"]


def test_usage_error_line(capsys):
    code, _, err = run(capsys, "train-mdp", "--env", "chess")
    assert code == 2 and error_of(err)["error"] == "UsageError"


def test_rmab_budget_error(capsys, tmp_path):
    code, _, err = run(capsys, "train-rmab", "--env", "onedim", "--arms", "3", "--activate", "5", "--out-dir", str(tmp_path))
    assert code == 2 and "activate" in error_of(err)["message"]


def test_missing_config_file_is_io_error(capsys, tmp_path):
    code, _, err = run(capsys, "train-mdp", "--config", str(tmp_path / "nope.txt"))
    assert code == 1 and error_of(err)["error"] == "FileNotFoundError"


def test_oracle_grad_checks(capsys):
    for mode in ("grad-check-mdp", "grad-check-rmab"):
        code, out, _ = run(capsys, "oracle", mode, "--specs", "5")
        assert code == 0 and "result=PASS" in out


def test_oracle_whittle_csv(capsys):
    code, out, _ = run(capsys, "oracle", "whittle", "--env", "onedim", "--p", "0.5", "--q", "0.5", "--n-states", "10")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "state,index" and len(lines) == 11
    idx = np.array([float(line.split(",")[1]) for line in lines[1:]])
    assert np.all(np.abs(idx) <= 1.0)


def test_oracle_whittle_non_crossing(capsys):
    code, _, err = run(capsys, "oracle", "whittle", "--p", "0.5", "--n-states", "10", "--M", "0.01")
    assert code == 2 and error_of(err)["error"] == "NonIndexableError"


def test_aggregate_command(tmp_path, capsys):
    run(capsys, "train-mdp", "--agent", "random", "--timesteps", "5", "--runs", "2", "--out-dir", str(tmp_path))
    before = (tmp_path / "aggregate.csv").read_bytes()
    (tmp_path / "aggregate.csv").unlink()
    code, _, _ = run(capsys, "aggregate", str(tmp_path))
    assert code == 0 and (tmp_path / "aggregate.csv").read_bytes() == before
    code, _, err = run(capsys, "aggregate", str(tmp_path / "empty"))
    assert code == 2 and "run_" in error_of(err)["message"]


def test_train_arm_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "train-arm", "--p", "0.5", "--n-states", "10", *FAST, "--out-dir", str(tmp_path))
    assert code == 0 and "mean_abs_error=" in out
    rows = (tmp_path / "index_0.csv").read_text().splitlines()
    assert rows[0] == "state,learned_index,whittle_index" and len(rows) == 11
