import os

import pytest
from hypothesis import given, settings, strategies as st

from nmarl.cli import main
from nmarl.config import RunConfig, resolve
from nmarl.errors import ConfigError


@settings(max_examples=40, deadline=None)
@given(env=st.sampled_from(["cacc_catchup", "cacc_slowdown", "chain"]),
       proto=st.sampled_from(["ia2c", "consenet", "fprint", "dial", "commnet", "neurcomm"]),
       alpha=st.floats(0, 1), gamma=st.floats(0.01, 1), seed=st.integers(0, 2**63 - 1),
       greedy=st.booleans())
def test_ini_roundtrip(tmp_path_factory, env, proto, alpha, gamma, seed, greedy):
    cfg = resolve(env, {"protocol": proto, "alpha": alpha, "gamma": gamma, "seed": seed,
                        "greedy": greedy})
    path = tmp_path_factory.mktemp("ini") / "c.ini"
    cfg.to_ini(path)
    assert RunConfig.from_ini(path) == cfg


def test_unknown_names_list_valid_values():
    with pytest.raises(ConfigError, match="neurcomm"):
        resolve("chain", {"protocol": "maddpg"})
    with pytest.raises(ConfigError, match="cacc_catchup"):
        resolve("atsc")
    with pytest.raises(ConfigError, match="unknown config key"):
        resolve("chain", {"learning_rate": 1.0})


def test_unknown_ini_key(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nseeds = 3\n")
    with pytest.raises(ConfigError, match="seeds"):
        RunConfig.from_ini(p)


def _one_dir(parent):
    (d,) = os.listdir(parent)
    return os.path.join(parent, d)


def test_cli_train_evaluate_and_replay(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["train", "--env", "cacc_catchup", "--protocol", "neurcomm", "--alpha", "1.0",
                 "--steps", "120", "--seed", "7", "--out", str(out)]) == 0
    run = _one_dir(out)
    assert run.endswith("-train-seed7")
    assert os.path.exists(os.path.join(run, "log.csv"))
    ck = os.path.join(run, "checkpoints", "final")
    assert os.path.isdir(ck)

    # the written config replays the run bit-exactly
    out2 = tmp_path / "replay"
    assert main(["train", "--config", os.path.join(run, "config.ini"), "--out", str(out2)]) == 0
    ck2 = os.path.join(_one_dir(out2), "checkpoints", "final")
    for f in os.listdir(ck):
        assert open(os.path.join(ck, f), "rb").read() == open(os.path.join(ck2, f), "rb").read()

    capsys.readouterr()
    assert main(["evaluate", "--checkpoint", ck, "--episodes", "2", "--greedy",
                 "--out", str(tmp_path / "ev")]) == 0
    text = capsys.readouterr().out
    assert "avg vehicle headway" in text and "collision number" in text
    ev = _one_dir(tmp_path / "ev")
    assert {"metrics.csv", "metrics.txt", "returns.csv"} <= set(os.listdir(ev))

    assert main(["evaluate", "--checkpoint", ck, "--protocol", "dial", "--episodes", "1",
                 "--out", str(tmp_path / "bad")]) == 3


def test_cli_config_errors(capsys):
    assert main(["train", "--protocol", "maddpg", "--steps", "1"]) == 2
    assert "neurcomm" in capsys.readouterr().err
    assert main(["train", "--config", "/nonexistent.ini"]) == 2
    assert main(["evaluate", "--checkpoint", "/nonexistent"]) == 3


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--protocol", "dial"]) == 0
    line = capsys.readouterr().out
    assert line.startswith("dial: max relative error") and "ok" in line


def test_cli_proptest(capsys):
    assert main(["proptest", "--seed", "1"]) == 0
    assert capsys.readouterr().out.count("PASS") == 3


def test_cli_sweep(tmp_path, capsys):
    assert main(["sweep-alpha", "--env", "chain", "--protocol", "ia2c", "--steps", "256",
                 "--alphas", "0,1", "--window", "2", "--out", str(tmp_path)]) == 0
    assert "alpha=0:" in capsys.readouterr().out
    assert os.path.exists(os.path.join(_one_dir(tmp_path), "curves.csv"))
