import json

import numpy as np
import pytest

from jova.cli import main
from jova.config import ConfigError, RunConfig
from jova.synthetic import community_pairs


def write_ratings(path, seed=0):
    rng = np.random.default_rng(seed)
    lines = []
    for t, (u, i) in enumerate(community_pairs(n_users=80, n_items=60, per_user=15, rng=rng)):
        lines.append(f"{u[1:]}::{i[1:]}::{int(rng.integers(4, 6))}::{t}")
        if t % 5 == 0:  # a few low ratings that binarization drops
            lines.append(f"{u[1:]}::{(int(i[1:]) + 31) % 60}::2::{t}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def cfg_file(tmp_path):
    raw = tmp_path / "ratings.dat"
    write_ratings(raw)
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "seed: 7\n"
        f"out: {tmp_path / 'run'}\n"
        f"data: {{path: {raw}, format: movielens-dat, min_user_interactions: 10}}\n"
        "model: {hidden: [16], latent_dim: 4}\n"
        "train: {epochs: 5, patience: 50}\n"
        "eval: {ks: [1, 5]}\n"
    )
    return cfg


def run(cfg, *args):
    return main([args[0], "--config", str(cfg), *args[1:]])


def test_full_pipeline(cfg_file, tmp_path, capsys):
    out = tmp_path / "run"
    assert run(cfg_file, "prepare") == 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["users"] == 80 and stats["interactions"] == 80 * 15
    assert run(cfg_file, "train") == 0
    log = [json.loads(l) for l in (out / "train_log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in log] == [1, 2, 3, 4, 5]
    assert run(cfg_file, "evaluate") == 0
    report = json.loads((out / "report_test.json").read_text())
    assert sorted(report["metrics"]) == ["1", "5"]
    assert (out / "cold_start_test.tsv").read_text().startswith("L\tusers")

    capsys.readouterr()
    assert run(cfg_file, "recommend", "--users", "3", "-k", "1") == 0
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[0] == "user\trank\titem\tscore" and len(rows) == 2

    rec = tmp_path / "rec.tsv"
    assert run(cfg_file, "recommend", "--users", "3", "10", "-k", "8", "--output", str(rec)) == 0
    body = [l.split("\t") for l in rec.read_text().splitlines()[1:]]
    from jova.data import InteractionMatrix
    m = InteractionMatrix.load(out / "dataset.npz")
    for user in ("3", "10"):
        mine = [r for r in body if r[0] == user]
        assert len(mine) == 8
        seen = {m.item_ids[i] for i in m.csr("train", "valid")[m.user_index[user]].indices}
        assert not seen & {r[2] for r in mine}
        scores = [float(r[3]) for r in mine]
        assert scores == sorted(scores, reverse=True)


def test_unknown_user_and_missing_input(cfg_file, tmp_path, capsys):
    assert run(cfg_file, "prepare") == 0
    assert run(cfg_file, "train", "--epochs", "1") == 0
    assert run(cfg_file, "recommend", "--users", "nobody") != 0
    assert "nobody" in capsys.readouterr().err
    missing = tmp_path / "absent.dat"
    assert run(cfg_file, "prepare", "--input", str(missing)) != 0
    assert str(missing) in capsys.readouterr().err


def test_config_echo_round_trips(cfg_file, tmp_path):
    assert run(cfg_file, "prepare", "--set", "train.lr=0.01") == 0
    echoed = tmp_path / "run" / "config.prepare.json"
    cfg = RunConfig.from_dict(json.loads(echoed.read_text()))
    assert cfg.train.lr == 0.01 and cfg.seed == 7
    assert cfg.dumps() == echoed.read_text()


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": {"depth": 3}})
    with pytest.raises(ConfigError):
        RunConfig().override(["train.speed=1"])


def test_plain_and_zero_beta_hinge_give_identical_reports(cfg_file, tmp_path):
    reports = []
    for mode in ("jova", "jova_hinge"):
        out = tmp_path / mode
        args = ["--out", str(out), "--set", "model.beta=0"]
        assert run(cfg_file, "prepare", *args) == 0
        assert run(cfg_file, "train", "--mode", mode, *args) == 0
        assert run(cfg_file, "evaluate", *args) == 0
        reports.append(json.loads((out / "report_test.json").read_text())["metrics"])
    assert reports[0] == reports[1]
