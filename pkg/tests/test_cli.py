import json

import pytest

from walkrep import cli, config
from walkrep.errors import ConfigError


def test_missing_config_exits_2(tmp_path):
    status = cli.main(["tower", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert status == 2


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 1, "bogus": True}))
    assert cli.main(["tower", "--config", str(path), "--out", str(tmp_path)]) == 2
    with pytest.raises(ConfigError):
        config.load_config(str(path))


def test_nested_unknown_keys_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"weights": {"q": 0.5, "zzz": 1}}))
    with pytest.raises(ConfigError):
        config.load_config(str(path))


def test_invalid_values_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"weights": {"q": 1.5}}))
    with pytest.raises(ConfigError):
        config.load_config(str(path))


def test_config_defaults_and_digest():
    cfg = config.ExperimentConfig()
    assert cfg.weights.q == 0.5
    assert cfg.group.kind == "integers"
    assert len(cfg.digest()) == 16
    assert config.config_from_dict({}).digest() == cfg.digest()


def test_tower_command_writes_reports(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"seed": 9, "samples": {"tower_samples": 4000}}))
    status = cli.main(["tower", "--config", str(path), "--out", str(tmp_path / "out")])
    assert status == 0
    report = json.loads((tmp_path / "out" / "tower" / "report.json").read_text())
    assert report["pass"] is True
    assert (tmp_path / "out" / "tower" / "run_meta.json").exists()


def test_feldman_command(tmp_path):
    status = cli.main(["feldman", "--out", str(tmp_path / "out"), "--seed", "3"])
    assert status == 0


def test_weights_csv_row_count(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {
                "weights": {"q": 0.5, "n_max": 8},
                "second_weights": {"q": 0.5, "n_max": 4},
            }
        )
    )
    status = cli.main(["weights", "--config", str(path), "--out", str(tmp_path / "out")])
    assert status == 0
    rows = (tmp_path / "out" / "weights" / "group_weights.csv").read_text().strip().split("\n")
    assert len(rows) - 1 == 17  # |B_8| on the integers
    rows2 = (tmp_path / "out" / "weights" / "second_group_weights.csv").read_text().strip().split("\n")
    assert len(rows2) - 1 == 2 * 3**4 - 1  # |B_4| in the rank-2 free group


def test_seed_override_changes_digested_config(tmp_path):
    cfg = config.ExperimentConfig()
    import dataclasses

    other = dataclasses.replace(cfg, seed=cfg.seed + 1)
    assert other.digest() != cfg.digest()
