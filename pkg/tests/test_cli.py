import csv

import pytest

from seqchoice.cli import ExperimentConfig, load_config, parse_config, resolve_seed, run_command
from seqchoice.errors import ConfigError

SENSOR_FREE_TOML = """
seed = 3
[synth]
occupants = 1
days = 7
signal = "weather"
[experiment]
resources = ["ceiling_fan"]
models = ["logistic"]
cv_folds = 2
grid_budget = 1
max_train_rows = 4000
"""


def test_no_arguments_prints_usage_and_exits_one(capsys):
    assert run_command([]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_subcommand_is_a_usage_error(capsys):
    assert run_command(["frobnicate"]) == 1
    assert capsys.readouterr().err.startswith("ERROR ")


def test_unknown_config_key_exits_one(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[experiment]\nmodles = ['logistic']\n")
    assert run_command(["synth", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "modles" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        parse_config({"colour": 1})


def test_bad_dataset_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,occupant_id\n2018-02-19 00:00,o1\n")
    assert run_command(["ingest", "--input", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert capsys.readouterr().err.startswith("ERROR ")


def test_seed_precedence():
    cfg = ExperimentConfig(seed=5)
    assert resolve_seed(None, cfg, {}) == 5
    assert resolve_seed(None, cfg, {"SEQCHOICE_SEED": "11"}) == 11
    assert resolve_seed(2, cfg, {"SEQCHOICE_SEED": "11"}) == 2
    with pytest.raises(ConfigError):
        resolve_seed(None, cfg, {"SEQCHOICE_SEED": "x"})


def test_synth_twice_is_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        assert run_command(["synth", "--seed", "7", "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name / "synth.csv").read_bytes())
    assert outs[0] == outs[1]
    assert run_command(["synth", "--seed", "8", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "synth.csv").read_bytes() != outs[0]


def test_evaluate_sensor_free_on_weather_only_synth(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SENSOR_FREE_TOML)
    out = tmp_path / "o"
    assert run_command(["evaluate", "--config", str(cfg), "--scenario", "sensor-free", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "results.csv")))
    assert [(r["model"], r["scenario"], r["status"]) for r in rows] == [("logistic", "sensor-free", "ok")]
    assert float(rows[0]["auc"]) >= 0.9
    assert (out / "report.txt").read_text().startswith("model")


def test_config_round_trip_of_sections(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SENSOR_FREE_TOML + '[split]\ntrain_start = 2018-02-19\ntrain_end = 2018-02-22\n')
    with pytest.raises(ConfigError):
        load_config(str(cfg))
    cfg.write_text(SENSOR_FREE_TOML)
    c = load_config(str(cfg))
    assert c.seed == 3 and c.experiment.resources == ("ceiling_fan",) and c.synth.signal == "weather"
