import json

import pytest
from pydantic import ValidationError

from spikejscc.config import ConfigError, ExperimentConfig, load_config, parse_config


def test_defaults_are_the_synthetic_task():
    cfg = ExperimentConfig()
    assert (cfg.d_u, cfg.dataset.num_steps, cfg.d_x, cfg.decoder_hidden) == (16, 20, 16, 16)
    assert cfg.channel.noiseless


@pytest.mark.parametrize("rate", [0.0, -1.0])
def test_nonpositive_rate_names_field(rate):
    with pytest.raises(ConfigError, match="topology.rate"):
        parse_config({"topology": {"rate": rate}})


def test_tiny_rate_rounds_to_zero():
    with pytest.raises(ConfigError, match="d_x"):
        parse_config({"topology": {"rate": 0.01}})


def test_unknown_field_rejected():
    with pytest.raises(ConfigError, match="hyperparams.etaa"):
        parse_config({"hyperparams": {"etaa": 0.1}})


def test_uncoded_needs_rate_one():
    with pytest.raises(ConfigError, match="rate"):
        parse_config({"scheme": "uncoded", "topology": {"rate": 0.5}})


def test_missing_dataset_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config({"dataset": {"source": "file", "path": str(tmp_path / "nope.jsonl")}})


def test_with_updates_revalidates():
    cfg = ExperimentConfig().with_updates(**{"channel.snr_db": 0.0, "seed": 3})
    assert cfg.channel.snr_db == 0.0 and cfg.seed == 3
    with pytest.raises(ValidationError):
        cfg.with_updates(**{"hyperparams.kappa": 1.0})


def test_frozen():
    with pytest.raises(ValidationError):
        ExperimentConfig().seed = 4


def test_load_plain_and_manifest(tmp_path):
    cfg = ExperimentConfig(iterations=7)
    (tmp_path / "c.json").write_text(cfg.model_dump_json())
    (tmp_path / "m.json").write_text(json.dumps({"manifest_version": 1, "config": cfg.model_dump(mode="json")}))
    assert load_config(tmp_path / "c.json") == cfg == load_config(tmp_path / "m.json")


def test_bad_json(tmp_path):
    (tmp_path / "c.json").write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(tmp_path / "c.json")
