import json

import pytest

from kgssl.config import ConfigError, config_hash, load_grid_config, load_run_config


def write_config(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


def fixture_files(tmp_path):
    (tmp_path / "g.tsv").write_text("a\tr\tb\n", encoding="utf-8")
    return {"triples": "g.tsv"}


def test_minimal_run_config(tmp_path):
    cfg = load_run_config(write_config(tmp_path, {"graph": fixture_files(tmp_path)}))
    assert cfg.model.task == "feature_reconstruction"
    assert cfg.training.epochs == 50
    assert cfg.training.seeds == (0, 1, 2)
    assert cfg.training.fanout == 200


def test_all_violations_reported_at_once(tmp_path):
    bad = {
        "graph": {"triples": "missing.tsv"},
        "model": {"task": "nonsense"},
        "training": {"epochs": -1, "seeds": []},
    }
    with pytest.raises(ConfigError) as exc_info:
        load_run_config(write_config(tmp_path, bad))
    violations = exc_info.value.violations
    assert len(violations) >= 3
    joined = "\n".join(violations)
    assert "missing.tsv" in joined
    assert "task" in joined
    assert "epochs" in joined
    assert "seeds" in joined


def test_task_decoder_mismatch_flagged(tmp_path):
    bad = {"graph": fixture_files(tmp_path),
           "model": {"task": "relation_reconstruction", "decoder": "mlp"}}
    with pytest.raises(ConfigError, match="not valid for task"):
        load_run_config(write_config(tmp_path, bad))


def test_unknown_model_key_flagged(tmp_path):
    bad = {"graph": fixture_files(tmp_path), "model": {"learning_rate": 3}}
    with pytest.raises(ConfigError, match="unknown key"):
        load_run_config(write_config(tmp_path, bad))


def test_paths_resolved_relative_to_config(tmp_path):
    sub = tmp_path / "nested"
    sub.mkdir()
    (sub / "g.tsv").write_text("a\tr\tb\n", encoding="utf-8")
    cfg = load_run_config(write_config(sub, {"graph": {"triples": "g.tsv"}}, name="c.json"))
    assert cfg.graph.triples == str(sub / "g.tsv")


def test_config_hash_stable_and_order_independent():
    a = config_hash({"b": 1, "a": [1, 2]})
    b = config_hash({"a": [1, 2], "b": 1})
    assert a == b
    assert a != config_hash({"a": [2, 1], "b": 1})


class TestGridConfig:
    def test_explicit_configs(self, tmp_path):
        obj = {
            "graphs": {"g1": fixture_files(tmp_path)},
            "configs": [
                {"task": "feature_reconstruction", "encoder": "gcn", "decoder": "mlp"},
            ],
            "training": {"epochs": 1, "seeds": [0]},
        }
        cfg = load_grid_config(write_config(tmp_path, obj))
        assert len(cfg.configs) == 1
        assert "g1" in cfg.graphs

    def test_cartesian_expansion_respects_task_decoders(self, tmp_path):
        obj = {
            "graphs": {"g1": fixture_files(tmp_path)},
            "grid": {
                "tasks": ["relation_reconstruction", "contrastive"],
                "encoders": ["rgcn", "gat"],
            },
            "training": {"seeds": [0]},
        }
        cfg = load_grid_config(write_config(tmp_path, obj))
        # rel-rec pairs only with distmult, contrastive only with scoring
        assert len(cfg.configs) == 4
        for config in cfg.configs:
            if config.task == "relation_reconstruction":
                assert config.decoder == "distmult"
            else:
                assert config.decoder == "contrastive-scoring"

    def test_aggregator_expansion_only_for_relational_kinds(self, tmp_path):
        obj = {
            "graphs": {"g1": fixture_files(tmp_path)},
            "grid": {
                "tasks": ["contrastive"],
                "encoders": ["gcn", "transgcn"],
                "encoder_aggregators": ["conv", "attn"],
            },
            "training": {"seeds": [0]},
        }
        cfg = load_grid_config(write_config(tmp_path, obj))
        # gcn expands once, transgcn twice
        assert len(cfg.configs) == 3

    def test_zero_valid_configs_rejected(self, tmp_path):
        obj = {
            "graphs": {"g1": fixture_files(tmp_path)},
            "grid": {"tasks": ["contrastive"], "encoders": [], "decoders": ["mlp"]},
            "training": {"seeds": [0]},
        }
        with pytest.raises(ConfigError, match="zero valid"):
            load_grid_config(write_config(tmp_path, obj))

    def test_unknown_reference_graph_rejected(self, tmp_path):
        obj = {
            "graphs": {"g1": fixture_files(tmp_path)},
            "configs": [{"task": "contrastive", "decoder": "contrastive-scoring"}],
            "training": {"seeds": [0]},
            "reference_graph": "nope",
        }
        with pytest.raises(ConfigError, match="reference_graph"):
            load_grid_config(write_config(tmp_path, obj))
