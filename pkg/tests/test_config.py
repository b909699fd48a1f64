"""Config resolution: defaults, file layering, overrides, strictness."""

from __future__ import annotations

import pytest

from sentipre.config import ConfigError, DEFAULTS, parse_config


class TestDefaults:
    def test_published_hyperparameter_defaults(self):
        cfg = parse_config(None)
        assert cfg["masking"]["p_w"] == 0.5
        assert cfg["masking"]["p_s"] == 0.7
        assert cfg["masking"]["random_rate"] == 0.15
        assert cfg["ance"]["k"] == 100
        assert cfg["ance"]["t"] == 7
        assert cfg["ance"]["refresh_every"] == 2000
        assert cfg["ance"]["iterations"] == 4
        assert cfg["word"]["peak_lr"] == 2e-5
        assert cfg["word"]["max_steps"] == 20000
        assert cfg["word"]["warmup_steps"] == 1500
        assert cfg["model"]["max_positions"] == 128
        assert cfg["filter"]["lo"] == 0.2
        assert cfg["filter"]["hi"] == 0.3

    def test_empty_file_equals_defaults(self, tmp_path):
        path = tmp_path / "empty.ini"
        path.write_text("")
        assert parse_config(path).values == parse_config(None).values

    def test_typed_views_construct(self):
        cfg = parse_config(None)
        assert cfg.mask_config().p_w == 0.5
        assert cfg.word_config().lam == 50.0
        assert cfg.ance_config().loss_kind == "nll"
        assert cfg.task_spec().num_classes == 2
        assert cfg.model_config(100).vocab_size == 100
        assert cfg.seed == DEFAULTS["run"]["seed"]


class TestLayering:
    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[ance]\nt = 3\n")
        cfg = parse_config(path)
        assert cfg["ance"]["t"] == 3
        assert cfg["ance"]["k"] == 100

    def test_cli_override_wins_over_file(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[ance]\nt = 3\n")
        cfg = parse_config(path, ["ance.t=5"])
        assert cfg["ance"]["t"] == 5

    def test_override_without_file(self):
        cfg = parse_config(None, ["masking.p_w=0.25", "run.seed=9"])
        assert cfg["masking"]["p_w"] == 0.25
        assert cfg.seed == 9

    def test_bool_coercion(self):
        assert parse_config(None, ["ance.include_in_batch=true"])["ance"]["include_in_batch"] is True
        assert parse_config(None, ["ance.include_in_batch=0"])["ance"]["include_in_batch"] is False


class TestStrictness:
    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[mystery]\nx = 1\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[ance]\nbogus = 1\n")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(None, ["ance.bogus=1"])

    def test_type_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(None, ["ance.k=many"])

    def test_malformed_override_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(None, ["just-a-string"])
        with pytest.raises(ConfigError):
            parse_config(None, ["nodot=3"])

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "nope.ini")


class TestEcho:
    def test_echo_round_trips(self, tmp_path):
        cfg = parse_config(None, ["ance.t=4", "masking.p_s=0.6", "run.seed=77"])
        echoed = tmp_path / "echo.ini"
        cfg.echo(echoed)
        again = parse_config(echoed)
        assert again.values == cfg.values
