"""Config parsing, defaults, and validation."""

import pytest

from spikefusion.config import RunConfig, parse_config
from spikefusion.errors import ConfigError


class TestDefaults:
    def test_published_operating_point(self):
        cfg = RunConfig()
        assert cfg.d == 1024
        assert cfg.t == 2
        assert cfg.batch == 160
        assert cfg.alpha == 0.1
        assert cfg.heads == 6
        assert cfg.lam == 0.5
        assert cfg.temperature == 0.01
        assert cfg.epochs == 35
        assert cfg.lr_encoder == 5e-4
        assert cfg.lr_fusion == 5e-3
        assert cfg.lr_decay_epochs == 15
        assert cfg.lr_decay_factor == 0.1
        assert cfg.generator == "repeat-ln"
        assert cfg.alignment == "biha"
        assert cfg.fusion == "scca"


class TestParse:
    def test_round_trip(self):
        cfg = RunConfig(d=64, t=3, lam=0.25, fusion="sca", seed=9)
        parsed = parse_config(cfg.to_text())
        assert parsed == cfg

    def test_comments_and_blanks(self):
        cfg = parse_config("""
# architecture
d = 32      # embedding width
t = 2

alignment = vha
lambda = 0.75
""")
        assert cfg.d == 32
        assert cfg.alignment == "vha"
        assert cfg.lam == 0.75

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config("dropout = 0.5")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config("d = large")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config("alignment biha")


class TestValidate:
    @pytest.mark.parametrize("kwargs", [
        dict(alignment="cosine"),
        dict(fusion="distill"),
        dict(generator="poisson-ln"),
        dict(lam=2.0),
        dict(temperature=0.0),
        dict(batch=1),
        dict(alpha=-0.1),
        dict(tau=0.2),
        dict(v_th=0.0, v_reset=0.0),
        dict(epochs=0),
        dict(val_fraction=1.0),
    ])
    def test_constraint_violations(self, kwargs):
        with pytest.raises(ConfigError):
            RunConfig(**kwargs).validate()

    def test_fusion_none_is_allowed(self):
        assert RunConfig(fusion="none").validate().fusion == "none"
