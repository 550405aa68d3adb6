from pathlib import Path

import pytest

from patternsearch.core.pipeline import LpsConfig
from patternsearch.exceptions import ConfigError
from patternsearch.settings import build_model, default_seed, default_threads, load_structured_file

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "config" / "lps.yaml"


def test_seed_and_threads_from_environment(monkeypatch):
    monkeypatch.delenv("LPS_SEED", raising=False)
    monkeypatch.delenv("LPS_THREADS", raising=False)
    assert default_seed() == 0
    assert default_threads() == 1
    monkeypatch.setenv("LPS_SEED", "42")
    monkeypatch.setenv("LPS_THREADS", "4")
    assert default_seed() == 42
    assert default_threads() == 4
    monkeypatch.setenv("LPS_SEED", "forty-two")
    with pytest.raises(ConfigError):
        default_seed()


def test_shipped_config_matches_defaults():
    config = build_model(LpsConfig, load_structured_file(str(DEFAULT_CONFIG)))
    assert config == LpsConfig()


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError):
        load_structured_file(str(tmp_path / "absent.yaml"))
    path = tmp_path / "lps.json"
    path.write_text('{"n_lambdas": 0}', encoding="utf-8")
    with pytest.raises(ConfigError, match="invalide"):
        build_model(LpsConfig, load_structured_file(str(path)))
