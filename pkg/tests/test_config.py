"""
Tests for configuration.
"""

from config import Settings, settings


def test_settings_defaults():
    """Test that settings have default values."""
    assert settings.GRIC_LAMBDA1 == 1.0
    assert settings.GRIC_LAMBDA2 == 2.0
    assert settings.VALIDATION_K == 3.0
    assert settings.VALIDATION_GAMMA == 1.5
    assert settings.MAX_SAMPLE_ATTEMPTS == 100
    assert settings.EPSILON_SEARCH_BUDGET == 8
    assert settings.DATA_PATH == "data/scenes"
    assert settings.HYPOTHESES_PER_CLASS > 0


def test_settings_env_override(monkeypatch):
    """Test environment variable overrides."""
    monkeypatch.setenv("MAX_WORKERS", "4")
    monkeypatch.setenv("DEFAULT_EPSILON", "0.05")
    monkeypatch.setenv("LOG_LEVEL", "DEBUG")

    new_settings = Settings()
    assert new_settings.MAX_WORKERS == 4
    assert new_settings.DEFAULT_EPSILON == 0.05
    assert new_settings.LOG_LEVEL == "DEBUG"
