"""
Configuration settings for MultiLink using Pydantic Settings.
"""

from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Preference embedding
    DEFAULT_EPSILON: float = 0.03  # inlier threshold, coordinate units

    # Hypothesis sampling
    HYPOTHESES_PER_CLASS: int = 1000
    SEED: int = 0
    VALIDATION_K: float = 3.0
    VALIDATION_GAMMA: float = 1.5
    MAX_SAMPLE_ATTEMPTS: int = 100  # redraws per hypothesis on degenerate samples

    # GRIC
    GRIC_LAMBDA1: float = 1.0
    GRIC_LAMBDA2: float = 2.0

    # Silhouette search for epsilon
    EPSILON_SEARCH_BUDGET: int = 8

    # Concurrency
    MAX_WORKERS: Optional[int] = None  # default to min(32, cpu_count + 4)

    # Logging
    LOG_LEVEL: str = "INFO"

    # Paths
    DATA_PATH: str = "data/scenes"


settings = Settings()
