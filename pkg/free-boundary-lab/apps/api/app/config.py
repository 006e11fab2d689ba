from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="FBLAB_", extra="ignore")

    # Run bundles land in runs_dir/<run_id> unless a scenario names its own dir
    runs_dir: Path = Path("runs")
    log_level: str = "INFO"

    default_threads: int = Field(default=1, ge=1)
    cors_origins: list[str] = Field(default_factory=lambda: ["*"])

    # Service guard; the CLI is not limited
    max_api_resolution: int = Field(default=257, description="largest resolution accepted over HTTP")


settings = Settings()
