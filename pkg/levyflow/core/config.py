import os
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

from levyflow import __version__

load_dotenv()

class Settings(BaseSettings):
    # Application Configuration
    app_name: str = os.getenv("APP_NAME", "levyflow")
    app_version: str = os.getenv("APP_VERSION", __version__)
    log_level: str = "INFO"

    # Execution
    threads: int = 1
    output_dir: str = "results"
    report_format: str = "both"

    # Solver defaults
    default_tol: float = 1e-8
    default_n_steps: int = 4096
    default_max_iter: int = 200
    drift_clip: float = 1e6

    # Sampler defaults
    small_jump_epsilon: float = 1e-3

    # Kolmogorov defaults
    h_fd: float = 1e-3
    tail_tol: float = 1e-6
    density_points: int = 2 ** 16

    model_config = SettingsConfigDict(env_prefix="LEVYFLOW_", env_file=".env", extra="ignore")

settings = Settings()
