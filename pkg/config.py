from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import List


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="MKV_", case_sensitive=False)

    # Output
    output_dir: str = "./mkv_output"
    log_level: str = "INFO"

    # Monte Carlo scheduling
    threads: int = 1
    block_size: int = 64  # Paths per scheduling block, independent of thread count
    noise_chunk: int = 1024  # Steps of Gaussian increments drawn per stream refill
    default_seed: int = 20240601

    # Assumption checkers
    assumption_samples: int = 2000
    assumption_tolerance: float = 1e-9
    probe_times: List[float] = [1.0, 10.0, 100.0, 1000.0, 10000.0]

    # Auxiliary function quadrature
    aux_r_max: float = 12.0
    aux_grid_size: int = 256
    aux_rel_tol: float = 1e-10

    # Reference densities
    reference_table_size: int = 16385


settings = Settings()
